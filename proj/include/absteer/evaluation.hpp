#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "absteer/types.hpp"

namespace absteer {

enum class Condition { unsteered, steered, abstract };

std::string_view to_string(Condition c);
Condition parse_condition(std::string_view s);

struct PredictionRecord {
  std::string id;
  Condition condition = Condition::unsteered;
  Validity predicted = Validity::valid;
  std::optional<double> alpha;  // steered only
  int fold = 0;

  bool operator==(const PredictionRecord&) const = default;
};

// JSONL with keys id, condition, predicted, alpha, fold.
void write_predictions(const std::vector<PredictionRecord>& preds, const std::filesystem::path& path);
std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path);

// Belief categories: validity x conclusion plausibility.
enum Category { VP = 0, VI = 1, IP = 2, II = 3 };

struct CategoryCount {
  std::size_t correct = 0;
  std::size_t total = 0;

  bool operator==(const CategoryCount&) const = default;
};

using CategoryCounts = std::array<CategoryCount, 4>;
// nullopt marks an empty (undefined) category.
using CategoryRates = std::array<std::optional<double>, 4>;

/// Correct/total per category. Abstract instances inherit the plausibility
/// of their paired content instance; an abstract prediction without a
/// resolvable pair is rejected.
CategoryCounts count_by_category(const std::vector<PredictionRecord>& preds,
                                 const std::vector<SyllogismInstance>& instances);
CategoryRates accuracy_by_category(const std::vector<PredictionRecord>& preds,
                                   const std::vector<SyllogismInstance>& instances);
CategoryRates rates(const CategoryCounts& counts);

// |mean(VP, II) - mean(VI, IP)|; throws if any category is undefined.
double delta_belief(const CategoryRates& cats);
double bpa(double acc_global, double delta);
// acc_steered / acc_abstract; throws on zero abstract accuracy.
double abstract_alignment(double acc_steered, double acc_abstract);

struct EvalReport {
  Condition condition = Condition::unsteered;
  std::optional<double> alpha;
  std::optional<int> fold;  // nullopt for fold aggregates
  CategoryRates categories{};
  double acc_global = 0.0;
  std::optional<double> acc_consistent;
  std::optional<double> acc_conflict;
  std::optional<double> delta_belief;
  std::optional<double> bpa;
  std::optional<double> eta;
  CategoryCounts counts{};
  std::vector<EvalReport> folds;
  std::string config_hash;

  bool operator==(const EvalReport&) const = default;
};

/// Metrics for one prediction set. Acc_global pools all predictions; the
/// consistent/conflict accuracies are equal-weight category means.
EvalReport make_report(const std::vector<PredictionRecord>& preds,
                       const std::vector<SyllogismInstance>& instances,
                       std::optional<double> acc_abstract = std::nullopt);

// Report from category accuracies alone (Acc_global = mean of the four).
EvalReport report_from_categories(const std::array<double, 4>& cats);

/// Unweighted mean of every rate across folds, including BPA (so the
/// aggregate BPA is a mean of fold BPAs, not recomputed from mean Acc and
/// mean delta). Counts are summed; fold reports are kept.
EvalReport aggregate_folds(const std::vector<EvalReport>& folds);

// alpha with the highest BPA; ties go to the smaller alpha.
double select_alpha(const std::map<double, EvalReport>& sweep);

nlohmann::ordered_json to_json(const EvalReport& r);
EvalReport report_from_json(const nlohmann::json& j);

enum ReportFormat : unsigned { kJson = 1, kCsv = 2, kText = 4, kAllFormats = 7 };

// Writes <prefix>.json / .csv / .txt. Tables show percentages, 2 decimals.
void emit_report(const EvalReport& report, const std::filesystem::path& prefix,
                 unsigned formats = kAllFormats);
std::string csv_header();
std::string render_table(const std::vector<EvalReport>& rows);

}  // namespace absteer
