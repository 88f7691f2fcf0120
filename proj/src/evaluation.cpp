#include "absteer/evaluation.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "absteer/errors.hpp"

namespace absteer {
namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

std::string_view to_string(Condition c) {
  switch (c) {
    case Condition::unsteered:
      return "unsteered";
    case Condition::steered:
      return "steered";
    case Condition::abstract:
      return "abstract";
  }
  return "unsteered";
}

Condition parse_condition(std::string_view s) {
  if (s == "unsteered") return Condition::unsteered;
  if (s == "steered") return Condition::steered;
  if (s == "abstract") return Condition::abstract;
  throw ValidationError("unknown condition '" + std::string(s) + "'");
}

void write_predictions(const std::vector<PredictionRecord>& preds, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  for (const auto& p : preds) {
    ordered_json j;
    j["id"] = p.id;
    j["condition"] = to_string(p.condition);
    j["predicted"] = to_string(p.predicted);
    j["alpha"] = p.alpha ? json(*p.alpha) : json(nullptr);
    j["fold"] = p.fold;
    out << j.dump() << '\n';
  }
}

std::vector<PredictionRecord> read_predictions(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("missing predictions file " + path.string());
  }
  std::vector<PredictionRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) {
      continue;
    }
    try {
      const json j = json::parse(line);
      PredictionRecord p;
      p.id = j.at("id").get<std::string>();
      p.condition = parse_condition(j.at("condition").get<std::string>());
      p.predicted = parse_validity(j.at("predicted").get<std::string>());
      if (j.contains("alpha") && !j.at("alpha").is_null()) {
        p.alpha = j.at("alpha").get<double>();
      }
      p.fold = j.value("fold", 0);
      if (p.condition == Condition::steered && !p.alpha) {
        throw ValidationError("steered prediction for '" + p.id + "' has no alpha");
      }
      out.push_back(std::move(p));
    } catch (const json::exception& e) {
      throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const ValidationError& e) {
      throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

CategoryCounts count_by_category(const std::vector<PredictionRecord>& preds,
                                 const std::vector<SyllogismInstance>& instances) {
  std::unordered_map<std::string, const SyllogismInstance*> by_id;
  for (const auto& inst : instances) {
    by_id.emplace(inst.id, &inst);
  }
  auto find = [&by_id](const std::string& id) -> const SyllogismInstance& {
    auto it = by_id.find(id);
    if (it == by_id.end()) {
      throw ValidationError("prediction for unknown instance '" + id + "'");
    }
    return *it->second;
  };
  CategoryCounts counts{};
  for (const auto& p : preds) {
    const SyllogismInstance& inst = find(p.id);
    Plausibility plaus = inst.plausibility;
    if (inst.form == Form::abstract) {
      if (p.condition != Condition::abstract) {
        throw ValidationError("abstract instance '" + inst.id + "' in a content-condition evaluation");
      }
      const SyllogismInstance* partner = nullptr;
      if (inst.pair_id) {
        partner = &find(*inst.pair_id);
      } else {
        for (const auto& other : instances) {
          if (other.pair_id && *other.pair_id == inst.id) {
            partner = &other;
            break;
          }
        }
      }
      if (partner == nullptr) {
        throw ValidationError("abstract instance '" + inst.id + "' has no paired content instance");
      }
      plaus = partner->plausibility;
    }
    if (plaus == Plausibility::none) {
      throw ValidationError("instance '" + inst.id + "' has no plausibility label");
    }
    const bool valid = inst.validity == Validity::valid;
    const bool plausible = plaus == Plausibility::plausible;
    const int cat = valid ? (plausible ? VP : VI) : (plausible ? IP : II);
    ++counts[static_cast<std::size_t>(cat)].total;
    if (p.predicted == inst.validity) {
      ++counts[static_cast<std::size_t>(cat)].correct;
    }
  }
  return counts;
}

CategoryRates rates(const CategoryCounts& counts) {
  CategoryRates out{};
  for (std::size_t c = 0; c < 4; ++c) {
    if (counts[c].total > 0) {
      out[c] = static_cast<double>(counts[c].correct) / static_cast<double>(counts[c].total);
    }
  }
  return out;
}

CategoryRates accuracy_by_category(const std::vector<PredictionRecord>& preds,
                                   const std::vector<SyllogismInstance>& instances) {
  return rates(count_by_category(preds, instances));
}

namespace {

bool all_defined(const CategoryRates& cats) {
  for (const auto& c : cats) {
    if (!c) {
      return false;
    }
  }
  return true;
}

void check_rate(double v, const char* what) {
  if (!(v >= 0.0 && v <= 1.0)) {
    throw ValidationError(std::string(what) + " must lie in [0, 1]");
  }
}

}  // namespace

double delta_belief(const CategoryRates& cats) {
  if (!all_defined(cats)) {
    throw ValidationError("delta_belief: a belief category is empty");
  }
  const double consistent = (*cats[VP] + *cats[II]) / 2.0;
  const double conflict = (*cats[VI] + *cats[IP]) / 2.0;
  return std::abs(consistent - conflict);
}

double bpa(double acc_global, double delta) {
  check_rate(acc_global, "accuracy");
  check_rate(delta, "delta_belief");
  return acc_global * (1.0 - delta);
}

double abstract_alignment(double acc_steered, double acc_abstract) {
  if (!(acc_abstract > 0.0)) {
    throw ValidationError("abstract_alignment: abstract accuracy must be positive");
  }
  return acc_steered / acc_abstract;
}

namespace {

void fill_derived(EvalReport& r) {
  if (all_defined(r.categories)) {
    r.acc_consistent = (*r.categories[VP] + *r.categories[II]) / 2.0;
    r.acc_conflict = (*r.categories[VI] + *r.categories[IP]) / 2.0;
    r.delta_belief = delta_belief(r.categories);
    r.bpa = bpa(r.acc_global, *r.delta_belief);
  }
}

}  // namespace

EvalReport make_report(const std::vector<PredictionRecord>& preds,
                       const std::vector<SyllogismInstance>& instances, std::optional<double> acc_abstract) {
  if (preds.empty()) {
    throw ValidationError("make_report: no predictions");
  }
  EvalReport r;
  r.condition = preds.front().condition;
  r.alpha = preds.front().alpha;
  r.fold = preds.front().fold;
  for (const auto& p : preds) {
    if (p.condition != r.condition || p.alpha != r.alpha) {
      throw ValidationError("make_report: predictions mix conditions or alphas");
    }
    if (p.fold != *r.fold) {
      r.fold.reset();
    }
  }
  r.counts = count_by_category(preds, instances);
  r.categories = rates(r.counts);
  std::size_t correct = 0;
  std::size_t total = 0;
  for (const auto& c : r.counts) {
    correct += c.correct;
    total += c.total;
  }
  r.acc_global = static_cast<double>(correct) / static_cast<double>(total);
  fill_derived(r);
  if (acc_abstract) {
    r.eta = abstract_alignment(r.acc_global, *acc_abstract);
  }
  return r;
}

EvalReport report_from_categories(const std::array<double, 4>& cats) {
  EvalReport r;
  double sum = 0.0;
  for (std::size_t c = 0; c < 4; ++c) {
    check_rate(cats[c], "category accuracy");
    r.categories[c] = cats[c];
    sum += cats[c];
  }
  r.acc_global = sum / 4.0;
  fill_derived(r);
  return r;
}

EvalReport aggregate_folds(const std::vector<EvalReport>& folds) {
  if (folds.empty()) {
    throw ValidationError("aggregate_folds: no fold reports");
  }
  EvalReport agg;
  agg.condition = folds.front().condition;
  agg.alpha = folds.front().alpha;
  agg.config_hash = folds.front().config_hash;
  const double k = static_cast<double>(folds.size());
  auto mean_opt = [&folds, k](auto member) -> std::optional<double> {
    double sum = 0.0;
    for (const auto& f : folds) {
      const std::optional<double>& v = member(f);
      if (!v) {
        return std::nullopt;
      }
      sum += *v;
    }
    return sum / k;
  };
  for (const auto& f : folds) {
    if (f.alpha != agg.alpha) {
      throw ValidationError("aggregate_folds: folds disagree on alpha");
    }
    if (f.condition != agg.condition) {
      throw ValidationError("aggregate_folds: folds disagree on condition");
    }
    agg.acc_global += f.acc_global / k;
    for (std::size_t c = 0; c < 4; ++c) {
      agg.counts[c].correct += f.counts[c].correct;
      agg.counts[c].total += f.counts[c].total;
    }
  }
  for (std::size_t c = 0; c < 4; ++c) {
    agg.categories[c] = mean_opt([c](const EvalReport& f) -> const std::optional<double>& { return f.categories[c]; });
  }
  agg.acc_consistent = mean_opt([](const EvalReport& f) -> const std::optional<double>& { return f.acc_consistent; });
  agg.acc_conflict = mean_opt([](const EvalReport& f) -> const std::optional<double>& { return f.acc_conflict; });
  agg.delta_belief = mean_opt([](const EvalReport& f) -> const std::optional<double>& { return f.delta_belief; });
  agg.bpa = mean_opt([](const EvalReport& f) -> const std::optional<double>& { return f.bpa; });
  agg.eta = mean_opt([](const EvalReport& f) -> const std::optional<double>& { return f.eta; });
  for (const auto& f : folds) {
    EvalReport copy = f;
    copy.folds.clear();
    agg.folds.push_back(std::move(copy));
  }
  return agg;
}

double select_alpha(const std::map<double, EvalReport>& sweep) {
  if (sweep.empty()) {
    throw ValidationError("select_alpha: empty sweep");
  }
  double best_alpha = sweep.begin()->first;
  double best = -1.0;
  for (const auto& [alpha, report] : sweep) {  // ascending alpha
    const double v = report.bpa.value_or(-1.0);
    if (v > best) {
      best = v;
      best_alpha = alpha;
    }
  }
  return best_alpha;
}

namespace {

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> opt_from(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) {
    return std::nullopt;
  }
  return j.at(key).get<double>();
}

constexpr const char* kCategoryKeys[4] = {"vp", "vi", "ip", "ii"};

}  // namespace

ordered_json to_json(const EvalReport& r) {
  ordered_json j;
  j["condition"] = to_string(r.condition);
  j["alpha"] = opt(r.alpha);
  j["fold"] = r.fold ? json(*r.fold) : json(nullptr);
  ordered_json cats;
  ordered_json counts;
  for (std::size_t c = 0; c < 4; ++c) {
    cats[kCategoryKeys[c]] = opt(r.categories[c]);
    counts[kCategoryKeys[c]] = {{"correct", r.counts[c].correct}, {"total", r.counts[c].total}};
  }
  j["categories"] = cats;
  j["acc_global"] = r.acc_global;
  j["acc_consistent"] = opt(r.acc_consistent);
  j["acc_conflict"] = opt(r.acc_conflict);
  j["delta_belief"] = opt(r.delta_belief);
  j["bpa"] = opt(r.bpa);
  j["eta"] = opt(r.eta);
  j["counts"] = counts;
  j["config_hash"] = r.config_hash;
  if (!r.folds.empty()) {
    ordered_json folds = ordered_json::array();
    for (const auto& f : r.folds) {
      folds.push_back(to_json(f));
    }
    j["folds"] = folds;
  }
  return j;
}

EvalReport report_from_json(const json& j) {
  try {
    EvalReport r;
    r.condition = parse_condition(j.at("condition").get<std::string>());
    r.alpha = opt_from(j, "alpha");
    if (!j.at("fold").is_null()) {
      r.fold = j.at("fold").get<int>();
    }
    for (std::size_t c = 0; c < 4; ++c) {
      r.categories[c] = opt_from(j.at("categories"), kCategoryKeys[c]);
      const auto& cnt = j.at("counts").at(kCategoryKeys[c]);
      r.counts[c] = {cnt.at("correct").get<std::size_t>(), cnt.at("total").get<std::size_t>()};
    }
    r.acc_global = j.at("acc_global").get<double>();
    r.acc_consistent = opt_from(j, "acc_consistent");
    r.acc_conflict = opt_from(j, "acc_conflict");
    r.delta_belief = opt_from(j, "delta_belief");
    r.bpa = opt_from(j, "bpa");
    r.eta = opt_from(j, "eta");
    r.config_hash = j.value("config_hash", std::string{});
    if (j.contains("folds")) {
      for (const auto& f : j.at("folds")) {
        r.folds.push_back(report_from_json(f));
      }
    }
    return r;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed report: ") + e.what());
  }
}

namespace {

std::string pct(const std::optional<double>& v) {
  if (!v) {
    return "-";
  }
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", *v * 100.0);
  return buf;
}

std::string plain(const std::optional<double>& v) {
  if (!v) {
    return "-";
  }
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", *v);
  return buf;
}

std::vector<std::string> cells(const EvalReport& r) {
  return {std::string(to_string(r.condition)),
          plain(r.alpha),
          r.fold ? std::to_string(*r.fold) : std::string("all"),
          pct(r.categories[VP]),
          pct(r.categories[VI]),
          pct(r.categories[IP]),
          pct(r.categories[II]),
          pct(r.acc_global),
          pct(r.acc_consistent),
          pct(r.acc_conflict),
          pct(r.delta_belief),
          pct(r.bpa),
          plain(r.eta)};
}

const std::vector<std::string>& columns() {
  static const std::vector<std::string> kCols = {"condition", "alpha",   "fold",       "vp",
                                                 "vi",        "ip",      "ii",         "acc_global",
                                                 "acc_consistent", "acc_conflict", "delta_belief",
                                                 "bpa",       "eta"};
  return kCols;
}

std::vector<EvalReport> rows_of(const EvalReport& r) {
  std::vector<EvalReport> rows{r};
  rows.insert(rows.end(), r.folds.begin(), r.folds.end());
  return rows;
}

}  // namespace

std::string csv_header() {
  std::string out;
  for (const auto& c : columns()) {
    out += (out.empty() ? "" : ",") + c;
  }
  return out;
}

std::string render_table(const std::vector<EvalReport>& rows) {
  std::vector<std::vector<std::string>> table{columns()};
  for (const auto& r : rows) {
    table.push_back(cells(r));
  }
  std::vector<std::size_t> width(columns().size(), 0);
  for (const auto& row : table) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      width[c] = std::max(width[c], row[c].size());
    }
  }
  std::ostringstream out;
  for (std::size_t r = 0; r < table.size(); ++r) {
    for (std::size_t c = 0; c < table[r].size(); ++c) {
      if (c > 0) {
        out << "  ";
      }
      out << std::string(width[c] - table[r][c].size(), ' ') << table[r][c];
    }
    out << '\n';
    if (r == 0) {
      std::size_t total = 0;
      for (std::size_t w : width) {
        total += w + 2;
      }
      out << std::string(total - 2, '-') << '\n';
    }
  }
  return out.str();
}

void emit_report(const EvalReport& report, const fs::path& prefix, unsigned formats) {
  if (prefix.has_parent_path()) {
    fs::create_directories(prefix.parent_path());
  }
  auto open = [&prefix](const char* ext) {
    fs::path p = prefix;
    p += ext;
    std::ofstream out(p, std::ios::binary);
    if (!out) {
      throw IoError("cannot write " + p.string());
    }
    return out;
  };
  if (formats & kJson) {
    auto out = open(".json");
    out << to_json(report).dump(2) << '\n';
  }
  if (formats & kCsv) {
    auto out = open(".csv");
    out << csv_header() << '\n';
    for (const auto& row : rows_of(report)) {
      const auto c = cells(row);
      for (std::size_t i = 0; i < c.size(); ++i) {
        out << (i ? "," : "") << c[i];
      }
      out << '\n';
    }
  }
  if (formats & kText) {
    auto out = open(".txt");
    out << render_table(rows_of(report));
  }
}

}  // namespace absteer
