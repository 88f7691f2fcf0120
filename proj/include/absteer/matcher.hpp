#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "absteer/store.hpp"

namespace absteer {

/// Abstract instances the base model answered correctly.
struct CorrectSet {
  std::set<std::string> ids;

  bool contains(const std::string& id) const { return ids.count(id) != 0; }
};

CorrectSet build_correct_set(const std::vector<SyllogismInstance>& instances,
                             const std::map<std::string, Validity>& predictions);

enum class MatchTier { direct, schema_fallback, validity_fallback };

std::string_view to_string(MatchTier t);
MatchTier parse_tier(std::string_view s);

// Indices are store row indices.
struct Triplet {
  std::size_t content_idx = 0;
  std::size_t pos_idx = 0;
  std::size_t neg_idx = 0;
  MatchTier tier = MatchTier::direct;
  double cosine_pos = 0.0;
  double cosine_neg = 0.0;

  bool operator==(const Triplet&) const = default;
};

struct PositiveMatch {
  std::size_t index;
  MatchTier tier;
  double cosine;
};

struct NegativeMatch {
  std::size_t index;
  double cosine;
};

/// Cosine similarity of two f32 rows with f64 accumulation.
double cosine(std::span<const float> a, std::span<const float> b);

/// Candidate pools of C+ split by validity, precomputed once per
/// (store, correct set, layer) and reused for every content instance.
class Matcher {
 public:
  Matcher(const ActivationStore& store, const CorrectSet& cset, int layer);

  PositiveMatch match_positive(std::size_t content_idx) const;
  NegativeMatch match_negative(std::size_t content_idx) const;
  Triplet match(std::size_t content_idx) const;

 private:
  struct Candidate {
    std::size_t index;
    double norm;
  };

  const std::vector<Candidate>& pool(Validity v) const;
  double cosine_to(std::size_t content_idx, double content_norm, const Candidate& c) const;
  double row_norm(std::size_t idx) const;

  const ActivationStore& store_;
  int layer_;
  std::array<std::vector<Candidate>, 2> pools_;
  std::map<std::string, std::size_t> abstract_by_id_;
  std::map<std::string, std::size_t> back_links_;  // content id -> abstract row naming it
};

PositiveMatch match_positive(std::size_t content_idx, const ActivationStore& store,
                             const CorrectSet& cset, int layer);
NegativeMatch match_negative(std::size_t content_idx, const ActivationStore& store,
                             const CorrectSet& cset, int layer);

struct TripletSet {
  std::vector<Triplet> triplets;
  std::array<std::size_t, 3> tier_counts{};  // direct, schema, validity
};

/// One triplet per content instance (optionally restricted to `content_ids`),
/// in store order. Errors carry the failing content id.
TripletSet build_triplets(const ActivationStore& store, const CorrectSet& cset, int layer,
                          const std::set<std::string>* content_ids = nullptr);

// JSONL: content_id, pos_id, neg_id, tier, cosine_pos, cosine_neg.
void write_triplets(const TripletSet& set, const ActivationStore& store,
                    const std::filesystem::path& path);
TripletSet read_triplets(const std::filesystem::path& path, const ActivationStore& store);

// Throws ValidationError if any triplet breaks the validity/direct-tier rules.
void check_triplets(const std::vector<Triplet>& triplets, const ActivationStore& store);

}  // namespace absteer
