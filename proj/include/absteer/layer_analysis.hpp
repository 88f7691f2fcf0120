#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "absteer/linear_classifier.hpp"
#include "absteer/matcher.hpp"
#include "absteer/store.hpp"

namespace absteer {

/// Mean cosine between each triplet's positive and negative abstract target,
/// per stored layer. Low values mark layers where validity classes separate.
struct SimilarityProfile {
  std::vector<int> layers;
  std::vector<double> similarity;
  std::size_t n_pairs = 0;
};

SimilarityProfile posneg_profile(const ActivationStore& store, const std::vector<Triplet>& triplets,
                                 std::optional<std::vector<int>> layers = std::nullopt);

// CSV with header `layer,s_ell,n_pairs`.
void write_profile_csv(const SimilarityProfile& profile, const std::filesystem::path& path);

struct LayerRegion {
  double lo = 0.4;
  double hi = 0.8;
};

/// The contiguous run of `window` layers inside [lo*depth, hi*depth) with
/// the lowest mean similarity; ties go to the earliest window. `depth`
/// defaults to (last profiled layer + 1).
std::vector<int> select_layers(const SimilarityProfile& profile, int window, LayerRegion region,
                               std::optional<int> depth = std::nullopt);

// Window length default by model depth (5 up to ~32 layers, 6 beyond).
int default_window(int depth);

struct ProbeResult {
  LinearClassifier classifier;  // raw activation space
  Standardization standardization;  // fitted on train rows only
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> test_rows;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
};

/// Stratified 80/20 split (by validity), standardization on the train split,
/// linear hinge-loss probe, held-out accuracy.
ProbeResult train_validity_probe(const ActivationStore& store, int layer, std::uint64_t split_seed,
                                 std::optional<Form> form = std::nullopt);

}  // namespace absteer
