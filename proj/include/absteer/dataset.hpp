#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "absteer/types.hpp"

namespace absteer {

struct Pairing {
  std::map<std::string, std::string> content_to_abstract;
  // Instances left without a valid counterpart; retained for the matcher's
  // fallback tiers.
  std::vector<std::string> unpaired;
};

// Throws ValidationError on dangling or contradictory pair links.
Pairing pair_instances(const std::vector<SyllogismInstance>& instances);

struct FoldAssignment {
  int fold_count = 3;
  std::map<std::string, int> assignment;

  int fold_of(const std::string& id) const;
};

/// Stratified k-fold split by validity. Within each class the instances are
/// shuffled (SplitMix64 + Fisher-Yates over input order) and dealt
/// round-robin, so class counts per fold differ by at most one.
FoldAssignment stratified_folds(const std::vector<SyllogismInstance>& instances,
                                int fold_count, std::uint64_t seed);

}  // namespace absteer
