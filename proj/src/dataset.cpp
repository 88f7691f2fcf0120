#include "absteer/dataset.hpp"

#include <set>
#include <unordered_map>

#include "absteer/errors.hpp"
#include "absteer/rng.hpp"

namespace absteer {

Pairing pair_instances(const std::vector<SyllogismInstance>& instances) {
  std::unordered_map<std::string, const SyllogismInstance*> by_id;
  for (const auto& inst : instances) {
    if (!by_id.emplace(inst.id, &inst).second) {
      throw ValidationError("duplicate instance id '" + inst.id + "'");
    }
  }
  for (const auto& inst : instances) {
    if (!inst.pair_id) {
      continue;
    }
    auto it = by_id.find(*inst.pair_id);
    if (it == by_id.end()) {
      throw ValidationError("dangling pair_id: '" + inst.id + "' -> '" + *inst.pair_id + "'");
    }
    const auto& back = it->second->pair_id;
    if (back && *back != inst.id) {
      throw ValidationError("contradictory pairing: '" + inst.id + "' -> '" + *inst.pair_id +
                            "' but '" + *inst.pair_id + "' -> '" + *back + "'");
    }
  }

  Pairing out;
  std::set<std::string> paired;
  for (const auto& inst : instances) {
    if (inst.form != Form::content || !inst.pair_id) {
      continue;
    }
    const SyllogismInstance& other = *by_id.at(*inst.pair_id);
    if (other.form == Form::abstract && other.schema_id == inst.schema_id &&
        other.validity == inst.validity) {
      out.content_to_abstract.emplace(inst.id, other.id);
      paired.insert(inst.id);
      paired.insert(other.id);
    }
  }
  // An abstract instance may point at its content partner without the
  // reverse link being set.
  for (const auto& inst : instances) {
    if (inst.form != Form::abstract || !inst.pair_id || paired.count(inst.id)) {
      continue;
    }
    const SyllogismInstance& other = *by_id.at(*inst.pair_id);
    if (other.form == Form::content && !paired.count(other.id) &&
        other.schema_id == inst.schema_id && other.validity == inst.validity) {
      out.content_to_abstract.emplace(other.id, inst.id);
      paired.insert(inst.id);
      paired.insert(other.id);
    }
  }
  for (const auto& inst : instances) {
    if (!paired.count(inst.id)) {
      out.unpaired.push_back(inst.id);
    }
  }
  return out;
}

int FoldAssignment::fold_of(const std::string& id) const {
  auto it = assignment.find(id);
  if (it == assignment.end()) {
    throw ValidationError("no fold assigned to '" + id + "'");
  }
  return it->second;
}

FoldAssignment stratified_folds(const std::vector<SyllogismInstance>& instances, int fold_count,
                                std::uint64_t seed) {
  if (fold_count < 2) {
    throw ValidationError("fold_count must be at least 2");
  }
  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < instances.size(); ++i) {
    by_class[instances[i].validity == Validity::valid ? 0 : 1].push_back(i);
  }
  for (const auto& members : by_class) {
    if (members.size() < static_cast<std::size_t>(fold_count)) {
      throw ValidationError("need at least " + std::to_string(fold_count) +
                            " instances per validity class for stratified folds");
    }
  }

  FoldAssignment out;
  out.fold_count = fold_count;
  SplitMix64 rng(seed);
  std::size_t deal = 0;  // carried across classes to keep total fold sizes even
  for (auto& members : by_class) {
    shuffle(std::span<std::size_t>(members), rng);
    for (std::size_t idx : members) {
      const int fold = static_cast<int>(deal % static_cast<std::size_t>(fold_count));
      if (!out.assignment.emplace(instances[idx].id, fold).second) {
        throw ValidationError("duplicate instance id '" + instances[idx].id + "'");
      }
      ++deal;
    }
  }
  return out;
}

}  // namespace absteer
