#include "absteer/layer_analysis.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

#include "absteer/errors.hpp"
#include "absteer/rng.hpp"

namespace absteer {

SimilarityProfile posneg_profile(const ActivationStore& store, const std::vector<Triplet>& triplets,
                                 std::optional<std::vector<int>> layers) {
  if (triplets.empty()) {
    throw ValidationError("posneg_profile: no triplets");
  }
  SimilarityProfile out;
  out.layers = layers ? *layers : store.layers;
  out.n_pairs = triplets.size();
  for (int l : out.layers) {
    if (!store.has_layer(l)) {
      throw ValidationError("posneg_profile: store has no layer " + std::to_string(l));
    }
    double sum = 0.0;
    for (const auto& t : triplets) {
      sum += cosine(store.row(l, t.pos_idx), store.row(l, t.neg_idx));
    }
    out.similarity.push_back(sum / static_cast<double>(triplets.size()));
  }
  return out;
}

void write_profile_csv(const SimilarityProfile& profile, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  out << "layer,s_ell,n_pairs\n" << std::setprecision(17);
  for (std::size_t i = 0; i < profile.layers.size(); ++i) {
    out << profile.layers[i] << ',' << profile.similarity[i] << ',' << profile.n_pairs << '\n';
  }
}

std::vector<int> select_layers(const SimilarityProfile& profile, int window, LayerRegion region,
                               std::optional<int> depth) {
  if (window < 1) {
    throw ValidationError("select_layers: window must be >= 1");
  }
  if (profile.layers.empty()) {
    throw ValidationError("select_layers: empty profile");
  }
  if (!(region.lo >= 0.0 && region.lo < region.hi && region.hi <= 1.0)) {
    throw ValidationError("select_layers: region must satisfy 0 <= lo < hi <= 1");
  }
  const int total = depth.value_or(profile.layers.back() + 1);
  const double lo = region.lo * total;
  const double hi = region.hi * total;

  double best = std::numeric_limits<double>::infinity();
  std::size_t best_start = 0;
  bool found = false;
  for (std::size_t start = 0; start + static_cast<std::size_t>(window) <= profile.layers.size(); ++start) {
    double sum = 0.0;
    bool ok = true;
    for (int k = 0; k < window; ++k) {
      const std::size_t i = start + static_cast<std::size_t>(k);
      const int l = profile.layers[i];
      if (l < lo || l >= hi || (k > 0 && l != profile.layers[i - 1] + 1)) {
        ok = false;
        break;
      }
      sum += profile.similarity[i];
    }
    if (!ok) {
      continue;
    }
    const double mean = sum / window;
    if (mean < best) {
      best = mean;
      best_start = start;
      found = true;
    }
  }
  if (!found) {
    throw ValidationError("select_layers: region holds no contiguous run of " +
                          std::to_string(window) + " profiled layers");
  }
  std::vector<int> out;
  for (int k = 0; k < window; ++k) {
    out.push_back(profile.layers[best_start + static_cast<std::size_t>(k)]);
  }
  return out;
}

int default_window(int depth) { return depth > 34 ? 6 : 5; }

ProbeResult train_validity_probe(const ActivationStore& store, int layer, std::uint64_t split_seed,
                                 std::optional<Form> form) {
  const auto& x = store.layer(layer);
  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& inst = store.instances[i];
    if (form && inst.form != *form) {
      continue;
    }
    by_class[inst.validity == Validity::valid ? 0 : 1].push_back(i);
  }
  if (by_class[0].size() < 10 || by_class[1].size() < 10) {
    throw ValidationError("validity probe needs at least 10 instances per class");
  }
  ProbeResult out;
  SplitMix64 rng(split_seed);
  for (auto& members : by_class) {
    shuffle(std::span<std::size_t>(members), rng);
    const auto n_train = static_cast<std::size_t>(std::llround(0.8 * static_cast<double>(members.size())));
    out.train_rows.insert(out.train_rows.end(), members.begin(), members.begin() + static_cast<long>(n_train));
    out.test_rows.insert(out.test_rows.end(), members.begin() + static_cast<long>(n_train), members.end());
  }
  auto labels = [&store](const std::vector<std::size_t>& rows) {
    std::vector<Validity> v;
    v.reserve(rows.size());
    for (std::size_t r : rows) {
      v.push_back(store.instances[r].validity);
    }
    return v;
  };
  const auto train_labels = labels(out.train_rows);
  const auto test_labels = labels(out.test_rows);
  out.standardization = fit_standardization(x, out.train_rows);
  out.classifier = fit_linear_svm(x, out.train_rows, train_labels);
  out.train_accuracy = accuracy(out.classifier, x, out.train_rows, train_labels);
  out.test_accuracy = accuracy(out.classifier, x, out.test_rows, test_labels);
  return out;
}

}  // namespace absteer
