#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace absteer {

/// SplitMix64 generator. Every stochastic step in the toolkit (fold
/// shuffles, weight init, dropout, batch order, synthetic data) draws from
/// this so results are bit-reproducible across platforms and languages.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed = 0) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, bound). Rejection sampling removes modulo bias.
  std::uint64_t below(std::uint64_t bound);

  // Standard normal via Box-Muller (std::normal_distribution is not
  // specified bit-for-bit across standard libraries).
  double normal();

  std::uint64_t state() const { return state_; }

 private:
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Fisher-Yates, iterating from the back.
template <typename T>
void shuffle(std::span<T> items, SplitMix64& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(items[i - 1], items[j]);
  }
}

std::vector<std::size_t> permutation(std::size_t n, SplitMix64& rng);

}  // namespace absteer
