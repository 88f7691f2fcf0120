#include "absteer/rng.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

namespace absteer {

std::uint64_t SplitMix64::below(std::uint64_t bound) {
  if (bound == 0) {
    return 0;
  }
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t x = next();
  while (x >= limit) {
    x = next();
  }
  return x % bound;
}

double SplitMix64::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) {
    u1 = uniform();
  }
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

std::vector<std::size_t> permutation(std::size_t n, SplitMix64& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  shuffle(std::span<std::size_t>(idx), rng);
  return idx;
}

}  // namespace absteer
