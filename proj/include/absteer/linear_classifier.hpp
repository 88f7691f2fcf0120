#pragma once

#include <span>
#include <vector>

#include "absteer/store.hpp"

namespace absteer {

/// score(x) = w.x + b; positive scores mean "valid".
struct LinearClassifier {
  std::vector<double> weights;
  double bias = 0.0;

  double score(std::span<const float> x) const;
  Validity predict(std::span<const float> x) const {
    return score(x) > 0.0 ? Validity::valid : Validity::invalid;
  }
};

struct HingeOptions {
  int epochs = 400;
  double learning_rate = 0.1;
  double l2 = 1e-3;
};

struct Standardization {
  std::vector<double> mean;
  std::vector<double> scale;  // per-dimension std, floored at 1e-12
};

// Per-dimension statistics over the given rows only.
Standardization fit_standardization(const RowMatrixF& x, std::span<const std::size_t> rows);

/// Linear max-margin classifier: full-batch subgradient descent on the mean
/// hinge loss plus l2/2 |w|^2, fit in standardized coordinates and mapped
/// back to raw activation space. labels: valid -> +1.
LinearClassifier fit_linear_svm(const RowMatrixF& x, std::span<const std::size_t> rows,
                                std::span<const Validity> labels, const HingeOptions& opts = {});

double accuracy(const LinearClassifier& clf, const RowMatrixF& x, std::span<const std::size_t> rows,
                std::span<const Validity> labels);

}  // namespace absteer
