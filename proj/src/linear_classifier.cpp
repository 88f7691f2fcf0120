#include "absteer/linear_classifier.hpp"

#include <cmath>

#include "absteer/errors.hpp"

namespace absteer {

double LinearClassifier::score(std::span<const float> x) const {
  if (x.size() != weights.size()) {
    throw ValidationError("classifier input has wrong dimension");
  }
  double s = bias;
  for (std::size_t i = 0; i < x.size(); ++i) {
    s += weights[i] * x[i];
  }
  return s;
}

Standardization fit_standardization(const RowMatrixF& x, std::span<const std::size_t> rows) {
  const auto d = static_cast<std::size_t>(x.cols());
  Standardization st{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
  if (rows.empty()) {
    throw ValidationError("standardization over zero rows");
  }
  for (std::size_t r : rows) {
    for (std::size_t c = 0; c < d; ++c) {
      st.mean[c] += x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    }
  }
  for (double& m : st.mean) {
    m /= static_cast<double>(rows.size());
  }
  for (std::size_t r : rows) {
    for (std::size_t c = 0; c < d; ++c) {
      const double v = x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) - st.mean[c];
      st.scale[c] += v * v;
    }
  }
  for (double& s : st.scale) {
    s = std::max(std::sqrt(s / static_cast<double>(rows.size())), 1e-12);
  }
  return st;
}

LinearClassifier fit_linear_svm(const RowMatrixF& x, std::span<const std::size_t> rows,
                                std::span<const Validity> labels, const HingeOptions& opts) {
  if (rows.size() != labels.size()) {
    throw ValidationError("fit_linear_svm: rows/labels size mismatch");
  }
  bool has_valid = false;
  bool has_invalid = false;
  for (Validity v : labels) {
    (v == Validity::valid ? has_valid : has_invalid) = true;
  }
  if (!has_valid || !has_invalid) {
    throw ValidationError("fit_linear_svm: training data holds a single validity class");
  }
  const auto d = static_cast<std::size_t>(x.cols());
  const Standardization st = fit_standardization(x, rows);
  const std::size_t n = rows.size();

  // Standardized copy, one row per sample.
  std::vector<double> z(n * d);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < d; ++c) {
      z[i * d + c] =
          (x(static_cast<Eigen::Index>(rows[i]), static_cast<Eigen::Index>(c)) - st.mean[c]) / st.scale[c];
    }
    y[i] = labels[i] == Validity::valid ? 1.0 : -1.0;
  }

  std::vector<double> w(d, 0.0);
  std::vector<double> gw(d);
  double b = 0.0;
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    for (std::size_t c = 0; c < d; ++c) {
      gw[c] = opts.l2 * w[c];
    }
    double gb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double s = b;
      for (std::size_t c = 0; c < d; ++c) {
        s += w[c] * z[i * d + c];
      }
      if (y[i] * s < 1.0) {
        const double coef = -y[i] / static_cast<double>(n);
        for (std::size_t c = 0; c < d; ++c) {
          gw[c] += coef * z[i * d + c];
        }
        gb += coef;
      }
    }
    const double lr = opts.learning_rate / std::sqrt(1.0 + epoch);
    for (std::size_t c = 0; c < d; ++c) {
      w[c] -= lr * gw[c];
    }
    b -= lr * gb;
  }

  LinearClassifier out;
  out.weights.resize(d);
  out.bias = b;
  for (std::size_t c = 0; c < d; ++c) {
    out.weights[c] = w[c] / st.scale[c];
    out.bias -= w[c] * st.mean[c] / st.scale[c];
  }
  return out;
}

double accuracy(const LinearClassifier& clf, const RowMatrixF& x, std::span<const std::size_t> rows,
                std::span<const Validity> labels) {
  if (rows.empty()) {
    return 0.0;
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(rows[i]);
    const std::span<const float> row(x.data() + r * x.cols(), static_cast<std::size_t>(x.cols()));
    correct += clf.predict(row) == labels[i] ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(rows.size());
}

}  // namespace absteer
