#include <cmath>

#include "absteer/errors.hpp"
#include "absteer/training.hpp"

namespace absteer {

AdamW::AdamW(std::size_t n, double weight_decay, double beta1, double beta2, double eps)
    : weight_decay_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

void AdamW::step(std::vector<float>& params, const std::vector<float>& grad, double lr) {
  if (params.size() != m_.size() || grad.size() != m_.size()) {
    throw ValidationError("AdamW: parameter count changed");
  }
  ++step_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
  const double decay = 1.0 - lr * weight_decay_;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grad[i];
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g * g;
    const double m_hat = m_[i] / bc1;
    const double v_hat = v_[i] / bc2;
    const double p = static_cast<double>(params[i]) * decay - lr * m_hat / (std::sqrt(v_hat) + eps_);
    params[i] = static_cast<float>(p);
  }
}

double clip_grad_norm(std::vector<float>& grad, double max_norm) {
  double sq = 0.0;
  for (float g : grad) {
    sq += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const auto scale = static_cast<float>(max_norm / (norm + 1e-6));
    for (float& g : grad) {
      g *= scale;
    }
  }
  return norm;
}

PlateauScheduler::PlateauScheduler(double lr, int patience, double factor)
    : lr_(lr), patience_(patience), factor_(factor) {}

double PlateauScheduler::step(double metric) {
  if (metric < best_ * (1.0 - 1e-4)) {
    best_ = metric;
    bad_epochs_ = 0;
  } else {
    ++bad_epochs_;
  }
  if (bad_epochs_ > patience_) {
    lr_ *= factor_;
    bad_epochs_ = 0;
  }
  return lr_;
}

bool EarlyStopping::update(double metric) {
  if (metric < best_) {
    best_ = metric;
    bad_epochs_ = 0;
    return true;
  }
  ++bad_epochs_;
  return false;
}

}  // namespace absteer
