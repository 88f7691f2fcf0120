#include "absteer/abstractor.hpp"

#include <algorithm>
#include <cmath>

#include "absteer/errors.hpp"

namespace absteer {
using nlohmann::json;
using nlohmann::ordered_json;

void AbstractorParams::validate() const {
  if (input_dim <= 0) {
    throw ValidationError("abstractor input_dim must be positive");
  }
  if (backbone.empty()) {
    throw ValidationError("abstractor backbone needs at least one block");
  }
  for (int w : backbone) {
    if (w <= 0) {
      throw ValidationError("abstractor widths must be positive");
    }
  }
  if (direction_hidden <= 0 || magnitude_hidden <= 0) {
    throw ValidationError("abstractor head widths must be positive");
  }
  if (!(dropout >= 0.0 && dropout < 1.0) || leaky_slope < 0.0 || layer_norm_eps <= 0.0) {
    throw ValidationError("abstractor dropout/slope/eps out of range");
  }
}

ordered_json to_json(const AbstractorParams& p) {
  ordered_json j;
  j["input_dim"] = p.input_dim;
  j["backbone"] = p.backbone;
  j["direction_hidden"] = p.direction_hidden;
  j["magnitude_hidden"] = p.magnitude_hidden;
  j["leaky_slope"] = p.leaky_slope;
  j["dropout"] = p.dropout;
  j["layer_norm_eps"] = p.layer_norm_eps;
  return j;
}

AbstractorParams params_from_json(const json& j) {
  AbstractorParams p;
  try {
    p.input_dim = j.value("input_dim", p.input_dim);
    p.backbone = j.value("backbone", p.backbone);
    p.direction_hidden = j.value("direction_hidden", p.direction_hidden);
    p.magnitude_hidden = j.value("magnitude_hidden", p.magnitude_hidden);
    p.leaky_slope = j.value("leaky_slope", p.leaky_slope);
    p.dropout = j.value("dropout", p.dropout);
    p.layer_norm_eps = j.value("layer_norm_eps", p.layer_norm_eps);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed abstractor params: ") + e.what());
  }
  return p;
}

template <typename Scalar>
BasicAbstractor<Scalar>::BasicAbstractor(AbstractorParams params, int layer)
    : params_(std::move(params)), layer_(layer) {
  params_.validate();
  int in = params_.input_dim;
  for (std::size_t k = 0; k < params_.backbone.size(); ++k) {
    const int w = params_.backbone[k];
    const std::string prefix = "backbone." + std::to_string(k) + ".";
    BlockIds ids{};
    ids.weight = add_tensor(prefix + "weight", w, in);
    ids.bias = add_tensor(prefix + "bias", w, 1);
    ids.gain = add_tensor(prefix + "norm.weight", w, 1);
    ids.shift = add_tensor(prefix + "norm.bias", w, 1);
    block_ids_.push_back(ids);
    in = w;
  }
  dir_w1_ = add_tensor("direction.0.weight", params_.direction_hidden, in);
  dir_b1_ = add_tensor("direction.0.bias", params_.direction_hidden, 1);
  dir_w2_ = add_tensor("direction.1.weight", params_.input_dim, params_.direction_hidden);
  dir_b2_ = add_tensor("direction.1.bias", params_.input_dim, 1);
  mag_w1_ = add_tensor("magnitude.0.weight", params_.magnitude_hidden, in);
  mag_b1_ = add_tensor("magnitude.0.bias", params_.magnitude_hidden, 1);
  mag_w2_ = add_tensor("magnitude.1.weight", 1, params_.magnitude_hidden);
  mag_b2_ = add_tensor("magnitude.1.bias", 1, 1);

  theta_.assign(specs_.empty() ? 0 : specs_.back().offset + specs_.back().size(), Scalar(0));
  for (const auto& ids : block_ids_) {
    vec(theta_, ids.gain).setOnes();
  }
}

template <typename Scalar>
std::size_t BasicAbstractor<Scalar>::add_tensor(const std::string& name, int rows, int cols) {
  const std::size_t offset = specs_.empty() ? 0 : specs_.back().offset + specs_.back().size();
  specs_.push_back({name, rows, cols, offset});
  return specs_.size() - 1;
}

template <typename Scalar>
typename BasicAbstractor<Scalar>::ConstMatMap BasicAbstractor<Scalar>::weight(std::size_t spec) const {
  const auto& s = specs_[spec];
  return ConstMatMap(theta_.data() + s.offset, s.rows, s.cols);
}

template <typename Scalar>
typename BasicAbstractor<Scalar>::ConstVecMap BasicAbstractor<Scalar>::vec(std::size_t spec) const {
  const auto& s = specs_[spec];
  return ConstVecMap(theta_.data() + s.offset, static_cast<Eigen::Index>(s.size()));
}

template <typename Scalar>
typename BasicAbstractor<Scalar>::MatMap BasicAbstractor<Scalar>::weight(std::vector<Scalar>& buf,
                                                                         std::size_t spec) const {
  const auto& s = specs_[spec];
  return MatMap(buf.data() + s.offset, s.rows, s.cols);
}

template <typename Scalar>
typename BasicAbstractor<Scalar>::VecMap BasicAbstractor<Scalar>::vec(std::vector<Scalar>& buf,
                                                                      std::size_t spec) const {
  const auto& s = specs_[spec];
  return VecMap(buf.data() + s.offset, static_cast<Eigen::Index>(s.size()));
}

template <typename Scalar>
void BasicAbstractor<Scalar>::initialize(SplitMix64& rng) {
  int fan_in = 1;
  for (const auto& s : specs_) {
    Scalar* p = theta_.data() + s.offset;
    const bool is_norm = s.name.find(".norm.") != std::string::npos;
    if (is_norm) {
      const Scalar fill = s.name.ends_with("norm.weight") ? Scalar(1) : Scalar(0);
      std::fill(p, p + s.size(), fill);
      continue;
    }
    if (s.name.ends_with("weight")) {
      fan_in = s.cols;
    }
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t i = 0; i < s.size(); ++i) {
      p[i] = static_cast<Scalar>(rng.uniform(-bound, bound));
    }
  }
}

namespace {

template <typename Scalar>
Scalar softplus(Scalar x) {
  return x > Scalar(20) ? x : std::log1p(std::exp(x));
}

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  return Scalar(1) / (Scalar(1) + std::exp(-x));
}

}  // namespace

template <typename Scalar>
ForwardTrace<Scalar> BasicAbstractor<Scalar>::forward(const Mat& inputs, SplitMix64* dropout_rng) const {
  if (inputs.rows() != params_.input_dim) {
    throw ValidationError("abstractor input has dimension " + std::to_string(inputs.rows()) +
                          ", expected " + std::to_string(params_.input_dim));
  }
  const Scalar slope = static_cast<Scalar>(params_.leaky_slope);
  const Scalar eps = static_cast<Scalar>(params_.layer_norm_eps);
  const double p_drop = params_.dropout;

  ForwardTrace<Scalar> t;
  t.blocks.reserve(block_ids_.size());
  Mat h = inputs;
  for (std::size_t k = 0; k < block_ids_.size(); ++k) {
    const auto& ids = block_ids_[k];
    auto& b = t.blocks.emplace_back();
    b.input = std::move(h);
    Mat u = weight(ids.weight) * b.input;
    u.colwise() += vec(ids.bias);
    const Row mean = u.colwise().mean();
    u.rowwise() -= mean;
    const Row var = u.array().square().colwise().mean();
    b.inv_std = (var.array() + eps).rsqrt();
    b.normalized = u.array().rowwise() * b.inv_std.array();
    b.affine = (b.normalized.array().colwise() * vec(ids.gain).array()).colwise() +
               vec(ids.shift).array();
    Mat out = b.affine.unaryExpr([slope](Scalar v) { return v > Scalar(0) ? v : slope * v; });
    if (dropout_rng != nullptr && p_drop > 0.0 && k + 1 < block_ids_.size()) {
      const Scalar keep = static_cast<Scalar>(1.0 / (1.0 - p_drop));
      b.mask.resize(out.rows(), out.cols());
      for (Eigen::Index c = 0; c < out.cols(); ++c) {
        for (Eigen::Index r = 0; r < out.rows(); ++r) {
          b.mask(r, c) = dropout_rng->uniform() < p_drop ? Scalar(0) : keep;
        }
      }
      out.array() *= b.mask.array();
    }
    b.output = out;
    h = std::move(out);
  }
  t.features = std::move(h);

  t.dir_hidden_pre = weight(dir_w1_) * t.features;
  t.dir_hidden_pre.colwise() += vec(dir_b1_);
  t.dir_hidden = t.dir_hidden_pre.cwiseMax(Scalar(0));
  t.dir_raw = weight(dir_w2_) * t.dir_hidden;
  t.dir_raw.colwise() += vec(dir_b2_);
  t.dir_norm = t.dir_raw.colwise().norm();
  for (Eigen::Index c = 0; c < t.dir_norm.cols(); ++c) {
    if (!(static_cast<double>(t.dir_norm(c)) >= 1e-12)) {
      throw NumericError("direction head output has zero norm");
    }
  }
  t.direction = t.dir_raw.array().rowwise() / t.dir_norm.array();

  t.mag_hidden_pre = weight(mag_w1_) * t.features;
  t.mag_hidden_pre.colwise() += vec(mag_b1_);
  t.mag_hidden = t.mag_hidden_pre.cwiseMax(Scalar(0));
  t.mag_raw = weight(mag_w2_) * t.mag_hidden;
  t.mag_raw.array() += vec(mag_b2_)(0);
  t.magnitude = t.mag_raw.unaryExpr([](Scalar v) { return softplus(v); });
  return t;
}

template <typename Scalar>
void BasicAbstractor<Scalar>::backward(const ForwardTrace<Scalar>& t, const Mat& d_direction,
                                       const Row& d_magnitude, std::vector<Scalar>& grad) const {
  if (grad.size() != theta_.size()) {
    grad.assign(theta_.size(), Scalar(0));
  }
  const Scalar slope = static_cast<Scalar>(params_.leaky_slope);

  // d/d raw of raw/|raw|: (I - u u^T) / |raw|
  const Row proj = (t.direction.array() * d_direction.array()).colwise().sum();
  const Mat d_raw = ((d_direction.array() - t.direction.array().rowwise() * proj.array()).rowwise() /
                     t.dir_norm.array())
                        .matrix();
  weight(grad, dir_w2_) += d_raw * t.dir_hidden.transpose();
  vec(grad, dir_b2_) += d_raw.rowwise().sum();
  Mat d_hidden = weight(dir_w2_).transpose() * d_raw;
  d_hidden.array() *= (t.dir_hidden_pre.array() > Scalar(0)).template cast<Scalar>();
  weight(grad, dir_w1_) += d_hidden * t.features.transpose();
  vec(grad, dir_b1_) += d_hidden.rowwise().sum();
  Mat d_features = weight(dir_w1_).transpose() * d_hidden;

  const Row d_mag_raw = d_magnitude.array() * t.mag_raw.unaryExpr([](Scalar v) { return sigmoid(v); }).array();
  weight(grad, mag_w2_) += d_mag_raw * t.mag_hidden.transpose();
  vec(grad, mag_b2_)(0) += d_mag_raw.sum();
  Mat d_mhidden = weight(mag_w2_).transpose() * d_mag_raw;
  d_mhidden.array() *= (t.mag_hidden_pre.array() > Scalar(0)).template cast<Scalar>();
  weight(grad, mag_w1_) += d_mhidden * t.features.transpose();
  vec(grad, mag_b1_) += d_mhidden.rowwise().sum();
  d_features += weight(mag_w1_).transpose() * d_mhidden;

  Mat d_out = std::move(d_features);
  for (std::size_t k = block_ids_.size(); k-- > 0;) {
    const auto& ids = block_ids_[k];
    const auto& b = t.blocks[k];
    if (b.mask.size() != 0) {
      d_out.array() *= b.mask.array();
    }
    Mat d_aff = d_out.array() *
                b.affine.unaryExpr([slope](Scalar v) { return v > Scalar(0) ? Scalar(1) : slope; }).array();
    vec(grad, ids.gain) += (d_aff.array() * b.normalized.array()).matrix().rowwise().sum();
    vec(grad, ids.shift) += d_aff.rowwise().sum();
    const Mat d_norm = d_aff.array().colwise() * vec(ids.gain).array();
    const Row m1 = d_norm.colwise().mean();
    const Row m2 = (d_norm.array() * b.normalized.array()).matrix().colwise().mean();
    Mat d_u = d_norm;
    d_u.rowwise() -= m1;
    d_u.array() -= b.normalized.array().rowwise() * m2.array();
    d_u.array().rowwise() *= b.inv_std.array();
    weight(grad, ids.weight) += d_u * b.input.transpose();
    vec(grad, ids.bias) += d_u.rowwise().sum();
    if (k > 0) {
      d_out = weight(ids.weight).transpose() * d_u;
    }
  }
}

template class BasicAbstractor<float>;
template class BasicAbstractor<double>;

AbstractorOutput forward(const AbstractorModel& model, std::span<const float> activation,
                         bool train_mode, SplitMix64* dropout_rng) {
  const auto d = static_cast<std::size_t>(model.params().input_dim);
  if (activation.size() != d) {
    throw ValidationError("activation has dimension " + std::to_string(activation.size()) +
                          ", model expects " + std::to_string(d));
  }
  double sq = 0.0;
  for (float v : activation) {
    if (!std::isfinite(v)) {
      throw ValidationError("non-finite activation");
    }
    sq += static_cast<double>(v) * v;
  }
  if (std::sqrt(sq) < 1e-12) {
    throw ValidationError("zero-norm activation");
  }
  if (train_mode && dropout_rng == nullptr) {
    throw ValidationError("train-mode forward needs a dropout generator");
  }
  AbstractorModel::Mat x(static_cast<Eigen::Index>(d), 1);
  std::copy(activation.begin(), activation.end(), x.data());
  const auto t = model.forward(x, train_mode ? dropout_rng : nullptr);
  AbstractorOutput out;
  out.direction.assign(t.direction.data(), t.direction.data() + d);
  out.magnitude = t.magnitude(0);
  out.prediction.resize(d);
  for (std::size_t i = 0; i < d; ++i) {
    out.prediction[i] = out.magnitude * out.direction[i];
  }
  return out;
}

Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> predict_rows(
    const AbstractorModel& model,
    const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>& rows) {
  const Eigen::Index n = rows.rows();
  const Eigen::Index d = model.params().input_dim;
  if (rows.cols() != d) {
    throw ValidationError("activation matrix has " + std::to_string(rows.cols()) +
                          " columns, model expects " + std::to_string(d));
  }
  Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> out(n, d);
  constexpr Eigen::Index kChunk = 256;
  for (Eigen::Index start = 0; start < n; start += kChunk) {
    const Eigen::Index len = std::min(kChunk, n - start);
    const AbstractorModel::Mat x = rows.middleRows(start, len).transpose();
    const auto t = model.forward(x);
    const AbstractorModel::Mat pred = t.direction.array().rowwise() * t.magnitude.array();
    out.middleRows(start, len) = pred.transpose();
  }
  return out;
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    s += a[i] * b[i];
  }
  return s;
}

double cosine_checked(std::span<const double> direction, std::span<const double> target,
                      const char* what) {
  if (direction.size() != target.size()) {
    throw ValidationError("loss: dimension mismatch");
  }
  const double tn = std::sqrt(dot(target, target));
  if (tn < 1e-12) {
    throw ValidationError(std::string("loss: zero ") + what + " target");
  }
  const double dn = std::sqrt(dot(direction, direction));
  return std::clamp(dot(direction, target) / (dn * tn), -1.0, 1.0);
}

}  // namespace

double loss_attract(std::span<const double> direction, std::span<const double> positive) {
  return 1.0 - cosine_checked(direction, positive, "positive");
}

double loss_repel(std::span<const double> direction, std::span<const double> negative, double margin) {
  return std::max(0.0, cosine_checked(direction, negative, "negative") - margin);
}

double loss_mag(double magnitude, std::span<const double> positive) {
  const double diff = magnitude - std::sqrt(dot(positive, positive));
  return diff * diff;
}

template <typename Scalar>
LossBreakdown loss_total(const BasicAbstractor<Scalar>& model,
                         const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& inputs,
                         const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& positives,
                         const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& negatives,
                         const LossWeights& weights, std::vector<Scalar>* grad, SplitMix64* dropout_rng,
                         ForwardTrace<Scalar>* trace_out) {
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Row = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
  const Eigen::Index batch = inputs.cols();
  if (batch == 0) {
    throw ValidationError("loss_total: empty batch");
  }
  if (positives.cols() != batch || negatives.cols() != batch || positives.rows() != inputs.rows() ||
      negatives.rows() != inputs.rows()) {
    throw ValidationError("loss_total: batch shape mismatch");
  }
  auto trace = model.forward(inputs, dropout_rng);

  const Row pos_norm = positives.colwise().norm();
  const Row neg_norm = negatives.colwise().norm();
  for (Eigen::Index c = 0; c < batch; ++c) {
    if (!(static_cast<double>(pos_norm(c)) >= 1e-12) || !(static_cast<double>(neg_norm(c)) >= 1e-12)) {
      throw ValidationError("loss_total: zero-norm target");
    }
  }
  const Mat pos_unit = positives.array().rowwise() / pos_norm.array();
  const Mat neg_unit = negatives.array().rowwise() / neg_norm.array();
  const Row cos_pos = (trace.direction.array() * pos_unit.array()).colwise().sum();
  const Row cos_neg = (trace.direction.array() * neg_unit.array()).colwise().sum();

  LossBreakdown out;
  Row active(batch);
  for (Eigen::Index c = 0; c < batch; ++c) {
    out.attract += 1.0 - static_cast<double>(cos_pos(c));
    const double hinge = static_cast<double>(cos_neg(c)) - weights.margin;
    active(c) = hinge > 0.0 ? Scalar(1) : Scalar(0);
    out.repel += std::max(0.0, hinge);
    const double dm = static_cast<double>(trace.magnitude(c)) - static_cast<double>(pos_norm(c));
    out.mag += dm * dm;
  }
  const double inv_b = 1.0 / static_cast<double>(batch);
  out.attract *= inv_b;
  out.repel *= inv_b;
  out.mag *= inv_b;
  out.total = out.attract + weights.lambda_repel * out.repel + weights.lambda_mag * out.mag;

  if (grad != nullptr) {
    grad->assign(model.parameter_count(), Scalar(0));
    const Scalar sb = static_cast<Scalar>(inv_b);
    const Scalar lr = static_cast<Scalar>(weights.lambda_repel);
    const Mat d_dir = (-pos_unit.array() + lr * (neg_unit.array().rowwise() * active.array())) * sb;
    const Row d_mag = (trace.magnitude - pos_norm) * static_cast<Scalar>(2.0 * weights.lambda_mag * inv_b);
    model.backward(trace, d_dir, d_mag, *grad);
  }
  if (trace_out != nullptr) {
    *trace_out = std::move(trace);
  }
  return out;
}

template LossBreakdown loss_total<float>(const BasicAbstractor<float>&, const Eigen::MatrixXf&,
                                         const Eigen::MatrixXf&, const Eigen::MatrixXf&,
                                         const LossWeights&, std::vector<float>*, SplitMix64*,
                                         ForwardTrace<float>*);
template LossBreakdown loss_total<double>(const BasicAbstractor<double>&, const Eigen::MatrixXd&,
                                          const Eigen::MatrixXd&, const Eigen::MatrixXd&,
                                          const LossWeights&, std::vector<double>*, SplitMix64*,
                                          ForwardTrace<double>*);

}  // namespace absteer
