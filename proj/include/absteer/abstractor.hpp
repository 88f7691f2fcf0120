#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "absteer/rng.hpp"

namespace absteer {

/// Shape of one Abstractor. The backbone is a stack of
/// Linear + LayerNorm + LeakyReLU blocks with dropout after every block but
/// the last; both heads are Linear + ReLU followed by a Linear output
/// (L2-normalized for direction, softplus for magnitude).
struct AbstractorParams {
  int input_dim = 0;
  std::vector<int> backbone = {1024, 1024, 1024};
  int direction_hidden = 512;
  int magnitude_hidden = 512;
  double leaky_slope = 0.01;
  double dropout = 0.1;
  double layer_norm_eps = 1e-5;

  void validate() const;
  bool operator==(const AbstractorParams&) const = default;
};

nlohmann::ordered_json to_json(const AbstractorParams& p);
AbstractorParams params_from_json(const nlohmann::json& j);

struct TensorSpec {
  std::string name;
  int rows = 0;
  int cols = 0;  // 1 for vectors
  std::size_t offset = 0;

  std::size_t size() const { return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols); }
};

/// Cached intermediates of one batched forward pass; columns are samples.
template <typename Scalar>
struct ForwardTrace {
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Row = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

  struct Block {
    Mat input;
    Mat normalized;  // LayerNorm x-hat
    Row inv_std;
    Mat affine;  // gamma * x-hat + beta, the LeakyReLU argument
    Mat mask;    // scaled keep-mask, empty when dropout is off
    Mat output;
  };

  std::vector<Block> blocks;
  Mat features;  // backbone output z
  Mat dir_hidden_pre;
  Mat dir_hidden;
  Mat dir_raw;  // g_d(z) before normalization
  Row dir_norm;
  Mat direction;
  Mat mag_hidden_pre;
  Mat mag_hidden;
  Row mag_raw;  // softplus argument
  Row magnitude;
};

template <typename Scalar>
class BasicAbstractor {
 public:
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Row = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

  explicit BasicAbstractor(AbstractorParams params, int layer = 0);

  // Fan-in scaled uniform init: weights and biases ~ U(-1/sqrt(fan_in), +),
  // LayerNorm gain 1 and shift 0.
  void initialize(SplitMix64& rng);

  const AbstractorParams& params() const { return params_; }
  int layer() const { return layer_; }
  void set_layer(int layer) { layer_ = layer; }

  std::vector<Scalar>& parameters() { return theta_; }
  const std::vector<Scalar>& parameters() const { return theta_; }
  const std::vector<TensorSpec>& tensors() const { return specs_; }
  std::size_t parameter_count() const { return theta_.size(); }

  /// Batched pass; `dropout_rng` non-null enables train mode. Throws
  /// NumericError if a direction pre-normalization has norm < 1e-12.
  ForwardTrace<Scalar> forward(const Mat& inputs, SplitMix64* dropout_rng = nullptr) const;

  /// Accumulates parameter gradients (same layout as parameters()) given the
  /// loss gradients w.r.t. the unit direction and the magnitude.
  void backward(const ForwardTrace<Scalar>& trace, const Mat& d_direction, const Row& d_magnitude,
                std::vector<Scalar>& grad) const;

  template <typename Other>
  BasicAbstractor<Other> cast() const {
    BasicAbstractor<Other> out(params_, layer_);
    auto& dst = out.parameters();
    for (std::size_t i = 0; i < theta_.size(); ++i) {
      dst[i] = static_cast<Other>(theta_[i]);
    }
    return out;
  }

 private:
  using RowMajorMat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using ConstMatMap = Eigen::Map<const RowMajorMat>;
  using MatMap = Eigen::Map<RowMajorMat>;
  using ConstVecMap = Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>;
  using VecMap = Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>;

  std::size_t add_tensor(const std::string& name, int rows, int cols);
  ConstMatMap weight(std::size_t spec) const;
  ConstVecMap vec(std::size_t spec) const;
  MatMap weight(std::vector<Scalar>& buf, std::size_t spec) const;
  VecMap vec(std::vector<Scalar>& buf, std::size_t spec) const;

  AbstractorParams params_;
  int layer_;
  std::vector<TensorSpec> specs_;
  std::vector<Scalar> theta_;

  // Indices into specs_.
  struct BlockIds {
    std::size_t weight, bias, gain, shift;
  };
  std::vector<BlockIds> block_ids_;
  std::size_t dir_w1_, dir_b1_, dir_w2_, dir_b2_;
  std::size_t mag_w1_, mag_b1_, mag_w2_, mag_b2_;
};

using AbstractorModel = BasicAbstractor<float>;

/// Single-vector inference in eval mode.
struct AbstractorOutput {
  std::vector<float> direction;  // unit norm
  float magnitude = 0.0f;        // >= 0
  std::vector<float> prediction;  // magnitude * direction
};

// Throws ValidationError on non-finite or zero-norm input.
AbstractorOutput forward(const AbstractorModel& model, std::span<const float> activation,
                         bool train_mode = false, SplitMix64* dropout_rng = nullptr);

// Eval-mode predictions for every row of `rows` (N x d, row-major).
Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> predict_rows(
    const AbstractorModel& model,
    const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>& rows);

// ---------------------------------------------------------------------------
// Losses

double loss_attract(std::span<const double> direction, std::span<const double> positive);
double loss_repel(std::span<const double> direction, std::span<const double> negative, double margin);
double loss_mag(double magnitude, std::span<const double> positive);

struct LossWeights {
  double margin = 0.2;
  double lambda_repel = 0.75;
  double lambda_mag = 1.0;
};

struct LossBreakdown {
  double total = 0.0;
  double attract = 0.0;
  double repel = 0.0;
  double mag = 0.0;
};

/// Batch mean of attract + lambda_repel * repel + lambda_mag * mag. Columns
/// of inputs/positives/negatives are samples. When `grad` is non-null it is
/// resized, zeroed and filled with dL/dtheta.
template <typename Scalar>
LossBreakdown loss_total(const BasicAbstractor<Scalar>& model,
                         const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& inputs,
                         const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& positives,
                         const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& negatives,
                         const LossWeights& weights, std::vector<Scalar>* grad = nullptr,
                         SplitMix64* dropout_rng = nullptr, ForwardTrace<Scalar>* trace_out = nullptr);

}  // namespace absteer
