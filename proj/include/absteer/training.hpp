#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "absteer/abstractor.hpp"
#include "absteer/matcher.hpp"
#include "absteer/store.hpp"

namespace absteer {

struct TrainConfig {
  double learning_rate = 5e-4;
  double weight_decay = 1e-3;
  int batch_size = 128;
  double grad_clip = 1.0;
  int plateau_patience = 10;
  double plateau_factor = 0.5;
  int max_epochs = 150;
  int early_stop_patience = 20;
  double margin = 0.2;
  double lambda_repel = 0.75;
  double lambda_mag = 1.0;
  double val_fraction = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
  LossWeights loss_weights() const { return {margin, lambda_repel, lambda_mag}; }
};

nlohmann::ordered_json to_json(const TrainConfig& c);
// Missing keys keep their defaults.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

// SHA-256 over the canonical JSON of (params, config).
std::string config_hash(const AbstractorParams& params, const TrainConfig& cfg);

/// AdamW with decoupled weight decay (applied to every parameter).
class AdamW {
 public:
  AdamW(std::size_t n, double weight_decay, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  void step(std::vector<float>& params, const std::vector<float>& grad, double lr);

 private:
  double weight_decay_, beta1_, beta2_, eps_;
  std::vector<double> m_, v_;
  long step_ = 0;
};

// Scales grad in place so its global L2 norm is at most max_norm; returns
// the norm before clipping.
double clip_grad_norm(std::vector<float>& grad, double max_norm);

/// Halves (by `factor`) the learning rate once the monitored loss has not
/// improved by a relative 1e-4 for more than `patience` epochs.
class PlateauScheduler {
 public:
  PlateauScheduler(double lr, int patience, double factor);
  // Returns the learning rate for the next epoch.
  double step(double metric);
  double lr() const { return lr_; }

 private:
  double lr_;
  int patience_;
  double factor_;
  double best_ = std::numeric_limits<double>::infinity();
  int bad_epochs_ = 0;
};

/// Stops after `patience` consecutive epochs without a strict improvement.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience) : patience_(patience) {}
  // True when this epoch is the new best.
  bool update(double metric);
  bool should_stop() const { return bad_epochs_ >= patience_; }
  double best() const { return best_; }

 private:
  int patience_;
  double best_ = std::numeric_limits<double>::infinity();
  int bad_epochs_ = 0;
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_attract = 0.0;
  double lr = 0.0;

  bool operator==(const EpochLog&) const = default;
};

struct TrainReport {
  int layer = 0;
  std::vector<EpochLog> epochs;
  int best_epoch = 0;
  double best_val_loss = 0.0;
  bool stopped_early = false;
  std::size_t train_size = 0;
  std::size_t val_size = 0;
  std::vector<std::string> train_content_ids;  // for leakage audits
  std::string config_hash;

  bool operator==(const TrainReport&) const = default;
};

nlohmann::ordered_json to_json(const TrainReport& r);

struct TrainResult {
  AbstractorModel model;
  TrainReport report;
  std::uint64_t seed = 0;
};

/// Trains one Abstractor on layer-`layer` activations of the triplets.
/// A deterministic `val_fraction` of triplets is held out for early stopping
/// and the plateau schedule; the returned model is the best-validation one.
/// Throws NumericError naming the epoch if the loss becomes non-finite.
TrainResult train(const ActivationStore& store, const std::vector<Triplet>& triplets, int layer,
                  const AbstractorParams& params, const TrainConfig& cfg);

}  // namespace absteer
