#include "absteer/training.hpp"

#include <algorithm>
#include <cmath>

#include "absteer/errors.hpp"
#include "absteer/hashing.hpp"

namespace absteer {
using nlohmann::json;
using nlohmann::ordered_json;

void TrainConfig::validate() const {
  if (!(learning_rate > 0) || !(weight_decay >= 0) || batch_size <= 0 || !(grad_clip > 0) ||
      plateau_patience < 0 || !(plateau_factor > 0 && plateau_factor < 1) || max_epochs <= 0 ||
      early_stop_patience <= 0 || !(lambda_repel >= 0) || !(lambda_mag >= 0)) {
    throw ValidationError("train config: values must be positive");
  }
  if (!(margin >= -1.0 && margin <= 1.0)) {
    throw ValidationError("train config: margin must lie in [-1, 1]");
  }
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw ValidationError("train config: val_fraction must lie in (0, 1)");
  }
}

ordered_json to_json(const TrainConfig& c) {
  ordered_json j;
  j["learning_rate"] = c.learning_rate;
  j["weight_decay"] = c.weight_decay;
  j["batch_size"] = c.batch_size;
  j["grad_clip"] = c.grad_clip;
  j["plateau_patience"] = c.plateau_patience;
  j["plateau_factor"] = c.plateau_factor;
  j["max_epochs"] = c.max_epochs;
  j["early_stop_patience"] = c.early_stop_patience;
  j["margin"] = c.margin;
  j["lambda_repel"] = c.lambda_repel;
  j["lambda_mag"] = c.lambda_mag;
  j["val_fraction"] = c.val_fraction;
  j["seed"] = c.seed;
  return j;
}

TrainConfig train_config_from_json(const json& j, TrainConfig c) {
  try {
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.grad_clip = j.value("grad_clip", c.grad_clip);
    c.plateau_patience = j.value("plateau_patience", c.plateau_patience);
    c.plateau_factor = j.value("plateau_factor", c.plateau_factor);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.early_stop_patience = j.value("early_stop_patience", c.early_stop_patience);
    c.margin = j.value("margin", c.margin);
    c.lambda_repel = j.value("lambda_repel", c.lambda_repel);
    c.lambda_mag = j.value("lambda_mag", c.lambda_mag);
    c.val_fraction = j.value("val_fraction", c.val_fraction);
    c.seed = j.value("seed", c.seed);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed train config: ") + e.what());
  }
  return c;
}

std::string config_hash(const AbstractorParams& params, const TrainConfig& cfg) {
  ordered_json j;
  j["params"] = to_json(params);
  j["train"] = to_json(cfg);
  return sha256_hex(j.dump());
}

ordered_json to_json(const TrainReport& r) {
  ordered_json j;
  j["layer"] = r.layer;
  j["best_epoch"] = r.best_epoch;
  j["best_val_loss"] = r.best_val_loss;
  j["stopped_early"] = r.stopped_early;
  j["train_size"] = r.train_size;
  j["val_size"] = r.val_size;
  j["config_hash"] = r.config_hash;
  ordered_json epochs = ordered_json::array();
  for (const auto& e : r.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"train_loss", e.train_loss},
                      {"val_loss", e.val_loss},
                      {"val_attract", e.val_attract},
                      {"lr", e.lr}});
  }
  j["epochs"] = epochs;
  return j;
}

namespace {

using MatF = Eigen::MatrixXf;

struct TripletData {
  MatF inputs, positives, negatives;  // d x n
};

TripletData gather(const ActivationStore& store, const std::vector<Triplet>& triplets,
                   const std::vector<std::size_t>& which, int layer) {
  const auto& m = store.layer(layer);
  const Eigen::Index d = m.cols();
  const auto n = static_cast<Eigen::Index>(which.size());
  TripletData out{MatF(d, n), MatF(d, n), MatF(d, n)};
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto& t = triplets[which[static_cast<std::size_t>(j)]];
    out.inputs.col(j) = m.row(static_cast<Eigen::Index>(t.content_idx)).transpose();
    out.positives.col(j) = m.row(static_cast<Eigen::Index>(t.pos_idx)).transpose();
    out.negatives.col(j) = m.row(static_cast<Eigen::Index>(t.neg_idx)).transpose();
  }
  return out;
}

}  // namespace

TrainResult train(const ActivationStore& store, const std::vector<Triplet>& triplets, int layer,
                  const AbstractorParams& params, const TrainConfig& cfg) {
  cfg.validate();
  if (triplets.size() < 2) {
    throw ValidationError("train: need at least two triplets (one for validation)");
  }
  if (params.input_dim != store.hidden_dim) {
    throw ValidationError("train: params.input_dim does not match the store hidden_dim");
  }
  store.layer(layer);
  check_triplets(triplets, store);

  SplitMix64 seeder(cfg.seed);
  SplitMix64 split_rng(seeder.next());
  SplitMix64 init_rng(seeder.next());
  SplitMix64 order_rng(seeder.next());
  SplitMix64 dropout_rng(seeder.next());

  const std::size_t n = triplets.size();
  auto order = permutation(n, split_rng);
  const std::size_t n_val = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(cfg.val_fraction * static_cast<double>(n))), 1, n - 1);
  std::vector<std::size_t> val_idx(order.begin(), order.begin() + static_cast<long>(n_val));
  std::vector<std::size_t> train_idx(order.begin() + static_cast<long>(n_val), order.end());
  std::sort(val_idx.begin(), val_idx.end());
  std::sort(train_idx.begin(), train_idx.end());

  const TripletData val = gather(store, triplets, val_idx, layer);

  TrainResult result{AbstractorModel(params, layer), {}, cfg.seed};
  auto& model = result.model;
  model.initialize(init_rng);
  auto& report = result.report;
  report.layer = layer;
  report.train_size = train_idx.size();
  report.val_size = val_idx.size();
  report.config_hash = config_hash(params, cfg);
  for (std::size_t i : train_idx) {
    report.train_content_ids.push_back(store.instances[triplets[i].content_idx].id);
  }

  const LossWeights weights = cfg.loss_weights();
  AdamW opt(model.parameter_count(), cfg.weight_decay);
  PlateauScheduler scheduler(cfg.learning_rate, cfg.plateau_patience, cfg.plateau_factor);
  EarlyStopping stopper(cfg.early_stop_patience);
  std::vector<float> best_params = model.parameters();
  std::vector<float> grad;
  const auto batch = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const double lr = scheduler.lr();
    std::vector<std::size_t> epoch_order = train_idx;
    shuffle(std::span<std::size_t>(epoch_order), order_rng);
    double train_sum = 0.0;
    for (std::size_t start = 0; start < epoch_order.size(); start += batch) {
      const std::size_t end = std::min(start + batch, epoch_order.size());
      const std::vector<std::size_t> which(epoch_order.begin() + static_cast<long>(start),
                                           epoch_order.begin() + static_cast<long>(end));
      const TripletData b = gather(store, triplets, which, layer);
      const LossBreakdown loss =
          loss_total(model, b.inputs, b.positives, b.negatives, weights, &grad, &dropout_rng);
      if (!std::isfinite(loss.total)) {
        throw NumericError("training diverged (non-finite loss) at epoch " + std::to_string(epoch));
      }
      train_sum += loss.total * static_cast<double>(end - start);
      clip_grad_norm(grad, cfg.grad_clip);
      opt.step(model.parameters(), grad, lr);
    }
    const LossBreakdown vloss = loss_total(model, val.inputs, val.positives, val.negatives, weights);
    if (!std::isfinite(vloss.total)) {
      throw NumericError("training diverged (non-finite validation loss) at epoch " +
                         std::to_string(epoch));
    }
    report.epochs.push_back(
        {epoch, train_sum / static_cast<double>(train_idx.size()), vloss.total, vloss.attract, lr});
    if (stopper.update(vloss.total)) {
      best_params = model.parameters();
      report.best_epoch = epoch;
      report.best_val_loss = vloss.total;
    }
    scheduler.step(vloss.total);
    if (stopper.should_stop()) {
      report.stopped_early = epoch < cfg.max_epochs;
      break;
    }
  }
  model.parameters() = std::move(best_params);
  return result;
}

}  // namespace absteer
