#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "absteer/abstractor.hpp"
#include "absteer/evaluation.hpp"
#include "absteer/layer_analysis.hpp"
#include "absteer/steering.hpp"
#include "absteer/store.hpp"
#include "absteer/training.hpp"

namespace absteer {

// Synthetic residual-stream geometry. All layers share three orthonormal
// axes: a common bias direction, a validity axis and a semantic axis. The
// injected content effect moves content rows along a plausibility axis that
// leans on the validity axis by `content_alignment`.
struct SynthConfig {
  int dim = 32;
  int layers = 16;
  int n_per_category = 64;
  int schemas = 8;  // half valid, half invalid
  double separation = 5.0;  // peak distance between validity clusters
  double semantic_shift = 2.5;
  double content_alignment = 0.8;  // cosine between plausibility and validity axes
  double bias = 1.0;
  double schema_spread = 0.8;
  double noise = 0.3;
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::ordered_json to_json(const SynthConfig& c);
SynthConfig synth_config_from_json(const nlohmann::json& j, SynthConfig base = {});

struct SynthAxes {
  std::vector<double> bias, validity, semantic, plausibility;
};

struct SynthData {
  ActivationStore store;  // content rows first, then their abstract pairs
  SynthAxes axes;
  std::vector<double> separation;  // per layer
};

SynthData generate(const SynthConfig& cfg);

// Validity separation at layer l: peaks mid-depth, never below half the peak.
double layer_separation(const SynthConfig& cfg, int layer);

struct ToyReader {
  int layer = 0;
  std::vector<double> weights;  // unit norm
  double bias = 0.0;

  double score(std::span<const float> x) const;
  Validity predict(std::span<const float> x) const {
    return score(x) > 0.0 ? Validity::valid : Validity::invalid;
  }
};

// Linear classifier fit on the abstract rows of `store` at `layer`.
ToyReader train_reader(const ActivationStore& store, int layer, const HingeOptions& opts = {});

/// Re-reads each plan entry with steering applied. Blending runs over the plan
/// layers in ascending order at the last prompt token (t = seq_len - 1); the
/// displacement introduced at one layer is carried forward in the residual
/// stream to the next, and the reader sees its own layer's row plus the
/// carried displacement.
std::vector<Validity> read_steered(const ActivationStore& store, const SteeringPlan& plan,
                                   const ToyReader& reader);
std::vector<Validity> read_unsteered(const ActivationStore& store, const ToyReader& reader);

struct PipelineConfig {
  int fold_count = 3;
  int window = 3;
  LayerRegion region{};
  AbstractorParams abstractor{};  // input_dim is taken from the data
  TrainConfig train{};
  std::vector<double> alpha_grid = default_alpha_grid();
  int workers = 1;
};

struct E2EConfig {
  SynthConfig synth;
  PipelineConfig pipeline;
};

nlohmann::ordered_json to_json(const E2EConfig& c);
E2EConfig e2e_config_from_json(const nlohmann::json& j);
E2EConfig load_e2e_config(const std::filesystem::path& path);
std::string config_hash(const E2EConfig& c);

struct FoldRun {
  int fold = 0;
  int reference_layer = 0;  // provisional matching layer
  SimilarityProfile profile;
  std::vector<int> layers;            // selected steering layers
  std::array<std::size_t, 3> tier_counts{};
  std::vector<TrainReport> train_reports;
  ActivationStore heldout;            // held-out content rows
  ActivationStore heldout_abstract;   // their abstract pairs
  SteeringPlan targets;               // alpha_max unset; targets for heldout rows
};

struct PreparedPipeline {
  E2EConfig config;
  std::string config_hash;
  SynthData data;
  ToyReader reader;
  double reader_abstract_accuracy = 0.0;
  std::vector<FoldRun> folds;
  // Content ids an Abstractor saw that belong to the fold it is evaluated
  // on. Always empty unless the fold bookkeeping is broken.
  std::vector<std::string> leakage;
};

// Data generation, reader, matching, layer selection and Abstractor
// training; everything that does not depend on alpha.
PreparedPipeline prepare_pipeline(const E2EConfig& cfg);

struct E2EResult {
  EvalReport unsteered;
  EvalReport steered;
  EvalReport abstract;
  std::vector<PredictionRecord> predictions;
};

E2EResult evaluate_at(const PreparedPipeline& prep, double alpha);
E2EResult run_end_to_end(const E2EConfig& cfg, double alpha);

struct SweepResult {
  EvalReport unsteered;
  std::map<double, EvalReport> steered;
  double alpha_star = 0.0;
};

// Steered reports over the grid; alpha_star by fold-aggregated BPA.
SweepResult sweep(const PreparedPipeline& prep, const std::vector<double>& grid);

// Restricts a store to the given rows (in the given order).
ActivationStore subset_store(const ActivationStore& store, const std::vector<std::size_t>& rows);

}  // namespace absteer
