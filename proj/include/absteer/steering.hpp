#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "absteer/abstractor.hpp"
#include "absteer/store.hpp"

namespace absteer {

/// Positional steering strength: 0 before t_start, then a linear ramp that
/// reaches alpha_max at t = seq_len. Positions are 0-based, so the last
/// prompt token (seq_len - 1) gets slightly less than alpha_max.
double alpha_schedule(int t, int t_start, int seq_len, double alpha_max);

/// (1 - alpha_t) * activation + alpha_t * target, evaluated with std::lerp so
/// alpha_t = 0 returns the activation and alpha_t = 1 the target exactly, and
/// a target equal to the activation is a fixed point.
void blend(std::span<const float> activation, std::span<const float> target, double alpha_t,
           std::span<float> out);
std::vector<float> blend(std::span<const float> activation, std::span<const float> target, double alpha_t);

struct PlanEntry {
  std::string id;
  int t_start = 0;
  int seq_len = 1;

  bool operator==(const PlanEntry&) const = default;
};

/// Per-example, per-layer steering targets. targets[l] row i belongs to
/// entries[i] and is broadcast to every position t >= t_start.
struct SteeringPlan {
  double alpha_max = 0.0;
  std::vector<int> layers;
  int hidden_dim = 0;
  std::vector<PlanEntry> entries;
  std::map<int, RowMatrixF> targets;

  std::size_t size() const { return entries.size(); }
  std::span<const float> target(int layer, std::size_t i) const;
};

void validate_plan(const SteeringPlan& plan);

// Maps a layer's N x d activations to N x d targets.
using TargetFunction = std::function<RowMatrixF(int layer, const RowMatrixF& activations)>;

struct PlanBuild {
  SteeringPlan plan;
  std::vector<std::string> warnings;
};

/// Pre-computation pass: targets from pass-1 activations of every store
/// instance. A model whose recorded layer differs from the layer it is
/// applied to is used anyway, with a warning record.
PlanBuild build_plan(const ActivationStore& store, const std::map<int, AbstractorModel>& models,
                     double alpha_max);
PlanBuild build_plan(const ActivationStore& store, const std::vector<int>& layers, double alpha_max,
                     const TargetFunction& targets);

// The exact fixed point of normalize-then-rescale: targets equal inputs.
RowMatrixF identity_targets(int layer, const RowMatrixF& activations);

void export_plan(const SteeringPlan& plan, const std::filesystem::path& dir);
SteeringPlan import_plan(const std::filesystem::path& dir);

// Default alpha grid {0.1, 0.2, ..., 1.0}.
std::vector<double> default_alpha_grid();

}  // namespace absteer
