#include "absteer/steering.hpp"

#include <cmath>
#include <fstream>

#include "absteer/errors.hpp"

namespace absteer {
namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

double alpha_schedule(int t, int t_start, int seq_len, double alpha_max) {
  if (t_start < 0 || t_start >= seq_len) {
    throw ValidationError("alpha_schedule: need 0 <= t_start < seq_len");
  }
  if (t < 0 || t > seq_len) {
    throw ValidationError("alpha_schedule: position outside [0, seq_len]");
  }
  if (!(alpha_max >= 0.0 && alpha_max <= 1.0)) {
    throw ValidationError("alpha_schedule: alpha must lie in [0, 1]");
  }
  if (t < t_start) {
    return 0.0;
  }
  return alpha_max * (static_cast<double>(t - t_start) / static_cast<double>(seq_len - t_start));
}

void blend(std::span<const float> activation, std::span<const float> target, double alpha_t,
           std::span<float> out) {
  if (activation.size() != target.size() || out.size() != activation.size()) {
    throw ValidationError("blend: dimension mismatch");
  }
  if (!(alpha_t >= 0.0 && alpha_t <= 1.0)) {
    throw ValidationError("blend: alpha_t must lie in [0, 1]");
  }
  const auto a = static_cast<float>(alpha_t);
  for (std::size_t i = 0; i < activation.size(); ++i) {
    out[i] = std::lerp(activation[i], target[i], a);
  }
}

std::vector<float> blend(std::span<const float> activation, std::span<const float> target, double alpha_t) {
  std::vector<float> out(activation.size());
  blend(activation, target, alpha_t, out);
  return out;
}

std::span<const float> SteeringPlan::target(int layer, std::size_t i) const {
  auto it = targets.find(layer);
  if (it == targets.end()) {
    throw ValidationError("plan has no layer " + std::to_string(layer));
  }
  const auto d = static_cast<std::size_t>(it->second.cols());
  return {it->second.data() + i * d, d};
}

void validate_plan(const SteeringPlan& plan) {
  if (!(plan.alpha_max >= 0.0 && plan.alpha_max <= 1.0)) {
    throw ValidationError("plan alpha_max must lie in [0, 1]");
  }
  if (plan.hidden_dim <= 0) {
    throw ValidationError("plan hidden_dim must be positive");
  }
  for (std::size_t i = 1; i < plan.layers.size(); ++i) {
    if (plan.layers[i] <= plan.layers[i - 1]) {
      throw ValidationError("plan layers must be strictly increasing");
    }
  }
  if (plan.targets.size() != plan.layers.size()) {
    throw ValidationError("plan target matrices do not match its layer list");
  }
  for (const auto& e : plan.entries) {
    if (e.id.empty() || e.t_start < 0 || e.t_start >= e.seq_len) {
      throw ValidationError("plan entry '" + e.id + "' needs 0 <= t_start < seq_len");
    }
  }
  const auto n = static_cast<Eigen::Index>(plan.entries.size());
  for (int l : plan.layers) {
    auto it = plan.targets.find(l);
    if (it == plan.targets.end()) {
      throw ValidationError("plan has no targets for layer " + std::to_string(l));
    }
    if (it->second.rows() != n || it->second.cols() != plan.hidden_dim) {
      throw ValidationError("plan targets for layer " + std::to_string(l) + " have the wrong shape");
    }
    if (!it->second.allFinite()) {
      throw ValidationError("plan targets for layer " + std::to_string(l) + " are not finite");
    }
  }
}

PlanBuild build_plan(const ActivationStore& store, const std::vector<int>& layers, double alpha_max,
                     const TargetFunction& targets) {
  PlanBuild out;
  auto& plan = out.plan;
  plan.alpha_max = alpha_max;
  plan.layers = layers;
  plan.hidden_dim = store.hidden_dim;
  for (const auto& inst : store.instances) {
    plan.entries.push_back({inst.id, inst.t_start, inst.seq_len});
  }
  for (int l : layers) {
    if (!store.has_layer(l)) {
      throw ValidationError("build_plan: store lacks layer " + std::to_string(l));
    }
    plan.targets.emplace(l, targets(l, store.layer(l)));
  }
  validate_plan(plan);
  return out;
}

PlanBuild build_plan(const ActivationStore& store, const std::map<int, AbstractorModel>& models,
                     double alpha_max) {
  if (models.empty()) {
    throw ValidationError("build_plan: no models");
  }
  std::vector<int> layers;
  std::vector<std::string> warnings;
  for (const auto& [l, model] : models) {
    layers.push_back(l);
    if (model.layer() != l) {
      warnings.push_back("model trained for layer " + std::to_string(model.layer()) +
                         " applied to layer " + std::to_string(l));
    }
  }
  auto out = build_plan(store, layers, alpha_max, [&models](int l, const RowMatrixF& rows) {
    auto it = models.find(l);
    if (it == models.end()) {
      throw ValidationError("build_plan: missing model for layer " + std::to_string(l));
    }
    return predict_rows(it->second, rows);
  });
  out.warnings = std::move(warnings);
  return out;
}

RowMatrixF identity_targets(int /*layer*/, const RowMatrixF& activations) { return activations; }

void export_plan(const SteeringPlan& plan, const fs::path& dir) {
  validate_plan(plan);
  fs::create_directories(dir);
  ordered_json j;
  j["version"] = 1;
  j["alpha_max"] = plan.alpha_max;
  j["layers"] = plan.layers;
  j["hidden_dim"] = plan.hidden_dim;
  j["num_examples"] = plan.entries.size();
  ordered_json entries = ordered_json::array();
  for (const auto& e : plan.entries) {
    entries.push_back({{"id", e.id}, {"t_start", e.t_start}, {"seq_len", e.seq_len}});
  }
  j["entries"] = entries;
  ordered_json files = ordered_json::object();
  for (int l : plan.layers) {
    files[std::to_string(l)] = "target_" + std::to_string(l) + ".bin";
  }
  j["layer_files"] = files;
  {
    std::ofstream out(dir / "plan.json", std::ios::binary);
    out << j.dump(2) << '\n';
    if (!out) {
      throw IoError("cannot write plan.json in " + dir.string());
    }
  }
  for (int l : plan.layers) {
    std::ofstream out(dir / ("target_" + std::to_string(l) + ".bin"), std::ios::binary);
    const auto& m = plan.targets.at(l);
    write_f32le(out, {m.data(), static_cast<std::size_t>(m.size())});
    if (!out) {
      throw IoError("cannot write targets for layer " + std::to_string(l));
    }
  }
}

SteeringPlan import_plan(const fs::path& dir) {
  std::ifstream in(dir / "plan.json");
  if (!in) {
    throw IoError("missing plan.json in " + dir.string());
  }
  SteeringPlan plan;
  std::map<std::string, std::string> files;
  std::size_t n = 0;
  try {
    const json j = json::parse(in);
    if (j.at("version").get<int>() != 1) {
      throw ValidationError("unsupported plan version");
    }
    plan.alpha_max = j.at("alpha_max").get<double>();
    plan.layers = j.at("layers").get<std::vector<int>>();
    plan.hidden_dim = j.at("hidden_dim").get<int>();
    n = j.at("num_examples").get<std::size_t>();
    for (const auto& e : j.at("entries")) {
      plan.entries.push_back(
          {e.at("id").get<std::string>(), e.at("t_start").get<int>(), e.at("seq_len").get<int>()});
    }
    files = j.at("layer_files").get<std::map<std::string, std::string>>();
  } catch (const json::exception& e) {
    throw ValidationError("malformed plan.json: " + std::string(e.what()));
  }
  if (!(plan.alpha_max >= 0.0 && plan.alpha_max <= 1.0)) {
    throw ValidationError("plan alpha_max must lie in [0, 1]");
  }
  if (plan.entries.size() != n) {
    throw ValidationError("plan entry count does not match num_examples");
  }
  if (plan.hidden_dim <= 0) {
    throw ValidationError("plan hidden_dim must be positive");
  }
  const auto d = static_cast<std::size_t>(plan.hidden_dim);
  for (int l : plan.layers) {
    auto it = files.find(std::to_string(l));
    if (it == files.end()) {
      throw ValidationError("plan has no target file for layer " + std::to_string(l));
    }
    const fs::path path = dir / it->second;
    if (!fs::exists(path)) {
      throw IoError("missing target file " + path.string());
    }
    if (fs::file_size(path) != n * d * sizeof(float)) {
      throw ValidationError("size mismatch for " + path.string());
    }
    RowMatrixF m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    std::ifstream bin(path, std::ios::binary);
    read_f32le(bin, {m.data(), static_cast<std::size_t>(m.size())});
    plan.targets.emplace(l, std::move(m));
  }
  validate_plan(plan);
  return plan;
}

std::vector<double> default_alpha_grid() {
  std::vector<double> grid;
  for (int i = 1; i <= 10; ++i) {
    grid.push_back(i / 10.0);
  }
  return grid;
}

}  // namespace absteer
