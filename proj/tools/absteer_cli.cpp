// absteer: command-line driver for the steering pipeline.
//
// Every subcommand writes its artifacts plus a run.json provenance record
// into --out. Settings come from an optional --config JSON file; flags given
// on the command line win over file values.

#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "absteer/dataset.hpp"
#include "absteer/errors.hpp"
#include "absteer/evaluation.hpp"
#include "absteer/hashing.hpp"
#include "absteer/layer_analysis.hpp"
#include "absteer/matcher.hpp"
#include "absteer/model_io.hpp"
#include "absteer/parallel.hpp"
#include "absteer/steering.hpp"
#include "absteer/store.hpp"
#include "absteer/syllogism.hpp"
#include "absteer/testbed.hpp"
#include "absteer/training.hpp"
#include "absteer/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;
using namespace absteer;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One JSON-configurable setting bound to a CLI option.
struct Binding {
  std::string key;
  CLI::Option* option;
  bool is_path;
  std::function<void(const json&)> assign;
  std::function<json()> value;
};

class Settings {
 public:
  explicit Settings(CLI::App* app) : app_(app) {
    app_->add_option("--config", config_file_, "JSON config file (flags override its values)");
  }

  template <typename T>
  CLI::Option* add(const std::string& key, T& target, const std::string& help, bool is_path = false) {
    auto* opt = app_->add_option("--" + dashed(key), target, help);
    bindings_.push_back({key, opt, is_path, [&target](const json& v) { target = v.get<T>(); },
                         [&target] { return json(target); }});
    return opt;
  }

  CLI::Option* path(const std::string& key, std::string& target, const std::string& help) {
    return add(key, target, help, true);
  }

  CLI::Option* flag(const std::string& key, bool& target, const std::string& help) {
    auto* opt = app_->add_flag("--" + dashed(key), target, help);
    bindings_.push_back({key, opt, false, [&target](const json& v) { target = v.get<bool>(); },
                         [&target] { return json(target); }});
    return opt;
  }

  // Fills unset options from the config file.
  void resolve() {
    if (config_file_.empty()) {
      return;
    }
    std::ifstream in(config_file_);
    if (!in) {
      throw IoError("cannot read config file " + config_file_);
    }
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw ValidationError(config_file_ + ": " + e.what());
    }
    if (!j.is_object()) {
      throw ValidationError(config_file_ + ": config must be a JSON object");
    }
    for (const auto& [key, v] : j.items()) {
      auto it = std::find_if(bindings_.begin(), bindings_.end(), [&](const Binding& b) { return b.key == key; });
      if (it == bindings_.end()) {
        throw ValidationError(config_file_ + ": unknown key '" + key + "'");
      }
      if (it->option->count() == 0) {
        try {
          it->assign(v);
        } catch (const json::exception& e) {
          throw ValidationError(config_file_ + ": bad value for '" + key + "': " + e.what());
        }
      }
    }
  }

  ordered_json effective() const {
    ordered_json j;
    for (const auto& b : bindings_) j[b.key] = b.value();
    return j;
  }

  // Hash over every non-path setting; inputs are covered by their content hashes.
  std::string hash() const {
    ordered_json j;
    for (const auto& b : bindings_) {
      if (!b.is_path) j[b.key] = b.value();
    }
    return sha256_hex(j.dump());
  }

 private:
  static std::string dashed(std::string s) {
    std::replace(s.begin(), s.end(), '_', '-');
    return s;
  }

  CLI::App* app_;
  std::string config_file_;
  std::vector<Binding> bindings_;
};

void require(const std::string& value, const std::string& key) {
  if (value.empty()) {
    throw UsageError("missing required setting --" + key);
  }
}

fs::path input_path(const std::string& value, const std::string& key) {
  require(value, key);
  if (!fs::exists(value)) {
    throw ValidationError("--" + key + ": " + value + " does not exist");
  }
  return value;
}

void write_json(const fs::path& path, const ordered_json& j) {
  std::ofstream out(path, std::ios::binary);
  out << j.dump(2) << '\n';
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
}

void write_run(const fs::path& out, const std::string& subcommand, const Settings& s,
               const std::vector<fs::path>& inputs, ordered_json extra = ordered_json::object()) {
  ordered_json j;
  j["tool"] = "absteer";
  j["version"] = kVersion;
  j["subcommand"] = subcommand;
  j["config_hash"] = s.hash();
  j["config"] = s.effective();
  ordered_json hashes = ordered_json::object();
  for (const auto& p : inputs) hashes[p.generic_string()] = sha256_path(p);
  j["inputs"] = hashes;
  for (auto& [k, v] : extra.items()) j[k] = v;
  write_json(out / "run.json", j);
}

std::string alpha_tag(double a) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", a);
  return buf;
}

std::vector<SyllogismInstance> read_instances(const fs::path& p) {
  return fs::is_directory(p) ? read_instances_jsonl(p / "instances.jsonl") : read_instances_jsonl(p);
}

std::map<std::string, Validity> abstract_predictions(const std::vector<PredictionRecord>& preds) {
  std::map<std::string, Validity> out;
  for (const auto& p : preds) {
    if (p.condition == Condition::abstract) out[p.id] = p.predicted;
  }
  return out;
}

std::vector<int> read_layers_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw IoError("cannot read " + p.string());
  try {
    return json::parse(in).at("layers").get<std::vector<int>>();
  } catch (const json::exception& e) {
    throw ValidationError(p.string() + ": " + e.what());
  }
}

// Fold reports per (condition, alpha), aggregated. Content-condition folds get
// eta from the abstract accuracy of the same fold when available.
std::vector<EvalReport> evaluate_groups(const std::vector<PredictionRecord>& preds,
                                        const std::vector<SyllogismInstance>& instances, const std::string& hash) {
  using Key = std::pair<int, double>;  // condition, alpha (-1 when absent)
  std::map<Key, std::map<int, std::vector<PredictionRecord>>> groups;
  for (const auto& p : preds) {
    groups[{static_cast<int>(p.condition), p.alpha.value_or(-1.0)}][p.fold].push_back(p);
  }
  std::map<int, double> abstract_acc;
  const Key abs_key{static_cast<int>(Condition::abstract), -1.0};
  if (groups.count(abs_key)) {
    for (const auto& [fold, fp] : groups.at(abs_key)) abstract_acc[fold] = make_report(fp, instances).acc_global;
  }
  std::vector<EvalReport> out;
  for (const auto& [key, folds] : groups) {
    std::vector<EvalReport> reports;
    for (const auto& [fold, fp] : folds) {
      std::optional<double> acc_abs;
      if (key.first != static_cast<int>(Condition::abstract) && abstract_acc.count(fold)) {
        acc_abs = abstract_acc.at(fold);
      }
      EvalReport r = make_report(fp, instances, acc_abs);
      r.fold = fold;
      r.config_hash = hash;
      reports.push_back(std::move(r));
    }
    out.push_back(aggregate_folds(reports));
  }
  return out;
}

std::string report_name(const EvalReport& r) {
  std::string name = "report_" + std::string(to_string(r.condition));
  if (r.alpha) name += "_a" + alpha_tag(*r.alpha);
  return name;
}

ordered_json error_json(const char* kind, const std::string& msg) {
  ordered_json j;
  j["error"] = kind;
  j["message"] = msg;
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Abstractor training, steering plans and belief-bias evaluation"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  std::function<void()> action;

  // gen-data ---------------------------------------------------------------
  struct {
    std::string templates, terms, synth, out;
    int catalog_size = 24;
    bool existential_import = false;
  } gd;
  auto* gen = app.add_subcommand("gen-data", "Generate syllogism instances or a synthetic activation store");
  Settings gen_s(gen);
  gen_s.path("templates", gd.templates, "sentence template JSON (default: built-in English)");
  gen_s.path("terms", gd.terms, "term bank JSONL");
  gen_s.path("synth", gd.synth, "synthetic testbed config; writes a store and reader predictions instead");
  gen_s.add("catalog_size", gd.catalog_size, "schema catalog size (24 or 256)");
  gen_s.flag("existential_import", gd.existential_import, "decide validity with existential import");
  gen_s.path("out", gd.out, "output directory");
  gen->callback([&] {
    action = [&] {
      gen_s.resolve();
      require(gd.out, "out");
      const fs::path out = gd.out;
      fs::create_directories(out);
      if (!gd.synth.empty()) {
        const auto cfg = load_e2e_config(input_path(gd.synth, "synth"));
        const auto data = generate(cfg.synth);
        save_store(data.store, out / "store");
        const ToyReader reader = train_reader(data.store, data.store.layers.back());
        std::vector<PredictionRecord> preds;
        const auto labels = read_unsteered(data.store, reader);
        for (std::size_t i = 0; i < data.store.size(); ++i) {
          const auto& inst = data.store.instances[i];
          preds.push_back({inst.id, inst.form == Form::abstract ? Condition::abstract : Condition::unsteered,
                           labels[i], std::nullopt, 0});
        }
        write_predictions(preds, out / "predictions.jsonl");
        write_run(out, "gen-data", gen_s, {gd.synth});
        return;
      }
      const Templates templates =
          gd.templates.empty() ? Templates::english() : Templates::load(input_path(gd.templates, "templates"));
      const auto catalog = enumerate_schemas(gd.catalog_size, gd.existential_import);
      const auto bank = read_term_bank(input_path(gd.terms, "terms"));
      write_instances_jsonl(generate_dataset(catalog, bank, templates), out / "instances.jsonl");
      std::vector<fs::path> inputs{gd.terms};
      if (!gd.templates.empty()) inputs.emplace_back(gd.templates);
      write_run(out, "gen-data", gen_s, inputs);
    };
  });

  // match ------------------------------------------------------------------
  struct {
    std::string store, predictions, content_ids, out;
    int layer = -1;
  } mt;
  auto* match = app.add_subcommand("match", "Build contrastive triplets at one layer");
  Settings match_s(match);
  match_s.path("store", mt.store, "activation store directory");
  match_s.path("predictions", mt.predictions, "prediction JSONL; abstract-condition rows define the correct set");
  match_s.path("content_ids", mt.content_ids, "optional file of content ids to match (one per line)");
  match_s.add("layer", mt.layer, "layer to match at");
  match_s.path("out", mt.out, "output directory");
  match->callback([&] {
    action = [&] {
      match_s.resolve();
      require(mt.out, "out");
      const auto store = load_store(input_path(mt.store, "store"));
      const auto preds = read_predictions(input_path(mt.predictions, "predictions"));
      std::vector<SyllogismInstance> abstract;
      for (const auto& inst : store.instances) {
        if (inst.form == Form::abstract) abstract.push_back(inst);
      }
      auto abs_preds = abstract_predictions(preds);
      for (auto it = abs_preds.begin(); it != abs_preds.end();) {
        it = store.index_of(it->first) == ActivationStore::npos ? abs_preds.erase(it) : std::next(it);
      }
      const CorrectSet cset = build_correct_set(abstract, abs_preds);
      std::vector<fs::path> inputs{mt.store, mt.predictions};
      std::optional<std::set<std::string>> ids;
      if (!mt.content_ids.empty()) {
        inputs.emplace_back(input_path(mt.content_ids, "content_ids"));
        std::ifstream in(mt.content_ids);
        ids.emplace();
        for (std::string line; std::getline(in, line);) {
          if (!line.empty()) ids->insert(line);
        }
      }
      if (mt.layer < 0) throw UsageError("missing required setting --layer");
      const auto triplets = build_triplets(store, cset, mt.layer, ids ? &*ids : nullptr);
      fs::create_directories(mt.out);
      write_triplets(triplets, store, fs::path(mt.out) / "triplets.jsonl");
      ordered_json tiers;
      tiers["direct"] = triplets.tier_counts[0];
      tiers["schema_fallback"] = triplets.tier_counts[1];
      tiers["validity_fallback"] = triplets.tier_counts[2];
      write_run(mt.out, "match", match_s, inputs, {{"correct_set_size", cset.ids.size()}, {"tiers", tiers}});
    };
  });

  // select-layers ----------------------------------------------------------
  struct {
    std::string store, triplets, out;
    int window = 0;
    int depth = 0;
    double region_lo = 0.4, region_hi = 0.8;
  } sl;
  auto* select = app.add_subcommand("select-layers", "Profile positive/negative similarity and pick steering layers");
  Settings select_s(select);
  select_s.path("store", sl.store, "activation store directory");
  select_s.path("triplets", sl.triplets, "triplet JSONL");
  select_s.add("window", sl.window, "number of contiguous layers (0: depth-based default)");
  select_s.add("depth", sl.depth, "model depth (0: last stored layer + 1)");
  select_s.add("region_lo", sl.region_lo, "lower bound of the search region, fraction of depth");
  select_s.add("region_hi", sl.region_hi, "upper bound of the search region, fraction of depth");
  select_s.path("out", sl.out, "output directory");
  select->callback([&] {
    action = [&] {
      select_s.resolve();
      require(sl.out, "out");
      const auto store = load_store(input_path(sl.store, "store"));
      const auto triplets = read_triplets(input_path(sl.triplets, "triplets"), store);
      const auto profile = posneg_profile(store, triplets.triplets);
      const int depth = sl.depth > 0 ? sl.depth : store.layers.back() + 1;
      const int window = sl.window > 0 ? sl.window : default_window(depth);
      const auto layers = select_layers(profile, window, {sl.region_lo, sl.region_hi}, depth);
      const fs::path out = sl.out;
      fs::create_directories(out);
      write_profile_csv(profile, out / "profile.csv");
      ordered_json j;
      j["layers"] = layers;
      j["window"] = window;
      j["depth"] = depth;
      j["region"] = {sl.region_lo, sl.region_hi};
      write_json(out / "layers.json", j);
      write_run(out, "select-layers", select_s, {sl.store, sl.triplets});
    };
  });

  // train ------------------------------------------------------------------
  struct {
    std::string store, triplets, layers_file, out;
    std::vector<int> layers;
    std::vector<int> backbone{1024, 1024, 1024};
    int direction_hidden = 512, magnitude_hidden = 512;
    double dropout = 0.1;
    TrainConfig cfg;
    int workers = 1;
  } tr;
  auto* trn = app.add_subcommand("train", "Train one Abstractor per layer");
  Settings train_s(trn);
  train_s.path("store", tr.store, "activation store directory");
  train_s.path("triplets", tr.triplets, "triplet JSONL");
  train_s.add("layers", tr.layers, "layers to train");
  train_s.path("layers_file", tr.layers_file, "layers.json from select-layers (used when --layers is absent)");
  train_s.add("backbone", tr.backbone, "backbone widths");
  train_s.add("direction_hidden", tr.direction_hidden, "direction head hidden width");
  train_s.add("magnitude_hidden", tr.magnitude_hidden, "magnitude head hidden width");
  train_s.add("dropout", tr.dropout, "dropout probability");
  train_s.add("learning_rate", tr.cfg.learning_rate, "AdamW learning rate");
  train_s.add("weight_decay", tr.cfg.weight_decay, "AdamW weight decay");
  train_s.add("batch_size", tr.cfg.batch_size, "minibatch size");
  train_s.add("grad_clip", tr.cfg.grad_clip, "global gradient-norm clip");
  train_s.add("plateau_patience", tr.cfg.plateau_patience, "LR plateau patience (epochs)");
  train_s.add("plateau_factor", tr.cfg.plateau_factor, "LR plateau factor");
  train_s.add("max_epochs", tr.cfg.max_epochs, "maximum epochs");
  train_s.add("early_stop_patience", tr.cfg.early_stop_patience, "early-stopping patience (epochs)");
  train_s.add("margin", tr.cfg.margin, "repulsion margin");
  train_s.add("lambda_repel", tr.cfg.lambda_repel, "repulsion weight");
  train_s.add("lambda_mag", tr.cfg.lambda_mag, "magnitude weight");
  train_s.add("val_fraction", tr.cfg.val_fraction, "validation fraction");
  train_s.add("seed", tr.cfg.seed, "seed");
  train_s.path("out", tr.out, "output directory");
  trn->add_option("--workers", tr.workers, "parallel training jobs (one per layer)");
  trn->callback([&] {
    action = [&] {
      train_s.resolve();
      require(tr.out, "out");
      const auto store = load_store(input_path(tr.store, "store"));
      const auto triplets = read_triplets(input_path(tr.triplets, "triplets"), store);
      std::vector<fs::path> inputs{tr.store, tr.triplets};
      if (tr.layers.empty()) {
        tr.layers = read_layers_file(input_path(tr.layers_file, "layers_file"));
        inputs.emplace_back(tr.layers_file);
      }
      AbstractorParams params;
      params.input_dim = store.hidden_dim;
      params.backbone = tr.backbone;
      params.direction_hidden = tr.direction_hidden;
      params.magnitude_hidden = tr.magnitude_hidden;
      params.dropout = tr.dropout;
      params.validate();
      tr.cfg.validate();
      const fs::path out = tr.out;
      fs::create_directories(out);
      const std::string hash = config_hash(params, tr.cfg);
      parallel_for(tr.layers.size(), tr.workers, [&](std::size_t i) {
        const int l = tr.layers[i];
        auto result = train(store, triplets.triplets, l, params, tr.cfg);
        save_model(result.model, result.seed, hash, out / model_file_name(l));
        write_json(out / ("train_" + std::to_string(l) + ".json"), to_json(result.report));
      });
      write_run(out, "train", train_s, inputs, {{"model_config_hash", hash}});
    };
  });

  // plan -------------------------------------------------------------------
  struct {
    std::string store, models, out;
    std::vector<int> layers;
    double alpha = 1.0;
    bool identity = false;
  } pl;
  auto* plan = app.add_subcommand("plan", "Compile a steering plan from trained Abstractors");
  Settings plan_s(plan);
  plan_s.path("store", pl.store, "activation store directory (pass-one activations)");
  plan_s.path("models", pl.models, "directory of abstractor_<layer>.bin files");
  plan_s.add("layers", pl.layers, "layers to steer (default: every model in --models)");
  plan_s.add("alpha", pl.alpha, "maximum blending strength");
  plan_s.flag("identity", pl.identity, "use the stored activations as targets (inert plan)");
  plan_s.path("out", pl.out, "output plan directory");
  plan->callback([&] {
    action = [&] {
      plan_s.resolve();
      require(pl.out, "out");
      const auto store = load_store(input_path(pl.store, "store"));
      std::vector<fs::path> inputs{pl.store};
      PlanBuild built;
      if (pl.identity) {
        if (pl.layers.empty()) throw UsageError("--identity needs --layers");
        built = build_plan(store, pl.layers, pl.alpha, identity_targets);
      } else {
        const fs::path dir = input_path(pl.models, "models");
        std::vector<int> layers = pl.layers;
        if (layers.empty()) {
          for (const auto& e : fs::directory_iterator(dir)) {
            const std::string name = e.path().filename().string();
            if (name.rfind("abstractor_", 0) == 0 && e.path().extension() == ".bin") {
              layers.push_back(std::stoi(name.substr(11)));
            }
          }
          std::sort(layers.begin(), layers.end());
        }
        if (layers.empty()) throw ValidationError("no abstractor_<layer>.bin files in " + dir.string());
        std::map<int, AbstractorModel> models;
        for (int l : layers) {
          const fs::path p = dir / model_file_name(l);
          inputs.push_back(p);
          models.emplace(l, load_model(p).model);
        }
        built = build_plan(store, models, pl.alpha);
      }
      export_plan(built.plan, pl.out);
      write_run(pl.out, "plan", plan_s, inputs, {{"warnings", built.warnings}});
    };
  });

  // evaluate ---------------------------------------------------------------
  struct {
    std::string instances, predictions, out;
  } ev;
  auto* evaluate = app.add_subcommand("evaluate", "Belief-bias metrics for a prediction file");
  Settings eval_s(evaluate);
  eval_s.path("instances", ev.instances, "instances JSONL or store directory");
  eval_s.path("predictions", ev.predictions, "prediction JSONL");
  eval_s.path("out", ev.out, "output directory");
  evaluate->callback([&] {
    action = [&] {
      eval_s.resolve();
      require(ev.out, "out");
      const auto instances = read_instances(input_path(ev.instances, "instances"));
      const auto preds = read_predictions(input_path(ev.predictions, "predictions"));
      const fs::path out = ev.out;
      fs::create_directories(out);
      ordered_json written = ordered_json::array();
      for (const auto& r : evaluate_groups(preds, instances, eval_s.hash())) {
        emit_report(r, out / report_name(r));
        written.push_back(report_name(r));
      }
      write_run(out, "evaluate", eval_s, {ev.instances, ev.predictions}, {{"reports", written}});
    };
  });

  // sweep ------------------------------------------------------------------
  struct {
    std::string synth, instances, predictions, out;
    std::vector<double> grid = default_alpha_grid();
    int workers = 1;
  } sw;
  auto* swp = app.add_subcommand("sweep", "Evaluate steering strengths and select alpha by BPA");
  Settings sweep_s(swp);
  sweep_s.path("synth", sw.synth, "synthetic testbed config (runs the full pipeline)");
  sweep_s.path("instances", sw.instances, "instances JSONL or store directory");
  sweep_s.path("predictions", sw.predictions, "prediction JSONL holding steered rows for each alpha");
  sweep_s.add("alpha_grid", sw.grid, "alpha values");
  swp->add_option("--workers", sw.workers, "parallel evaluations (one per alpha)");
  sweep_s.path("out", sw.out, "output directory");
  swp->callback([&] {
    action = [&] {
      sweep_s.resolve();
      require(sw.out, "out");
      for (double a : sw.grid) {
        if (!(a > 0.0 && a <= 1.0)) throw ValidationError("alpha grid values must lie in (0, 1]");
      }
      const fs::path out = sw.out;
      std::map<double, EvalReport> steered;
      std::optional<EvalReport> unsteered;
      std::vector<fs::path> inputs;
      if (!sw.synth.empty()) {
        auto cfg = load_e2e_config(input_path(sw.synth, "synth"));
        cfg.pipeline.workers = sw.workers;
        const auto result = sweep(prepare_pipeline(cfg), sw.grid);
        steered = result.steered;
        unsteered = result.unsteered;
        inputs.emplace_back(sw.synth);
      } else {
        const auto instances = read_instances(input_path(sw.instances, "instances"));
        const auto preds = read_predictions(input_path(sw.predictions, "predictions"));
        inputs = {sw.instances, sw.predictions};
        for (auto& r : evaluate_groups(preds, instances, sweep_s.hash())) {
          if (r.condition == Condition::unsteered) unsteered = r;
          if (r.condition == Condition::steered &&
              std::find(sw.grid.begin(), sw.grid.end(), *r.alpha) != sw.grid.end()) {
            steered.emplace(*r.alpha, std::move(r));
          }
        }
        for (double a : sw.grid) {
          if (!steered.count(a)) throw ValidationError("no steered predictions for alpha " + alpha_tag(a));
        }
      }
      fs::create_directories(out);
      if (unsteered) emit_report(*unsteered, out / report_name(*unsteered));
      ordered_json bpa = ordered_json::object();
      for (const auto& [a, r] : steered) {
        emit_report(r, out / report_name(r));
        bpa[alpha_tag(a)] = r.bpa ? json(*r.bpa) : json(nullptr);
      }
      const double star = select_alpha(steered);
      ordered_json summary;
      summary["alpha_star"] = star;
      summary["bpa"] = bpa;
      write_json(out / "sweep.json", summary);
      write_run(out, "sweep", sweep_s, inputs, {{"alpha_star", star}});
    };
  });

  // synth-e2e --------------------------------------------------------------
  struct {
    std::string config_path, out;
    double alpha = -1.0;
    int workers = 1;
  } se;
  auto* e2e = app.add_subcommand("synth-e2e", "Run the full pipeline on the synthetic testbed");
  Settings e2e_s(e2e);
  e2e_s.path("synth", se.config_path, "synthetic testbed config");
  e2e_s.add("alpha", se.alpha, "steering strength (negative: best alpha from a sweep)");
  e2e->add_option("--workers", se.workers, "parallel Abstractor training jobs");
  e2e_s.path("out", se.out, "output directory");
  e2e->callback([&] {
    action = [&] {
      e2e_s.resolve();
      require(se.out, "out");
      auto cfg = load_e2e_config(input_path(se.config_path, "synth"));
      cfg.pipeline.workers = se.workers;
      const auto prep = prepare_pipeline(cfg);
      if (!prep.leakage.empty()) {
        throw ValidationError("held-out content reached Abstractor training: " + prep.leakage.front());
      }
      const double alpha = se.alpha >= 0.0 ? se.alpha : sweep(prep, cfg.pipeline.alpha_grid).alpha_star;
      const auto result = evaluate_at(prep, alpha);
      const fs::path out = se.out;
      fs::create_directories(out);
      emit_report(result.unsteered, out / "report_unsteered");
      emit_report(result.steered, out / "report_steered");
      emit_report(result.abstract, out / "report_abstract");
      write_predictions(result.predictions, out / "predictions.jsonl");
      ordered_json summary;
      summary["alpha"] = alpha;
      summary["reader_abstract_accuracy"] = prep.reader_abstract_accuracy;
      summary["bpa_unsteered"] = result.unsteered.bpa ? json(*result.unsteered.bpa) : json(nullptr);
      summary["bpa_steered"] = result.steered.bpa ? json(*result.steered.bpa) : json(nullptr);
      ordered_json folds = ordered_json::array();
      for (const auto& f : prep.folds) {
        folds.push_back({{"fold", f.fold},
                         {"reference_layer", f.reference_layer},
                         {"layers", f.layers},
                         {"tiers", f.tier_counts}});
      }
      summary["folds"] = folds;
      write_json(out / "summary.json", summary);
      write_run(out, "synth-e2e", e2e_s, {se.config_path}, {{"pipeline_config_hash", prep.config_hash}});
    };
  });

  // report -----------------------------------------------------------------
  struct {
    std::vector<std::string> inputs;
    std::string out;
    bool force = false;
  } rp;
  auto* report = app.add_subcommand("report", "Aggregate fold reports into one report");
  Settings report_s(report);
  report_s.add("inputs", rp.inputs, "report JSON files", true);
  report_s.flag("force", rp.force, "aggregate even when config hashes differ");
  report_s.path("out", rp.out, "output directory");
  report->callback([&] {
    action = [&] {
      report_s.resolve();
      require(rp.out, "out");
      if (rp.inputs.empty()) throw UsageError("missing required setting --inputs");
      std::vector<EvalReport> folds;
      std::vector<fs::path> inputs;
      std::set<std::string> hashes;
      for (const auto& p : rp.inputs) {
        std::ifstream in(input_path(p, "inputs"));
        json j;
        try {
          j = json::parse(in);
        } catch (const json::exception& e) {
          throw ValidationError(p + ": " + e.what());
        }
        EvalReport r = report_from_json(j);
        hashes.insert(r.config_hash);
        inputs.emplace_back(p);
        if (r.folds.empty()) {
          folds.push_back(std::move(r));
        } else {
          folds.insert(folds.end(), r.folds.begin(), r.folds.end());
        }
      }
      if (hashes.size() > 1 && !rp.force) {
        throw ValidationError("reports carry different config hashes; pass --force to aggregate anyway");
      }
      EvalReport agg = aggregate_folds(folds);
      if (hashes.size() > 1) agg.config_hash.clear();
      const fs::path out = rp.out;
      fs::create_directories(out);
      emit_report(agg, out / "report");
      write_run(out, "report", report_s, inputs, {{"config_hashes", hashes}});
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << error_json("usage", e.what()).dump() << '\n';
    return 1;
  }
  try {
    action();
  } catch (const UsageError& e) {
    std::cerr << error_json("usage", e.what()).dump() << '\n';
    return 1;
  } catch (const ValidationError& e) {
    std::cerr << error_json("validation", e.what()).dump() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << error_json("runtime", e.what()).dump() << '\n';
    return 3;
  }
  return 0;
}
