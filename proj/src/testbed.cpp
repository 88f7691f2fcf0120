#include "absteer/testbed.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>

#include "absteer/dataset.hpp"
#include "absteer/errors.hpp"
#include "absteer/hashing.hpp"
#include "absteer/matcher.hpp"
#include "absteer/parallel.hpp"
#include "absteer/rng.hpp"

namespace absteer {
namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

void SynthConfig::validate() const {
  if (dim < 4) throw ValidationError("synth: dim must be >= 4");
  if (layers < 2) throw ValidationError("synth: layers must be >= 2");
  if (n_per_category < 8) throw ValidationError("synth: n_per_category must be >= 8");
  if (schemas < 2 || schemas % 2 != 0) throw ValidationError("synth: schemas must be an even number >= 2");
  if (!(noise > 0.0)) throw ValidationError("synth: noise must be positive");
  if (!(separation > 0.0)) throw ValidationError("synth: separation must be positive");
  if (!(semantic_shift >= 0.0)) throw ValidationError("synth: semantic_shift must be non-negative");
  if (!(content_alignment >= 0.0 && content_alignment <= 1.0)) {
    throw ValidationError("synth: content_alignment must lie in [0, 1]");
  }
  if (!(bias >= 0.0) || !(schema_spread >= 0.0)) {
    throw ValidationError("synth: bias and schema_spread must be non-negative");
  }
}

ordered_json to_json(const SynthConfig& c) {
  ordered_json j;
  j["dim"] = c.dim;
  j["layers"] = c.layers;
  j["n_per_category"] = c.n_per_category;
  j["schemas"] = c.schemas;
  j["separation"] = c.separation;
  j["semantic_shift"] = c.semantic_shift;
  j["content_alignment"] = c.content_alignment;
  j["bias"] = c.bias;
  j["schema_spread"] = c.schema_spread;
  j["noise"] = c.noise;
  j["seed"] = c.seed;
  return j;
}

SynthConfig synth_config_from_json(const json& j, SynthConfig c) {
  static const std::set<std::string> kKeys = {"dim",        "layers", "n_per_category", "schemas",
                                              "separation", "semantic_shift", "content_alignment",
                                              "bias",       "schema_spread",  "noise", "seed"};
  try {
    for (const auto& [key, _] : j.items()) {
      if (!kKeys.count(key)) {
        throw ValidationError("synth: unknown key '" + key + "'");
      }
    }
    c.dim = j.value("dim", c.dim);
    c.layers = j.value("layers", c.layers);
    c.n_per_category = j.value("n_per_category", c.n_per_category);
    c.schemas = j.value("schemas", c.schemas);
    c.separation = j.value("separation", c.separation);
    c.semantic_shift = j.value("semantic_shift", c.semantic_shift);
    c.content_alignment = j.value("content_alignment", c.content_alignment);
    c.bias = j.value("bias", c.bias);
    c.schema_spread = j.value("schema_spread", c.schema_spread);
    c.noise = j.value("noise", c.noise);
    c.seed = j.value("seed", c.seed);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed synth config: ") + e.what());
  }
  c.validate();
  return c;
}

double layer_separation(const SynthConfig& cfg, int layer) {
  const double centre = 0.6 * (cfg.layers - 1);
  const double width = std::max(1.0, 0.15 * cfg.layers);
  const double z = (layer - centre) / width;
  return cfg.separation * (0.5 + 0.5 * std::exp(-z * z));
}

namespace {

using Vec = std::vector<double>;

double dot(const Vec& a, const Vec& b) { return std::inner_product(a.begin(), a.end(), b.begin(), 0.0); }

void axpy(double s, const Vec& x, Vec& y) {
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += s * x[i];
}

Vec gaussian(int d, SplitMix64& rng) {
  Vec v(static_cast<std::size_t>(d));
  for (auto& x : v) x = rng.normal();
  return v;
}

// Removes the components along `basis` and rescales to unit norm.
Vec orthonormalize(Vec v, const std::vector<const Vec*>& basis) {
  for (const Vec* b : basis) axpy(-dot(v, *b), *b, v);
  const double n = std::sqrt(dot(v, v));
  if (n < 1e-9) throw NumericError("synth: degenerate axis draw");
  for (auto& x : v) x /= n;
  return v;
}

}  // namespace

SynthData generate(const SynthConfig& cfg) {
  cfg.validate();
  SplitMix64 rng(cfg.seed);
  SynthData out;
  auto& ax = out.axes;
  ax.bias = orthonormalize(gaussian(cfg.dim, rng), {});
  ax.validity = orthonormalize(gaussian(cfg.dim, rng), {&ax.bias});
  ax.semantic = orthonormalize(gaussian(cfg.dim, rng), {&ax.bias, &ax.validity});
  const double ca = cfg.content_alignment;
  ax.plausibility.assign(static_cast<std::size_t>(cfg.dim), 0.0);
  axpy(ca, ax.validity, ax.plausibility);
  axpy(std::sqrt(1.0 - ca * ca), ax.semantic, ax.plausibility);

  std::vector<Vec> offsets;
  for (int s = 0; s < cfg.schemas; ++s) {
    Vec o = orthonormalize(gaussian(cfg.dim, rng), {&ax.validity, &ax.semantic});
    for (auto& x : o) x *= cfg.schema_spread;
    offsets.push_back(std::move(o));
  }

  auto& store = out.store;
  store.model_id = "synthetic";
  store.hidden_dim = cfg.dim;
  for (int l = 0; l < cfg.layers; ++l) {
    store.layers.push_back(l);
    out.separation.push_back(layer_separation(cfg, l));
  }

  // Categories VP, VI, IP, II; schemas 0..k/2-1 are valid, the rest invalid.
  struct Draw {
    int schema;
    bool valid;
    bool plausible;
  };
  std::vector<Draw> draws;
  const int half = cfg.schemas / 2;
  for (int cat = 0; cat < 4; ++cat) {
    const bool valid = cat < 2;
    const bool plausible = cat == 0 || cat == 2;
    for (int i = 0; i < cfg.n_per_category; ++i) {
      draws.push_back({(valid ? 0 : half) + i % half, valid, plausible});
    }
  }
  const std::size_t n = draws.size();
  std::vector<SyllogismInstance> content, abstract;
  for (std::size_t i = 0; i < n; ++i) {
    char cid[32], aid[32], sid[16];
    std::snprintf(cid, sizeof(cid), "syn-c-%04zu", i);
    std::snprintf(aid, sizeof(aid), "syn-a-%04zu", i);
    std::snprintf(sid, sizeof(sid), "S%02d", draws[i].schema);
    const int t_start = 4 + static_cast<int>(rng.below(8));
    const int seq_len = t_start + 16 + static_cast<int>(rng.below(32));
    SyllogismInstance c;
    c.id = cid;
    c.schema_id = sid;
    c.validity = draws[i].valid ? Validity::valid : Validity::invalid;
    c.plausibility = draws[i].plausible ? Plausibility::plausible : Plausibility::implausible;
    c.form = Form::content;
    c.pair_id = aid;
    c.text = std::string("synthetic content ") + sid;
    c.t_start = t_start;
    c.seq_len = seq_len;
    SyllogismInstance a = c;
    a.id = aid;
    a.plausibility = Plausibility::none;
    a.form = Form::abstract;
    a.pair_id = cid;
    a.text = std::string("synthetic abstract ") + sid;
    content.push_back(std::move(c));
    abstract.push_back(std::move(a));
  }
  store.instances = content;
  store.instances.insert(store.instances.end(), abstract.begin(), abstract.end());

  const auto d = static_cast<std::size_t>(cfg.dim);
  for (int l = 0; l < cfg.layers; ++l) {
    RowMatrixF m(static_cast<Eigen::Index>(2 * n), cfg.dim);
    const double half_sep = out.separation[static_cast<std::size_t>(l)] / 2.0;
    for (std::size_t i = 0; i < n; ++i) {
      Vec a(d, 0.0);
      axpy(cfg.bias, ax.bias, a);
      axpy(draws[i].valid ? half_sep : -half_sep, ax.validity, a);
      axpy(1.0, offsets[static_cast<std::size_t>(draws[i].schema)], a);
      for (auto& x : a) x += cfg.noise * rng.normal();
      Vec c = a;
      axpy(draws[i].plausible ? cfg.semantic_shift : -cfg.semantic_shift, ax.plausibility, c);
      for (auto& x : c) x += cfg.noise * rng.normal();
      for (std::size_t k = 0; k < d; ++k) {
        m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = static_cast<float>(c[k]);
        m(static_cast<Eigen::Index>(n + i), static_cast<Eigen::Index>(k)) = static_cast<float>(a[k]);
      }
    }
    store.matrices.emplace(l, std::move(m));
  }
  validate_store(store);
  return out;
}

double ToyReader::score(std::span<const float> x) const {
  if (x.size() != weights.size()) {
    throw ValidationError("reader: dimension mismatch");
  }
  double s = bias;
  for (std::size_t i = 0; i < x.size(); ++i) s += weights[i] * static_cast<double>(x[i]);
  return s;
}

ToyReader train_reader(const ActivationStore& store, int layer, const HingeOptions& opts) {
  std::vector<std::size_t> rows;
  std::vector<Validity> labels;
  for (std::size_t i = 0; i < store.size(); ++i) {
    if (store.instances[i].form == Form::abstract) {
      rows.push_back(i);
      labels.push_back(store.instances[i].validity);
    }
  }
  if (rows.empty()) {
    throw ValidationError("train_reader: store holds no abstract instances");
  }
  const LinearClassifier clf = fit_linear_svm(store.layer(layer), rows, labels, opts);
  const double norm = std::sqrt(std::inner_product(clf.weights.begin(), clf.weights.end(), clf.weights.begin(), 0.0));
  if (!(norm > 0.0)) {
    throw NumericError("train_reader: zero decision vector");
  }
  ToyReader r;
  r.layer = layer;
  for (double w : clf.weights) r.weights.push_back(w / norm);
  r.bias = clf.bias / norm;
  return r;
}

std::vector<Validity> read_unsteered(const ActivationStore& store, const ToyReader& reader) {
  std::vector<Validity> out;
  out.reserve(store.size());
  for (std::size_t i = 0; i < store.size(); ++i) out.push_back(reader.predict(store.row(reader.layer, i)));
  return out;
}

std::vector<Validity> read_steered(const ActivationStore& store, const SteeringPlan& plan, const ToyReader& reader) {
  if (plan.entries.size() != store.size()) {
    throw ValidationError("read_steered: plan and store sizes differ");
  }
  if (plan.hidden_dim != store.hidden_dim) {
    throw ValidationError("read_steered: plan hidden_dim does not match the store");
  }
  for (int l : plan.layers) {
    if (l > reader.layer) {
      throw ValidationError("read_steered: plan layer " + std::to_string(l) + " lies past the readout layer");
    }
  }
  const auto d = static_cast<std::size_t>(store.hidden_dim);
  std::vector<Validity> out;
  out.reserve(store.size());
  std::vector<float> delta(d), x(d), y(d);
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& e = plan.entries[i];
    if (e.id != store.instances[i].id) {
      throw ValidationError("read_steered: plan entry '" + e.id + "' out of order");
    }
    const double alpha_t = alpha_schedule(e.seq_len - 1, e.t_start, e.seq_len, plan.alpha_max);
    std::fill(delta.begin(), delta.end(), 0.0f);
    bool readout_steered = false;
    for (int l : plan.layers) {
      const auto a = store.row(l, i);
      for (std::size_t k = 0; k < d; ++k) x[k] = a[k] + delta[k];
      blend(x, plan.target(l, i), alpha_t, y);
      for (std::size_t k = 0; k < d; ++k) delta[k] = y[k] - a[k];
      readout_steered = l == reader.layer;
    }
    if (readout_steered) {
      out.push_back(reader.predict(y));
    } else {
      const auto a = store.row(reader.layer, i);
      for (std::size_t k = 0; k < d; ++k) x[k] = a[k] + delta[k];
      out.push_back(reader.predict(x));
    }
  }
  return out;
}

ordered_json to_json(const E2EConfig& c) {
  const auto& p = c.pipeline;
  ordered_json pj;
  pj["fold_count"] = p.fold_count;
  pj["window"] = p.window;
  pj["region"] = {p.region.lo, p.region.hi};
  ordered_json abs = to_json(p.abstractor);
  abs.erase("input_dim");
  pj["abstractor"] = abs;
  pj["train"] = to_json(p.train);
  pj["alpha_grid"] = p.alpha_grid;
  ordered_json j;
  j["synth"] = to_json(c.synth);
  j["pipeline"] = pj;
  return j;
}

E2EConfig e2e_config_from_json(const json& j) {
  E2EConfig c;
  try {
    if (j.contains("synth")) c.synth = synth_config_from_json(j.at("synth"));
    if (j.contains("pipeline")) {
      const auto& pj = j.at("pipeline");
      auto& p = c.pipeline;
      p.fold_count = pj.value("fold_count", p.fold_count);
      p.window = pj.value("window", p.window);
      if (pj.contains("region")) {
        const auto r = pj.at("region").get<std::vector<double>>();
        if (r.size() != 2) throw ValidationError("pipeline.region must hold two numbers");
        p.region = {r[0], r[1]};
      }
      if (pj.contains("abstractor")) p.abstractor = params_from_json(pj.at("abstractor"));
      if (pj.contains("train")) p.train = train_config_from_json(pj.at("train"));
      p.alpha_grid = pj.value("alpha_grid", p.alpha_grid);
      p.workers = pj.value("workers", p.workers);
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed e2e config: ") + e.what());
  }
  c.synth.validate();
  c.pipeline.abstractor.input_dim = c.synth.dim;
  c.pipeline.abstractor.validate();
  c.pipeline.train.validate();
  if (c.pipeline.window < 1) throw ValidationError("pipeline.window must be >= 1");
  for (double a : c.pipeline.alpha_grid) {
    if (!(a > 0.0 && a <= 1.0)) throw ValidationError("pipeline.alpha_grid must lie in (0, 1]");
  }
  return c;
}

E2EConfig load_e2e_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  return e2e_config_from_json(j);
}

// Workers do not change results, so they are left out of the hash.
std::string config_hash(const E2EConfig& c) { return sha256_hex(to_json(c).dump()); }

ActivationStore subset_store(const ActivationStore& store, const std::vector<std::size_t>& rows) {
  ActivationStore out;
  out.model_id = store.model_id;
  out.hidden_dim = store.hidden_dim;
  out.layers = store.layers;
  for (std::size_t r : rows) out.instances.push_back(store.instances.at(r));
  for (const auto& [l, m] : store.matrices) {
    RowMatrixF sub(static_cast<Eigen::Index>(rows.size()), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      sub.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
    }
    out.matrices.emplace(l, std::move(sub));
  }
  return out;
}

namespace {

// Rethrows with the pipeline stage prefixed, keeping the error category.
template <typename Fn>
auto stage(const std::string& name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const ValidationError& e) {
    throw ValidationError("[" + name + "] " + e.what());
  } catch (const NumericError& e) {
    throw NumericError("[" + name + "] " + e.what());
  } catch (const IoError& e) {
    throw IoError("[" + name + "] " + e.what());
  }
}

}  // namespace

PreparedPipeline prepare_pipeline(const E2EConfig& cfg_in) {
  PreparedPipeline prep;
  prep.config = cfg_in;
  auto& cfg = prep.config;
  cfg.pipeline.abstractor.input_dim = cfg.synth.dim;
  prep.config_hash = config_hash(cfg);
  prep.data = stage("generate", [&] { return generate(cfg.synth); });
  const ActivationStore& store = prep.data.store;
  const int readout = store.layers.back();

  std::vector<std::size_t> abstract_rows;
  std::vector<SyllogismInstance> content;
  for (std::size_t i = 0; i < store.size(); ++i) {
    if (store.instances[i].form == Form::abstract) {
      abstract_rows.push_back(i);
    } else {
      content.push_back(store.instances[i]);
    }
  }
  prep.reader = stage("reader", [&] { return train_reader(store, readout); });
  std::map<std::string, Validity> abstract_preds;
  std::size_t correct = 0;
  for (std::size_t r : abstract_rows) {
    const Validity v = prep.reader.predict(store.row(readout, r));
    abstract_preds.emplace(store.instances[r].id, v);
    correct += v == store.instances[r].validity;
  }
  prep.reader_abstract_accuracy = static_cast<double>(correct) / static_cast<double>(abstract_rows.size());

  const FoldAssignment folds =
      stage("folds", [&] { return stratified_folds(content, cfg.pipeline.fold_count, cfg.synth.seed); });
  const Pairing pairing = stage("pairing", [&] { return pair_instances(store.instances); });
  auto fold_of_row = [&](std::size_t r) {
    const auto& inst = store.instances[r];
    if (inst.form == Form::content) return folds.fold_of(inst.id);
    return folds.fold_of(*inst.pair_id);
  };

  const int depth = readout + 1;
  const int reference = static_cast<int>(
      std::lround((cfg.pipeline.region.lo + cfg.pipeline.region.hi) / 2.0 * depth));

  for (int k = 0; k < cfg.pipeline.fold_count; ++k) {
    const std::string tag = "fold " + std::to_string(k);
    FoldRun run;
    run.fold = k;
    run.reference_layer = std::min(reference, readout);

    std::map<std::string, Validity> train_preds;
    std::set<std::string> train_content;
    std::vector<std::size_t> heldout_rows, heldout_abstract_rows;
    for (std::size_t r = 0; r < store.size(); ++r) {
      const auto& inst = store.instances[r];
      const bool held = fold_of_row(r) == k;
      if (inst.form == Form::abstract) {
        if (held) {
          heldout_abstract_rows.push_back(r);
        } else {
          train_preds.emplace(inst.id, abstract_preds.at(inst.id));
        }
      } else if (held) {
        heldout_rows.push_back(r);
      } else {
        train_content.insert(inst.id);
      }
    }
    std::vector<SyllogismInstance> train_abstract;
    for (std::size_t r : abstract_rows) {
      if (train_preds.count(store.instances[r].id)) train_abstract.push_back(store.instances[r]);
    }
    const CorrectSet cset = build_correct_set(train_abstract, train_preds);

    const TripletSet provisional = stage(tag + " match", [&] {
      return build_triplets(store, cset, run.reference_layer, &train_content);
    });
    run.profile = stage(tag + " profile", [&] { return posneg_profile(store, provisional.triplets); });
    run.layers = stage(tag + " select-layers", [&] {
      return select_layers(run.profile, cfg.pipeline.window, cfg.pipeline.region, depth);
    });
    const TripletSet triplets = stage(tag + " match", [&] {
      return build_triplets(store, cset, run.layers.front(), &train_content);
    });
    run.tier_counts = triplets.tier_counts;

    std::vector<std::optional<TrainResult>> trained(run.layers.size());
    stage(tag + " train", [&] {
      parallel_for(run.layers.size(), cfg.pipeline.workers, [&](std::size_t i) {
        trained[i] = train(store, triplets.triplets, run.layers[i], cfg.pipeline.abstractor, cfg.pipeline.train);
      });
    });
    std::map<int, AbstractorModel> models;
    for (auto& slot : trained) {
      auto& t = *slot;
      for (const auto& id : t.report.train_content_ids) {
        if (!train_content.count(id)) prep.leakage.push_back(id);
      }
      run.train_reports.push_back(t.report);
      models.emplace(t.model.layer(), std::move(t.model));
    }

    run.heldout = subset_store(store, heldout_rows);
    run.heldout_abstract = subset_store(store, heldout_abstract_rows);
    run.targets = stage(tag + " plan", [&] { return build_plan(run.heldout, models, 0.0).plan; });
    prep.folds.push_back(std::move(run));
  }
  return prep;
}

namespace {

std::vector<PredictionRecord> records(const ActivationStore& s, const std::vector<Validity>& preds,
                                      Condition cond, std::optional<double> alpha, int fold) {
  std::vector<PredictionRecord> out;
  for (std::size_t i = 0; i < s.size(); ++i) out.push_back({s.instances[i].id, cond, preds[i], alpha, fold});
  return out;
}

EvalReport fold_report(const std::vector<PredictionRecord>& preds, const std::vector<SyllogismInstance>& all,
                       std::optional<double> acc_abstract, const std::string& hash) {
  EvalReport r = make_report(preds, all, acc_abstract);
  r.config_hash = hash;
  return r;
}

}  // namespace

E2EResult evaluate_at(const PreparedPipeline& prep, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("alpha must lie in [0, 1]");
  const auto& all = prep.data.store.instances;
  std::vector<EvalReport> un, st, ab;
  E2EResult out;
  for (const auto& run : prep.folds) {
    auto abs_preds = records(run.heldout_abstract, read_unsteered(run.heldout_abstract, prep.reader),
                             Condition::abstract, std::nullopt, run.fold);
    ab.push_back(fold_report(abs_preds, all, std::nullopt, prep.config_hash));
    const double acc_abs = ab.back().acc_global;

    auto un_preds = records(run.heldout, read_unsteered(run.heldout, prep.reader), Condition::unsteered,
                            std::nullopt, run.fold);
    un.push_back(fold_report(un_preds, all, acc_abs, prep.config_hash));

    SteeringPlan plan = run.targets;
    plan.alpha_max = alpha;
    auto st_preds =
        records(run.heldout, read_steered(run.heldout, plan, prep.reader), Condition::steered, alpha, run.fold);
    st.push_back(fold_report(st_preds, all, acc_abs, prep.config_hash));

    for (auto* v : {&abs_preds, &un_preds, &st_preds}) {
      out.predictions.insert(out.predictions.end(), v->begin(), v->end());
    }
  }
  out.unsteered = aggregate_folds(un);
  out.steered = aggregate_folds(st);
  out.abstract = aggregate_folds(ab);
  return out;
}

E2EResult run_end_to_end(const E2EConfig& cfg, double alpha) { return evaluate_at(prepare_pipeline(cfg), alpha); }

SweepResult sweep(const PreparedPipeline& prep, const std::vector<double>& grid) {
  if (grid.empty()) throw ValidationError("sweep: empty alpha grid");
  SweepResult out;
  std::vector<E2EResult> results(grid.size());
  parallel_for(grid.size(), prep.config.pipeline.workers,
               [&](std::size_t i) { results[i] = evaluate_at(prep, grid[i]); });
  out.unsteered = results.front().unsteered;
  for (std::size_t i = 0; i < grid.size(); ++i) out.steered.emplace(grid[i], results[i].steered);
  out.alpha_star = select_alpha(out.steered);
  return out;
}

}  // namespace absteer
