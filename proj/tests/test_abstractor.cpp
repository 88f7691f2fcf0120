#include <doctest.h>

#include <cmath>
#include <cstring>
#include <fstream>

#include "absteer/abstractor.hpp"
#include "absteer/errors.hpp"
#include "absteer/model_io.hpp"
#include "absteer/steering.hpp"
#include "absteer/testbed.hpp"
#include "absteer/training.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace absteer;

namespace {

AbstractorParams small_params(int d, int width = 16) {
  AbstractorParams p;
  p.input_dim = d;
  p.backbone = {width, width, width};
  p.direction_hidden = width;
  p.magnitude_hidden = width;
  return p;
}

std::vector<float> random_vec(int d, SplitMix64& rng, double scale = 1.0) {
  std::vector<float> v(static_cast<std::size_t>(d));
  for (auto& x : v) x = static_cast<float>(scale * rng.normal());
  return v;
}

double norm(std::span<const float> v) {
  double s = 0;
  for (float x : v) s += static_cast<double>(x) * x;
  return std::sqrt(s);
}

// Store whose abstract rows duplicate the given content rows (positives) or
// negate them (negatives), so a perfect Abstractor is the identity map.
ActivationStore identity_task(const RowMatrixF& rows, std::vector<Triplet>& triplets) {
  const auto n = static_cast<std::size_t>(rows.rows());
  const auto d = static_cast<int>(rows.cols());
  ActivationStore s;
  s.model_id = "task";
  s.hidden_dim = d;
  s.layers = {0};
  RowMatrixF m(static_cast<Eigen::Index>(3 * n), d);
  m.topRows(rows.rows()) = rows;
  m.middleRows(rows.rows(), rows.rows()) = rows;
  m.bottomRows(rows.rows()) = -rows;
  for (std::size_t i = 0; i < n; ++i) {
    SyllogismInstance c;
    c.id = "c" + std::to_string(i);
    c.schema_id = "S";
    c.plausibility = Plausibility::plausible;
    c.text = c.id;
    c.pair_id = "p" + std::to_string(i);
    s.instances.push_back(c);
  }
  for (std::size_t i = 0; i < n; ++i) {
    SyllogismInstance p;
    p.id = "p" + std::to_string(i);
    p.schema_id = "S";
    p.form = Form::abstract;
    p.text = p.id;
    p.pair_id = "c" + std::to_string(i);
    s.instances.push_back(p);
  }
  for (std::size_t i = 0; i < n; ++i) {
    SyllogismInstance q;
    q.id = "n" + std::to_string(i);
    q.schema_id = "T";
    q.validity = Validity::invalid;
    q.form = Form::abstract;
    q.text = q.id;
    s.instances.push_back(q);
  }
  s.matrices.emplace(0, m);
  for (std::size_t i = 0; i < n; ++i) {
    triplets.push_back({i, n + i, 2 * n + i, MatchTier::direct, 1.0, -1.0});
  }
  return s;
}

RowMatrixF gaussian_rows(Eigen::Index n, int d, SplitMix64& rng) {
  RowMatrixF m(n, d);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<float>(rng.normal());
  return m;
}

}  // namespace

TEST_SUITE("abstractor") {
  TEST_CASE("forward contract") {
    SplitMix64 rng(1);
    AbstractorModel m(small_params(8), 3);
    m.initialize(rng);
    for (int trial = 0; trial < 50; ++trial) {
      const auto x = random_vec(8, rng, 1 + trial);
      const auto out = forward(m, x);
      CHECK(norm(out.direction) == doctest::Approx(1.0).epsilon(1e-6));
      CHECK(out.magnitude >= 0.0f);
      CHECK(norm(out.prediction) == doctest::Approx(out.magnitude).epsilon(1e-5));
      const auto again = forward(m, x);
      CHECK(again.prediction == out.prediction);
    }
    std::vector<float> zero(8, 0.0f), nan(8, 1.0f), short_input(7, 1.0f);
    nan[3] = std::nanf("");
    CHECK_THROWS_AS(forward(m, zero), ValidationError);
    CHECK_THROWS_AS(forward(m, nan), ValidationError);
    CHECK_THROWS_AS(forward(m, short_input), ValidationError);
  }

  TEST_CASE("train mode dropout is seeded") {
    SplitMix64 init(4);
    AbstractorModel m(small_params(8), 0);
    m.initialize(init);
    const auto x = random_vec(8, init);
    SplitMix64 a(9), b(9);
    CHECK(forward(m, x, true, &a).prediction == forward(m, x, true, &b).prediction);
  }

  TEST_CASE("predict_rows matches single forward") {
    SplitMix64 rng(2);
    AbstractorModel m(small_params(6), 0);
    m.initialize(rng);
    RowMatrixF rows(5, 6);
    for (Eigen::Index i = 0; i < rows.size(); ++i) rows.data()[i] = static_cast<float>(rng.normal());
    const auto out = predict_rows(m, rows);
    for (Eigen::Index i = 0; i < 5; ++i) {
      const auto single = forward(m, std::span<const float>(rows.row(i).data(), 6));
      for (int k = 0; k < 6; ++k) CHECK(out(i, k) == doctest::Approx(single.prediction[static_cast<std::size_t>(k)]).epsilon(1e-6));
    }
  }

  TEST_CASE("individual losses") {
    const std::vector<double> u{0.6, 0.8, 0.0}, v{0.0, 0.0, 1.0}, w{-0.6, -0.8, 0.0};
    const std::vector<double> u3{1.8, 2.4, 0.0};
    CHECK(loss_attract(u, u) == 0.0);
    CHECK(loss_attract(u, u3) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(loss_attract(u, v) == 1.0);
    CHECK(loss_attract(u, w) == 2.0);
    CHECK(loss_repel(u, u, 0.2) == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(loss_repel(u, w, 0.2) == 0.0);
    const std::vector<double> e0{1.0, 0.0, 0.0}, at_margin{0.2, std::sqrt(1 - 0.04), 0.0};
    CHECK(loss_repel(e0, at_margin, 0.2) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(loss_repel(u, u3, 0.2) == loss_repel(u, u, 0.2));
    CHECK(loss_mag(1.0, u) == 0.0);
    CHECK(loss_mag(2.0, u3) == doctest::Approx(1.0));
    CHECK(loss_mag(3.0, std::vector<double>{2.0, 0.0}) == loss_mag(2.0, std::vector<double>{3.0, 0.0}));
    CHECK_THROWS_AS(loss_attract(u, std::vector<double>{0.0, 0.0, 0.0}), ValidationError);
  }

  TEST_CASE("loss ranges on random inputs") {
    SplitMix64 rng(3);
    for (int i = 0; i < 200; ++i) {
      std::vector<double> d{rng.normal(), rng.normal(), rng.normal()}, p{rng.normal(), rng.normal(), rng.normal()};
      const double n = std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
      for (auto& x : d) x /= n;
      const double a = loss_attract(d, p), r = loss_repel(d, p, 0.2);
      CHECK(a >= 0.0);
      CHECK(a <= 2.0);
      CHECK(r >= 0.0);
      CHECK(r <= 0.8 + 1e-12);
      CHECK(loss_mag(rng.uniform(0, 5), p) >= 0.0);
    }
  }

  TEST_CASE("composite loss on a live model") {
    SplitMix64 rng(5);
    BasicAbstractor<double> m(small_params(4), 0);
    m.initialize(rng);
    Eigen::MatrixXd x(4, 1);
    x << 0.3, -1.2, 0.7, 2.0;
    const auto t = m.forward(x);
    const Eigen::VectorXd d = t.direction.col(0);
    const double mag = t.magnitude(0);
    // A vector orthogonal to d with norm mag + 1.
    Eigen::VectorXd o = Eigen::VectorXd::Unit(4, 0) - d(0) * d;
    o *= (mag + 1.0) / o.norm();
    Eigen::MatrixXd pos = o, neg = d;
    const auto l = loss_total(m, x, pos, neg, LossWeights{0.2, 0.75, 1.0});
    CHECK(l.attract == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(l.repel == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(l.mag == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(l.total == doctest::Approx(2.6).epsilon(1e-12));

    Eigen::MatrixXd x2(4, 2), pos2(4, 2), neg2(4, 2);
    x2 << x, x;
    pos2 << pos, pos;
    neg2 << neg, neg;
    CHECK(loss_total(m, x2, pos2, neg2, LossWeights{0.2, 0.75, 1.0}).total == doctest::Approx(l.total).epsilon(1e-14));

    Eigen::MatrixXd perfect = mag * d;
    Eigen::MatrixXd away = -d;
    CHECK(loss_total(m, x, perfect, away, LossWeights{}).total == doctest::Approx(0.0).epsilon(1e-12));
  }

  TEST_CASE("analytic gradient matches finite differences") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      CAPTURE(seed);
      BasicAbstractor<double> m(small_params(8), 0);
      SplitMix64 rng(seed);
      m.initialize(rng);
      const int batch = 6;
      Eigen::MatrixXd x(8, batch), pos(8, batch), neg(8, batch);
      for (Eigen::Index i = 0; i < x.size(); ++i) {
        x.data()[i] = rng.normal();
        pos.data()[i] = rng.normal();
        neg.data()[i] = rng.normal();
      }
      // A negative margin keeps the repulsion hinge active for most samples.
      for (const double margin : {0.2, -0.5}) {
        const auto r = oracle::check_gradient(m, x, pos, neg, LossWeights{margin, 0.75, 1.0});
        CHECK(r.max_rel_error < 1e-4);
      }
    }
  }

  TEST_CASE("float and double passes agree") {
    SplitMix64 rng(6);
    AbstractorModel m(small_params(8), 0);
    m.initialize(rng);
    const auto md = m.cast<double>();
    const auto x = random_vec(8, rng);
    Eigen::MatrixXd xd(8, 1);
    for (int i = 0; i < 8; ++i) xd(i, 0) = x[static_cast<std::size_t>(i)];
    const auto td = md.forward(xd);
    const auto out = forward(m, x);
    CHECK(out.magnitude == doctest::Approx(td.magnitude(0)).epsilon(1e-5));
  }

  TEST_CASE("parameter json") {
    const auto p = small_params(12, 24);
    CHECK(params_from_json(to_json(p)) == p);
    auto bad = p;
    bad.backbone.clear();
    CHECK_THROWS_AS(bad.validate(), ValidationError);
  }
}

TEST_SUITE("model_io") {
  TEST_CASE("save, load, save is byte identical and bitwise equal in eval mode") {
    SplitMix64 rng(11);
    for (int trial = 0; trial < 5; ++trial) {
      fixtures::TempDir dir("model");
      AbstractorModel m(small_params(4 + static_cast<int>(rng.below(8)), 8 + static_cast<int>(rng.below(16))),
                        static_cast<int>(rng.below(30)));
      m.initialize(rng);
      save_model(m, 77, "hash", dir / "a.bin");
      const auto back = load_model(dir / "a.bin");
      CHECK(back.seed == 77);
      CHECK(back.config_hash == "hash");
      CHECK(back.model.layer() == m.layer());
      CHECK(back.model.params() == m.params());
      CHECK(back.model.parameters() == m.parameters());
      save_model(back.model, back.seed, back.config_hash, dir / "b.bin");
      CHECK(fixtures::slurp(dir / "a.bin") == fixtures::slurp(dir / "b.bin"));
      const auto x = random_vec(m.params().input_dim, rng);
      const auto p = forward(m, x).prediction;
      const auto q = forward(back.model, x).prediction;
      CHECK(std::memcmp(p.data(), q.data(), p.size() * sizeof(float)) == 0);
    }
  }

  TEST_CASE("corrupted files are rejected") {
    fixtures::TempDir dir("corrupt");
    SplitMix64 rng(12);
    AbstractorModel m(small_params(6), 2);
    m.initialize(rng);
    save_model(m, 1, "h", dir / "m.bin");
    const auto bytes = fixtures::slurp(dir / "m.bin");
    std::ofstream(dir / "short.bin", std::ios::binary) << bytes.substr(0, bytes.size() - 4);
    CHECK_THROWS_AS(load_model(dir / "short.bin"), ValidationError);
    std::ofstream(dir / "long.bin", std::ios::binary) << bytes << "xxxx";
    CHECK_THROWS_AS(load_model(dir / "long.bin"), ValidationError);
    std::string bad_header = bytes;
    bad_header[0] = static_cast<char>(0xff);
    std::ofstream(dir / "header.bin", std::ios::binary) << bad_header;
    CHECK_THROWS_AS(load_model(dir / "header.bin"), ValidationError);
    CHECK_THROWS_AS(load_model(dir / "missing.bin"), IoError);
    CHECK(model_file_name(18) == "abstractor_18.bin");
  }

  TEST_CASE("a model applied to another layer produces a warning") {
    SplitMix64 rng(13);
    auto store = fixtures::random_store({.pairs = 3, .dim = 6, .layers = {18, 19}}, rng);
    AbstractorModel m(small_params(6), 18);
    m.initialize(rng);
    const auto same = build_plan(store, {{18, m}}, 0.5);
    CHECK(same.warnings.empty());
    const auto other = build_plan(store, {{19, m}}, 0.5);
    REQUIRE(other.warnings.size() == 1);
    CHECK(other.warnings[0].find("18") != std::string::npos);
    CHECK(other.warnings[0].find("19") != std::string::npos);
  }
}

TEST_SUITE("training") {
  TEST_CASE("optimizer pieces") {
    std::vector<float> g{3.0f, 4.0f};
    CHECK(clip_grad_norm(g, 1.0) == doctest::Approx(5.0));
    CHECK(g[0] == doctest::Approx(0.6f));
    CHECK(g[1] == doctest::Approx(0.8f));
    std::vector<float> small{0.3f, 0.4f};
    clip_grad_norm(small, 1.0);
    CHECK(small[0] == 0.3f);

    PlateauScheduler sched(1.0, 2, 0.5);
    CHECK(sched.step(1.0) == 1.0);
    CHECK(sched.step(1.0) == 1.0);
    CHECK(sched.step(1.0) == 1.0);
    CHECK(sched.step(1.0) == 0.5);  // third epoch without improvement
    CHECK(sched.step(0.5) == 0.5);

    EarlyStopping improving(20);
    for (int e = 0; e < 150; ++e) {
      CHECK(improving.update(100.0 - e));
      CHECK_FALSE(improving.should_stop());
    }
    EarlyStopping flat(3);
    flat.update(1.0);
    for (int e = 0; e < 3; ++e) flat.update(1.0);
    CHECK(flat.should_stop());
  }

  TEST_CASE("learns the identity target and is deterministic") {
    SynthConfig synth;
    synth.dim = 8;
    synth.n_per_category = 256;
    const auto data = generate(synth);
    std::vector<std::size_t> content_rows;
    for (std::size_t i = 0; i < data.store.size(); ++i) {
      if (data.store.instances[i].form == Form::content) content_rows.push_back(i);
    }
    const auto rows = subset_store(data.store, content_rows).layer(synth.layers / 2);
    std::vector<Triplet> triplets;
    const auto store = identity_task(rows, triplets);
    TrainConfig cfg;
    cfg.batch_size = 32;
    cfg.learning_rate = 2e-3;
    cfg.max_epochs = 400;
    cfg.seed = 5;
    auto p = small_params(8, 32);
    p.dropout = 0.0;
    const auto a = train(store, triplets, 0, p, cfg);
    const auto& best = a.report.epochs[static_cast<std::size_t>(a.report.best_epoch - 1)];
    CHECK(best.val_attract < 0.01);
    CHECK(a.report.val_size == 102);
    CHECK(a.report.train_size == 922);
    CHECK(a.report.train_content_ids.size() == 922);
    const auto b = train(store, triplets, 0, p, cfg);
    CHECK(a.model.parameters() == b.model.parameters());
    CHECK(a.report == b.report);
    cfg.seed = 6;
    const auto c = train(store, triplets, 0, p, cfg);
    CHECK(c.model.parameters() != a.model.parameters());
  }

  TEST_CASE("configuration validation") {
    TrainConfig cfg;
    cfg.batch_size = 0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    TrainConfig partial = train_config_from_json(nlohmann::json{{"learning_rate", 0.01}});
    CHECK(partial.learning_rate == 0.01);
    CHECK(partial.batch_size == 128);
    const auto p = small_params(4);
    CHECK(config_hash(p, TrainConfig{}) == config_hash(p, TrainConfig{}));
    CHECK(config_hash(p, TrainConfig{}) != config_hash(p, partial));
  }

  TEST_CASE("training rejects degenerate inputs") {
    SplitMix64 rng(22);
    std::vector<Triplet> triplets;
    const auto store = identity_task(gaussian_rows(4, 8, rng), triplets);
    const std::vector<Triplet> one(triplets.begin(), triplets.begin() + 1);
    CHECK_THROWS_AS(train(store, one, 0, small_params(8), TrainConfig{}), ValidationError);
    CHECK_THROWS_AS(train(store, triplets, 0, small_params(9), TrainConfig{}), ValidationError);
  }
}
