#include <doctest.h>

#include <cmath>
#include <cstring>

#include "absteer/errors.hpp"
#include "absteer/layer_analysis.hpp"
#include "absteer/matcher.hpp"
#include "absteer/steering.hpp"
#include "support/fixtures.hpp"

using namespace absteer;

namespace {

SimilarityProfile profile_of(const std::vector<double>& s) {
  SimilarityProfile p;
  for (std::size_t i = 0; i < s.size(); ++i) p.layers.push_back(static_cast<int>(i));
  p.similarity = s;
  p.n_pairs = 1;
  return p;
}

// Exhaustive scan over contiguous windows inside the region.
std::vector<int> brute_select(const std::vector<double>& s, int window, double lo, double hi) {
  const int depth = static_cast<int>(s.size());
  double best = 1e300;
  int start = -1;
  for (int a = 0; a + window <= depth; ++a) {
    if (a < lo * depth || a + window - 1 >= hi * depth) continue;
    double m = 0;
    for (int k = a; k < a + window; ++k) m += s[static_cast<std::size_t>(k)];
    m /= window;
    if (m < best) {
      best = m;
      start = a;
    }
  }
  std::vector<int> out;
  for (int k = start; start >= 0 && k < start + window; ++k) out.push_back(k);
  return out;
}

ActivationStore two_rows(const std::vector<float>& pos, const std::vector<float>& neg, int layers) {
  ActivationStore s;
  s.model_id = "m";
  s.hidden_dim = static_cast<int>(pos.size());
  for (int l = 0; l < layers; ++l) s.layers.push_back(l);
  for (const char* id : {"c", "p", "n"}) {
    SyllogismInstance x;
    x.id = id;
    x.schema_id = "S";
    x.text = id;
    x.form = std::string(id) == "c" ? Form::content : Form::abstract;
    x.plausibility = x.form == Form::content ? Plausibility::plausible : Plausibility::none;
    x.validity = std::string(id) == "n" ? Validity::invalid : Validity::valid;
    s.instances.push_back(x);
  }
  for (int l = 0; l < layers; ++l) {
    RowMatrixF m(3, s.hidden_dim);
    for (int k = 0; k < s.hidden_dim; ++k) {
      m(0, k) = 1.0f;
      m(1, k) = pos[static_cast<std::size_t>(k)];
      m(2, k) = neg[static_cast<std::size_t>(k)];
    }
    s.matrices.emplace(l, m);
  }
  return s;
}

}  // namespace

TEST_SUITE("layer_analysis") {
  TEST_CASE("profile extremes") {
    const std::vector<Triplet> t{{0, 1, 2, MatchTier::validity_fallback, 0, 0}};
    const auto same = posneg_profile(two_rows({1, 2, 3}, {2, 4, 6}, 3), t);
    REQUIRE(same.similarity.size() == 3);
    for (double v : same.similarity) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
    const auto orth = posneg_profile(two_rows({1, 0, 0}, {0, 5, 0}, 2), t);
    for (double v : orth.similarity) CHECK(v == 0.0);
    CHECK(orth.n_pairs == 1);
  }

  TEST_CASE("three-pair hand fixture") {
    SplitMix64 rng(1);
    auto s = fixtures::random_store({.pairs = 3, .dim = 2, .layers = {0}}, rng);
    // rows: c0 c1 c2 a0 a1 a2
    s.matrices.at(0) << 9, 9, 9, 9, 9, 9, 1, 0, 0, 1, 1, 1;
    const std::vector<Triplet> t{{0, 3, 4, MatchTier::direct, 0, 0},   // cos((1,0),(0,1)) = 0
                                 {1, 3, 5, MatchTier::direct, 0, 0},   // cos((1,0),(1,1)) = 1/sqrt2
                                 {2, 4, 5, MatchTier::direct, 0, 0}};  // 1/sqrt2
    const auto p = posneg_profile(s, t);
    CHECK(p.similarity[0] == doctest::Approx(std::sqrt(2.0) / 3.0).epsilon(1e-12));
    CHECK_THROWS_AS(posneg_profile(s, {}), ValidationError);
  }

  TEST_CASE("window selection") {
    const std::vector<double> s{0.9, 0.5, 0.2, 0.3, 0.8};
    CHECK(select_layers(profile_of(s), 2, {0.0, 1.0}) == std::vector<int>{2, 3});
    CHECK(select_layers(profile_of(s), 1, {0.0, 1.0}) == std::vector<int>{2});
    CHECK(select_layers(profile_of(s), 1, {0.6, 1.0}) == std::vector<int>{3});
    CHECK(select_layers(profile_of({0.5, 0.5, 0.5, 0.5}), 2, {0.0, 1.0}) == std::vector<int>{0, 1});
    CHECK_THROWS_AS(select_layers(profile_of(s), 0, {0.0, 1.0}), ValidationError);
    CHECK_THROWS_AS(select_layers(profile_of(s), 3, {0.8, 1.0}), ValidationError);
    CHECK_THROWS_AS(select_layers(profile_of(s), 2, {0.5, 0.4}), ValidationError);
  }

  TEST_CASE("default region and window on a 28-layer model") {
    std::vector<double> s(28, 0.6);
    for (int l = 18; l <= 22; ++l) s[static_cast<std::size_t>(l)] = 0.3;
    s[5] = 0.0;  // outside the region
    CHECK(default_window(28) == 5);
    CHECK(select_layers(profile_of(s), default_window(28), LayerRegion{}) == std::vector<int>{18, 19, 20, 21, 22});
  }

  TEST_CASE("selection agrees with an exhaustive scan") {
    SplitMix64 rng(3);
    for (int trial = 0; trial < 500; ++trial) {
      const int depth = 4 + static_cast<int>(rng.below(40));
      std::vector<double> s(static_cast<std::size_t>(depth));
      for (auto& v : s) v = static_cast<double>(rng.below(8)) / 8.0;  // coarse values force ties
      const int window = 1 + static_cast<int>(rng.below(6));
      const double lo = rng.uniform(0.0, 0.5), hi = rng.uniform(lo + 0.05, 1.0);
      const auto expected = brute_select(s, window, lo, hi);
      CAPTURE(trial);
      if (expected.empty()) {
        CHECK_THROWS_AS(select_layers(profile_of(s), window, {lo, hi}), ValidationError);
        continue;
      }
      const auto got = select_layers(profile_of(s), window, {lo, hi});
      CHECK(got == expected);
      CHECK(select_layers(profile_of(s), window, {lo, hi}) == got);
      for (std::size_t k = 1; k < got.size(); ++k) CHECK(got[k] == got[k - 1] + 1);
      CHECK(got.front() >= lo * depth);
      CHECK(got.back() < hi * depth);
    }
  }

  TEST_CASE("profile csv") {
    fixtures::TempDir dir("csv");
    auto p = profile_of({0.5, 0.25});
    p.n_pairs = 7;
    write_profile_csv(p, dir / "p.csv");
    const auto text = fixtures::slurp(dir / "p.csv");
    CHECK(text.rfind("layer,s_ell,n_pairs\n0,0.5,7\n1,0.25,7\n", 0) == 0);
  }

  TEST_CASE("probe on separable clusters") {
    SplitMix64 rng(4);
    auto s = fixtures::random_store({.pairs = 100, .dim = 6, .layers = {0}}, rng);
    auto& m = s.matrices.at(0);
    for (std::size_t i = 0; i < s.size(); ++i) {
      m(static_cast<Eigen::Index>(i), 0) += s.instances[i].validity == Validity::valid ? 6.0f : -6.0f;
    }
    const auto r = train_validity_probe(s, 0, 1);
    CHECK(r.test_accuracy == 1.0);
    CHECK(r.train_accuracy == 1.0);
    CHECK(r.train_rows.size() + r.test_rows.size() == 200);
    // Standardization statistics come from the train split alone.
    const auto train_only = fit_standardization(m, r.train_rows);
    CHECK(r.standardization.mean == train_only.mean);
    CHECK(r.standardization.scale == train_only.scale);
    std::vector<std::size_t> all(s.size());
    std::iota(all.begin(), all.end(), 0);
    CHECK(fit_standardization(m, all).mean != r.standardization.mean);
    for (std::size_t t : r.test_rows) {
      CHECK(std::find(r.train_rows.begin(), r.train_rows.end(), t) == r.train_rows.end());
    }
  }

  TEST_CASE("probe on labels independent of activations") {
    double mean = 0.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      SplitMix64 rng(100 + seed);
      auto s = fixtures::random_store({.pairs = 500, .dim = 6, .layers = {0}}, rng);
      for (auto& x : s.instances) x.validity = rng.below(2) ? Validity::valid : Validity::invalid;
      const double acc = train_validity_probe(s, 0, seed).test_accuracy;
      CHECK(std::abs(acc - 0.5) < 0.1);
      mean += acc / 5;
    }
    CHECK(std::abs(mean - 0.5) < 0.05);
  }
}

TEST_SUITE("steering") {
  TEST_CASE("alpha schedule") {
    CHECK(alpha_schedule(3, 10, 20, 0.5) == 0.0);
    CHECK(alpha_schedule(9, 10, 20, 0.5) == 0.0);
    CHECK(alpha_schedule(10, 10, 20, 0.5) == 0.0);
    CHECK(alpha_schedule(15, 10, 20, 0.5) == 0.25);
    CHECK(alpha_schedule(20, 10, 20, 0.5) == 0.5);
    CHECK(alpha_schedule(20, 10, 20, 1.0) == 1.0);
    CHECK(alpha_schedule(19, 10, 20, 1.0) == doctest::Approx(0.9));
    CHECK_THROWS_AS(alpha_schedule(5, 10, 20, 1.5), ValidationError);
    CHECK_THROWS_AS(alpha_schedule(5, 20, 20, 0.5), ValidationError);
    CHECK_THROWS_AS(alpha_schedule(21, 10, 20, 0.5), ValidationError);
  }

  TEST_CASE("schedule is monotone and bounded") {
    SplitMix64 rng(5);
    for (int trial = 0; trial < 200; ++trial) {
      const int ts = static_cast<int>(rng.below(20));
      const int T = ts + 1 + static_cast<int>(rng.below(40));
      const double a = rng.uniform();
      double prev = 0.0;
      for (int t = 0; t <= T; ++t) {
        const double v = alpha_schedule(t, ts, T, a);
        CHECK(v >= prev);
        CHECK(v <= a);
        prev = v;
      }
      CHECK(prev == doctest::Approx(a).epsilon(1e-15));
    }
  }

  TEST_CASE("blend") {
    const std::vector<float> a{2, 0}, b{0, 2};
    CHECK(blend(a, b, 0.5) == std::vector<float>{1, 1});
    SplitMix64 rng(6);
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<float> x(7), y(7);
      for (auto& v : x) v = static_cast<float>(rng.normal() * 100);
      for (auto& v : y) v = static_cast<float>(rng.normal() * 100);
      CHECK(blend(x, y, 0.0) == x);
      CHECK(blend(x, y, 1.0) == y);
      CHECK(blend(x, x, rng.uniform()) == x);
    }
    CHECK_THROWS_AS(blend(a, b, 1.1), ValidationError);
    CHECK_THROWS_AS(blend(a, std::vector<float>{1}, 0.5), ValidationError);
  }

  TEST_CASE("identity plan targets equal the activations") {
    SplitMix64 rng(7);
    const auto store = fixtures::random_store({.pairs = 6, .dim = 5, .layers = {3, 4, 5}}, rng);
    const auto built = build_plan(store, {3, 5}, 0.7, identity_targets);
    const auto& plan = built.plan;
    CHECK(plan.size() == store.size());
    CHECK(plan.layers == std::vector<int>{3, 5});
    for (int l : plan.layers) {
      CHECK(plan.targets.at(l).rows() == static_cast<Eigen::Index>(store.size()));
      CHECK(plan.targets.at(l).cols() == 5);
      CHECK(plan.targets.at(l) == store.layer(l));
      for (std::size_t i = 0; i < store.size(); ++i) {
        const auto row = store.row(l, i);
        const std::vector<float> v(row.begin(), row.end());
        const auto t = plan.target(l, i);
        for (const double alpha : {0.0, 0.3, 1.0}) CHECK(blend(v, t, alpha) == v);
      }
    }
  }

  TEST_CASE("plan export and import") {
    SplitMix64 rng(8);
    for (int trial = 0; trial < 5; ++trial) {
      fixtures::TempDir a("plan_a"), b("plan_b");
      const auto store = fixtures::random_store({.pairs = 1 + rng.below(20), .dim = 3 + static_cast<int>(rng.below(6)),
                                                 .layers = {1, 2, 7}},
                                                rng);
      const auto plan = build_plan(store, {1, 7}, rng.uniform(), [&](int, const RowMatrixF& x) {
                          RowMatrixF y = x * 0.37f;
                          return y;
                        }).plan;
      export_plan(plan, a.path());
      const auto back = import_plan(a.path());
      CHECK(back.alpha_max == plan.alpha_max);
      CHECK(back.entries == plan.entries);
      CHECK(back.layers == plan.layers);
      for (int l : plan.layers) {
        const auto& x = plan.targets.at(l);
        const auto& y = back.targets.at(l);
        REQUIRE(x.size() == y.size());
        CHECK(std::memcmp(x.data(), y.data(), sizeof(float) * static_cast<std::size_t>(x.size())) == 0);
      }
      export_plan(back, b.path());
      for (const auto& entry : std::filesystem::directory_iterator(a.path())) {
        const auto name = entry.path().filename().string();
        CHECK(fixtures::slurp(a / name) == fixtures::slurp(b / name));
      }
    }
  }

  TEST_CASE("empty plans and bad alpha") {
    fixtures::TempDir dir("plan_empty");
    SteeringPlan p;
    p.alpha_max = 0.5;
    p.layers = {2};
    p.hidden_dim = 4;
    p.targets.emplace(2, RowMatrixF(0, 4));
    export_plan(p, dir.path());
    CHECK(import_plan(dir.path()).size() == 0);

    auto meta = nlohmann::json::parse(fixtures::slurp(dir / "plan.json"));
    meta["alpha_max"] = 1.5;
    std::ofstream(dir / "plan.json") << meta.dump();
    CHECK_THROWS_AS(import_plan(dir.path()), ValidationError);
    meta["alpha_max"] = -0.1;
    std::ofstream(dir / "plan.json") << meta.dump();
    CHECK_THROWS_AS(import_plan(dir.path()), ValidationError);
    p.alpha_max = 2.0;
    CHECK_THROWS_AS(validate_plan(p), ValidationError);
  }

  TEST_CASE("default grid") {
    const auto g = default_alpha_grid();
    REQUIRE(g.size() == 10);
    CHECK(g.front() == doctest::Approx(0.1));
    CHECK(g.back() == 1.0);
  }
}
