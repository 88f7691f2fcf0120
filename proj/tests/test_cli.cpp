#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

#include "absteer/evaluation.hpp"
#include "absteer/steering.hpp"
#include "absteer/store.hpp"
#include "support/fixtures.hpp"

using namespace absteer;
using fixtures::TempDir;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string err;
};

Outcome run(const std::string& args, const TempDir& scratch) {
  const auto err = scratch / "stderr.txt";
  const std::string cmd = std::string(ABSTEER_CLI_PATH) + " " + args + " > /dev/null 2> " + err.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, fixtures::slurp(err)};
}

std::string data(const std::string& rel) { return (fs::path(ABSTEER_DATA_DIR) / rel).string(); }

// Every regular file below dir, keyed by relative path.
std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = fixtures::slurp(e.path());
  }
  return out;
}

// A small synthetic config so the CLI tests stay quick.
std::string small_synth(const TempDir& dir) {
  auto j = nlohmann::json::parse(fixtures::slurp(data("synth.json")));
  j["synth"]["n_per_category"] = 24;
  j["pipeline"]["train"]["max_epochs"] = 20;
  const auto path = dir / "small.json";
  std::ofstream(path) << j.dump(2);
  return path.string();
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("exit codes and error reporting") {
    TempDir dir("cli_codes");
    CHECK(run("", dir).code == 1);
    CHECK(run("--help", dir).code == 0);
    CHECK(run("match --bogus 1", dir).code == 1);
    CHECK(run("evaluate --instances nowhere --predictions nowhere --out " + (dir / "o").string(), dir).code == 2);

    std::ofstream(dir / "bad.json") << "{not json";
    const auto bad = run("synth-e2e --synth " + (dir / "bad.json").string() + " --out " + (dir / "o").string(), dir);
    CHECK(bad.code == 2);
    const auto err = nlohmann::json::parse(bad.err);
    CHECK(err["error"] == "validation");
    CHECK(err.contains("message"));

    std::ofstream(dir / "cfg.json") << R"({"unknown_key": 1})";
    CHECK(run("evaluate --config " + (dir / "cfg.json").string(), dir).code == 2);
    CHECK(run("match --out " + (dir / "m").string(), dir).code == 1);
  }

  TEST_CASE("syllogism generation") {
    TempDir dir("cli_gen");
    const auto out = dir / "gen";
    REQUIRE(run("gen-data --terms " + data("terms/en.jsonl") + " --templates " + data("templates/en.json") +
                    " --out " + out.string(),
                dir)
                .code == 0);
    const auto xs = read_instances_jsonl(out / "instances.jsonl");
    CHECK(xs.size() == 2 * 24 * 12);
    const auto run_json = nlohmann::json::parse(fixtures::slurp(out / "run.json"));
    CHECK(run_json["subcommand"] == "gen-data");
    CHECK(run_json["config"]["catalog_size"] == 24);
    CHECK(run_json["inputs"].size() == 2);
  }

  TEST_CASE("staged pipeline on a synthetic store") {
    TempDir dir("cli_stages");
    const auto synth = small_synth(dir);
    const auto gen = dir / "gen";
    REQUIRE(run("gen-data --synth " + synth + " --out " + gen.string(), dir).code == 0);
    const auto store = load_store(gen / "store");
    CHECK(store.size() == 192);

    const auto match = dir / "match";
    REQUIRE(run("match --store " + (gen / "store").string() + " --predictions " + (gen / "predictions.jsonl").string() +
                    " --layer 9 --out " + match.string(),
                dir)
                .code == 0);
    const auto sel = dir / "select";
    REQUIRE(run("select-layers --store " + (gen / "store").string() + " --triplets " +
                    (match / "triplets.jsonl").string() + " --window 3 --out " + sel.string(),
                dir)
                .code == 0);
    const auto layers = nlohmann::json::parse(fixtures::slurp(sel / "layers.json"))["layers"];
    CHECK(layers.size() == 3);
    CHECK(fixtures::slurp(sel / "profile.csv").rfind("layer,s_ell,n_pairs\n", 0) == 0);

    const auto models = dir / "models";
    const std::string train_args = "train --store " + (gen / "store").string() + " --triplets " +
                                   (match / "triplets.jsonl").string() + " --layers-file " +
                                   (sel / "layers.json").string() +
                                   " --backbone 16 16 --direction-hidden 8 --magnitude-hidden 8 --max-epochs 5"
                                   " --batch-size 16 --out " + models.string();
    REQUIRE(run(train_args + " --workers 2", dir).code == 0);
    const auto first = snapshot(models);
    CHECK(first.size() == 3 * 2 + 1);
    REQUIRE(run(train_args, dir).code == 0);
    CHECK(snapshot(models) == first);

    const auto plan = dir / "plan";
    REQUIRE(run("plan --store " + (gen / "store").string() + " --models " + models.string() + " --alpha 0.5 --out " +
                    plan.string(),
                dir)
                .code == 0);
    const auto p = import_plan(plan);
    CHECK(p.alpha_max == 0.5);
    CHECK(p.layers == layers.get<std::vector<int>>());
    CHECK(run("plan --store " + (gen / "store").string() + " --models " + models.string() + " --alpha 1.5 --out " +
                  (dir / "plan2").string(),
              dir)
              .code == 2);

    const auto ev = dir / "eval";
    REQUIRE(run("evaluate --instances " + (gen / "store").string() + " --predictions " +
                    (gen / "predictions.jsonl").string() + " --out " + ev.string(),
                dir)
                .code == 0);
    CHECK(fs::exists(ev / "report_unsteered.json"));
    CHECK(fs::exists(ev / "report_abstract.csv"));
  }

  TEST_CASE("synth-e2e at alpha 0, reruns and report aggregation") {
    TempDir dir("cli_e2e");
    const auto synth = small_synth(dir);
    const auto out = dir / "e2e";
    REQUIRE(run("synth-e2e --synth " + synth + " --alpha 0 --out " + out.string(), dir).code == 0);
    const auto un = report_from_json(nlohmann::json::parse(fixtures::slurp(out / "report_unsteered.json")));
    const auto st = report_from_json(nlohmann::json::parse(fixtures::slurp(out / "report_steered.json")));
    CHECK(st.counts == un.counts);
    CHECK(st.categories == un.categories);
    CHECK(st.acc_global == un.acc_global);
    CHECK(st.bpa == un.bpa);

    const auto first = snapshot(out);
    REQUIRE(run("synth-e2e --synth " + synth + " --alpha 0 --workers 3 --out " + out.string(), dir).code == 0);
    CHECK(snapshot(out) == first);

    const auto agg = dir / "agg";
    REQUIRE(run("report --inputs " + (out / "report_steered.json").string() + " --out " + agg.string(), dir).code == 0);
    const auto merged = report_from_json(nlohmann::json::parse(fixtures::slurp(agg / "report.json")));
    CHECK(merged.bpa == st.bpa);

    auto other = nlohmann::json::parse(fixtures::slurp(out / "report_steered.json"));
    other["config_hash"] = "different";
    std::ofstream(dir / "other.json") << other.dump();
    const std::string both = (out / "report_steered.json").string() + " " + (dir / "other.json").string();
    CHECK(run("report --inputs " + both + " --out " + (dir / "agg2").string(), dir).code == 2);
    CHECK(run("report --inputs " + both + " --force --out " + (dir / "agg2").string(), dir).code == 0);
  }

  TEST_CASE("sweep writes per-alpha reports and the selected alpha") {
    TempDir dir("cli_sweep");
    const auto synth = small_synth(dir);
    const auto out = dir / "sweep";
    REQUIRE(run("sweep --synth " + synth + " --alpha-grid 0.2 0.6 1.0 --out " + out.string(), dir).code == 0);
    const auto summary = nlohmann::json::parse(fixtures::slurp(out / "sweep.json"));
    std::map<double, EvalReport> reports;
    for (const auto& e : fs::directory_iterator(out)) {
      const auto name = e.path().filename().string();
      if (name.rfind("report_steered", 0) == 0 && e.path().extension() == ".json") {
        const auto r = report_from_json(nlohmann::json::parse(fixtures::slurp(e.path())));
        reports.emplace(*r.alpha, r);
      }
    }
    REQUIRE(reports.size() == 3);
    CHECK(summary["alpha_star"].get<double>() == select_alpha(reports));
    CHECK(summary["bpa"].size() == 3);
    CHECK(run("sweep --synth " + synth + " --alpha-grid 0 --out " + out.string(), dir).code == 2);
  }
}
