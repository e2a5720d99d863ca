#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "doctest.h"
#include "terc/pipeline.hpp"
#include "terc/report.hpp"

using namespace terc;
using json = nlohmann::ordered_json;

namespace {

IniFile ini_of(const std::string& text) {
  std::istringstream in(text);
  return IniFile::parse(in);
}

const char* kIpdConfig =
    "[run]\nseed = 7\n"
    "[env]\nkind = ipd\nopponent_n = 3\nhistory = 2\nrounds = 50\n"
    "[agent]\nkind = q\nepisodes = 20\ndecay_steps = 500\n";

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("terc_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// A report with `n` variables of which the first `k` are significant.
json synthetic_report(std::size_t n, std::size_t k) {
  json r;
  r["format"] = "terc-report";
  r["version"] = 1;
  json vars = json::array();
  json sig = json::array();
  for (std::size_t i = 0; i < n; ++i) {
    const std::string name = "X" + std::to_string(i + 1);
    json v;
    v["variable"] = name;
    v["phi_mean"] = 0.1 / static_cast<double>(i + 3);
    v["phi_std"] = 1.0 / 3.0 * 1e-3;
    v["lower"] = 0.1 / static_cast<double>(i + 3) - 2e-3;
    v["upper"] = 0.1 / static_cast<double>(i + 3) + std::numbers::pi * 1e-4;
    v["significant"] = i < k;
    if (i < k) sig.push_back(name);
    vars.push_back(v);
  }
  r["variables"] = vars;
  r["null_model"] = {{"mean", 1e-5}, {"std", 2e-6}, {"upper", 1.2345678901234567e-5}, {"runs", 10}};
  r["selected"] = sig;
  r["significant"] = sig;
  return r;
}

}  // namespace

TEST_CASE("ini parsing rejects malformed input") {
  CHECK_THROWS_AS(ini_of("seed = 1\n"), ConfigError);
  CHECK_THROWS_AS(ini_of("[run]\nseed = 1\nseed = 2\n"), ConfigError);
  CHECK_THROWS_AS(ini_of("[run]\njust text\n"), ConfigError);
  const IniFile ok = ini_of("# comment\n[run]\n; another\nseed = 3  \n\n[env]\nkind=ipd\n");
  CHECK(ok.get("run", "seed") == "3");
  CHECK(ok.canonical() == "env.kind=ipd\nrun.seed=3\n");
}

TEST_CASE("run configs name unknown and invalid fields") {
  try {
    parse_run_config(ini_of(std::string(kIpdConfig) + "colour = red\n"));
    FAIL("unknown key accepted");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("agent.colour") != std::string::npos);
  }
  try {
    parse_run_config(ini_of("[run]\nseed = 1\n[env]\nkind = ipd\nhistory = 0\n[agent]\nkind = q\nepisodes = 5\n"));
    FAIL("zero history accepted");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("env.history") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_run_config(ini_of("[env]\nkind = ipd\n[agent]\nkind = q\nepisodes = 5\n")), ConfigError);
  CHECK_THROWS_AS(parse_run_config(ini_of("[run]\nseed = 1\n[env]\nkind = moon\n[agent]\nkind = q\nepisodes = 5\n")),
                  ConfigError);
  CHECK_THROWS_AS(parse_run_config(ini_of(std::string(kIpdConfig) + "[extra]\nx = 1\n")), ConfigError);
  CHECK_THROWS_AS(parse_run_config(ini_of("[run]\nseed = 1\n[env]\nkind = secret_key\nkeep = K1,K99\n"
                                          "[agent]\nkind = ac\nepisodes = 5\n")),
                  ConfigError);
}

TEST_CASE("config hash tracks the canonical settings and the seed override") {
  const RunConfig a = parse_run_config(ini_of(kIpdConfig));
  const RunConfig b = parse_run_config(ini_of(std::string("# reordered\n") + kIpdConfig));
  CHECK(a.config_hash == b.config_hash);
  CHECK(a.config_hash.size() == 16);
  const RunConfig c = parse_run_config(ini_of(kIpdConfig), 8);
  CHECK(c.seed == 8);
  CHECK(c.env.ipd.seed == 8);
  CHECK(c.config_hash != a.config_hash);
  CHECK(c.config_hash == parse_run_config(ini_of(std::string(kIpdConfig).replace(std::string(kIpdConfig).find("seed = 7"), 8, "seed = 8"))).config_hash);
}

TEST_CASE("TERC_SEED is read from the environment") {
  ::unsetenv("TERC_SEED");
  CHECK_FALSE(seed_from_environment().has_value());
  ::setenv("TERC_SEED", "42", 1);
  CHECK(seed_from_environment() == 42u);
  ::setenv("TERC_SEED", "4x", 1);
  CHECK_THROWS_AS(seed_from_environment(), ConfigError);
  ::unsetenv("TERC_SEED");
}

TEST_CASE("training twice with one config writes identical files") {
  const RunConfig cfg = parse_run_config(ini_of(kIpdConfig));
  const auto d1 = scratch_dir("train1");
  const auto d2 = scratch_dir("train2");
  write_training_outputs(run_training(cfg), cfg, d1);
  write_training_outputs(run_training(cfg), cfg, d2);
  for (const char* f : {"trajectories.jsonl", "trajectories.jsonl.meta.json", "checkpoint.json"}) {
    REQUIRE(std::filesystem::exists(d1 / f));
    CHECK(read_file(d1 / f) == read_file(d2 / f));
  }
  const json meta = json::parse(read_file(d1 / "trajectories.jsonl.meta.json"));
  CHECK(meta["notes"]["config_hash"] == cfg.config_hash);
  const json ckpt = json::parse(read_file(d1 / "checkpoint.json"));
  CHECK(ckpt["format"] == "terc-agent");
  CHECK(ckpt.contains("q_table"));
}

TEST_CASE("diverging training keeps the partial trajectories") {
  Bandit env({0.0, std::numeric_limits<double>::infinity()}, 0.0, 1);
  AcConfig cfg;
  try {
    train_actor_critic(env, 50, cfg, 1);
    FAIL("training with infinite rewards did not diverge");
  } catch (const TrainingDiverged& e) {
    CHECK(e.partial().episode_count() >= 1);
    CHECK(e.partial().episode_count() <= 50);
  }
}

TEST_CASE("report csv round trip keeps every number") {
  const json r = synthetic_report(25, 3);
  std::istringstream in(report_to_csv(r));
  const json back = report_from_csv(in);
  REQUIRE(back["variables"].size() == 25);
  for (std::size_t i = 0; i < 25; ++i) {
    for (const char* k : {"phi_mean", "phi_std", "lower", "upper"}) {
      CHECK(back["variables"][i][k].get<double>() == r["variables"][i][k].get<double>());
    }
    CHECK(back["variables"][i]["significant"] == r["variables"][i]["significant"]);
    CHECK(back["variables"][i]["variable"] == r["variables"][i]["variable"]);
  }
  CHECK(back["null_model"]["upper"].get<double>() == r["null_model"]["upper"].get<double>());
}

TEST_CASE("bits are applied only when rendering") {
  const json r = synthetic_report(2, 1);
  std::istringstream in(report_to_csv(r, Units::bits));
  const json back = report_from_csv(in);
  CHECK(back["variables"][0]["phi_mean"].get<double>() ==
        doctest::Approx(r["variables"][0]["phi_mean"].get<double>() / std::log(2.0)).epsilon(1e-15));
  CHECK(r["variables"][0]["phi_mean"].get<double>() == 0.1 / 3.0);
}

TEST_CASE("dot graph has one edge per significant variable") {
  const std::string dot = report_to_dot(synthetic_report(25, 3));
  std::size_t edges = 0;
  for (std::size_t p = dot.find("->"); p != std::string::npos; p = dot.find("->", p + 2)) ++edges;
  CHECK(edges == 3);
  CHECK(dot.rfind("digraph", 0) == 0);
}

TEST_CASE("plotdata has one row per variable and quartile") {
  json r = synthetic_report(5, 1);
  json qs = json::array();
  for (int q = 1; q <= 4; ++q) qs.push_back({{"quartile", q}, {"null_model", r["null_model"]}, {"variables", r["variables"]}});
  r["quartiles"] = qs;
  const std::string text = report_to_plotdata(r);
  std::size_t lines = 0;
  for (char c : text) lines += c == '\n';
  CHECK(lines == 1 + 5 * 4);
  CHECK(text.find("\nq4,X5,") != std::string::npos);
}

TEST_CASE("reports missing required fields are rejected") {
  json r = synthetic_report(3, 1);
  r.erase("significant");
  CHECK_THROWS_AS(render_report(r, ReportFormat::csv), std::invalid_argument);
  CHECK_THROWS_AS(report_format_from_string("xml"), ConfigError);
  std::istringstream bad("a,b\n");
  CHECK_THROWS_AS(report_from_csv(bad), std::invalid_argument);
}

TEST_CASE("analysis of four redundant variables with the full search") {
  AnalysisOptions o;
  o.algorithm = Algorithm::alg2;
  o.estimator.kind = EstimatorKind::plugin;
  o.estimator.seed = 1;
  const AnalysisInput input = input_from_table(gen_synthetic({SyntheticKind::four_redundant, 10000, 1}), "four.csv");
  const AnalysisOutcome out = run_analysis(input, o);
  CHECK_FALSE(out.failed);
  CHECK(out.report["selected"] == json({"X2", "X3", "X6"}));
  CHECK(out.report["significant"] == json({"X2", "X3", "X6"}));
  CHECK(out.report["provenance"]["config_hash"].get<std::string>().size() == 16);
  CHECK(out.report["provenance"]["input"]["content_hash"] == input.content_hash);
  CHECK(run_analysis(input, o).report.dump() == out.report.dump());
}

TEST_CASE("analysis with quartiles and the permutation baseline") {
  const RunConfig cfg = parse_run_config(ini_of(kIpdConfig));
  const TrainOutcome t = run_training(cfg);
  AnalysisOptions o;
  o.quartiles = true;
  o.baseline_pi = true;
  o.pi.runs = 5;
  o.pi.repeats = 2;
  const AnalysisOutcome out = run_analysis(input_from_batch(t.batch, "ipd.jsonl"), o);
  CHECK(out.report["quartiles"].size() == 4);
  CHECK(out.report["baselines"].contains("pi"));
  CHECK(out.report["provenance"]["input"]["trajectory_config_hash"] == cfg.config_hash);
  std::size_t lines = 0;
  for (char c : report_to_plotdata(out.report)) lines += c == '\n';
  CHECK(lines == 1 + 2 * 4);
}

TEST_CASE("analysis options are validated") {
  AnalysisOptions o;
  o.segment = "q5";
  CHECK_THROWS_AS(o.validate(), ConfigError);
  CHECK_THROWS_AS(parse_analysis_config(ini_of("[analysis]\nalgorithm = alg3\n")), ConfigError);
  CHECK_THROWS_AS(parse_analysis_config(ini_of("[analysis]\nfoo = 1\n")), ConfigError);
  const AnalysisOptions p = parse_analysis_config(ini_of("[analysis]\nestimator = mine\nruns = 4\n"));
  CHECK(p.estimator.kind == EstimatorKind::mine);
  CHECK(p.tolerance_config().mode == ToleranceMode::statistical);
  CHECK(AnalysisOptions{}.tolerance_config().mode == ToleranceMode::exact);
}

TEST_CASE("report files are written side by side") {
  const auto dir = scratch_dir("report");
  write_report_files(synthetic_report(4, 2), dir / "r.json");
  CHECK(std::filesystem::exists(dir / "r.json"));
  CHECK(std::filesystem::exists(dir / "r.csv"));
  CHECK(std::filesystem::exists(dir / "r.dot"));
  const json back = json::parse(read_file(dir / "r.json"));
  CHECK(back == synthetic_report(4, 2));
}

TEST_CASE("doped cart pole variables are not significant for a balancing controller") {
  CartPole env({9.8, 3, 5.0, 200, 11});
  // Push towards the side the pole is falling to; ignores the doped inputs.
  const Policy controller = [](std::span<const double> s, Rng&) {
    return std::vector<double>{s[2] + 0.5 * s[3] + 0.01 * s[1] > 0.0 ? 1.0 : 0.0};
  };
  const TrajectoryBatch batch = rollout(env, controller, 10, 3);
  REQUIRE(batch.mean_last_rewards(10) == 200.0);
  AnalysisOptions o;
  o.algorithm = Algorithm::naive;
  o.estimator.kind = EstimatorKind::mine;
  o.estimator.seed = 2;
  o.estimator.runs = 5;
  o.estimator.mine.iterations = 400;
  o.expert_threshold = 195.0;
  const json report = run_analysis(input_from_batch(batch, "cartpole.jsonl"), o).report;
  for (const char* doped : {"rand1", "rand2", "rand3"}) {
    const auto& sig = report["significant"];
    CHECK(std::find(sig.begin(), sig.end(), doped) == sig.end());
  }
  CHECK_FALSE(report["significant"].empty());
}
