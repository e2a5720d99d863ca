#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "terc/pipeline.hpp"
#include "terc/report.hpp"

using namespace terc;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kAnalysisFailure = 3;

struct TrainArgs {
  std::string config;
  std::string output;
  std::string keep;
};

struct AnalyzeArgs {
  std::string input;
  std::string config;
  std::string output;
  std::string algorithm = "alg1";
  std::string estimator = "plugin";
  std::string tolerance = "auto";
  double epsilon = 1e-9;
  std::size_t runs = 10;
  std::uint64_t seed = 0;
  std::string segment = "all";
  double expert_threshold = 0.0;
  bool quartiles = false;
  std::string baseline = "none";
  std::size_t pi_runs = 1000;
  std::size_t threads = 1;
};

struct ReportArgs {
  std::string input;
  std::string format = "json";
  std::string units = "nats";
  std::string output;
};

struct GenerateArgs {
  std::string dataset = "four_redundant";
  std::size_t rows = 10000;
  std::uint64_t seed = 0;
  std::string output;
};

void emit(const std::string& text, const std::string& path) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

int cmd_train(const TrainArgs& args) {
  IniFile ini = IniFile::load(args.config);
  if (!args.keep.empty()) ini.set("env", "keep", args.keep);
  const RunConfig cfg = parse_run_config(ini, seed_from_environment());
  const std::string dir = !args.output.empty() ? args.output : cfg.output;
  if (dir.empty()) throw ConfigError("no output directory (use -o or run.output)");
  const TrainOutcome outcome = run_training(cfg);
  write_training_outputs(outcome, cfg, dir);
  if (outcome.diverged) {
    std::cerr << "terc train: " << outcome.error << " (partial trajectories written to " << dir << ")\n";
    return kAnalysisFailure;
  }
  std::cerr << "terc train: " << outcome.batch.episode_count() << " episodes, mean reward of the last 100 "
            << std::setprecision(6) << outcome.batch.mean_last_rewards(100) << ", config " << cfg.config_hash << "\n";
  return kOk;
}

int cmd_analyze(const AnalyzeArgs& args, const CLI::App& app) {
  AnalysisOptions o;
  if (!args.config.empty()) o = parse_analysis_config(IniFile::load(args.config));
  auto given = [&](const char* name) { return app.count(name) > 0; };
  if (given("--alg") || args.config.empty()) o.algorithm = algorithm_from_string(args.algorithm);
  if (given("--estimator") || args.config.empty()) o.estimator.kind = estimator_from_string(args.estimator);
  if (given("--tolerance")) {
    o.tolerance = args.tolerance == "auto" ? std::nullopt : std::optional(tolerance_from_string(args.tolerance));
  }
  if (given("--epsilon")) o.epsilon = args.epsilon;
  if (given("--runs")) o.estimator.runs = args.runs;
  if (given("--seed")) o.estimator.seed = args.seed;
  if (const auto env_seed = seed_from_environment()) o.estimator.seed = *env_seed;
  if (given("--segment")) o.segment = args.segment;
  if (given("--expert-threshold")) o.expert_threshold = args.expert_threshold;
  if (given("--quartiles")) o.quartiles = args.quartiles;
  if (given("--baseline")) o.baseline_pi = args.baseline == "pi";
  if (given("--pi-runs")) o.pi.runs = args.pi_runs;
  if (given("--threads")) o.estimator.threads = args.threads;
  o.pi.seed = o.estimator.seed;
  o.validate();

  if (!args.output.empty()) {
    const auto out = std::filesystem::absolute(args.output).lexically_normal();
    const auto in = std::filesystem::absolute(args.input).lexically_normal();
    for (const char* ext : {".json", ".csv", ".dot"}) {
      if (std::filesystem::path(out).replace_extension(ext) == in) {
        throw ConfigError("report output " + args.output + " would overwrite the input " + args.input);
      }
    }
  }
  const AnalysisInput input = load_analysis_input(args.input);
  const AnalysisOutcome outcome = run_analysis(input, o);
  if (args.output.empty()) {
    std::cout << render_report(outcome.report, ReportFormat::json);
  } else {
    write_report_files(outcome.report, args.output);
  }
  std::cerr << "terc analyze: selected " << outcome.report["selected"].dump() << "\n";
  if (outcome.failed) {
    std::cerr << "terc analyze: estimation failed, see \"failures\" in the report\n";
    return kAnalysisFailure;
  }
  return kOk;
}

int cmd_report(const ReportArgs& args) {
  const ReportFormat format = report_format_from_string(args.format);
  const Units units = units_from_string(args.units);
  std::ifstream in(args.input, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + args.input);
  const auto report = nlohmann::ordered_json::parse(in);
  emit(render_report(report, format, units), args.output);
  return kOk;
}

int cmd_generate(const GenerateArgs& args) {
  const SampleTable t = gen_synthetic({synthetic_from_string(args.dataset), args.rows, args.seed});
  std::ostringstream out;
  t.write_csv(out);
  emit(out.str(), args.output);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"terc: state variable selection for reinforcement learning agents"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "train an agent and record its trajectories");
  train_cmd->add_option("-c,--config", train.config, "run configuration file")->required();
  train_cmd->add_option("-o,--output", train.output, "output directory (overrides run.output)");
  train_cmd->add_option("--keep", train.keep, "comma-separated state variables to keep (overrides env.keep)");

  AnalyzeArgs an;
  auto* an_cmd = app.add_subcommand("analyze", "compute Phi, the null model and the selected variable set");
  an_cmd->add_option("-i,--input", an.input, "trajectory JSONL or CSV file")->required();
  an_cmd->add_option("-c,--config", an.config, "analysis configuration file ([analysis] section)");
  an_cmd->add_option("-o,--output", an.output, "report JSON path (CSV and DOT are written alongside)");
  an_cmd->add_option("--alg", an.algorithm, "selection algorithm")->check(CLI::IsMember({"naive", "alg1", "alg2"}));
  an_cmd->add_option("--estimator", an.estimator, "information estimator")->check(CLI::IsMember({"plugin", "mine"}));
  an_cmd->add_option("--tolerance", an.tolerance, "decision rule")->check(CLI::IsMember({"auto", "exact", "statistical"}));
  an_cmd->add_option("--epsilon", an.epsilon, "tolerance for exact comparisons");
  an_cmd->add_option("--runs", an.runs, "estimator repetitions");
  an_cmd->add_option("--seed", an.seed, "estimator seed");
  an_cmd->add_option("--segment", an.segment, "rows to analyse")->check(CLI::IsMember({"all", "q1", "q2", "q3", "q4"}));
  an_cmd->add_option("--expert-threshold", an.expert_threshold, "keep episodes with at least this reward");
  an_cmd->add_flag("--quartiles", an.quartiles, "add per-quartile Phi tables");
  an_cmd->add_option("--baseline", an.baseline, "baseline method")->check(CLI::IsMember({"none", "pi"}));
  an_cmd->add_option("--pi-runs", an.pi_runs, "permutations per feature for the PI baseline");
  an_cmd->add_option("--threads", an.threads, "worker threads (0 = all cores)");

  ReportArgs rep;
  auto* rep_cmd = app.add_subcommand("report", "render a report");
  rep_cmd->add_option("-i,--input", rep.input, "report JSON")->required();
  rep_cmd->add_option("-f,--format", rep.format, "csv, json, dot or plotdata");
  rep_cmd->add_option("--units", rep.units, "nats or bits (csv and plotdata)");
  rep_cmd->add_option("-o,--output", rep.output, "output file (default stdout)");

  GenerateArgs gen;
  auto* gen_cmd = app.add_subcommand("generate", "write a synthetic dataset as CSV");
  gen_cmd->add_option("--dataset", gen.dataset, "four_redundant or two_triplets");
  gen_cmd->add_option("--rows", gen.rows, "number of rows");
  gen_cmd->add_option("--seed", gen.seed, "generator seed");
  gen_cmd->add_option("-o,--output", gen.output, "output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }

  try {
    if (*train_cmd) return cmd_train(train);
    if (*an_cmd) return cmd_analyze(an, *an_cmd);
    if (*rep_cmd) return cmd_report(rep);
    if (*gen_cmd) return cmd_generate(gen);
  } catch (const ConfigError& e) {
    std::cerr << "terc: configuration error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "terc: " << e.what() << "\n";
    return kAnalysisFailure;
  }
  return kOk;
}
