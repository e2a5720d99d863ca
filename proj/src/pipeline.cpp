#include "terc/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <sstream>

#include "terc/report.hpp"
#include "terc/trajectory_io.hpp"

namespace terc {

// ---- training ---------------------------------------------------------------

namespace {

nlohmann::ordered_json network_json(const neural::MlpParams& params) {
  return nlohmann::ordered_json::parse(neural::checkpoint_to_json(params));
}

nlohmann::ordered_json config_json(const IniFile& ini) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [section, keys] : ini.sections()) {
    for (const auto& [key, value] : keys) j[section][key] = value;
  }
  return j;
}

}  // namespace

TrainOutcome run_training(const RunConfig& config) {
  std::unique_ptr<Env> env = make_env(config);
  TrainOutcome out;
  nlohmann::ordered_json ckpt;
  ckpt["format"] = "terc-agent";
  ckpt["version"] = 1;
  ckpt["kind"] = to_string(config.agent.kind);
  ckpt["config_hash"] = config.config_hash;
  try {
    switch (config.agent.kind) {
      case AgentKind::q: {
        QResult r = train_q(*env, config.agent.episodes, config.agent.q, config.seed);
        ckpt["q_table"] = r.table.to_json();
        out.batch = std::move(r.batch);
        break;
      }
      case AgentKind::ac: {
        AcResult r = train_actor_critic(*env, config.agent.episodes, config.agent.ac, config.seed);
        ckpt["actor"] = network_json(r.actor);
        ckpt["critic"] = network_json(r.critic);
        out.batch = std::move(r.batch);
        break;
      }
      case AgentKind::ppo: {
        PpoResult r = train_ppo(*env, config.agent.steps, config.agent.ppo, config.seed);
        ckpt["actor"] = network_json(r.actor);
        ckpt["critic"] = network_json(r.critic);
        ckpt["log_std"] = r.log_std;
        out.batch = std::move(r.batch);
        break;
      }
    }
    out.checkpoint = std::move(ckpt);
  } catch (const TrainingDiverged& e) {
    out.batch = e.partial();
    out.diverged = true;
    out.error = e.what();
  }
  out.batch.notes["config_hash"] = config.config_hash;
  out.batch.notes["config"] = config_json(config.source);
  if (out.diverged) {
    out.batch.notes["diverged"] = true;
    out.batch.notes["error"] = out.error;
  }
  return out;
}

void write_training_outputs(const TrainOutcome& outcome, const RunConfig& config, const std::filesystem::path& dir) {
  (void)config;
  std::filesystem::create_directories(dir);
  save_trajectories(outcome.batch, dir / "trajectories.jsonl");
  const auto ckpt = dir / "checkpoint.json";
  if (outcome.diverged) {
    std::filesystem::remove(ckpt);
    return;
  }
  std::ofstream out(ckpt, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + ckpt.string());
  out << outcome.checkpoint.dump(2) << '\n';
}

// ---- analysis options -----------------------------------------------------------

ToleranceConfig AnalysisOptions::tolerance_config() const {
  const ToleranceMode mode = tolerance.value_or(estimator.kind == EstimatorKind::plugin ? ToleranceMode::exact
                                                                                        : ToleranceMode::statistical);
  return ToleranceConfig{mode, epsilon};
}

void AnalysisOptions::validate() const {
  tolerance_config().validate();
  if (estimator.runs < 2) throw ConfigError("analysis.runs must be at least 2");
  if (segment != "all" && segment != "q1" && segment != "q2" && segment != "q3" && segment != "q4") {
    throw ConfigError("analysis.segment must be all, q1, q2, q3 or q4 (got '" + segment + "')");
  }
  if (baseline_pi) pi.validate();
}

nlohmann::ordered_json AnalysisOptions::to_json() const {
  const ToleranceConfig tol = tolerance_config();
  nlohmann::ordered_json j;
  j["algorithm"] = to_string(algorithm);
  j["estimator"] = to_string(estimator.kind);
  j["runs"] = estimator.runs;
  j["seed"] = estimator.seed;
  if (estimator.kind == EstimatorKind::mine) {
    j["mine"] = {{"hidden", estimator.mine.hidden},
                 {"learning_rate", estimator.mine.learning_rate},
                 {"batch_size", estimator.mine.batch_size},
                 {"iterations", estimator.mine.iterations}};
  }
  j["tolerance"] = {{"mode", to_string(tol.mode)}, {"epsilon", tol.epsilon}};
  j["segment"] = segment;
  j["expert_threshold"] = expert_threshold ? nlohmann::ordered_json(*expert_threshold) : nlohmann::ordered_json();
  j["quartiles"] = quartiles;
  if (baseline_pi) {
    j["baseline"] = {{"method", "pi"},
                     {"runs", pi.runs},
                     {"repeats", pi.repeats},
                     {"alpha", pi.alpha},
                     {"scoring", to_string(pi.scoring)},
                     {"bootstrap", pi.bootstrap},
                     {"seed", pi.seed}};
  } else {
    j["baseline"] = nullptr;
  }
  return j;
}

AnalysisOptions parse_analysis_config(const IniFile& ini) {
  ConfigReader r(ini);
  AnalysisOptions o;
  const std::string s = "analysis";
  o.algorithm = algorithm_from_string(r.text(s, "algorithm", "alg1"));
  o.estimator.kind = estimator_from_string(r.text(s, "estimator", "plugin"));
  const std::string tol = r.text(s, "tolerance", "auto");
  if (tol != "auto") o.tolerance = tolerance_from_string(tol);
  o.epsilon = r.real(s, "epsilon", o.epsilon);
  o.estimator.runs = r.count(s, "runs", o.estimator.runs);
  o.estimator.seed = r.count(s, "seed", 0);
  o.estimator.threads = r.count(s, "threads", 1);
  o.segment = r.text(s, "segment", "all");
  if (ini.has(s, "expert_threshold")) o.expert_threshold = r.real(s, "expert_threshold", 0.0);
  o.quartiles = r.flag(s, "quartiles", false);
  const std::string baseline = r.text(s, "baseline", "none");
  if (baseline != "none" && baseline != "pi") throw ConfigError("analysis.baseline must be none or pi");
  o.baseline_pi = baseline == "pi";
  o.pi.runs = r.count(s, "pi_runs", o.pi.runs);
  o.pi.repeats = r.count(s, "pi_repeats", o.pi.repeats);
  o.pi.alpha = r.real(s, "pi_alpha", o.pi.alpha);
  o.pi.scoring = scoring_from_string(r.text(s, "pi_scoring", "auto"));
  o.pi.seed = o.estimator.seed;
  o.estimator.mine.hidden = r.count(s, "mine_hidden", o.estimator.mine.hidden);
  o.estimator.mine.learning_rate = r.real(s, "mine_learning_rate", o.estimator.mine.learning_rate);
  o.estimator.mine.batch_size = r.count(s, "mine_batch_size", o.estimator.mine.batch_size);
  o.estimator.mine.iterations = r.count(s, "mine_iterations", o.estimator.mine.iterations);
  r.reject_unknown({s});
  o.validate();
  return o;
}

// ---- analysis inputs ----------------------------------------------------------------

namespace {

std::string read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

AnalysisInput load_analysis_input(const std::filesystem::path& path) {
  const std::string bytes = read_bytes(path);
  AnalysisInput input;
  input.name = path.filename().string();
  if (path.extension() == ".csv") {
    std::istringstream in(bytes);
    input.table = SampleTable::read_csv(in);
    if (!input.table.has_action()) throw std::invalid_argument(path.string() + " has no `action` column");
    input.content_hash = hex64(fnv1a64(bytes));
    return input;
  }
  std::string hashed = bytes;
  std::istringstream in(bytes);
  const std::filesystem::path meta_path = metadata_path(path);
  TrajectoryBatch batch;
  if (std::filesystem::exists(meta_path)) {
    const std::string meta_bytes = read_bytes(meta_path);
    hashed += meta_bytes;
    const auto meta = nlohmann::ordered_json::parse(meta_bytes);
    batch = read_jsonl(in, &meta);
  } else {
    batch = read_jsonl(in);
  }
  input.table = to_sample_table(batch);
  input.batch = std::move(batch);
  input.content_hash = hex64(fnv1a64(hashed));
  return input;
}

AnalysisInput input_from_batch(TrajectoryBatch batch, std::string name) {
  std::ostringstream out;
  write_jsonl(batch, out);
  AnalysisInput input;
  input.content_hash = hex64(fnv1a64(out.str() + trajectory_metadata(batch).dump(2) + "\n"));
  input.table = to_sample_table(batch);
  input.batch = std::move(batch);
  input.name = std::move(name);
  return input;
}

AnalysisInput input_from_table(SampleTable table, std::string name) {
  std::ostringstream out;
  table.write_csv(out);
  AnalysisInput input;
  input.content_hash = hex64(fnv1a64(out.str()));
  input.table = std::move(table);
  input.name = std::move(name);
  return input;
}

// ---- analysis -----------------------------------------------------------------------

namespace {

using json = nlohmann::ordered_json;

json names_of(const SampleTable& table, const ColumnSet& cols) {
  json out = json::array();
  for (std::size_t c : cols) out.push_back(table.name(c));
  return out;
}

json null_json(const NullModel& null) {
  return {{"mean", null.mean}, {"std", null.stddev}, {"upper", null.upper}, {"runs", null.runs}};
}

json phi_json(const std::string& name, const PhiEstimate& phi) {
  return {{"variable", name},    {"phi_mean", phi.mean}, {"phi_std", phi.stddev},
          {"lower", phi.lower},  {"upper", phi.upper},   {"runs", phi.runs}};
}

json failed_json(const std::string& name, const std::string& error) {
  return {{"variable", name}, {"phi_mean", nullptr}, {"phi_std", nullptr}, {"lower", nullptr},
          {"upper", nullptr}, {"runs", json::array()}, {"error", error}};
}

// Four contiguous row blocks, the remainder in the last one.
std::vector<SampleTable> row_quarters(const SampleTable& table) {
  const std::size_t n = table.rows();
  if (n < 4) throw std::invalid_argument("quartile split needs at least 4 rows");
  std::vector<SampleTable> out;
  const std::size_t block = n / 4;
  for (std::size_t q = 0; q < 4; ++q) {
    const std::size_t begin = q * block;
    const std::size_t end = q == 3 ? n : begin + block;
    std::vector<std::size_t> rows(end - begin);
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = begin + i;
    out.push_back(table.take_rows(rows));
  }
  return out;
}

// MINE minibatches cannot exceed the number of rows; smaller inputs use
// every row per step.
EstimatorConfig fit_estimator(EstimatorConfig cfg, std::size_t rows, json& adjustments, const std::string& where) {
  if (cfg.kind == EstimatorKind::mine && cfg.mine.batch_size > rows) {
    adjustments.push_back({{"segment", where},
                           {"setting", "mine.batch_size"},
                           {"requested", cfg.mine.batch_size},
                           {"used", rows}});
    cfg.mine.batch_size = rows;
  }
  return cfg;
}

}  // namespace

AnalysisOutcome run_analysis(const AnalysisInput& input, const AnalysisOptions& options) {
  options.validate();
  const ToleranceConfig tol = options.tolerance_config();
  AnalysisOutcome outcome;
  json failures = json::array();
  json adjustments = json::array();

  // Rows to analyse.
  std::optional<TrajectoryBatch> batch = input.batch;
  if (options.expert_threshold) {
    if (!batch) throw ConfigError("expert filtering needs trajectory input");
    batch = expert_filter(*batch, *options.expert_threshold);
    if (batch->episodes.empty()) {
      throw std::invalid_argument("no episode reaches the expert threshold " +
                                  format_double(*options.expert_threshold));
    }
  }
  std::vector<SampleTable> quarters;
  if (options.quartiles || options.segment != "all") {
    quarters = batch ? quartile_tables(*batch) : row_quarters(input.table);
  }
  SampleTable table;
  if (options.segment != "all") {
    table = quarters.at(static_cast<std::size_t>(options.segment[1] - '1'));
  } else {
    table = batch ? to_sample_table(*batch) : input.table;
  }
  const ColumnSet vars = table.variable_indices();
  if (vars.empty()) throw std::invalid_argument("input has no state variables");

  const EstimatorConfig est = fit_estimator(options.estimator, table.rows(), adjustments, options.segment);
  PhiEngine engine(table, est);

  // Selection.
  std::optional<SelectionResult> selection;
  try {
    selection = run_selection(engine, options.algorithm, tol);
  } catch (const NumericalError& e) {
    failures.push_back({{"stage", "selection"}, {"message", e.what()}});
  }
  std::optional<NullModel> null;
  if (selection) {
    null = selection->null;
  } else {
    try {
      null = null_bound(engine);
    } catch (const NumericalError& e) {
      failures.push_back({{"stage", "null_model"}, {"message", e.what()}});
    }
  }

  // Final per-variable values, relative to the selected set: a selected
  // variable against the selection, any other variable against the
  // selection plus itself.
  const ColumnSet selected = selection ? selection->selected : ColumnSet{};
  json variables = json::array();
  json significant_names = json::array();
  for (std::size_t v : vars) {
    const bool is_selected = std::binary_search(selected.begin(), selected.end(), v);
    ColumnSet context = selected;
    if (!is_selected) {
      context.insert(std::upper_bound(context.begin(), context.end(), v), v);
    }
    json entry;
    bool significant = false;
    try {
      const PhiEstimate phi = engine.phi({v}, context);
      entry = phi_json(table.name(v), phi);
      significant = null && selection && tol.positive(phi, *null);
      entry["failed"] = false;
    } catch (const NumericalError& e) {
      entry = failed_json(table.name(v), e.what());
      entry["failed"] = true;
      failures.push_back({{"stage", "phi"}, {"variable", table.name(v)}, {"message", e.what()}});
    }
    entry["context"] = names_of(table, context);
    entry["selected"] = is_selected;
    entry["significant"] = significant;
    if (significant) significant_names.push_back(table.name(v));
    variables.push_back(std::move(entry));
  }

  // Per-quartile values against all variables.
  json quartile_json = json::array();
  if (options.quartiles) {
    for (std::size_t q = 0; q < 4; ++q) {
      const SampleTable& qt = quarters[q];
      const std::string label = "q" + std::to_string(q + 1);
      json entry;
      entry["quartile"] = q + 1;
      entry["rows"] = qt.rows();
      PhiEngine qe(qt, fit_estimator(options.estimator, qt.rows(), adjustments, label));
      std::optional<NullModel> qnull;
      try {
        qnull = null_bound(qe);
        entry["null_model"] = null_json(*qnull);
      } catch (const NumericalError& e) {
        entry["null_model"] = nullptr;
        failures.push_back({{"stage", "null_model"}, {"segment", label}, {"message", e.what()}});
      }
      const ColumnSet qvars = qt.variable_indices();
      json qv = json::array();
      for (std::size_t v : qvars) {
        json row;
        try {
          const PhiEstimate phi = qe.phi({v}, qvars);
          row = phi_json(qt.name(v), phi);
          row["failed"] = false;
          row["significant"] = qnull && tol.positive(phi, *qnull);
        } catch (const NumericalError& e) {
          row = failed_json(qt.name(v), e.what());
          row["failed"] = true;
          row["significant"] = false;
          failures.push_back({{"stage", "quartile"}, {"segment", label}, {"variable", qt.name(v)}, {"message", e.what()}});
        }
        qv.push_back(std::move(row));
      }
      entry["variables"] = std::move(qv);
      quartile_json.push_back(std::move(entry));
    }
  }

  json baselines = json::object();
  if (options.baseline_pi) baselines["pi"] = to_json(permutation_importance(table, options.pi));

  json provenance;
  provenance["tool"] = "terc";
  provenance["version"] = kTercVersion;
  provenance["config_hash"] = hex64(fnv1a64(options.to_json().dump()));
  provenance["config"] = options.to_json();
  json in;
  in["name"] = input.name;
  in["content_hash"] = input.content_hash;
  in["rows_total"] = input.table.rows();
  in["rows_analysed"] = table.rows();
  if (batch) {
    in["episodes"] = batch->episode_count();
    in["trajectory_seed"] = batch->seed;
    if (batch->notes.contains("config_hash")) in["trajectory_config_hash"] = batch->notes["config_hash"];
    in["env"] = batch->env;
    in["agent"] = batch->agent;
  }
  provenance["input"] = std::move(in);
  provenance["seeds"] = {{"estimator", options.estimator.seed},
                         {"baseline", options.baseline_pi ? json(options.pi.seed) : json()}};
  provenance["adjustments"] = std::move(adjustments);

  json& report = outcome.report;
  report["format"] = "terc-report";
  report["version"] = 1;
  report["provenance"] = std::move(provenance);
  report["units"] = "nats";
  report["variables"] = std::move(variables);
  report["null_model"] = null ? null_json(*null) : json();
  report["selected"] = names_of(table, selected);
  report["significant"] = std::move(significant_names);
  report["selection"] = selection ? to_json(*selection, table) : json();
  report["quartiles"] = std::move(quartile_json);
  report["baselines"] = std::move(baselines);
  outcome.failed = !failures.empty();
  report["failures"] = std::move(failures);
  return outcome;
}

void write_report_files(const nlohmann::ordered_json& report, const std::filesystem::path& json_path) {
  auto write = [](const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    out << text;
  };
  if (json_path.has_parent_path()) std::filesystem::create_directories(json_path.parent_path());
  std::filesystem::path stem = json_path;
  write(json_path, render_report(report, ReportFormat::json));
  write(stem.replace_extension(".csv"), render_report(report, ReportFormat::csv));
  write(stem.replace_extension(".dot"), render_report(report, ReportFormat::dot));
}

}  // namespace terc
