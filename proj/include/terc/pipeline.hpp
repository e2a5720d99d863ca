#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "json.hpp"
#include "terc/baselines.hpp"
#include "terc/config.hpp"
#include "terc/rl.hpp"
#include "terc/selection.hpp"

namespace terc {

inline constexpr const char* kTercVersion = "0.1.0";

// ---- training ---------------------------------------------------------------

struct TrainOutcome {
  TrajectoryBatch batch;  // partial when training diverged
  nlohmann::ordered_json checkpoint;
  bool diverged = false;
  std::string error;
};

// Trains the configured agent. Divergence is reported in the outcome rather
// than thrown; configuration errors throw ConfigError.
TrainOutcome run_training(const RunConfig& config);

// Writes <dir>/trajectories.jsonl, its .meta.json sidecar (echoing the
// config and its hash) and <dir>/checkpoint.json (omitted after divergence).
void write_training_outputs(const TrainOutcome& outcome, const RunConfig& config, const std::filesystem::path& dir);

// ---- analysis -----------------------------------------------------------------

struct AnalysisOptions {
  Algorithm algorithm = Algorithm::alg1;
  EstimatorConfig estimator;
  // Defaults to exact for the plug-in estimator and statistical for MINE.
  std::optional<ToleranceMode> tolerance;
  double epsilon = 1e-9;
  // Rows analysed: "all" or one training quartile "q1".."q4".
  std::string segment = "all";
  // Keep only episodes whose cumulative reward reaches this value.
  std::optional<double> expert_threshold;
  bool quartiles = false;
  bool baseline_pi = false;
  PiConfig pi;

  ToleranceConfig tolerance_config() const;
  void validate() const;
  // Canonical settings; hashed into the report provenance.
  nlohmann::ordered_json to_json() const;
};

// [analysis] section: algorithm, estimator, tolerance, epsilon, runs, seed,
// segment, expert_threshold, quartiles, baseline, pi_runs, pi_repeats,
// pi_alpha, pi_scoring, mine_hidden, mine_learning_rate, mine_batch_size,
// mine_iterations, threads. Unknown keys are errors.
AnalysisOptions parse_analysis_config(const IniFile& ini);

struct AnalysisInput {
  SampleTable table;                     // every row
  std::optional<TrajectoryBatch> batch;  // when read from trajectories
  std::string name;                      // file name without directories
  std::string content_hash;              // FNV-1a of the input bytes
};

// Trajectory JSONL (with its sidecar when present) or CSV by extension.
AnalysisInput load_analysis_input(const std::filesystem::path& path);
AnalysisInput input_from_batch(TrajectoryBatch batch, std::string name);
AnalysisInput input_from_table(SampleTable table, std::string name);

struct AnalysisOutcome {
  nlohmann::ordered_json report;
  bool failed = false;  // some estimate or stage failed; see report.failures
};

AnalysisOutcome run_analysis(const AnalysisInput& input, const AnalysisOptions& options);

// Writes <stem>.json, <stem>.csv and <stem>.dot next to `json_path`.
void write_report_files(const nlohmann::ordered_json& report, const std::filesystem::path& json_path);

}  // namespace terc
