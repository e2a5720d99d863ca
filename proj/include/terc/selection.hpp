#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "terc/estimators.hpp"

namespace terc {

struct NullModel {
  std::vector<double> runs;
  double mean = 0.0;
  double stddev = 0.0;
  double upper = 0.0;  // mean + 2 stddev / sqrt(runs)

  // Needs at least two runs.
  static NullModel from_runs(std::vector<double> runs);
};

// Phi of the engine's injected uniform {0, 1} column, measured against all
// table variables plus itself.
NullModel null_bound(PhiEngine& engine);
NullModel null_bound(const SampleTable& table, const EstimatorConfig& config);

// Lower bound of phi strictly above the null model's upper bound.
// Throws std::invalid_argument when the run counts differ.
bool is_significant(const PhiEstimate& phi, const NullModel& null);

enum class ToleranceMode { exact, statistical };
std::string_view to_string(ToleranceMode mode);
ToleranceMode tolerance_from_string(std::string_view name);

// exact: Phi > 0 means mean > epsilon and equality means |a - b| <= epsilon.
// statistical: Phi > 0 means is_significant against the null model and
// equality means the two 95% intervals (widened by epsilon) overlap.
struct ToleranceConfig {
  ToleranceMode mode = ToleranceMode::exact;
  double epsilon = 1e-9;

  void validate() const;
  bool positive(const PhiEstimate& phi, const NullModel& null) const;
  bool equal(const PhiEstimate& a, const PhiEstimate& b) const;
};

enum class Algorithm { naive, alg1, alg2 };
std::string_view to_string(Algorithm algorithm);
Algorithm algorithm_from_string(std::string_view name);

struct Decision {
  std::string step;  // "naive", "subset", "family", "union", "keep", "remove"
  ColumnSet subset;
  ColumnSet context;
  PhiEstimate phi;
  bool accepted = false;
};

struct SelectionResult {
  Algorithm algorithm = Algorithm::naive;
  ColumnSet variables;  // candidate variables, in table order
  ColumnSet selected;   // sorted
  // Per candidate variable: Phi at the point the algorithm judged it
  // (naive and alg1: against all variables; alg2: against the surviving set).
  std::vector<PhiEstimate> estimates;
  NullModel null;
  std::vector<Decision> audit;
};

// Refuses power sets of more than this many excluded variables.
inline constexpr std::size_t kMaxExcludedForFullSearch = 20;

SelectionResult naive_subset(PhiEngine& engine, const ToleranceConfig& tol);
SelectionResult select_full(PhiEngine& engine, const ToleranceConfig& tol);
SelectionResult select_fast(PhiEngine& engine, const ToleranceConfig& tol);
SelectionResult run_selection(PhiEngine& engine, Algorithm algorithm, const ToleranceConfig& tol);

nlohmann::ordered_json to_json(const SelectionResult& result, const SampleTable& table);
// digraph with an edge from every selected variable to the action.
std::string to_dot(const SelectionResult& result, const SampleTable& table);

}  // namespace terc
