#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string_view>
#include <vector>

#include "terc/common.hpp"
#include "terc/sample_table.hpp"

// Information measures in nats. Plug-in estimators work on discrete columns
// of a SampleTable and are exact for the empirical distribution; the neural
// estimator trains a small network on the Donsker-Varadhan bound.
namespace terc {

using ColumnSet = std::vector<std::size_t>;

// Joint entropy of the listed columns. An empty list has entropy 0.
double plugin_entropy(const SampleTable& table, std::span<const std::size_t> columns);
// H(target | given) = H(target, given) - H(given).
double plugin_cond_entropy(const SampleTable& table, std::span<const std::size_t> target,
                           std::span<const std::size_t> given);
// Direct sum of p(x,y) log(p(x,y) / (p(x) p(y))) over observed cells.
double plugin_mi(const SampleTable& table, std::span<const std::size_t> x,
                 std::span<const std::size_t> y);

// Transfer entropy from source Y to destination X with lag one, as the
// difference of conditional entropies H(X_t | X_{t-1}) - H(X_t | X_{t-1}, Y_{t-1}).
double plugin_transfer_entropy(std::span<const std::int64_t> source,
                               std::span<const std::int64_t> dest);
// The same quantity as I(X_t; X_{t-1}, Y_{t-1}) - I(X_t; X_{t-1}).
double plugin_transfer_entropy_mi(std::span<const std::int64_t> source,
                                  std::span<const std::int64_t> dest);

// sum_i H(Z | X_i) - H(Z | X_1..X_N); needs at least two variables.
double conditional_redundancy(const SampleTable& table, std::span<const std::size_t> target,
                              std::span<const std::size_t> variables);
// I(Z; X_1..X_N) - sum_i I(Z; X_i); needs at least one variable.
double synergy(const SampleTable& table, std::span<const std::size_t> target,
               std::span<const std::size_t> variables);

struct MineConfig {
  std::size_t hidden = 50;
  double learning_rate = 0.01;
  std::size_t batch_size = 500;
  std::size_t iterations = 1000;
  std::uint64_t seed = 0;
  std::size_t runs = 10;

  // Throws ConfigError on non-positive fields or batch_size > rows.
  void validate(std::size_t rows) const;
};

// Neural MI estimate between the row-aligned blocks x and y. Columns are
// standardized, the critic is trained with Adam on minibatches whose
// marginal half pairs each x row with a y row from a within-batch random
// permutation, and the returned value is the bound evaluated on all rows with
// the trained critic. Throws NumericalError (with the iteration) on divergence.
double mine_mi(const Matrix& x, const Matrix& y, const MineConfig& config);

struct PhiEstimate {
  ColumnSet target;
  std::vector<double> runs;
  double mean = 0.0;
  double stddev = 0.0;
  double lower = 0.0;  // mean - 2 stddev / sqrt(runs)
  double upper = 0.0;  // mean + 2 stddev / sqrt(runs)

  static PhiEstimate from_runs(ColumnSet target, std::vector<double> runs);
};

enum class EstimatorKind { plugin, mine };
std::string_view to_string(EstimatorKind kind);
EstimatorKind estimator_from_string(std::string_view name);

struct EstimatorConfig {
  EstimatorKind kind = EstimatorKind::plugin;
  MineConfig mine;
  std::size_t runs = 10;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

// Evaluates I(C; A) and the measure Phi(S; C -> A) = I(C; A) - I(C \ S; A) on
// one table, caching mutual information per column set. Each repetition r
// uses its own seed stream, shared by every column set (common random numbers).
//
// The engine also provides an injected null column: a fresh uniform {0, 1}
// column per repetition, addressed by the id null_id().
//
// In plug-in mode every repetition of a column set without the null column
// returns the same exact value.
class PhiEngine {
 public:
  PhiEngine(const SampleTable& table, EstimatorConfig config);

  const SampleTable& table() const { return table_; }
  const EstimatorConfig& config() const { return config_; }
  std::size_t null_id() const { return table_.column_count(); }
  std::size_t runs() const { return config_.runs; }

  // Per-repetition I(C; A). Columns must be variables of the table or null_id().
  const std::vector<double>& information(const ColumnSet& context);
  // Phi of `subset` relative to `context`; subset must be a non-empty subset of context.
  PhiEstimate phi(const ColumnSet& subset, const ColumnSet& context);
  // Exact plug-in H(A | C) (null column not allowed).
  double conditional_entropy(const ColumnSet& context) const;

  std::size_t cache_size() const { return cache_.size(); }

 private:
  double estimate(const ColumnSet& context, std::size_t run) const;

  const SampleTable& table_;
  SampleTable quantized_;
  EstimatorConfig config_;
  std::vector<std::vector<std::int64_t>> null_columns_;
  std::map<ColumnSet, std::vector<double>> cache_;
};

// Convenience wrapper: Phi of subset S within context C for the table's action.
PhiEstimate phi_measure(const SampleTable& table, const ColumnSet& subset,
                        const ColumnSet& context, const EstimatorConfig& config);

}  // namespace terc
