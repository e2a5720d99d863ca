#include "terc/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <unordered_map>

namespace terc {

namespace {

// Row labels 0..cells-1 of the joint value of several coded columns.
struct Partition {
  std::vector<std::uint32_t> codes;
  std::uint32_t cells = 1;
};

Partition combine(const std::vector<std::span<const std::uint32_t>>& columns, std::size_t rows) {
  Partition p;
  p.codes.assign(rows, 0);
  std::unordered_map<std::uint64_t, std::uint32_t> relabel;
  for (const auto& column : columns) {
    relabel.clear();
    std::uint32_t next = 0;
    for (std::size_t r = 0; r < rows; ++r) {
      const std::uint64_t key = (static_cast<std::uint64_t>(p.codes[r]) << 32) | column[r];
      auto [it, inserted] = relabel.try_emplace(key, next);
      if (inserted) {
        ++next;
      }
      p.codes[r] = it->second;
    }
    p.cells = next;
  }
  return p;
}

std::vector<std::size_t> cell_counts(const Partition& p) {
  std::vector<std::size_t> counts(p.cells, 0);
  for (std::uint32_t c : p.codes) {
    ++counts[c];
  }
  return counts;
}

// Counts are sorted before summation so that any two partitions with the same
// block sizes produce bit-identical entropies.
double entropy_of(const Partition& p) {
  if (p.codes.empty()) {
    return 0.0;
  }
  std::vector<std::size_t> counts = cell_counts(p);
  std::sort(counts.begin(), counts.end());
  const double n = static_cast<double>(p.codes.size());
  double acc = 0.0;
  for (std::size_t c : counts) {
    if (c > 0) {
      acc += static_cast<double>(c) * std::log(static_cast<double>(c));
    }
  }
  return std::max(0.0, std::log(n) - acc / n);
}

double mi_of(const Partition& x, const Partition& y) {
  const std::size_t rows = x.codes.size();
  const Partition xy = combine({x.codes, y.codes}, rows);
  const auto cx = cell_counts(x);
  const auto cy = cell_counts(y);
  std::vector<std::size_t> cxy(xy.cells, 0);
  std::vector<std::uint32_t> xof(xy.cells), yof(xy.cells);
  for (std::size_t r = 0; r < rows; ++r) {
    ++cxy[xy.codes[r]];
    xof[xy.codes[r]] = x.codes[r];
    yof[xy.codes[r]] = y.codes[r];
  }
  const double n = static_cast<double>(rows);
  double acc = 0.0;
  for (std::size_t k = 0; k < cxy.size(); ++k) {
    const double c = static_cast<double>(cxy[k]);
    acc += c / n * std::log(c * n / (static_cast<double>(cx[xof[k]]) * static_cast<double>(cy[yof[k]])));
  }
  return acc;
}

Partition partition_of(const SampleTable& table, std::span<const std::size_t> columns) {
  std::vector<std::span<const std::uint32_t>> spans;
  spans.reserve(columns.size());
  for (std::size_t c : columns) {
    spans.push_back(table.codes(c));
  }
  return combine(spans, table.rows());
}

std::vector<std::uint32_t> dense_codes(std::span<const std::int64_t> series) {
  std::unordered_map<std::int64_t, std::uint32_t> seen;
  std::vector<std::uint32_t> out(series.size());
  for (std::size_t i = 0; i < series.size(); ++i) {
    out[i] = seen.try_emplace(series[i], static_cast<std::uint32_t>(seen.size())).first->second;
  }
  return out;
}

struct LaggedSeries {
  Partition now, past_x, past_y;
};

LaggedSeries lagged(std::span<const std::int64_t> source, std::span<const std::int64_t> dest) {
  if (source.size() != dest.size()) {
    throw std::invalid_argument("transfer entropy needs aligned series");
  }
  if (dest.size() < 2) {
    throw std::invalid_argument("transfer entropy needs series of length >= 2");
  }
  const std::size_t n = dest.size() - 1;
  const auto x = dense_codes(dest);
  const auto y = dense_codes(source);
  LaggedSeries s;
  s.now = combine({std::span(x).subspan(1, n)}, n);
  s.past_x = combine({std::span(x).subspan(0, n)}, n);
  s.past_y = combine({std::span(y).subspan(0, n)}, n);
  return s;
}

}  // namespace

double plugin_entropy(const SampleTable& table, std::span<const std::size_t> columns) {
  if (columns.empty()) {
    return 0.0;
  }
  return entropy_of(partition_of(table, columns));
}

double plugin_cond_entropy(const SampleTable& table, std::span<const std::size_t> target,
                           std::span<const std::size_t> given) {
  ColumnSet both(target.begin(), target.end());
  both.insert(both.end(), given.begin(), given.end());
  return std::max(0.0, plugin_entropy(table, both) - plugin_entropy(table, given));
}

double plugin_mi(const SampleTable& table, std::span<const std::size_t> x,
                 std::span<const std::size_t> y) {
  if (x.empty() || y.empty()) {
    return 0.0;
  }
  return mi_of(partition_of(table, x), partition_of(table, y));
}

double plugin_transfer_entropy(std::span<const std::int64_t> source,
                               std::span<const std::int64_t> dest) {
  const LaggedSeries s = lagged(source, dest);
  const std::size_t n = s.now.codes.size();
  const double h_now_given_x = entropy_of(combine({s.now.codes, s.past_x.codes}, n)) - entropy_of(s.past_x);
  const double h_now_given_xy =
      entropy_of(combine({s.now.codes, s.past_x.codes, s.past_y.codes}, n)) -
      entropy_of(combine({s.past_x.codes, s.past_y.codes}, n));
  return h_now_given_x - h_now_given_xy;
}

double plugin_transfer_entropy_mi(std::span<const std::int64_t> source,
                                  std::span<const std::int64_t> dest) {
  const LaggedSeries s = lagged(source, dest);
  const std::size_t n = s.now.codes.size();
  const Partition past = combine({s.past_x.codes, s.past_y.codes}, n);
  return mi_of(s.now, past) - mi_of(s.now, s.past_x);
}

double conditional_redundancy(const SampleTable& table, std::span<const std::size_t> target,
                              std::span<const std::size_t> variables) {
  if (variables.size() < 2) {
    throw std::invalid_argument("conditional redundancy needs at least two variables");
  }
  double acc = 0.0;
  for (std::size_t v : variables) {
    acc += plugin_cond_entropy(table, target, std::span(&v, 1));
  }
  return acc - plugin_cond_entropy(table, target, variables);
}

double synergy(const SampleTable& table, std::span<const std::size_t> target,
               std::span<const std::size_t> variables) {
  if (variables.empty()) {
    throw std::invalid_argument("synergy needs at least one variable");
  }
  double acc = 0.0;
  for (std::size_t v : variables) {
    acc += plugin_mi(table, target, std::span(&v, 1));
  }
  return plugin_mi(table, target, variables) - acc;
}

void MineConfig::validate(std::size_t rows) const {
  if (hidden == 0 || batch_size == 0 || iterations == 0 || runs == 0) {
    throw ConfigError("neural estimator sizes must be positive");
  }
  if (!(learning_rate > 0.0)) {
    throw ConfigError("neural estimator learning rate must be positive");
  }
  if (batch_size > rows) {
    throw ConfigError("neural estimator batch size " + std::to_string(batch_size) +
                      " exceeds the " + std::to_string(rows) + " available rows");
  }
}

PhiEstimate PhiEstimate::from_runs(ColumnSet target, std::vector<double> runs) {
  if (runs.empty()) {
    throw std::invalid_argument("a Phi estimate needs at least one run");
  }
  PhiEstimate e;
  e.target = std::move(target);
  e.runs = std::move(runs);
  if (std::adjacent_find(e.runs.begin(), e.runs.end(), std::not_equal_to<>()) == e.runs.end()) {
    // Identical repetitions: keep the value exact instead of re-averaging it.
    e.mean = e.runs.front();
    e.stddev = 0.0;
  } else {
    e.mean = terc::mean(e.runs);
    e.stddev = sample_stddev(e.runs);
  }
  const double half = 2.0 * e.stddev / std::sqrt(static_cast<double>(e.runs.size()));
  e.lower = e.mean - half;
  e.upper = e.mean + half;
  return e;
}

std::string_view to_string(EstimatorKind kind) {
  return kind == EstimatorKind::plugin ? "plugin" : "mine";
}

EstimatorKind estimator_from_string(std::string_view name) {
  if (name == "plugin") return EstimatorKind::plugin;
  if (name == "mine") return EstimatorKind::mine;
  throw ConfigError("unknown estimator '" + std::string(name) + "' (expected plugin or mine)");
}

PhiEngine::PhiEngine(const SampleTable& table, EstimatorConfig config)
    : table_(table), config_(std::move(config)) {
  table_.action_index();
  if (config_.runs == 0) {
    throw ConfigError("runs must be positive");
  }
  if (config_.kind == EstimatorKind::plugin) {
    quantized_ = table_.quantized();
  } else {
    config_.mine.validate(table_.rows());
  }
  null_columns_.resize(config_.runs);
  for (std::size_t r = 0; r < config_.runs; ++r) {
    Rng rng(mix_seed(config_.seed ^ 0x6e756c6cULL, r));
    auto& col = null_columns_[r];
    col.resize(table_.rows());
    for (auto& v : col) {
      v = static_cast<std::int64_t>(rng.below(2));
    }
  }
}

double PhiEngine::estimate(const ColumnSet& context, std::size_t run) const {
  if (context.empty()) {
    return 0.0;
  }
  const std::size_t action = table_.action_index();
  if (config_.kind == EstimatorKind::plugin) {
    std::vector<std::uint32_t> null_codes;
    std::vector<std::span<const std::uint32_t>> spans;
    for (std::size_t c : context) {
      if (c == null_id()) {
        null_codes.assign(null_columns_[run].begin(), null_columns_[run].end());
        spans.push_back(null_codes);
      } else {
        spans.push_back(quantized_.codes(c));
      }
    }
    const std::size_t n = table_.rows();
    const Partition given = combine(spans, n);
    const Partition a = combine({quantized_.codes(action)}, n);
    const double h_a_given = entropy_of(combine({a.codes, given.codes}, n)) - entropy_of(given);
    return entropy_of(a) - h_a_given;
  }

  Matrix x(table_.rows(), context.size());
  Matrix y(table_.rows(), 1);
  for (std::size_t j = 0; j < context.size(); ++j) {
    const std::size_t c = context[j];
    for (std::size_t r = 0; r < table_.rows(); ++r) {
      x(r, j) = c == null_id() ? static_cast<double>(null_columns_[run][r])
                               : table_.column(c).numeric(r);
    }
  }
  for (std::size_t r = 0; r < table_.rows(); ++r) {
    y(r, 0) = table_.column(action).numeric(r);
  }
  MineConfig cfg = config_.mine;
  cfg.seed = mix_seed(config_.seed, run);
  return mine_mi(x, y, cfg);
}

const std::vector<double>& PhiEngine::information(const ColumnSet& context) {
  ColumnSet key = context;
  std::sort(key.begin(), key.end());
  if (std::adjacent_find(key.begin(), key.end()) != key.end()) {
    throw std::invalid_argument("context lists a column twice");
  }
  for (std::size_t c : key) {
    if (c != null_id() && (c >= table_.column_count() || c == table_.action_index())) {
      throw std::invalid_argument("context column " + std::to_string(c) + " is not a variable");
    }
  }
  if (auto it = cache_.find(key); it != cache_.end()) {
    return it->second;
  }
  const bool has_null = std::binary_search(key.begin(), key.end(), null_id());
  std::vector<double> values(config_.runs);
  if (config_.kind == EstimatorKind::plugin && !has_null) {
    std::fill(values.begin(), values.end(), estimate(key, 0));
  } else {
    parallel_for(config_.runs, config_.threads, [&](std::size_t r) { values[r] = estimate(key, r); });
  }
  return cache_.emplace(std::move(key), std::move(values)).first->second;
}

PhiEstimate PhiEngine::phi(const ColumnSet& subset, const ColumnSet& context) {
  if (subset.empty()) {
    throw std::invalid_argument("Phi needs a non-empty subset");
  }
  ColumnSet rest;
  for (std::size_t c : context) {
    if (std::find(subset.begin(), subset.end(), c) == subset.end()) {
      rest.push_back(c);
    }
  }
  for (std::size_t s : subset) {
    if (std::find(context.begin(), context.end(), s) == context.end()) {
      throw std::invalid_argument("Phi subset is not contained in its context");
    }
  }
  const std::vector<double> full = information(context);
  const std::vector<double>& reduced = information(rest);
  std::vector<double> runs(full.size());
  for (std::size_t r = 0; r < runs.size(); ++r) {
    runs[r] = full[r] - reduced[r];
  }
  ColumnSet target = subset;
  std::sort(target.begin(), target.end());
  return PhiEstimate::from_runs(std::move(target), std::move(runs));
}

double PhiEngine::conditional_entropy(const ColumnSet& context) const {
  for (std::size_t c : context) {
    if (c == null_id()) {
      throw std::invalid_argument("conditional_entropy does not accept the null column");
    }
  }
  const std::size_t a = table_.action_index();
  if (config_.kind == EstimatorKind::plugin) {
    return plugin_cond_entropy(quantized_, std::span(&a, 1), context);
  }
  return plugin_cond_entropy(table_.quantized(), std::span(&a, 1), context);
}

PhiEstimate phi_measure(const SampleTable& table, const ColumnSet& subset, const ColumnSet& context,
                        const EstimatorConfig& config) {
  PhiEngine engine(table, config);
  return engine.phi(subset, context);
}

}  // namespace terc
