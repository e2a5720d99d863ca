#include "terc/selection.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace terc {

NullModel NullModel::from_runs(std::vector<double> runs) {
  if (runs.size() < 2) {
    throw std::invalid_argument("a null model needs at least two runs");
  }
  const PhiEstimate e = PhiEstimate::from_runs({}, runs);
  NullModel m;
  m.runs = std::move(runs);
  m.mean = e.mean;
  m.stddev = e.stddev;
  m.upper = e.upper;
  return m;
}

NullModel null_bound(PhiEngine& engine) {
  ColumnSet context = engine.table().variable_indices();
  context.push_back(engine.null_id());
  return NullModel::from_runs(engine.phi({engine.null_id()}, context).runs);
}

NullModel null_bound(const SampleTable& table, const EstimatorConfig& config) {
  PhiEngine engine(table, config);
  return null_bound(engine);
}

bool is_significant(const PhiEstimate& phi, const NullModel& null) {
  if (phi.runs.size() != null.runs.size()) {
    throw std::invalid_argument("significance test needs equal run counts (" +
                                std::to_string(phi.runs.size()) + " vs " +
                                std::to_string(null.runs.size()) + ")");
  }
  return phi.lower > null.upper;
}

std::string_view to_string(ToleranceMode mode) {
  return mode == ToleranceMode::exact ? "exact" : "statistical";
}

ToleranceMode tolerance_from_string(std::string_view name) {
  if (name == "exact") return ToleranceMode::exact;
  if (name == "statistical") return ToleranceMode::statistical;
  throw ConfigError("unknown tolerance mode '" + std::string(name) + "' (expected exact or statistical)");
}

void ToleranceConfig::validate() const {
  if (!(epsilon > 0.0)) {
    throw ConfigError("tolerance epsilon must be positive");
  }
}

bool ToleranceConfig::positive(const PhiEstimate& phi, const NullModel& null) const {
  if (mode == ToleranceMode::exact) {
    return phi.mean > epsilon;
  }
  return is_significant(phi, null);
}

bool ToleranceConfig::equal(const PhiEstimate& a, const PhiEstimate& b) const {
  if (mode == ToleranceMode::exact) {
    return std::abs(a.mean - b.mean) <= epsilon;
  }
  return a.lower - epsilon <= b.upper + epsilon && b.lower - epsilon <= a.upper + epsilon;
}

std::string_view to_string(Algorithm algorithm) {
  switch (algorithm) {
    case Algorithm::naive: return "naive";
    case Algorithm::alg1: return "alg1";
    case Algorithm::alg2: return "alg2";
  }
  return "naive";
}

Algorithm algorithm_from_string(std::string_view name) {
  if (name == "naive") return Algorithm::naive;
  if (name == "alg1") return Algorithm::alg1;
  if (name == "alg2") return Algorithm::alg2;
  throw ConfigError("unknown algorithm '" + std::string(name) + "' (expected naive, alg1 or alg2)");
}

namespace {

ColumnSet set_union(const ColumnSet& a, const ColumnSet& b) {
  ColumnSet out;
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

// Non-empty subsets of `items` (sorted) by ascending size, then lexicographically.
std::vector<ColumnSet> ordered_power_set(const ColumnSet& items) {
  std::vector<ColumnSet> out;
  const std::size_t m = items.size();
  for (std::size_t size = 1; size <= m; ++size) {
    std::vector<std::size_t> pick(size);
    for (std::size_t i = 0; i < size; ++i) pick[i] = i;
    while (true) {
      ColumnSet s;
      for (std::size_t i : pick) s.push_back(items[i]);
      out.push_back(std::move(s));
      std::size_t i = size;
      while (i > 0 && pick[i - 1] == m - size + (i - 1)) --i;
      if (i == 0) break;
      ++pick[i - 1];
      for (std::size_t j = i; j < size; ++j) pick[j] = pick[j - 1] + 1;
    }
  }
  return out;
}

SelectionResult start(PhiEngine& engine, Algorithm algorithm) {
  SelectionResult r;
  r.algorithm = algorithm;
  r.variables = engine.table().variable_indices();
  if (r.variables.empty()) {
    throw std::invalid_argument("selection needs at least one variable column");
  }
  r.null = null_bound(engine);
  return r;
}

// Phi of every variable against the full set, recorded as naive decisions.
ColumnSet naive_pass(PhiEngine& engine, const ToleranceConfig& tol, SelectionResult& r) {
  ColumnSet chosen;
  for (std::size_t v : r.variables) {
    PhiEstimate phi = engine.phi({v}, r.variables);
    const bool keep = tol.positive(phi, r.null);
    if (keep) chosen.push_back(v);
    r.audit.push_back({"naive", {v}, r.variables, phi, keep});
    r.estimates.push_back(std::move(phi));
  }
  return chosen;
}

}  // namespace

SelectionResult naive_subset(PhiEngine& engine, const ToleranceConfig& tol) {
  tol.validate();
  SelectionResult r = start(engine, Algorithm::naive);
  r.selected = naive_pass(engine, tol, r);
  return r;
}

SelectionResult select_full(PhiEngine& engine, const ToleranceConfig& tol) {
  tol.validate();
  SelectionResult r = start(engine, Algorithm::alg1);
  ColumnSet chosen = naive_pass(engine, tol, r);

  {
    ColumnSet excluded;
    std::set_difference(r.variables.begin(), r.variables.end(), chosen.begin(), chosen.end(),
                        std::back_inserter(excluded));
    if (excluded.size() > kMaxExcludedForFullSearch) {
      throw std::invalid_argument(
          std::to_string(excluded.size()) + " variables remain after the naive pass; the full search is limited to " +
          std::to_string(kMaxExcludedForFullSearch) + " (use alg2 instead)");
    }
  }

  // After every union the power set of the remaining variables is rebuilt and
  // scanned from the start, since earlier subsets are now judged against a
  // larger base set.
  bool changed = true;
  while (changed) {
    changed = false;
    ColumnSet remaining;
    std::set_difference(r.variables.begin(), r.variables.end(), chosen.begin(), chosen.end(),
                        std::back_inserter(remaining));
    const std::vector<ColumnSet> subsets = ordered_power_set(remaining);
    for (std::size_t k = 0; k < subsets.size() && !changed; ++k) {
      const ColumnSet& pk = subsets[k];
      const ColumnSet ctx_k = set_union(chosen, pk);
      const PhiEstimate phi_k = engine.phi(pk, ctx_k);
      const bool informative = tol.positive(phi_k, r.null);
      r.audit.push_back({"subset", pk, ctx_k, phi_k, informative});
      if (!informative) continue;

      std::vector<ColumnSet> family{pk};
      for (std::size_t l = k + 1; l < subsets.size(); ++l) {
        const ColumnSet& pl = subsets[l];
        const PhiEstimate phi_l = engine.phi(pl, set_union(chosen, pl));
        if (!tol.equal(phi_k, phi_l)) continue;
        const ColumnSet both = set_union(pk, pl);
        const PhiEstimate phi_both = engine.phi(both, set_union(chosen, both));
        const bool same = tol.equal(phi_k, phi_both) && tol.equal(phi_l, phi_both);
        if (same) {
          family.push_back(pl);
          r.audit.push_back({"family", pl, set_union(chosen, pl), phi_l, true});
        }
      }
      const ColumnSet best = *std::min_element(family.begin(), family.end(), [](const ColumnSet& a, const ColumnSet& b) {
        return a.size() != b.size() ? a.size() < b.size() : a < b;
      });
      chosen = set_union(chosen, best);
      r.audit.push_back({"union", best, chosen, phi_k, true});
      changed = true;
    }
  }
  r.selected = chosen;
  return r;
}

SelectionResult select_fast(PhiEngine& engine, const ToleranceConfig& tol) {
  tol.validate();
  SelectionResult r = start(engine, Algorithm::alg2);
  ColumnSet context = r.variables;
  for (std::size_t v : r.variables) {
    PhiEstimate phi = engine.phi({v}, context);
    const bool keep = tol.positive(phi, r.null);
    r.audit.push_back({keep ? "keep" : "remove", {v}, context, phi, keep});
    if (keep) {
      r.selected.push_back(v);
    } else {
      context.erase(std::find(context.begin(), context.end(), v));
    }
    r.estimates.push_back(std::move(phi));
  }
  return r;
}

SelectionResult run_selection(PhiEngine& engine, Algorithm algorithm, const ToleranceConfig& tol) {
  switch (algorithm) {
    case Algorithm::naive: return naive_subset(engine, tol);
    case Algorithm::alg1: return select_full(engine, tol);
    case Algorithm::alg2: return select_fast(engine, tol);
  }
  throw std::invalid_argument("unknown algorithm");
}

namespace {

std::string column_name(const SampleTable& table, std::size_t id) {
  return id == table.column_count() ? "NM" : table.name(id);
}

nlohmann::ordered_json names(const SampleTable& table, const ColumnSet& ids) {
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  for (std::size_t id : ids) out.push_back(column_name(table, id));
  return out;
}

}  // namespace

nlohmann::ordered_json to_json(const SelectionResult& result, const SampleTable& table) {
  nlohmann::ordered_json j;
  j["algorithm"] = to_string(result.algorithm);
  j["variables"] = names(table, result.variables);
  j["selected"] = names(table, result.selected);
  j["null_model"] = {{"runs", result.null.runs},
                     {"mean", result.null.mean},
                     {"stddev", result.null.stddev},
                     {"upper", result.null.upper}};
  nlohmann::ordered_json estimates = nlohmann::ordered_json::array();
  for (const PhiEstimate& e : result.estimates) {
    estimates.push_back({{"variable", names(table, e.target)},
                         {"runs", e.runs},
                         {"mean", e.mean},
                         {"stddev", e.stddev},
                         {"lower", e.lower},
                         {"upper", e.upper}});
  }
  j["estimates"] = std::move(estimates);
  nlohmann::ordered_json audit = nlohmann::ordered_json::array();
  for (const Decision& d : result.audit) {
    audit.push_back({{"step", d.step},
                     {"subset", names(table, d.subset)},
                     {"context", names(table, d.context)},
                     {"phi_mean", d.phi.mean},
                     {"accepted", d.accepted}});
  }
  j["decisions"] = std::move(audit);
  return j;
}

std::string to_dot(const SelectionResult& result, const SampleTable& table) {
  std::ostringstream out;
  const std::string action = table.has_action() ? table.name(table.action_index()) : "action";
  out << "digraph terc {\n";
  for (std::size_t v : result.selected) {
    out << "  \"" << column_name(table, v) << "\" -> \"" << action << "\";\n";
  }
  out << "}\n";
  return out.str();
}

}  // namespace terc
