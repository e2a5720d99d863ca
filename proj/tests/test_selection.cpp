#include <bit>
#include <cmath>

#include "doctest.h"
#include "terc/envs.hpp"
#include "terc/selection.hpp"

using namespace terc;

namespace {

// Smallest subsets (by exhaustive search) whose conditional entropy of the
// action equals that of the full variable set.
std::vector<ColumnSet> minimal_sufficient_subsets(PhiEngine& engine) {
  const ColumnSet all = engine.table().variable_indices();
  const double target = engine.conditional_entropy(all);
  std::vector<ColumnSet> best;
  for (std::size_t mask = 0; mask < (std::size_t{1} << all.size()); ++mask) {
    ColumnSet s;
    for (std::size_t i = 0; i < all.size(); ++i) {
      if (mask >> i & 1) s.push_back(all[i]);
    }
    if (std::abs(engine.conditional_entropy(s) - target) > 1e-9) continue;
    if (best.empty() || s.size() < best.front().size()) {
      best = {s};
    } else if (s.size() == best.front().size()) {
      best.push_back(s);
    }
  }
  return best;
}

SampleTable xor_pair(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::int64_t> x1(n), x2(n), a(n);
  for (std::size_t i = 0; i < n; ++i) {
    x1[i] = static_cast<std::int64_t>(rng.below(2));
    x2[i] = static_cast<std::int64_t>(rng.below(2));
    a[i] = x1[i] ^ x2[i];
  }
  SampleTable t;
  t.add_discrete("X1", x1);
  t.add_discrete("X2", x2);
  t.add_discrete("action", a);
  t.set_action("action");
  return t;
}

SampleTable noise_table(std::size_t n, std::size_t vars, std::uint64_t seed) {
  Rng rng(seed);
  SampleTable t;
  std::vector<std::int64_t> a(n);
  for (auto& v : a) v = static_cast<std::int64_t>(rng.below(2));
  for (std::size_t k = 0; k < vars; ++k) {
    std::vector<std::int64_t> x(n);
    for (auto& v : x) v = static_cast<std::int64_t>(rng.below(2));
    t.add_discrete("X" + std::to_string(k + 1), x);
  }
  t.add_discrete("action", a);
  t.set_action("action");
  return t;
}

// Every combination of `vars` bits and an action bit, each row once. With
// `informative_first` the action copies X1 instead of being its own bit.
SampleTable product_table(std::size_t vars, bool informative_first) {
  SampleTable t;
  const std::size_t bits = vars + (informative_first ? 0 : 1);
  const std::size_t n = std::size_t{1} << bits;
  for (std::size_t k = 0; k < vars; ++k) {
    std::vector<std::int64_t> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = static_cast<std::int64_t>(i >> k & 1);
    t.add_discrete("X" + std::to_string(k + 1), x);
  }
  std::vector<std::int64_t> a(n);
  for (std::size_t i = 0; i < n; ++i) a[i] = static_cast<std::int64_t>(informative_first ? (i & 1) : (i >> vars & 1));
  t.add_discrete("action", a);
  t.set_action("action");
  return t;
}

ColumnSet ids(std::initializer_list<std::size_t> one_based) {
  ColumnSet out;
  for (std::size_t v : one_based) out.push_back(v - 1);
  return out;
}

}  // namespace

TEST_CASE("null model arithmetic") {
  SUBCASE("constant runs") {
    const NullModel m = NullModel::from_runs(std::vector<double>(10, 0.3));
    CHECK(m.upper == 0.3);
    CHECK(m.stddev == 0.0);
  }
  SUBCASE("ramp") {
    std::vector<double> runs;
    for (int i = 1; i <= 10; ++i) runs.push_back(0.01 * i);
    const NullModel m = NullModel::from_runs(runs);
    double ss = 0.0;
    for (double v : runs) ss += (v - 0.055) * (v - 0.055);
    CHECK(m.upper == doctest::Approx(0.055 + 2.0 * std::sqrt(ss / 9.0) / std::sqrt(10.0)).epsilon(1e-12));
  }
  SUBCASE("plug-in null on synthetic data is exactly zero") {
    const SampleTable t = gen_synthetic({SyntheticKind::four_redundant, 10000, 1});
    const NullModel m = null_bound(t, EstimatorConfig{});
    for (double v : m.runs) CHECK(v == 0.0);
    CHECK(m.upper == 0.0);
  }
  CHECK_THROWS_AS(NullModel::from_runs({0.1}), std::invalid_argument);
}

TEST_CASE("is_significant") {
  const NullModel null = NullModel::from_runs(std::vector<double>(10, 0.1));
  std::vector<double> runs;
  for (int i = 0; i < 10; ++i) runs.push_back(0.5 + (i % 2 ? 0.05 : -0.05));
  CHECK(is_significant(PhiEstimate::from_runs({0}, runs), null));

  std::vector<double> same(null.runs);
  CHECK_FALSE(is_significant(PhiEstimate::from_runs({0}, same), null));
  CHECK_FALSE(is_significant(PhiEstimate::from_runs({0}, std::vector<double>(10, 0.05)), null));
  CHECK_THROWS_AS(is_significant(PhiEstimate::from_runs({0}, {0.5, 0.5}), null), std::invalid_argument);
}

TEST_CASE("tolerance tests") {
  ToleranceConfig exact;
  const NullModel null = NullModel::from_runs({0.0, 0.0});
  CHECK(exact.positive(PhiEstimate::from_runs({0}, {1e-6, 1e-6}), null));
  CHECK_FALSE(exact.positive(PhiEstimate::from_runs({0}, {1e-10, 1e-10}), null));
  CHECK(exact.equal(PhiEstimate::from_runs({0}, {0.2}), PhiEstimate::from_runs({1}, {0.2 + 1e-10})));

  ToleranceConfig stat{ToleranceMode::statistical};
  const auto a = PhiEstimate::from_runs({0}, {0.50, 0.52, 0.48, 0.50});
  const auto b = PhiEstimate::from_runs({1}, {0.51, 0.53, 0.49, 0.51});
  const auto c = PhiEstimate::from_runs({2}, {0.90, 0.92, 0.88, 0.90});
  CHECK(stat.equal(a, b));
  CHECK_FALSE(stat.equal(a, c));
  const ToleranceConfig zero{ToleranceMode::exact, 0.0};
  CHECK_THROWS_AS(zero.validate(), ConfigError);
}

TEST_CASE("naive subset") {
  SUBCASE("two redundant triplets give the empty set") {
    const SampleTable t = gen_synthetic({SyntheticKind::two_triplets, 10000, 2});
    PhiEngine engine(t, EstimatorConfig{});
    const SelectionResult r = naive_subset(engine, ToleranceConfig{});
    CHECK(r.selected.empty());
    CHECK(r.estimates.size() == 6);
    // Lemma 1: the naive set under-informs when perfect redundancy is present.
    CHECK(engine.conditional_entropy(r.selected) > engine.conditional_entropy(t.variable_indices()));
  }
  SUBCASE("xor pair keeps both inputs") {
    const SampleTable t = xor_pair(4000, 3);
    PhiEngine engine(t, EstimatorConfig{});
    CHECK(naive_subset(engine, ToleranceConfig{}).selected == ids({1, 2}));
  }
  SUBCASE("all noise gives the empty set") {
    const SampleTable t = product_table(4, false);
    PhiEngine engine(t, EstimatorConfig{});
    CHECK(naive_subset(engine, ToleranceConfig{}).selected.empty());
  }
}

TEST_CASE("select_full") {
  SUBCASE("two redundant triplets give exactly one minimal triplet") {
    for (std::uint64_t seed : {1, 2, 3}) {
      const SampleTable t = gen_synthetic({SyntheticKind::two_triplets, 10000, seed});
      PhiEngine engine(t, EstimatorConfig{});
      const SelectionResult r = select_full(engine, ToleranceConfig{});
      CHECK(r.selected == ids({1, 2, 3}));
      const auto minimal = minimal_sufficient_subsets(engine);
      REQUIRE_FALSE(minimal.empty());
      CHECK(minimal.front().size() == r.selected.size());
      CHECK(std::find(minimal.begin(), minimal.end(), r.selected) != minimal.end());
      // X1..X3 versus their copies: eight equally small triplets exist.
      CHECK(minimal.size() == 8);
    }
  }
  SUBCASE("four redundant variables") {
    const SampleTable t = gen_synthetic({SyntheticKind::four_redundant, 10000, 5});
    PhiEngine engine(t, EstimatorConfig{});
    const SelectionResult r = select_full(engine, ToleranceConfig{});
    CHECK(r.selected == ids({1, 2, 3}));
    CHECK(engine.conditional_entropy(r.selected) == engine.conditional_entropy(t.variable_indices()));
  }
  SUBCASE("all noise") {
    const SampleTable t = product_table(4, false);
    PhiEngine engine(t, EstimatorConfig{});
    CHECK(select_full(engine, ToleranceConfig{}).selected.empty());
  }
  SUBCASE("guard on the power set size") {
    const SampleTable t = noise_table(50, 21, 7);
    PhiEngine engine(t, EstimatorConfig{});
    ToleranceConfig huge{ToleranceMode::exact, 1e9};
    CHECK_THROWS_WITH_AS(select_full(engine, huge), doctest::Contains("alg2"), std::invalid_argument);
  }
}

TEST_CASE("select_fast") {
  SUBCASE("four redundant variables in index order") {
    const SampleTable t = gen_synthetic({SyntheticKind::four_redundant, 10000, 8});
    PhiEngine engine(t, EstimatorConfig{});
    const SelectionResult r = select_fast(engine, ToleranceConfig{});
    CHECK(r.selected == ids({2, 3, 6}));
    REQUIRE(r.audit.size() == 6);
    CHECK(r.audit[0].step == "remove");
    CHECK(r.audit[1].step == "keep");
    CHECK(r.audit[2].step == "keep");
    CHECK(r.audit[3].step == "remove");
    CHECK(r.audit[4].step == "remove");
    CHECK(r.audit[5].step == "keep");
  }
  SUBCASE("xor pair") {
    const SampleTable t = xor_pair(4000, 9);
    PhiEngine engine(t, EstimatorConfig{});
    CHECK(select_fast(engine, ToleranceConfig{}).selected == ids({1, 2}));
  }
  SUBCASE("single informative variable among noise") {
    const SampleTable t = product_table(5, true);
    PhiEngine engine(t, EstimatorConfig{});
    CHECK(select_fast(engine, ToleranceConfig{}).selected == ids({1}));
  }
}

TEST_CASE("property: both algorithms preserve the conditional entropy on the synthetic datasets") {
  for (SyntheticKind kind : {SyntheticKind::four_redundant, SyntheticKind::two_triplets}) {
    for (std::uint64_t seed = 20; seed < 25; ++seed) {
      const SampleTable t = gen_synthetic({kind, 5000, seed});
      PhiEngine engine(t, EstimatorConfig{});
      const double full = engine.conditional_entropy(t.variable_indices());
      const SelectionResult fast = select_fast(engine, ToleranceConfig{});
      const SelectionResult slow = select_full(engine, ToleranceConfig{});
      CHECK(std::abs(engine.conditional_entropy(fast.selected) - full) <= 1e-9);
      CHECK(std::abs(engine.conditional_entropy(slow.selected) - full) <= 1e-9);
      CHECK(fast.selected.size() == 3);
      CHECK(slow.selected.size() == 3);
      CHECK(minimal_sufficient_subsets(engine).front().size() == slow.selected.size());
    }
  }
}

TEST_CASE("property: select_fast keeps the entropy on random copy-structured tables") {
  // Each table draws a few base bits, an action that depends on a random
  // subset of them, and exposes every base bit one or more times. Copies only
  // create redundancy between single variables, so the equal-cardinality
  // condition holds.
  Rng rng(31);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 2000;
    const std::size_t bases = 2 + rng.below(3);
    std::vector<std::vector<std::int64_t>> base(bases, std::vector<std::int64_t>(n));
    for (auto& b : base)
      for (auto& v : b) v = static_cast<std::int64_t>(rng.below(2));
    std::vector<std::int64_t> a(n, 0);
    const std::uint64_t used = 1 + rng.below((1u << bases) - 1);
    for (std::size_t i = 0; i < n; ++i) {
      std::int64_t acc = 0;
      for (std::size_t k = 0; k < bases; ++k) {
        if (used >> k & 1) acc += base[k][i];
      }
      a[i] = acc % 2 == 0 ? 1 : 0;
    }
    SampleTable t;
    std::size_t col = 0;
    for (std::size_t k = 0; k < bases; ++k) {
      const std::size_t copies = 1 + rng.below(3);
      for (std::size_t c = 0; c < copies; ++c) t.add_discrete("X" + std::to_string(++col), base[k]);
    }
    t.add_discrete("action", a);
    t.set_action("action");
    PhiEngine engine(t, EstimatorConfig{});
    const double full = engine.conditional_entropy(t.variable_indices());
    const SelectionResult fast = select_fast(engine, ToleranceConfig{});
    CHECK(std::abs(engine.conditional_entropy(fast.selected) - full) <= 1e-9);
    CHECK(fast.selected.size() == static_cast<std::size_t>(std::popcount(used)));
  }
}

TEST_CASE("audit log replays identically") {
  const SampleTable t = gen_synthetic({SyntheticKind::two_triplets, 3000, 12});
  EstimatorConfig cfg;
  cfg.seed = 77;
  PhiEngine e1(t, cfg);
  PhiEngine e2(t, cfg);
  const SelectionResult a = select_full(e1, ToleranceConfig{});
  const SelectionResult b = select_full(e2, ToleranceConfig{});
  CHECK(to_json(a, t).dump() == to_json(b, t).dump());
}

TEST_CASE("dot rendering") {
  const SampleTable t = gen_synthetic({SyntheticKind::four_redundant, 2000, 13});
  PhiEngine engine(t, EstimatorConfig{});
  const SelectionResult r = select_fast(engine, ToleranceConfig{});
  const std::string dot = to_dot(r, t);
  CHECK(dot.find("\"X2\" -> \"action\"") != std::string::npos);
  CHECK(std::count(dot.begin(), dot.end(), '>') == 3);
}
