#include <cmath>

#include "doctest.h"
#include "terc/baselines.hpp"
#include "terc/envs.hpp"

using namespace terc;

namespace {

// Solves (X'X + lambda I) w = X'y on centred data by Gaussian elimination
// with partial pivoting.
std::vector<double> ridge_oracle(const std::vector<std::vector<double>>& x, const std::vector<double>& y,
                                 double lambda, double& intercept) {
  const std::size_t n = x.size(), p = x[0].size();
  std::vector<double> mx(p, 0.0);
  double my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < p; ++j) mx[j] += x[i][j] / static_cast<double>(n);
    my += y[i] / static_cast<double>(n);
  }
  std::vector<std::vector<double>> a(p, std::vector<double>(p + 1, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      for (std::size_t k = 0; k < p; ++k) a[j][k] += (x[i][j] - mx[j]) * (x[i][k] - mx[k]);
      a[j][p] += (x[i][j] - mx[j]) * (y[i] - my);
    }
  }
  for (std::size_t j = 0; j < p; ++j) a[j][j] += lambda;
  for (std::size_t c = 0; c < p; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < p; ++r) {
      if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
    }
    std::swap(a[c], a[piv]);
    for (std::size_t r = 0; r < p; ++r) {
      if (r == c) continue;
      const double f = a[r][c] / a[c][c];
      for (std::size_t k = c; k <= p; ++k) a[r][k] -= f * a[c][k];
    }
  }
  std::vector<double> w(p);
  intercept = my;
  for (std::size_t j = 0; j < p; ++j) {
    w[j] = a[j][p] / a[j][j];
    intercept -= w[j] * mx[j];
  }
  return w;
}

Matrix to_matrix(const std::vector<std::vector<double>>& rows) {
  Matrix m(rows.size(), rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
  }
  return m;
}

SampleTable real_table(const std::vector<std::vector<double>>& cols, const std::vector<double>& y) {
  SampleTable t;
  for (std::size_t j = 0; j < cols.size(); ++j) t.add_real("X" + std::to_string(j + 1), cols[j]);
  t.add_real("action", y);
  t.set_action("action");
  return t;
}

double variance(const std::vector<double>& v) {
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size());
}

}  // namespace

TEST_CASE("ridge without penalty recovers an exact linear map") {
  std::vector<std::vector<double>> x;
  std::vector<double> y;
  for (int i = 0; i < 20; ++i) {
    x.push_back({static_cast<double>(i)});
    y.push_back(2.0 * i);
  }
  const RidgeModel m = ridge_fit(to_matrix(x), y, 0.0);
  CHECK(m.coefficients[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(std::abs(m.intercept) < 1e-10);
  const double row[1] = {7.5};
  CHECK(m.predict(row) == doctest::Approx(15.0));
}

TEST_CASE("ridge matches an elimination oracle") {
  Rng rng(3);
  std::vector<std::vector<double>> x(200, std::vector<double>(4));
  std::vector<double> y(200);
  for (std::size_t i = 0; i < 200; ++i) {
    for (double& v : x[i]) v = rng.normal();
    y[i] = 1.0 + 0.5 * x[i][0] - 2.0 * x[i][2] + 0.1 * rng.normal();
  }
  for (double lambda : {0.0, 0.01, 1.0, 50.0}) {
    double b = 0.0;
    const std::vector<double> w = ridge_oracle(x, y, lambda, b);
    const RidgeModel m = ridge_fit(to_matrix(x), y, lambda);
    for (std::size_t j = 0; j < 4; ++j) CHECK(std::abs(m.coefficients[j] - w[j]) < 1e-8);
    CHECK(std::abs(m.intercept - b) < 1e-8);
  }
}

TEST_CASE("a large penalty shrinks coefficients towards zero") {
  std::vector<std::vector<double>> x;
  std::vector<double> y;
  for (int i = 0; i < 50; ++i) {
    x.push_back({static_cast<double>(i % 7), static_cast<double>(i % 3)});
    y.push_back(3.0 * (i % 7) - (i % 3));
  }
  const RidgeModel small = ridge_fit(to_matrix(x), y, 0.01);
  const RidgeModel big = ridge_fit(to_matrix(x), y, 1e9);
  CHECK(std::abs(big.coefficients[0]) < 1e-5);
  CHECK(std::abs(big.coefficients[1]) < 1e-5);
  CHECK(std::abs(small.coefficients[0]) > 2.9);
  CHECK(big.intercept == doctest::Approx(mean(y)).epsilon(1e-6));
}

TEST_CASE("a singular unpenalised system is rejected") {
  std::vector<std::vector<double>> x;
  std::vector<double> y;
  for (int i = 0; i < 10; ++i) {
    x.push_back({static_cast<double>(i), static_cast<double>(2 * i)});
    y.push_back(i);
  }
  CHECK_THROWS_AS(ridge_fit(to_matrix(x), y, 0.0), std::invalid_argument);
  CHECK_NOTHROW(ridge_fit(to_matrix(x), y, 0.01));
  CHECK_THROWS_AS(ridge_fit(to_matrix(x), y, -1.0), std::invalid_argument);
}

TEST_CASE("scores") {
  const std::vector<double> target{0, 1, 1, 0};
  const std::vector<double> pred{0.2, 0.6, 0.4, 0.5};
  const std::vector<double> labels{0, 1};
  // 0.5 is equidistant and resolves to the smaller label.
  CHECK(pi_score(PiScoring::accuracy, pred, target, labels) == doctest::Approx(0.75));
  CHECK(pi_score(PiScoring::neg_mse, pred, target, labels) ==
        doctest::Approx(-(0.04 + 0.16 + 0.36 + 0.25) / 4.0));
  CHECK(scoring_from_string("accuracy") == PiScoring::accuracy);
  CHECK(to_string(PiScoring::automatic) == "auto");
  CHECK_THROWS_AS(scoring_from_string("r2"), ConfigError);
}

TEST_CASE("permuting a zero-coefficient feature has no effect") {
  RidgeModel m;
  m.coefficients = {1.5, 0.0};
  m.intercept = 0.3;
  std::vector<std::vector<double>> x;
  std::vector<double> y;
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    x.push_back({rng.normal(), rng.normal()});
    y.push_back(1.5 * x.back()[0] + 0.3);
  }
  const auto runs = permutation_runs(m, to_matrix(x), y, PiScoring::neg_mse, {}, 50, 4);
  for (double r : runs[1]) CHECK(r == 0.0);
  for (double r : runs[0]) CHECK(r > 0.0);
}

TEST_CASE("importance of a feature equal to the target is about twice its variance") {
  // Permuting x in y = x gives E[(x' - x)^2] = 2 Var(x) for independent x'.
  Rng rng(8);
  std::vector<double> x(4000), noise(4000);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = rng.normal();
    noise[i] = rng.normal();
  }
  PiConfig cfg;
  cfg.runs = 50;
  cfg.seed = 2;
  const PiResult r = permutation_importance(real_table({x, noise}, x), cfg);
  CHECK(r.scoring == PiScoring::neg_mse);
  CHECK(r.features[0].mean == doctest::Approx(2.0 * variance(x)).epsilon(0.05));
  CHECK(r.features[0].significant);
  CHECK_FALSE(r.features[1].significant);
  CHECK(std::abs(r.features[1].mean) < 1e-3);
}

TEST_CASE("permutation importance flags nothing on xor and redundant synthetic data") {
  for (SyntheticKind kind : {SyntheticKind::four_redundant, SyntheticKind::two_triplets}) {
    const SampleTable t = gen_synthetic({kind, 10000, 1});
    PiConfig cfg;
    cfg.runs = 100;
    cfg.seed = 5;
    const PiResult r = permutation_importance(t, cfg);
    CHECK(r.scoring == PiScoring::accuracy);
    for (const PiFeature& f : r.features) CHECK_FALSE(f.significant);
  }
}

TEST_CASE("permutation importance is deterministic and serialisable") {
  const SampleTable t = gen_synthetic({SyntheticKind::four_redundant, 500, 2});
  PiConfig cfg;
  cfg.runs = 20;
  cfg.seed = 9;
  const auto a = to_json(permutation_importance(t, cfg));
  const auto b = to_json(permutation_importance(t, cfg));
  CHECK(a.dump() == b.dump());
  CHECK(a["variables"].size() == 6);
  CHECK(a["null"]["repeats"].size() == 10);
  CHECK(a["scoring"] == "accuracy");
}

TEST_CASE("pi configuration is validated") {
  PiConfig cfg;
  cfg.repeats = 1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = PiConfig{};
  cfg.runs = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = PiConfig{};
  cfg.alpha = -1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
