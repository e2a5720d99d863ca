#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "terc/common.hpp"
#include "terc/sample_table.hpp"

namespace terc {

struct RidgeModel {
  std::vector<double> coefficients;
  double intercept = 0.0;
  double lambda = 0.0;

  double predict(std::span<const double> row) const;
};

// Minimises sum (y - b - w.x)^2 + lambda |w|^2 with an unpenalised intercept,
// solved in closed form on centred data. Throws std::invalid_argument for a
// singular system with lambda = 0.
RidgeModel ridge_fit(const Matrix& features, std::span<const double> target, double lambda);

enum class PiScoring { neg_mse, accuracy, automatic };
std::string_view to_string(PiScoring s);
PiScoring scoring_from_string(std::string_view name);

struct PiConfig {
  std::size_t runs = 1000;   // permutations per feature and repeat
  double alpha = 0.01;       // ridge regularisation
  std::size_t repeats = 10;  // outer repeats, each with a fresh null column
  bool bootstrap = true;     // resample rows for every repeat
  PiScoring scoring = PiScoring::automatic;
  std::uint64_t seed = 0;

  void validate() const;
};

struct PiFeature {
  std::string name;
  std::vector<double> repeats;  // importance per outer repeat
  double mean = 0.0;
  double stddev = 0.0;
  double lower = 0.0;  // mean - 2 stddev / sqrt(repeats)
  double upper = 0.0;
  bool significant = false;  // lower above the null column's upper bound
};

struct PiResult {
  std::vector<PiFeature> features;
  PiFeature null;  // the injected uniform {0, 1} column
  PiScoring scoring = PiScoring::neg_mse;
  std::size_t runs = 0;
  double alpha = 0.0;
  double base_score = 0.0;  // mean over repeats
};

// Score of a fitted model (higher is better).
double pi_score(PiScoring scoring, std::span<const double> prediction, std::span<const double> target,
                std::span<const double> labels);

// Importance of feature j in one repeat: base score minus the mean score
// over `runs` permutations of column j. Every repeat appends a fresh uniform
// {0, 1} column whose importance forms the null bound.
PiResult permutation_importance(const SampleTable& table, const PiConfig& config);

// Single-repeat importances of the given fitted model on fixed data; the
// building block of permutation_importance, exposed for tests.
std::vector<std::vector<double>> permutation_runs(const RidgeModel& model, const Matrix& features,
                                                  std::span<const double> target, PiScoring scoring,
                                                  std::span<const double> labels, std::size_t runs,
                                                  std::uint64_t seed);

nlohmann::ordered_json to_json(const PiResult& result);

}  // namespace terc
