#include "terc/baselines.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

namespace terc {

double RidgeModel::predict(std::span<const double> row) const {
  double y = intercept;
  for (std::size_t j = 0; j < coefficients.size(); ++j) y += coefficients[j] * row[j];
  return y;
}

RidgeModel ridge_fit(const Matrix& features, std::span<const double> target, double lambda) {
  if (features.rows == 0) throw std::invalid_argument("ridge needs at least one row");
  if (target.size() != features.rows) throw std::invalid_argument("ridge target length differs from row count");
  if (!(lambda >= 0.0)) throw std::invalid_argument("ridge lambda must be non-negative");
  const auto n = static_cast<Eigen::Index>(features.rows);
  const auto p = static_cast<Eigen::Index>(features.cols);
  Eigen::MatrixXd x(n, p);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) x(i, j) = features(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
    y(i) = target[static_cast<std::size_t>(i)];
  }
  const Eigen::RowVectorXd x_mean = x.colwise().mean();
  const double y_mean = y.mean();
  x.rowwise() -= x_mean;
  y.array() -= y_mean;

  Eigen::MatrixXd a = x.transpose() * x;
  a.diagonal().array() += lambda;
  const Eigen::VectorXd b = x.transpose() * y;
  Eigen::VectorXd w;
  if (lambda == 0.0) {
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
    if (lu.rank() < p) {
      throw std::invalid_argument("ridge system is singular with lambda = 0; use lambda > 0");
    }
    w = lu.solve(b);
  } else {
    w = a.ldlt().solve(b);
  }
  RidgeModel m;
  m.lambda = lambda;
  m.coefficients.assign(w.data(), w.data() + w.size());
  m.intercept = y_mean - x_mean.dot(w);
  return m;
}

std::string_view to_string(PiScoring s) {
  switch (s) {
    case PiScoring::neg_mse: return "neg_mse";
    case PiScoring::accuracy: return "accuracy";
    case PiScoring::automatic: return "auto";
  }
  return "auto";
}

PiScoring scoring_from_string(std::string_view name) {
  if (name == "neg_mse") return PiScoring::neg_mse;
  if (name == "accuracy") return PiScoring::accuracy;
  if (name == "auto") return PiScoring::automatic;
  throw ConfigError("unknown PI scoring '" + std::string(name) + "' (expected neg_mse, accuracy or auto)");
}

void PiConfig::validate() const {
  if (runs == 0) throw ConfigError("pi.runs must be positive");
  if (repeats < 2) throw ConfigError("pi.repeats must be at least 2");
  if (!(alpha >= 0.0)) throw ConfigError("pi.alpha must be non-negative");
}

double pi_score(PiScoring scoring, std::span<const double> prediction, std::span<const double> target,
                std::span<const double> labels) {
  const std::size_t n = target.size();
  if (scoring == PiScoring::accuracy) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i) {
      // Nearest observed label; ties go to the smaller label.
      const auto it = std::lower_bound(labels.begin(), labels.end(), prediction[i]);
      double guess;
      if (it == labels.begin()) {
        guess = *it;
      } else if (it == labels.end()) {
        guess = labels.back();
      } else {
        guess = (*it - prediction[i]) < (prediction[i] - *(it - 1)) ? *it : *(it - 1);
      }
      if (guess == target[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(n);
  }
  double sse = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = prediction[i] - target[i];
    sse += d * d;
  }
  return -sse / static_cast<double>(n);
}

std::vector<std::vector<double>> permutation_runs(const RidgeModel& model, const Matrix& features,
                                                  std::span<const double> target, PiScoring scoring,
                                                  std::span<const double> labels, std::size_t runs,
                                                  std::uint64_t seed) {
  const std::size_t n = features.rows;
  std::vector<double> base_pred(n);
  for (std::size_t i = 0; i < n; ++i) base_pred[i] = model.predict(features.row(i));
  const double base = pi_score(scoring, base_pred, target, labels);

  std::vector<std::vector<double>> out(features.cols, std::vector<double>(runs));
  std::vector<std::size_t> perm(n);
  std::vector<double> pred(n);
  for (std::size_t j = 0; j < features.cols; ++j) {
    Rng rng(mix_seed(seed, j));
    const double w = model.coefficients[j];
    for (std::size_t r = 0; r < runs; ++r) {
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      rng.shuffle(std::span<std::size_t>(perm));
      // Only the permuted column's contribution changes.
      for (std::size_t i = 0; i < n; ++i) pred[i] = base_pred[i] + w * (features(perm[i], j) - features(i, j));
      out[j][r] = base - pi_score(scoring, pred, target, labels);
    }
  }
  return out;
}

namespace {

void summarise(PiFeature& f) {
  f.mean = mean(f.repeats);
  f.stddev = sample_stddev(f.repeats);
  const double half = 2.0 * f.stddev / std::sqrt(static_cast<double>(f.repeats.size()));
  f.lower = f.mean - half;
  f.upper = f.mean + half;
}

}  // namespace

PiResult permutation_importance(const SampleTable& table, const PiConfig& config) {
  config.validate();
  if (!table.has_action()) throw std::invalid_argument("permutation importance needs an action column");
  const std::vector<std::size_t> vars = table.variable_indices();
  if (vars.empty()) throw std::invalid_argument("permutation importance needs at least one feature");
  const std::size_t n = table.rows();
  const std::size_t p = vars.size();
  const Column& action = table.column(table.action_index());

  std::vector<double> target(n);
  for (std::size_t i = 0; i < n; ++i) target[i] = action.numeric(i);
  std::set<double> distinct(target.begin(), target.end());
  PiScoring scoring = config.scoring;
  if (scoring == PiScoring::automatic) {
    scoring = action.kind == ColumnKind::discrete && distinct.size() <= 2 ? PiScoring::accuracy : PiScoring::neg_mse;
  }
  const std::vector<double> labels(distinct.begin(), distinct.end());

  PiResult result;
  result.scoring = scoring;
  result.runs = config.runs;
  result.alpha = config.alpha;
  for (std::size_t v : vars) result.features.push_back({table.name(v), {}, 0, 0, 0, 0, false});
  result.null.name = "NM";

  std::vector<double> base_scores;
  for (std::size_t rep = 0; rep < config.repeats; ++rep) {
    Rng rng(mix_seed(config.seed, 1000 + rep));
    std::vector<std::size_t> rows(n);
    for (std::size_t i = 0; i < n; ++i) rows[i] = config.bootstrap ? rng.below(n) : i;
    Matrix x(n, p + 1);
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < p; ++j) x(i, j) = table.column(vars[j]).numeric(rows[i]);
      x(i, p) = static_cast<double>(rng.below(2));
      y[i] = target[rows[i]];
    }
    const RidgeModel model = ridge_fit(x, y, config.alpha);
    std::vector<double> pred(n);
    for (std::size_t i = 0; i < n; ++i) pred[i] = model.predict(x.row(i));
    base_scores.push_back(pi_score(scoring, pred, y, labels));
    const auto runs = permutation_runs(model, x, y, scoring, labels, config.runs, mix_seed(config.seed, rep));
    for (std::size_t j = 0; j < p; ++j) result.features[j].repeats.push_back(mean(runs[j]));
    result.null.repeats.push_back(mean(runs[p]));
  }
  result.base_score = mean(base_scores);
  summarise(result.null);
  for (PiFeature& f : result.features) {
    summarise(f);
    f.significant = f.lower > result.null.upper;
  }
  return result;
}

nlohmann::ordered_json to_json(const PiResult& result) {
  auto feature = [](const PiFeature& f) {
    return nlohmann::ordered_json{{"variable", f.name},   {"importance", f.mean}, {"importance_std", f.stddev},
                                  {"lower", f.lower},     {"upper", f.upper},     {"repeats", f.repeats},
                                  {"significant", f.significant}};
  };
  nlohmann::ordered_json j;
  j["method"] = "permutation_importance";
  j["scoring"] = to_string(result.scoring);
  j["runs"] = result.runs;
  j["alpha"] = result.alpha;
  j["base_score"] = result.base_score;
  j["null_bound"] = result.null.upper;
  j["null"] = feature(result.null);
  nlohmann::ordered_json features = nlohmann::ordered_json::array();
  for (const PiFeature& f : result.features) features.push_back(feature(f));
  j["variables"] = std::move(features);
  return j;
}

}  // namespace terc
