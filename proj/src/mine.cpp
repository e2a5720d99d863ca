#include <algorithm>
#include <cmath>
#include <numeric>

#include "terc/estimators.hpp"
#include "terc/neural.hpp"

namespace terc {

namespace {

// Column-wise z-scores; constant columns become zero.
void standardize_into(const Matrix& src, Matrix& dst, std::size_t offset) {
  const double n = static_cast<double>(src.rows);
  for (std::size_t c = 0; c < src.cols; ++c) {
    double mu = 0.0;
    for (std::size_t r = 0; r < src.rows; ++r) mu += src(r, c);
    mu /= n;
    double var = 0.0;
    for (std::size_t r = 0; r < src.rows; ++r) var += (src(r, c) - mu) * (src(r, c) - mu);
    const double sd = std::sqrt(var / n);
    for (std::size_t r = 0; r < src.rows; ++r) {
      dst(r, offset + c) = sd > 0.0 ? (src(r, c) - mu) / sd : 0.0;
    }
  }
}

// Rows of `joint` with the y block taken from row y_rows[i] instead of rows[i].
void fill_pairs(const Matrix& joint, std::size_t x_cols, std::span<const std::size_t> rows,
                std::span<const std::size_t> y_rows, Matrix& out) {
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto src_x = joint.row(rows[i]);
    const auto src_y = joint.row(y_rows[i]);
    auto dst = out.row(i);
    std::copy(src_x.begin(), src_x.begin() + static_cast<std::ptrdiff_t>(x_cols), dst.begin());
    std::copy(src_y.begin() + static_cast<std::ptrdiff_t>(x_cols), src_y.end(),
              dst.begin() + static_cast<std::ptrdiff_t>(x_cols));
  }
}

}  // namespace

double mine_mi(const Matrix& x, const Matrix& y, const MineConfig& config) {
  if (x.rows != y.rows || x.cols == 0 || y.cols == 0) {
    throw std::invalid_argument("neural estimator needs non-empty, row-aligned blocks");
  }
  config.validate(x.rows);
  const std::size_t n = x.rows;
  const std::size_t width = x.cols + y.cols;
  Matrix joint(n, width);
  standardize_into(x, joint, 0);
  standardize_into(y, joint, x.cols);

  using namespace neural;
  MlpParams params = mlp_init(single_hidden(width, config.hidden, 1, Activation::relu,
                                            Activation::linear),
                              mix_seed(config.seed, 1));
  OptimState optim = make_optimizer(OptimKind::adam, config.learning_rate);
  Rng rng(mix_seed(config.seed, 2));

  const std::size_t b = config.batch_size;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = n;
  std::vector<std::size_t> shuffled(b);
  Matrix joint_batch(b, width);
  Matrix marginal_batch(b, width);

  for (std::size_t it = 0; it < config.iterations; ++it) {
    if (cursor + b > n) {
      rng.shuffle(std::span(order));
      cursor = 0;
    }
    const std::span<const std::size_t> rows(order.data() + cursor, b);
    cursor += b;
    std::copy(rows.begin(), rows.end(), shuffled.begin());
    rng.shuffle(std::span(shuffled));
    fill_pairs(joint, x.cols, rows, rows, joint_batch);
    fill_pairs(joint, x.cols, rows, shuffled, marginal_batch);
    try {
      const GradResult g = mlp_grad(params, joint_batch, DvLoss{marginal_batch});
      opt_step(params, g.gradient, optim);
    } catch (const NumericalError& e) {
      throw NumericalError(std::string("neural estimator diverged: ") + e.what(), it);
    }
  }

  std::vector<std::size_t> all(n), permuted(n);
  std::iota(all.begin(), all.end(), 0);
  std::iota(permuted.begin(), permuted.end(), 0);
  rng.shuffle(std::span(permuted));
  Matrix marginal(n, width);
  fill_pairs(joint, x.cols, all, permuted, marginal);
  const double bound = -mlp_loss(params, joint, DvLoss{marginal});
  if (!std::isfinite(bound)) {
    throw NumericalError("neural estimator produced a non-finite bound", config.iterations);
  }
  return bound;
}

}  // namespace terc
