#include "terc/neural.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace terc::neural {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

struct Trace {
  // activations[0] is the input; activations[k + 1] is the output of layer k.
  std::vector<RowMat> activations;
  RowMat final_preactivation;
};

ConstMap weight_map(const MlpParams& p, std::size_t k) {
  const auto& sizes = p.layout().layer_sizes;
  return {p.weights(k).data(), static_cast<Eigen::Index>(sizes[k + 1]),
          static_cast<Eigen::Index>(sizes[k])};
}

void softmax_rows(RowMat& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    const double mx = row.maxCoeff();
    row = (row.array() - mx).exp();
    row /= row.sum();
  }
}

RowMat log_softmax_rows(const RowMat& z) {
  RowMat out(z.rows(), z.cols());
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const double mx = z.row(r).maxCoeff();
    const double lse = mx + std::log((z.row(r).array() - mx).exp().sum());
    out.row(r) = z.row(r).array() - lse;
  }
  return out;
}

Trace forward_trace(const MlpParams& params, const Matrix& inputs) {
  const Layout& layout = params.layout();
  if (inputs.cols != layout.input_size()) {
    throw std::invalid_argument("input width " + std::to_string(inputs.cols) +
                                " does not match layout input size " +
                                std::to_string(layout.input_size()));
  }
  Trace trace;
  trace.activations.reserve(layout.layer_count() + 1);
  trace.activations.emplace_back(ConstMap(inputs.data.data(), static_cast<Eigen::Index>(inputs.rows),
                                          static_cast<Eigen::Index>(inputs.cols)));
  for (std::size_t k = 0; k < layout.layer_count(); ++k) {
    const auto w = weight_map(params, k);
    const auto b = params.bias(k);
    const Eigen::Map<const Eigen::RowVectorXd> bias(b.data(), static_cast<Eigen::Index>(b.size()));
    RowMat z = trace.activations.back() * w.transpose();
    z.rowwise() += bias;
    if (k + 1 == layout.layer_count()) {
      trace.final_preactivation = z;
    }
    switch (layout.activations[k]) {
      case Activation::relu:
        z = z.cwiseMax(0.0);
        break;
      case Activation::tanh:
        z = z.array().tanh();
        break;
      case Activation::linear:
        break;
      case Activation::softmax:
        softmax_rows(z);
        break;
    }
    trace.activations.push_back(std::move(z));
  }
  return trace;
}

// Gradient of the loss w.r.t. a layer's pre-activation, given the gradient
// w.r.t. its output.
RowMat through_activation(Activation act, const RowMat& grad_out, const RowMat& out) {
  switch (act) {
    case Activation::relu:
      return grad_out.array() * (out.array() > 0.0).cast<double>();
    case Activation::tanh:
      return grad_out.array() * (1.0 - out.array().square());
    case Activation::linear:
      return grad_out;
    case Activation::softmax: {
      RowMat dz(grad_out.rows(), grad_out.cols());
      for (Eigen::Index r = 0; r < out.rows(); ++r) {
        const double dot = grad_out.row(r).dot(out.row(r));
        dz.row(r) = out.row(r).array() * (grad_out.row(r).array() - dot);
      }
      return dz;
    }
  }
  return grad_out;
}

void accumulate_backward(const MlpParams& params, const Trace& trace, RowMat dz, MlpParams& grad) {
  const Layout& layout = params.layout();
  for (std::size_t k = layout.layer_count(); k-- > 0;) {
    if (k + 1 < layout.layer_count()) {
      dz = through_activation(layout.activations[k], dz, trace.activations[k + 1]);
    }
    const auto gw = grad.weights(k);
    MutMap dw(gw.data(), static_cast<Eigen::Index>(layout.layer_sizes[k + 1]),
              static_cast<Eigen::Index>(layout.layer_sizes[k]));
    dw.noalias() += dz.transpose() * trace.activations[k];
    const auto gb = grad.bias(k);
    Eigen::Map<Eigen::RowVectorXd> db(gb.data(), static_cast<Eigen::Index>(gb.size()));
    db += dz.colwise().sum();
    if (k > 0) {
      dz = dz * weight_map(params, k);
    }
  }
}

struct HeadResult {
  double loss = 0.0;
  // Gradient w.r.t. the final layer's pre-activation.
  RowMat final_dz;
  // DV only: gradient w.r.t. the marginal batch's final pre-activation.
  RowMat marginal_dz;
  Trace marginal_trace;
};

void require_rows(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    throw std::invalid_argument(std::string(what) + ": expected " + std::to_string(want) +
                                " rows, got " + std::to_string(got));
  }
}

HeadResult evaluate_head(const MlpParams& params, const Trace& trace, const Loss& loss,
                         bool want_grad) {
  const Layout& layout = params.layout();
  const Activation final_act = layout.activations.back();
  const RowMat& out = trace.activations.back();
  const auto n = static_cast<double>(out.rows());
  if (out.rows() == 0) {
    throw std::invalid_argument("loss requires a non-empty batch");
  }
  HeadResult head;

  std::visit(
      [&](const auto& spec) {
        using T = std::decay_t<decltype(spec)>;
        if constexpr (std::is_same_v<T, MseLoss>) {
          require_rows(spec.targets.rows, static_cast<std::size_t>(out.rows()), "mse targets");
          if (spec.targets.cols != static_cast<std::size_t>(out.cols())) {
            throw std::invalid_argument("mse targets width mismatch");
          }
          const ConstMap t(spec.targets.data.data(), out.rows(), out.cols());
          const RowMat diff = out - t;
          head.loss = diff.squaredNorm() / n;
          if (want_grad) {
            head.final_dz = through_activation(final_act, 2.0 * diff / n, out);
          }
        } else if constexpr (std::is_same_v<T, NllLoss>) {
          if (final_act != Activation::softmax) {
            throw std::invalid_argument("nll loss requires a softmax output layer");
          }
          require_rows(spec.labels.size(), static_cast<std::size_t>(out.rows()), "nll labels");
          const RowMat logp = log_softmax_rows(trace.final_preactivation);
          head.final_dz = want_grad ? RowMat(out / n) : RowMat();
          for (Eigen::Index r = 0; r < out.rows(); ++r) {
            const auto a = static_cast<Eigen::Index>(spec.labels[static_cast<std::size_t>(r)]);
            if (a >= out.cols()) {
              throw std::invalid_argument("nll label out of range");
            }
            head.loss -= logp(r, a) / n;
            if (want_grad) {
              head.final_dz(r, a) -= 1.0 / n;
            }
          }
        } else if constexpr (std::is_same_v<T, DvLoss>) {
          if (out.cols() != 1) {
            throw std::invalid_argument("dv objective requires a scalar output");
          }
          head.marginal_trace = forward_trace(params, spec.marginal);
          const RowMat& fm = head.marginal_trace.activations.back();
          const auto m = static_cast<double>(fm.rows());
          if (fm.rows() == 0) {
            throw std::invalid_argument("dv objective requires a non-empty marginal batch");
          }
          const double mx = fm.maxCoeff();
          const Eigen::ArrayXd e = (fm.col(0).array() - mx).exp();
          const double sum_e = e.sum();
          const double log_mean_exp = mx + std::log(sum_e / m);
          head.loss = -(out.sum() / n - log_mean_exp);
          if (want_grad) {
            head.final_dz = through_activation(final_act, RowMat::Constant(out.rows(), 1, -1.0 / n), out);
            RowMat dm(fm.rows(), 1);
            dm.col(0) = e / sum_e;
            head.marginal_dz = through_activation(final_act, dm, fm);
          }
        } else if constexpr (std::is_same_v<T, PolicyGradientLoss>) {
          require_rows(spec.weights.size(), static_cast<std::size_t>(out.rows()), "policy weights");
          if (final_act == Activation::softmax) {
            require_rows(spec.discrete_actions.size(), static_cast<std::size_t>(out.rows()),
                         "policy actions");
            const RowMat logp = log_softmax_rows(trace.final_preactivation);
            if (want_grad) {
              head.final_dz = RowMat::Zero(out.rows(), out.cols());
            }
            for (Eigen::Index r = 0; r < out.rows(); ++r) {
              const double w = spec.weights[static_cast<std::size_t>(r)];
              const auto a = static_cast<Eigen::Index>(spec.discrete_actions[static_cast<std::size_t>(r)]);
              if (a >= out.cols()) {
                throw std::invalid_argument("policy action out of range");
              }
              head.loss -= w * logp(r, a) / n;
              double entropy = 0.0;
              if (spec.entropy_coef != 0.0) {
                entropy = -(out.row(r).array() * logp.row(r).array()).sum();
                head.loss -= spec.entropy_coef * entropy / n;
              }
              if (want_grad) {
                // d(-w log p_a)/dz = w (p - e_a)
                head.final_dz.row(r) += w * out.row(r) / n;
                head.final_dz(r, a) -= w / n;
                if (spec.entropy_coef != 0.0) {
                  // dH/dz_k = -p_k (log p_k + H)
                  head.final_dz.row(r).array() +=
                      spec.entropy_coef / n * out.row(r).array() * (logp.row(r).array() + entropy);
                }
              }
            }
          } else {
            if (spec.continuous_actions == nullptr) {
              throw std::invalid_argument("gaussian policy loss requires continuous actions");
            }
            const Matrix& acts = *spec.continuous_actions;
            require_rows(acts.rows, static_cast<std::size_t>(out.rows()), "policy actions");
            if (acts.cols != static_cast<std::size_t>(out.cols()) ||
                spec.log_std.size() != acts.cols) {
              throw std::invalid_argument("gaussian policy dimension mismatch");
            }
            RowMat grad_out = RowMat::Zero(out.rows(), out.cols());
            const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
            for (Eigen::Index r = 0; r < out.rows(); ++r) {
              const double w = spec.weights[static_cast<std::size_t>(r)];
              double logp = 0.0;
              for (Eigen::Index j = 0; j < out.cols(); ++j) {
                const double ls = spec.log_std[static_cast<std::size_t>(j)];
                const double var = std::exp(2.0 * ls);
                const double d = acts(static_cast<std::size_t>(r), static_cast<std::size_t>(j)) - out(r, j);
                logp += -d * d / (2.0 * var) - ls - half_log_2pi;
                grad_out(r, j) = -w * d / var / n;
              }
              head.loss -= w * logp / n;
            }
            if (want_grad) {
              head.final_dz = through_activation(final_act, grad_out, out);
            }
          }
        }
      },
      loss);

  if (!std::isfinite(head.loss)) {
    throw NumericalError("non-finite loss value", 0);
  }
  return head;
}

bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::relu:
      return "relu";
    case Activation::tanh:
      return "tanh";
    case Activation::linear:
      return "linear";
    case Activation::softmax:
      return "softmax";
  }
  return "linear";
}

Activation activation_from_string(std::string_view name) {
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  if (name == "linear") return Activation::linear;
  if (name == "softmax") return Activation::softmax;
  throw std::invalid_argument("unknown activation '" + std::string(name) + "'");
}

void Layout::validate() const {
  if (layer_sizes.size() < 2) {
    throw std::invalid_argument("layout needs at least 2 layers (input and output)");
  }
  if (activations.size() + 1 != layer_sizes.size()) {
    throw std::invalid_argument("layout needs exactly one activation per dense layer");
  }
  for (std::size_t s : layer_sizes) {
    if (s == 0) {
      throw std::invalid_argument("layer sizes must be positive");
    }
  }
  for (std::size_t k = 0; k + 1 < activations.size(); ++k) {
    if (activations[k] == Activation::softmax) {
      throw std::invalid_argument("softmax is only permitted on the final layer");
    }
  }
}

Layout single_hidden(std::size_t in, std::size_t hidden, std::size_t out, Activation hidden_act,
                     Activation out_act) {
  return Layout{{in, hidden, out}, {hidden_act, out_act}};
}

MlpParams::MlpParams(Layout layout) : layout_(std::move(layout)) {
  layout_.validate();
  std::size_t total = 0;
  for (std::size_t k = 0; k < layout_.layer_count(); ++k) {
    offsets_.push_back(total);
    total += layout_.layer_sizes[k + 1] * (layout_.layer_sizes[k] + 1);
  }
  values_.assign(total, 0.0);
}

std::span<double> MlpParams::weights(std::size_t k) {
  return {values_.data() + offsets_.at(k), layout_.layer_sizes[k + 1] * layout_.layer_sizes[k]};
}
std::span<const double> MlpParams::weights(std::size_t k) const {
  return {values_.data() + offsets_.at(k), layout_.layer_sizes[k + 1] * layout_.layer_sizes[k]};
}
std::span<double> MlpParams::bias(std::size_t k) {
  return {values_.data() + offsets_.at(k) + layout_.layer_sizes[k + 1] * layout_.layer_sizes[k],
          layout_.layer_sizes[k + 1]};
}
std::span<const double> MlpParams::bias(std::size_t k) const {
  return {values_.data() + offsets_.at(k) + layout_.layer_sizes[k + 1] * layout_.layer_sizes[k],
          layout_.layer_sizes[k + 1]};
}

MlpParams mlp_init(const Layout& layout, std::uint64_t seed) {
  MlpParams params(layout);
  Rng rng(seed);
  for (std::size_t k = 0; k < layout.layer_count(); ++k) {
    const double fan_in = static_cast<double>(layout.layer_sizes[k]);
    const double fan_out = static_cast<double>(layout.layer_sizes[k + 1]);
    const double r = std::sqrt(6.0 / (fan_in + fan_out));
    for (double& w : params.weights(k)) {
      w = rng.uniform(-r, r);
    }
  }
  return params;
}

std::vector<double> mlp_forward(const MlpParams& params, std::span<const double> input) {
  Matrix m(1, input.size());
  std::copy(input.begin(), input.end(), m.data.begin());
  Matrix out = mlp_forward_batch(params, m);
  return std::move(out.data);
}

Matrix mlp_forward_batch(const MlpParams& params, const Matrix& inputs) {
  const Trace trace = forward_trace(params, inputs);
  const RowMat& out = trace.activations.back();
  Matrix result(static_cast<std::size_t>(out.rows()), static_cast<std::size_t>(out.cols()));
  std::copy(out.data(), out.data() + out.size(), result.data.begin());
  return result;
}

GradResult mlp_grad(const MlpParams& params, const Matrix& inputs, const Loss& loss) {
  const Trace trace = forward_trace(params, inputs);
  HeadResult head = evaluate_head(params, trace, loss, true);
  GradResult result{head.loss, MlpParams(params.layout())};
  accumulate_backward(params, trace, std::move(head.final_dz), result.gradient);
  if (head.marginal_dz.size() > 0) {
    accumulate_backward(params, head.marginal_trace, std::move(head.marginal_dz), result.gradient);
  }
  if (!all_finite(result.gradient.flat())) {
    throw NumericalError("non-finite gradient (loss " + std::to_string(head.loss) + ")", 0);
  }
  return result;
}

double mlp_loss(const MlpParams& params, const Matrix& inputs, const Loss& loss) {
  const Trace trace = forward_trace(params, inputs);
  return evaluate_head(params, trace, loss, false).loss;
}

OptimState make_optimizer(OptimKind kind, double learning_rate) {
  if (!(learning_rate > 0.0) && learning_rate != 0.0) {
    throw std::invalid_argument("learning rate must be non-negative");
  }
  OptimState state;
  state.kind = kind;
  state.learning_rate = learning_rate;
  return state;
}

void opt_step(std::span<double> params, std::span<const double> grad, OptimState& state) {
  if (params.size() != grad.size()) {
    throw std::invalid_argument("optimizer: gradient shape does not match parameters");
  }
  if (!all_finite(grad)) {
    throw NumericalError("optimizer received a non-finite gradient", state.step);
  }
  ++state.step;
  if (state.kind == OptimKind::sgd) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      params[i] -= state.learning_rate * grad[i];
    }
    return;
  }
  if (state.first_moment.empty()) {
    state.first_moment.assign(params.size(), 0.0);
    state.second_moment.assign(params.size(), 0.0);
  } else if (state.first_moment.size() != params.size()) {
    throw std::invalid_argument("optimizer: moment buffers do not match parameters");
  }
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    double& m = state.first_moment[i];
    double& v = state.second_moment[i];
    m = state.beta1 * m + (1.0 - state.beta1) * grad[i];
    v = state.beta2 * v + (1.0 - state.beta2) * grad[i] * grad[i];
    params[i] -= state.learning_rate * (m / c1) / (std::sqrt(v / c2) + state.epsilon);
  }
}

void opt_step(MlpParams& params, const MlpParams& grad, OptimState& state) {
  if (params.layout() != grad.layout()) {
    throw std::invalid_argument("optimizer: gradient layout does not match parameters");
  }
  opt_step(params.flat(), grad.flat(), state);
}

std::string checkpoint_to_json(const MlpParams& params) {
  nlohmann::ordered_json j;
  j["format"] = "terc-mlp";
  j["version"] = 1;
  j["layer_sizes"] = params.layout().layer_sizes;
  auto& acts = j["activations"] = nlohmann::ordered_json::array();
  for (Activation a : params.layout().activations) {
    acts.push_back(std::string(to_string(a)));
  }
  j["params"] = std::vector<double>(params.flat().begin(), params.flat().end());
  return j.dump();
}

MlpParams checkpoint_from_json(std::string_view text) {
  const auto j = nlohmann::json::parse(text);
  if (j.value("format", "") != "terc-mlp" || j.value("version", 0) != 1) {
    throw std::invalid_argument("not a terc-mlp version 1 checkpoint");
  }
  Layout layout;
  layout.layer_sizes = j.at("layer_sizes").get<std::vector<std::size_t>>();
  for (const auto& a : j.at("activations")) {
    layout.activations.push_back(activation_from_string(a.get<std::string>()));
  }
  MlpParams params(layout);
  const auto values = j.at("params").get<std::vector<double>>();
  if (values.size() != params.size()) {
    throw std::invalid_argument("checkpoint parameter count does not match its layout");
  }
  if (!all_finite(values)) {
    throw std::invalid_argument("checkpoint contains non-finite parameters");
  }
  std::copy(values.begin(), values.end(), params.flat().begin());
  return params;
}

void save_checkpoint(const MlpParams& params, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write checkpoint " + path.string());
  }
  out << checkpoint_to_json(params) << '\n';
}

MlpParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot read checkpoint " + path.string());
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_json(ss.str());
}

}  // namespace terc::neural
