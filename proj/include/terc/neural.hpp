#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "terc/common.hpp"

// Small dense feed-forward networks with hand-written reverse-mode gradients
// for a fixed set of losses. Shared by the neural MI estimator and the agents.
namespace terc::neural {

enum class Activation { relu, tanh, linear, softmax };

std::string_view to_string(Activation a);
Activation activation_from_string(std::string_view name);

// layer_sizes includes the input width; activations[k] is applied to the
// output of dense layer k, so activations.size() == layer_sizes.size() - 1.
struct Layout {
  std::vector<std::size_t> layer_sizes;
  std::vector<Activation> activations;

  // Throws std::invalid_argument when the layout is inconsistent.
  void validate() const;
  std::size_t input_size() const { return layer_sizes.front(); }
  std::size_t output_size() const { return layer_sizes.back(); }
  std::size_t layer_count() const { return activations.size(); }

  bool operator==(const Layout&) const = default;
};

// Convenience: input -> one hidden layer -> output.
Layout single_hidden(std::size_t in, std::size_t hidden, std::size_t out, Activation hidden_act,
                     Activation out_act);

// All weights and biases in one flat buffer. Layer k stores its (out x in)
// row-major weight matrix followed by its bias vector.
class MlpParams {
 public:
  MlpParams() = default;
  // Zero-filled parameters for a validated layout.
  explicit MlpParams(Layout layout);

  const Layout& layout() const { return layout_; }

  std::span<double> weights(std::size_t layer);
  std::span<const double> weights(std::size_t layer) const;
  std::span<double> bias(std::size_t layer);
  std::span<const double> bias(std::size_t layer) const;

  std::span<double> flat() { return values_; }
  std::span<const double> flat() const { return values_; }
  std::size_t size() const { return values_.size(); }

  bool operator==(const MlpParams&) const = default;

 private:
  Layout layout_;
  std::vector<double> values_;
  std::vector<std::size_t> offsets_;  // start of each layer's weights
};

// Glorot-uniform weights, U(-r, r) with r = sqrt(6 / (fan_in + fan_out));
// zero biases. Bit-reproducible for a given (layout, seed).
MlpParams mlp_init(const Layout& layout, std::uint64_t seed);

std::vector<double> mlp_forward(const MlpParams& params, std::span<const double> input);
// Row-wise forward over a batch; returns a (rows x output_size) matrix.
Matrix mlp_forward_batch(const MlpParams& params, const Matrix& inputs);

// Mean over rows of the squared error summed over outputs.
struct MseLoss {
  const Matrix& targets;
};

// Mean negative log-probability of the labelled class; requires a softmax head.
struct NllLoss {
  std::span<const std::size_t> labels;
};

// Negative Donsker-Varadhan bound: -(mean F(joint) - log mean exp F(marginal)).
// The network input rows are the joint samples; requires a scalar output.
struct DvLoss {
  const Matrix& marginal;
};

// -mean_i w_i log pi(a_i | s_i) - entropy_coef * mean_i H(pi(. | s_i)).
// Softmax head: categorical policy over discrete_actions.
// Linear head: Gaussian policy with mean = output and the given log_std,
// actions taken from continuous_actions (entropy term is not applied; it
// does not depend on the network parameters).
struct PolicyGradientLoss {
  std::span<const double> weights;
  std::span<const std::size_t> discrete_actions = {};
  const Matrix* continuous_actions = nullptr;
  std::span<const double> log_std = {};
  double entropy_coef = 0.0;
};

using Loss = std::variant<MseLoss, NllLoss, DvLoss, PolicyGradientLoss>;

struct GradResult {
  double loss = 0.0;
  MlpParams gradient;
};

// Exact gradient of the scalar loss with respect to every parameter.
// Throws NumericalError if any intermediate value is non-finite.
GradResult mlp_grad(const MlpParams& params, const Matrix& inputs, const Loss& loss);

// Scalar loss only (used by finite-difference checks).
double mlp_loss(const MlpParams& params, const Matrix& inputs, const Loss& loss);

enum class OptimKind { sgd, adam };

struct OptimState {
  OptimKind kind = OptimKind::adam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step = 0;
  std::vector<double> first_moment;
  std::vector<double> second_moment;
};

OptimState make_optimizer(OptimKind kind, double learning_rate);

// Descent step p <- p - update(g). Moment buffers are sized lazily on first use.
void opt_step(std::span<double> params, std::span<const double> grad, OptimState& state);
void opt_step(MlpParams& params, const MlpParams& grad, OptimState& state);

// Checkpoint JSON: {"format":"terc-mlp","version":1,"layer_sizes":[...],
// "activations":[...],"params":[...]} with params in flat layout order.
std::string checkpoint_to_json(const MlpParams& params);
MlpParams checkpoint_from_json(std::string_view text);
void save_checkpoint(const MlpParams& params, const std::filesystem::path& path);
MlpParams load_checkpoint(const std::filesystem::path& path);

}  // namespace terc::neural
