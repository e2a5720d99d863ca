#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "terc/common.hpp"
#include "terc/sample_table.hpp"

namespace terc {

// ---- synthetic datasets -------------------------------------------------

enum class SyntheticKind { four_redundant, two_triplets };
std::string_view to_string(SyntheticKind kind);
SyntheticKind synthetic_from_string(std::string_view name);

struct SyntheticSpec {
  SyntheticKind kind = SyntheticKind::four_redundant;
  std::size_t n = 10000;
  std::uint64_t seed = 0;
};

// Six binary columns X1..X6 and an `action` column equal to 1 iff
// X1 = X2 = X3. four_redundant: X4 = X5 = X6 = X1. two_triplets: X4 = X1,
// X5 = X2, X6 = X3.
SampleTable gen_synthetic(const SyntheticSpec& spec);

// ---- environment interface ----------------------------------------------

struct ActionSpace {
  bool discrete = true;
  std::size_t count = 0;         // discrete: number of actions
  std::int64_t first_label = 0;  // discrete: label of action index 0
  std::vector<double> low;       // continuous bounds, one per dimension
  std::vector<double> high;

  std::int64_t label(std::size_t index) const { return first_label + static_cast<std::int64_t>(index); }
};

struct StepResult {
  std::vector<double> state;
  double reward = 0.0;
  bool done = false;
  // Episode ended by a step limit rather than a terminal state.
  bool truncated = false;
};

class Env {
 public:
  virtual ~Env() = default;

  virtual std::vector<double> reset() = 0;
  // Discrete action by index into [0, action_space().count).
  virtual StepResult step(std::size_t action);
  // Continuous action, one value per dimension.
  virtual StepResult step(std::span<const double> action);

  virtual std::string kind() const = 0;
  virtual ActionSpace action_space() const = 0;
  virtual std::vector<std::string> variable_names() const = 0;
  // True when every state component takes integer values (tabular agents).
  virtual bool discrete_state() const { return false; }
  // Configuration snapshot recorded with trajectories.
  virtual nlohmann::ordered_json describe() const = 0;

  std::size_t state_dim() const { return variable_names().size(); }
};

// ---- Secret Key Game ----------------------------------------------------

// Intercept of the parabola through (1, y1), (2, y2), (3, y3).
std::int64_t skg_secret(std::int64_t y1, std::int64_t y2, std::int64_t y3);

struct SecretKeyConfig {
  std::size_t keys = 10;
  std::uint64_t seed = 0;
  // Explicit secret positions; drawn from the seed when empty.
  std::vector<std::size_t> secret_indices;
};

// One-step game: the state is `keys` integers in [0, 10]; the reward for
// action label a in [-40, 40] is -|a - secret|.
class SecretKeyGame : public Env {
 public:
  explicit SecretKeyGame(SecretKeyConfig config);

  std::vector<double> reset() override;
  StepResult step(std::size_t action) override;
  using Env::step;
  std::string kind() const override { return "secret_key"; }
  ActionSpace action_space() const override;
  std::vector<std::string> variable_names() const override;
  bool discrete_state() const override { return true; }
  nlohmann::ordered_json describe() const override;

  const std::vector<std::size_t>& secret_indices() const { return secret_indices_; }
  std::int64_t secret() const { return secret_; }

 private:
  SecretKeyConfig config_;
  std::vector<std::size_t> secret_indices_;
  Rng rng_;
  std::vector<double> state_;
  std::int64_t secret_ = 0;
  bool pending_ = false;
};

// ---- Iterated Prisoner's Dilemma ----------------------------------------

enum Move : int { cooperate = 0, defect = 1 };

// Pair code of one round: agent_move + 2 * opponent_move, i.e.
// (C,C) -> 0, (D,C) -> 1, (C,D) -> 2, (D,D) -> 3.
int ipd_pair_code(Move agent, Move opponent);

// Tit-for-N-tats: defect iff the last n moves of the other player (most
// recent last) were all defections.
Move tfnt_policy(std::span<const Move> other_history, std::size_t n);

struct IpdConfig {
  std::size_t opponent_n = 3;
  std::size_t history = 2;
  std::size_t rounds = 100;
  // One long game cut into episodes of `rounds` rounds: reset() keeps the
  // history and the opponent's memory. When false every episode restarts
  // from mutual cooperation.
  bool continuing = true;
  // payoff[agent][opponent] for the agent; the game is symmetric.
  std::array<std::array<double, 2>, 2> payoff{{{2.0, 0.0}, {3.0, 1.0}}};
  std::uint64_t seed = 0;
};

// State X1..Xl are the pair codes of the last l rounds, X1 most recent.
// The game starts from a history of mutual cooperation. Episodes end
// (truncated) after `rounds` rounds.
class IteratedPrisonersDilemma : public Env {
 public:
  explicit IteratedPrisonersDilemma(IpdConfig config);

  std::vector<double> reset() override;
  StepResult step(std::size_t action) override;
  using Env::step;
  std::string kind() const override { return "ipd"; }
  ActionSpace action_space() const override;
  std::vector<std::string> variable_names() const override;
  bool discrete_state() const override { return true; }
  nlohmann::ordered_json describe() const override;

  Move last_opponent_move() const { return last_opponent_; }
  double last_opponent_payoff() const { return last_opponent_payoff_; }

 private:
  std::vector<double> state() const;

  IpdConfig config_;
  std::vector<Move> agent_moves_;
  std::vector<int> codes_;  // most recent first, length `history`
  std::size_t round_ = 0;
  bool started_ = false;
  Move last_opponent_ = cooperate;
  double last_opponent_payoff_ = 0.0;
};

// ---- Cart pole with doped variables ---------------------------------------

struct CartPoleConfig {
  double gravity = 9.8;
  std::size_t doped = 3;
  double doped_range = 5.0;
  std::size_t max_steps = 500;
  std::uint64_t seed = 0;
};

// Standard pole-balancing dynamics (explicit Euler, 0.02 s step, force +-10).
// State: x, x_dot, theta, theta_dot followed by `doped` variables drawn
// uniformly from [-range, range] at every step.
class CartPole : public Env {
 public:
  explicit CartPole(CartPoleConfig config);

  std::vector<double> reset() override;
  StepResult step(std::size_t action) override;
  using Env::step;
  std::string kind() const override { return "cartpole"; }
  ActionSpace action_space() const override;
  std::vector<std::string> variable_names() const override;
  nlohmann::ordered_json describe() const override;

  // One integration step of the physical state under a horizontal force.
  static std::array<double, 4> physics(const std::array<double, 4>& s, double force, double gravity);

 private:
  std::vector<double> observe();

  CartPoleConfig config_;
  Rng rng_;
  std::array<double, 4> physical_{};
  std::size_t steps_ = 0;
};

// ---- Pendulum -------------------------------------------------------------

struct PendulumConfig {
  std::size_t doped = 0;
  double doped_range = 5.0;
  std::size_t max_steps = 200;
  std::uint64_t seed = 0;
};

// Torque-controlled pendulum: state cos(theta), sin(theta), theta_dot plus
// optional doped variables; torque in [-2, 2].
class Pendulum : public Env {
 public:
  explicit Pendulum(PendulumConfig config);

  std::vector<double> reset() override;
  StepResult step(std::span<const double> action) override;
  using Env::step;
  std::string kind() const override { return "pendulum"; }
  ActionSpace action_space() const override;
  std::vector<std::string> variable_names() const override;
  nlohmann::ordered_json describe() const override;

 private:
  std::vector<double> observe();

  PendulumConfig config_;
  Rng rng_;
  double theta_ = 0.0;
  double theta_dot_ = 0.0;
  std::size_t steps_ = 0;
};

// ---- small test environments ---------------------------------------------

// 1-D point mass: position in [-1, 1], action is a velocity in [-1, 1]
// applied for 0.1 s; reward -|x| per step; 20-step episodes.
class PointMass : public Env {
 public:
  explicit PointMass(std::uint64_t seed);

  std::vector<double> reset() override;
  StepResult step(std::span<const double> action) override;
  using Env::step;
  std::string kind() const override { return "point_mass"; }
  ActionSpace action_space() const override;
  std::vector<std::string> variable_names() const override { return {"x"}; }
  nlohmann::ordered_json describe() const override;

 private:
  Rng rng_;
  double x_ = 0.0;
  std::size_t steps_ = 0;
};

// One-step bandit with a constant state; reward = means[a] + N(0, noise^2).
class Bandit : public Env {
 public:
  Bandit(std::vector<double> means, double noise, std::uint64_t seed);

  std::vector<double> reset() override { return {1.0}; }
  StepResult step(std::size_t action) override;
  using Env::step;
  std::string kind() const override { return "bandit"; }
  ActionSpace action_space() const override;
  std::vector<std::string> variable_names() const override { return {"bias"}; }
  bool discrete_state() const override { return true; }
  nlohmann::ordered_json describe() const override;

 private:
  std::vector<double> means_;
  double noise_;
  Rng rng_;
};

// Deterministic two-state chain with one action: s0 -> s1 -> end, paying
// `rewards[0]` then `rewards[1]`. States are one-hot.
class Chain : public Env {
 public:
  explicit Chain(std::array<double, 2> rewards) : rewards_(rewards) {}

  std::vector<double> reset() override;
  StepResult step(std::size_t action) override;
  using Env::step;
  std::string kind() const override { return "chain"; }
  ActionSpace action_space() const override;
  std::vector<std::string> variable_names() const override { return {"s0", "s1"}; }
  bool discrete_state() const override { return true; }
  nlohmann::ordered_json describe() const override;

 private:
  std::array<double, 2> rewards_;
  std::size_t position_ = 0;
};

// Exposes only the listed state components of an inner environment.
class ProjectedEnv : public Env {
 public:
  ProjectedEnv(std::unique_ptr<Env> inner, std::vector<std::size_t> keep);

  std::vector<double> reset() override;
  StepResult step(std::size_t action) override;
  StepResult step(std::span<const double> action) override;
  std::string kind() const override { return inner_->kind(); }
  ActionSpace action_space() const override { return inner_->action_space(); }
  std::vector<std::string> variable_names() const override;
  bool discrete_state() const override { return inner_->discrete_state(); }
  nlohmann::ordered_json describe() const override;

  Env& inner() { return *inner_; }

 private:
  std::vector<double> project(const std::vector<double>& state) const;

  std::unique_ptr<Env> inner_;
  std::vector<std::size_t> keep_;
};

}  // namespace terc
