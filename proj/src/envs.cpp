#include "terc/envs.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace terc {

std::string_view to_string(SyntheticKind kind) {
  return kind == SyntheticKind::four_redundant ? "four_redundant" : "two_triplets";
}

SyntheticKind synthetic_from_string(std::string_view name) {
  if (name == "four_redundant") return SyntheticKind::four_redundant;
  if (name == "two_triplets") return SyntheticKind::two_triplets;
  throw ConfigError("unknown synthetic dataset '" + std::string(name) +
                    "' (expected four_redundant or two_triplets)");
}

SampleTable gen_synthetic(const SyntheticSpec& spec) {
  if (spec.n == 0) {
    throw ConfigError("synthetic dataset needs n >= 1");
  }
  Rng rng(spec.seed);
  std::vector<std::int64_t> x1(spec.n), x2(spec.n), x3(spec.n), a(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    x1[i] = static_cast<std::int64_t>(rng.below(2));
    x2[i] = static_cast<std::int64_t>(rng.below(2));
    x3[i] = static_cast<std::int64_t>(rng.below(2));
    a[i] = (x1[i] == x2[i] && x2[i] == x3[i]) ? 1 : 0;
  }
  SampleTable t;
  t.add_discrete("X1", x1);
  t.add_discrete("X2", x2);
  t.add_discrete("X3", x3);
  if (spec.kind == SyntheticKind::four_redundant) {
    t.add_discrete("X4", x1);
    t.add_discrete("X5", x1);
    t.add_discrete("X6", x1);
  } else {
    t.add_discrete("X4", x1);
    t.add_discrete("X5", x2);
    t.add_discrete("X6", x3);
  }
  t.add_discrete("action", a);
  t.set_action("action");
  return t;
}

StepResult Env::step(std::size_t) {
  throw std::invalid_argument(kind() + " does not take discrete actions");
}

StepResult Env::step(std::span<const double>) {
  throw std::invalid_argument(kind() + " does not take continuous actions");
}

namespace {

std::vector<std::string> numbered(std::string_view prefix, std::size_t count, std::size_t from = 1) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < count; ++i) {
    names.push_back(std::string(prefix) + std::to_string(from + i));
  }
  return names;
}

void check_discrete(std::size_t action, const ActionSpace& space) {
  if (!space.discrete || action >= space.count) {
    throw std::invalid_argument("action index " + std::to_string(action) + " out of range");
  }
}

}  // namespace

// ---- Secret Key Game ----------------------------------------------------

std::int64_t skg_secret(std::int64_t y1, std::int64_t y2, std::int64_t y3) {
  for (std::int64_t y : {y1, y2, y3}) {
    if (y < 0 || y > 10) {
      throw std::invalid_argument("secret key values must lie in [0, 10]");
    }
  }
  // Lagrange basis polynomials for x = 1, 2, 3 evaluated at x = 0.
  return 3 * y1 - 3 * y2 + y3;
}

SecretKeyGame::SecretKeyGame(SecretKeyConfig config)
    : config_(std::move(config)), rng_(mix_seed(config_.seed, 0)) {
  if (config_.keys < 3) {
    throw ConfigError("secret_key.keys must be at least 3");
  }
  secret_indices_ = config_.secret_indices;
  if (secret_indices_.empty()) {
    std::vector<std::size_t> all(config_.keys);
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    Rng pick(mix_seed(config_.seed, 1));
    pick.shuffle(std::span(all));
    secret_indices_.assign(all.begin(), all.begin() + 3);
  }
  std::sort(secret_indices_.begin(), secret_indices_.end());
  if (secret_indices_.size() != 3 ||
      std::adjacent_find(secret_indices_.begin(), secret_indices_.end()) != secret_indices_.end() ||
      secret_indices_.back() >= config_.keys) {
    throw ConfigError("secret_key needs exactly 3 distinct secret indices below keys");
  }
}

std::vector<double> SecretKeyGame::reset() {
  state_.resize(config_.keys);
  for (double& v : state_) {
    v = static_cast<double>(rng_.integer(0, 10));
  }
  secret_ = skg_secret(static_cast<std::int64_t>(state_[secret_indices_[0]]),
                       static_cast<std::int64_t>(state_[secret_indices_[1]]),
                       static_cast<std::int64_t>(state_[secret_indices_[2]]));
  pending_ = true;
  return state_;
}

StepResult SecretKeyGame::step(std::size_t action) {
  const ActionSpace space = action_space();
  check_discrete(action, space);
  if (!pending_) {
    throw std::logic_error("secret_key: step after episode end requires reset");
  }
  pending_ = false;
  StepResult out;
  out.state = state_;
  out.reward = -std::abs(static_cast<double>(space.label(action) - secret_));
  out.done = true;
  return out;
}

ActionSpace SecretKeyGame::action_space() const {
  ActionSpace s;
  s.discrete = true;
  s.count = 81;
  s.first_label = -40;
  return s;
}

std::vector<std::string> SecretKeyGame::variable_names() const { return numbered("K", config_.keys); }

nlohmann::ordered_json SecretKeyGame::describe() const {
  nlohmann::ordered_json j;
  j["kind"] = kind();
  j["keys"] = config_.keys;
  j["secret_indices"] = secret_indices_;
  j["seed"] = config_.seed;
  return j;
}

// ---- Iterated Prisoner's Dilemma ----------------------------------------

int ipd_pair_code(Move agent, Move opponent) { return static_cast<int>(agent) + 2 * static_cast<int>(opponent); }

Move tfnt_policy(std::span<const Move> other_history, std::size_t n) {
  if (n == 0) {
    throw std::invalid_argument("TFNT needs N >= 1");
  }
  if (other_history.size() < n) {
    return cooperate;
  }
  const bool all_defect = std::all_of(other_history.end() - static_cast<std::ptrdiff_t>(n),
                                      other_history.end(), [](Move m) { return m == defect; });
  return all_defect ? defect : cooperate;
}

IteratedPrisonersDilemma::IteratedPrisonersDilemma(IpdConfig config) : config_(config) {
  if (config_.opponent_n < 1) {
    throw ConfigError("ipd.opponent_n must be >= 1");
  }
  if (config_.history < 1) {
    throw ConfigError("ipd.history must be >= 1");
  }
  if (config_.rounds < 1) {
    throw ConfigError("ipd.rounds must be >= 1");
  }
  for (const auto& row : config_.payoff) {
    for (double p : row) {
      if (!(p >= 0.0)) throw ConfigError("ipd payoffs must be non-negative");
    }
  }
  reset();
}

std::vector<double> IteratedPrisonersDilemma::state() const {
  return std::vector<double>(codes_.begin(), codes_.end());
}

std::vector<double> IteratedPrisonersDilemma::reset() {
  if (!config_.continuing || !started_) {
    agent_moves_.clear();
    codes_.assign(config_.history, ipd_pair_code(cooperate, cooperate));
    last_opponent_ = cooperate;
    started_ = true;
  }
  round_ = 0;
  return state();
}

StepResult IteratedPrisonersDilemma::step(std::size_t action) {
  check_discrete(action, action_space());
  if (round_ >= config_.rounds) {
    throw std::logic_error("ipd: step after episode end requires reset");
  }
  const Move agent = action == 1 ? defect : cooperate;
  const Move opponent = tfnt_policy(agent_moves_, config_.opponent_n);
  agent_moves_.push_back(agent);
  if (agent_moves_.size() > config_.opponent_n) agent_moves_.erase(agent_moves_.begin());
  codes_.insert(codes_.begin(), ipd_pair_code(agent, opponent));
  codes_.pop_back();
  ++round_;
  last_opponent_ = opponent;
  last_opponent_payoff_ = config_.payoff[opponent][agent];

  StepResult out;
  out.state = state();
  out.reward = config_.payoff[agent][opponent];
  out.done = round_ >= config_.rounds;
  out.truncated = out.done;
  return out;
}

ActionSpace IteratedPrisonersDilemma::action_space() const {
  ActionSpace s;
  s.discrete = true;
  s.count = 2;
  return s;
}

std::vector<std::string> IteratedPrisonersDilemma::variable_names() const {
  return numbered("X", config_.history);
}

nlohmann::ordered_json IteratedPrisonersDilemma::describe() const {
  nlohmann::ordered_json j;
  j["kind"] = kind();
  j["opponent_n"] = config_.opponent_n;
  j["history"] = config_.history;
  j["rounds"] = config_.rounds;
  j["continuing"] = config_.continuing;
  j["payoff"] = {{"CC", config_.payoff[0][0]}, {"DC", config_.payoff[1][0]},
                 {"CD", config_.payoff[0][1]}, {"DD", config_.payoff[1][1]}};
  j["pair_codes"] = {{"CC", 0}, {"DC", 1}, {"CD", 2}, {"DD", 3}};
  j["seed"] = config_.seed;
  return j;
}

// ---- Cart pole ------------------------------------------------------------

namespace {
constexpr double kCartMass = 1.0;
constexpr double kPoleMass = 0.1;
constexpr double kHalfLength = 0.5;
constexpr double kForce = 10.0;
constexpr double kTau = 0.02;
constexpr double kThetaLimit = 12.0 * 2.0 * std::numbers::pi / 360.0;
constexpr double kXLimit = 2.4;
}  // namespace

CartPole::CartPole(CartPoleConfig config) : config_(config), rng_(config.seed) {
  if (config_.max_steps == 0) {
    throw ConfigError("cartpole.max_steps must be positive");
  }
  if (!(config_.doped_range > 0.0)) {
    throw ConfigError("cartpole.doped_range must be positive");
  }
}

std::array<double, 4> CartPole::physics(const std::array<double, 4>& s, double force, double gravity) {
  const auto [x, x_dot, theta, theta_dot] = s;
  const double total = kCartMass + kPoleMass;
  const double pml = kPoleMass * kHalfLength;
  const double cos_t = std::cos(theta);
  const double sin_t = std::sin(theta);
  const double temp = (force + pml * theta_dot * theta_dot * sin_t) / total;
  const double theta_acc =
      (gravity * sin_t - cos_t * temp) / (kHalfLength * (4.0 / 3.0 - kPoleMass * cos_t * cos_t / total));
  const double x_acc = temp - pml * theta_acc * cos_t / total;
  return {x + kTau * x_dot, x_dot + kTau * x_acc, theta + kTau * theta_dot, theta_dot + kTau * theta_acc};
}

std::vector<double> CartPole::observe() {
  std::vector<double> s(physical_.begin(), physical_.end());
  for (std::size_t i = 0; i < config_.doped; ++i) {
    s.push_back(rng_.uniform(-config_.doped_range, config_.doped_range));
  }
  return s;
}

std::vector<double> CartPole::reset() {
  for (double& v : physical_) {
    v = rng_.uniform(-0.05, 0.05);
  }
  steps_ = 0;
  return observe();
}

StepResult CartPole::step(std::size_t action) {
  check_discrete(action, action_space());
  physical_ = physics(physical_, action == 1 ? kForce : -kForce, config_.gravity);
  ++steps_;
  StepResult out;
  out.state = observe();
  out.reward = 1.0;
  const bool failed = std::abs(physical_[0]) > kXLimit || std::abs(physical_[2]) > kThetaLimit;
  out.truncated = !failed && steps_ >= config_.max_steps;
  out.done = failed || out.truncated;
  return out;
}

ActionSpace CartPole::action_space() const {
  ActionSpace s;
  s.discrete = true;
  s.count = 2;
  return s;
}

std::vector<std::string> CartPole::variable_names() const {
  std::vector<std::string> names{"x", "x_dot", "theta", "theta_dot"};
  for (const auto& n : numbered("rand", config_.doped)) names.push_back(n);
  return names;
}

nlohmann::ordered_json CartPole::describe() const {
  nlohmann::ordered_json j;
  j["kind"] = kind();
  j["gravity"] = config_.gravity;
  j["doped"] = config_.doped;
  j["doped_range"] = config_.doped_range;
  j["max_steps"] = config_.max_steps;
  j["seed"] = config_.seed;
  return j;
}

// ---- Pendulum -------------------------------------------------------------

Pendulum::Pendulum(PendulumConfig config) : config_(config), rng_(config.seed) {
  if (config_.max_steps == 0) {
    throw ConfigError("pendulum.max_steps must be positive");
  }
}

std::vector<double> Pendulum::observe() {
  std::vector<double> s{std::cos(theta_), std::sin(theta_), theta_dot_};
  for (std::size_t i = 0; i < config_.doped; ++i) {
    s.push_back(rng_.uniform(-config_.doped_range, config_.doped_range));
  }
  return s;
}

std::vector<double> Pendulum::reset() {
  theta_ = rng_.uniform(-std::numbers::pi, std::numbers::pi);
  theta_dot_ = rng_.uniform(-1.0, 1.0);
  steps_ = 0;
  return observe();
}

StepResult Pendulum::step(std::span<const double> action) {
  if (action.size() != 1) {
    throw std::invalid_argument("pendulum takes a single torque");
  }
  constexpr double g = 10.0, m = 1.0, l = 1.0, dt = 0.05, max_speed = 8.0, max_torque = 2.0;
  const double u = std::clamp(action[0], -max_torque, max_torque);
  const double angle = std::remainder(theta_, 2.0 * std::numbers::pi);
  const double cost = angle * angle + 0.1 * theta_dot_ * theta_dot_ + 0.001 * u * u;
  theta_dot_ = std::clamp(theta_dot_ + (3.0 * g / (2.0 * l) * std::sin(theta_) + 3.0 / (m * l * l) * u) * dt,
                          -max_speed, max_speed);
  theta_ += theta_dot_ * dt;
  ++steps_;
  StepResult out;
  out.state = observe();
  out.reward = -cost;
  out.done = out.truncated = steps_ >= config_.max_steps;
  return out;
}

ActionSpace Pendulum::action_space() const {
  ActionSpace s;
  s.discrete = false;
  s.low = {-2.0};
  s.high = {2.0};
  return s;
}

std::vector<std::string> Pendulum::variable_names() const {
  std::vector<std::string> names{"cos_theta", "sin_theta", "theta_dot"};
  for (const auto& n : numbered("rand", config_.doped)) names.push_back(n);
  return names;
}

nlohmann::ordered_json Pendulum::describe() const {
  nlohmann::ordered_json j;
  j["kind"] = kind();
  j["doped"] = config_.doped;
  j["doped_range"] = config_.doped_range;
  j["max_steps"] = config_.max_steps;
  j["seed"] = config_.seed;
  return j;
}

// ---- small test environments ---------------------------------------------

PointMass::PointMass(std::uint64_t seed) : rng_(seed) {}

std::vector<double> PointMass::reset() {
  x_ = rng_.uniform(-1.0, 1.0);
  steps_ = 0;
  return {x_};
}

StepResult PointMass::step(std::span<const double> action) {
  if (action.size() != 1) {
    throw std::invalid_argument("point_mass takes a single velocity");
  }
  x_ = std::clamp(x_ + 0.1 * std::clamp(action[0], -1.0, 1.0), -1.0, 1.0);
  ++steps_;
  StepResult out;
  out.state = {x_};
  out.reward = -std::abs(x_);
  out.done = out.truncated = steps_ >= 20;
  return out;
}

ActionSpace PointMass::action_space() const {
  ActionSpace s;
  s.discrete = false;
  s.low = {-1.0};
  s.high = {1.0};
  return s;
}

nlohmann::ordered_json PointMass::describe() const { return {{"kind", kind()}}; }

Bandit::Bandit(std::vector<double> means, double noise, std::uint64_t seed)
    : means_(std::move(means)), noise_(noise), rng_(seed) {
  if (means_.empty()) {
    throw ConfigError("bandit needs at least one arm");
  }
}

StepResult Bandit::step(std::size_t action) {
  check_discrete(action, action_space());
  StepResult out;
  out.state = {1.0};
  out.reward = means_[action] + noise_ * rng_.normal();
  out.done = true;
  return out;
}

ActionSpace Bandit::action_space() const {
  ActionSpace s;
  s.discrete = true;
  s.count = means_.size();
  return s;
}

nlohmann::ordered_json Bandit::describe() const {
  return {{"kind", kind()}, {"means", means_}, {"noise", noise_}};
}

std::vector<double> Chain::reset() {
  position_ = 0;
  return {1.0, 0.0};
}

StepResult Chain::step(std::size_t action) {
  check_discrete(action, action_space());
  if (position_ > 1) {
    throw std::logic_error("chain: step after episode end requires reset");
  }
  StepResult out;
  out.reward = rewards_[position_];
  ++position_;
  out.done = position_ > 1;
  out.state = out.done ? std::vector<double>{0.0, 0.0} : std::vector<double>{0.0, 1.0};
  return out;
}

ActionSpace Chain::action_space() const {
  ActionSpace s;
  s.discrete = true;
  s.count = 1;
  return s;
}

nlohmann::ordered_json Chain::describe() const { return {{"kind", kind()}, {"rewards", rewards_}}; }

ProjectedEnv::ProjectedEnv(std::unique_ptr<Env> inner, std::vector<std::size_t> keep)
    : inner_(std::move(inner)), keep_(std::move(keep)) {
  const std::size_t dim = inner_->state_dim();
  if (keep_.empty()) {
    throw ConfigError("projected state must keep at least one variable");
  }
  for (std::size_t k : keep_) {
    if (k >= dim) {
      throw ConfigError("projected variable index " + std::to_string(k) + " out of range");
    }
  }
}

std::vector<double> ProjectedEnv::project(const std::vector<double>& state) const {
  std::vector<double> out;
  out.reserve(keep_.size());
  for (std::size_t k : keep_) out.push_back(state[k]);
  return out;
}

std::vector<double> ProjectedEnv::reset() { return project(inner_->reset()); }

StepResult ProjectedEnv::step(std::size_t action) {
  StepResult r = inner_->step(action);
  r.state = project(r.state);
  return r;
}

StepResult ProjectedEnv::step(std::span<const double> action) {
  StepResult r = inner_->step(action);
  r.state = project(r.state);
  return r;
}

std::vector<std::string> ProjectedEnv::variable_names() const {
  const auto all = inner_->variable_names();
  std::vector<std::string> out;
  for (std::size_t k : keep_) out.push_back(all[k]);
  return out;
}

nlohmann::ordered_json ProjectedEnv::describe() const {
  nlohmann::ordered_json j = inner_->describe();
  j["keep"] = keep_;
  return j;
}

}  // namespace terc
