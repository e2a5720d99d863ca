#include "terc/rl.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <stdexcept>

namespace terc {

using neural::Activation;
using neural::MlpParams;

// ---- trajectories -----------------------------------------------------------

double TrajectoryBatch::mean_last_rewards(std::size_t count) const {
  const std::size_t n = std::min(count, episodes.size());
  if (n == 0) return 0.0;
  double sum = 0.0;
  for (std::size_t i = episodes.size() - n; i < episodes.size(); ++i) sum += episodes[i].reward;
  return sum / static_cast<double>(n);
}

double TrajectoryBatch::mean_last_step_rewards(std::size_t count) const {
  const std::size_t n = std::min(count, rows.size());
  if (n == 0) return 0.0;
  double sum = 0.0;
  for (std::size_t i = rows.size() - n; i < rows.size(); ++i) sum += rows[i].reward;
  return sum / static_cast<double>(n);
}

TrajectoryRecorder::TrajectoryRecorder(const Env& env, nlohmann::ordered_json agent, std::uint64_t seed) {
  batch_.variable_names = env.variable_names();
  batch_.discrete_state = env.discrete_state();
  batch_.discrete_actions = env.action_space().discrete;
  batch_.env = env.describe();
  batch_.agent = std::move(agent);
  batch_.seed = seed;
}

void TrajectoryRecorder::record(std::size_t episode, std::span<const double> state,
                                std::span<const double> action, double reward) {
  if (batch_.episodes.empty() || batch_.episodes.back().episode != episode) {
    if (!batch_.episodes.empty() && episode < batch_.episodes.back().episode) {
      throw std::logic_error("episodes must be recorded in ascending order");
    }
    batch_.episodes.push_back({episode, 0, 0.0});
    next_t_ = 0;
  }
  EpisodeSummary& summary = batch_.episodes.back();
  batch_.rows.push_back({episode, next_t_++, {state.begin(), state.end()}, {action.begin(), action.end()}, reward});
  summary.steps += 1;
  summary.reward += reward;
}

TrajectoryBatch TrajectoryRecorder::finish() && { return std::move(batch_); }

SampleTable to_sample_table(const TrajectoryBatch& batch) {
  if (batch.rows.empty()) {
    throw std::invalid_argument("trajectory batch has no rows");
  }
  const std::size_t n = batch.rows.size();
  SampleTable table;
  for (std::size_t k = 0; k < batch.variable_names.size(); ++k) {
    if (batch.discrete_state) {
      std::vector<std::int64_t> col(n);
      for (std::size_t i = 0; i < n; ++i) col[i] = std::llround(batch.rows[i].state.at(k));
      table.add_discrete(batch.variable_names[k], std::move(col));
    } else {
      std::vector<double> col(n);
      for (std::size_t i = 0; i < n; ++i) col[i] = batch.rows[i].state.at(k);
      table.add_real(batch.variable_names[k], std::move(col));
    }
  }
  if (batch.rows.front().action.size() != 1) {
    throw std::invalid_argument("analysis needs a single action component per step");
  }
  if (batch.discrete_actions) {
    std::vector<std::int64_t> col(n);
    for (std::size_t i = 0; i < n; ++i) col[i] = std::llround(batch.rows[i].action.at(0));
    table.add_discrete("action", std::move(col));
  } else {
    std::vector<double> col(n);
    for (std::size_t i = 0; i < n; ++i) col[i] = batch.rows[i].action.at(0);
    table.add_real("action", std::move(col));
  }
  table.set_action("action");
  return table;
}

TrajectoryBatch take_episodes(const TrajectoryBatch& batch, std::size_t first, std::size_t count) {
  TrajectoryBatch out;
  out.variable_names = batch.variable_names;
  out.discrete_state = batch.discrete_state;
  out.discrete_actions = batch.discrete_actions;
  out.env = batch.env;
  out.agent = batch.agent;
  out.seed = batch.seed;
  out.notes = batch.notes;
  const std::size_t begin = std::min(first, batch.episodes.size());
  const std::size_t end = std::min(batch.episodes.size(), begin + count);
  std::set<std::size_t> keep;
  for (std::size_t i = begin; i < end; ++i) {
    out.episodes.push_back(batch.episodes[i]);
    keep.insert(batch.episodes[i].episode);
  }
  for (const TrajectoryRow& row : batch.rows) {
    if (keep.count(row.episode)) out.rows.push_back(row);
  }
  return out;
}

std::vector<TrajectoryBatch> split_quartiles(const TrajectoryBatch& batch) {
  const std::size_t e = batch.episodes.size();
  if (e < 4) {
    throw std::invalid_argument("quartile split needs at least 4 episodes, got " + std::to_string(e));
  }
  const std::size_t block = e / 4;
  std::vector<TrajectoryBatch> out;
  for (std::size_t q = 0; q < 4; ++q) {
    const std::size_t count = q == 3 ? e - 3 * block : block;
    out.push_back(take_episodes(batch, q * block, count));
    out.back().notes["quartile"] = q + 1;
  }
  return out;
}

std::vector<SampleTable> quartile_tables(const TrajectoryBatch& batch) {
  std::vector<SampleTable> out;
  for (const TrajectoryBatch& b : split_quartiles(batch)) out.push_back(to_sample_table(b));
  return out;
}

TrajectoryBatch expert_filter(const TrajectoryBatch& batch, double threshold) {
  TrajectoryBatch out = take_episodes(batch, 0, 0);
  std::set<std::size_t> keep;
  for (const EpisodeSummary& ep : batch.episodes) {
    if (ep.reward >= threshold) {
      out.episodes.push_back(ep);
      keep.insert(ep.episode);
    }
  }
  for (const TrajectoryRow& row : batch.rows) {
    if (keep.count(row.episode)) out.rows.push_back(row);
  }
  if (std::isfinite(threshold)) out.notes["expert_threshold"] = threshold;
  if (out.episodes.empty()) out.notes["empty"] = true;
  return out;
}

// ---- policies -----------------------------------------------------------------

namespace {

std::size_t sample_categorical(std::span<const double> probs, Rng& rng) {
  const double u = rng.uniform();
  double c = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    c += probs[i];
    if (u < c) return i;
  }
  return probs.size() - 1;
}

std::vector<double> clip_to(const ActionSpace& space, std::span<const double> action) {
  std::vector<double> out(action.begin(), action.end());
  for (std::size_t j = 0; j < out.size() && j < space.low.size(); ++j) {
    out[j] = std::clamp(out[j], space.low[j], space.high[j]);
  }
  return out;
}

// Applies a policy output to the environment; returns the step and the recorded action.
std::pair<StepResult, std::vector<double>> apply(Env& env, const ActionSpace& space,
                                                 std::span<const double> action) {
  if (space.discrete) {
    const auto index = static_cast<std::size_t>(action[0]);
    return {env.step(index), {static_cast<double>(space.label(index))}};
  }
  std::vector<double> applied = clip_to(space, action);
  StepResult r = env.step(std::span<const double>(applied));
  return {std::move(r), std::move(applied)};
}

std::vector<double> scaled(std::span<const double> state, double offset, double scale) {
  std::vector<double> out(state.size());
  for (std::size_t i = 0; i < state.size(); ++i) out[i] = (state[i] - offset) * scale;
  return out;
}

Matrix row_matrix(std::span<const double> v) {
  Matrix m(1, v.size());
  std::copy(v.begin(), v.end(), m.data.begin());
  return m;
}

void require_finite_rates(std::initializer_list<double> rates, const char* what) {
  for (double r : rates) {
    if (!(r >= 0.0) || !std::isfinite(r)) {
      throw ConfigError(std::string(what) + " learning rates must be finite and non-negative");
    }
  }
}

}  // namespace

Policy uniform_random_policy(const ActionSpace& space) {
  return [space](std::span<const double>, Rng& rng) -> std::vector<double> {
    if (space.discrete) return {static_cast<double>(rng.below(space.count))};
    std::vector<double> a(space.low.size());
    for (std::size_t j = 0; j < a.size(); ++j) a[j] = rng.uniform(space.low[j], space.high[j]);
    return a;
  };
}

TrajectoryBatch rollout(Env& env, const Policy& policy, std::size_t episodes, std::uint64_t seed) {
  const ActionSpace space = env.action_space();
  Rng rng(mix_seed(seed, 3));
  TrajectoryRecorder rec(env, {{"kind", "fixed_policy"}}, seed);
  for (std::size_t ep = 0; ep < episodes; ++ep) {
    std::vector<double> state = env.reset();
    while (true) {
      const std::vector<double> action = policy(state, rng);
      auto [res, applied] = apply(env, space, action);
      rec.record(ep, state, applied, res.reward);
      if (res.done) break;
      state = std::move(res.state);
    }
  }
  return std::move(rec).finish();
}

// ---- tabular Q-learning ----------------------------------------------------------

void QConfig::validate() const {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("q.alpha must lie in (0, 1]");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("q.gamma must lie in [0, 1]");
  if (!(epsilon_start >= 0.0 && epsilon_start <= 1.0)) throw ConfigError("q.epsilon must lie in [0, 1]");
}

std::vector<std::int64_t> QTable::key(std::span<const double> state) {
  std::vector<std::int64_t> k(state.size());
  for (std::size_t i = 0; i < state.size(); ++i) k[i] = std::llround(state[i]);
  return k;
}

std::vector<double> QTable::values(std::span<const double> state) const {
  const auto it = values_.find(key(state));
  return it == values_.end() ? std::vector<double>(actions_, 0.0) : it->second;
}

std::vector<double>& QTable::mutable_values(std::span<const double> state) {
  auto [it, inserted] = values_.try_emplace(key(state), actions_, 0.0);
  return it->second;
}

std::size_t QTable::greedy(std::span<const double> state, Rng& rng) const {
  const std::vector<double> q = values(state);
  const double best = *std::max_element(q.begin(), q.end());
  std::vector<std::size_t> ties;
  for (std::size_t a = 0; a < q.size(); ++a) {
    if (q[a] == best) ties.push_back(a);
  }
  return ties.size() == 1 ? ties[0] : ties[rng.below(ties.size())];
}

nlohmann::ordered_json QTable::to_json() const {
  nlohmann::ordered_json j;
  j["format"] = "terc-qtable";
  j["version"] = 1;
  j["actions"] = actions_;
  nlohmann::ordered_json entries = nlohmann::ordered_json::array();
  for (const auto& [k, v] : values_) entries.push_back({{"state", k}, {"values", v}});
  j["entries"] = std::move(entries);
  return j;
}

QTable QTable::from_json(const nlohmann::ordered_json& j) {
  if (j.value("format", "") != "terc-qtable") {
    throw std::invalid_argument("not a Q-table checkpoint");
  }
  QTable t(j.at("actions").get<std::size_t>());
  for (const auto& e : j.at("entries")) {
    auto values = e.at("values").get<std::vector<double>>();
    if (values.size() != t.actions_) throw std::invalid_argument("Q-table entry has the wrong action count");
    t.values_[e.at("state").get<std::vector<std::int64_t>>()] = std::move(values);
  }
  return t;
}

QResult train_q(Env& env, std::size_t episodes, const QConfig& config, std::uint64_t seed) {
  config.validate();
  const ActionSpace space = env.action_space();
  if (!space.discrete || !env.discrete_state()) {
    throw ConfigError("q-learning needs discrete states and discrete actions (env " + env.kind() + ")");
  }
  Rng rng(mix_seed(seed, 1));
  QTable q(space.count);
  TrajectoryRecorder rec(env,
                         {{"kind", "q"},
                          {"alpha", config.alpha},
                          {"gamma", config.gamma},
                          {"epsilon_start", config.epsilon_start},
                          {"decay_steps", config.decay_steps}},
                         seed);
  std::size_t step = 0;
  for (std::size_t ep = 0; ep < episodes; ++ep) {
    std::vector<double> state = env.reset();
    while (true) {
      double epsilon = 0.0;
      if (config.decay_steps > 0) {
        epsilon = std::max(0.0, config.epsilon_start *
                                    (1.0 - static_cast<double>(step) / static_cast<double>(config.decay_steps)));
      }
      const std::size_t action = rng.uniform() < epsilon ? rng.below(space.count) : q.greedy(state, rng);
      StepResult res = env.step(action);
      const double label = static_cast<double>(space.label(action));
      rec.record(ep, state, std::span<const double>(&label, 1), res.reward);
      double target = res.reward;
      if (!res.done || res.truncated) {
        const std::vector<double> next = q.values(res.state);
        target += config.gamma * *std::max_element(next.begin(), next.end());
      }
      double& value = q.mutable_values(state)[action];
      value += config.alpha * (target - value);
      ++step;
      if (res.done) break;
      state = std::move(res.state);
    }
  }
  return {std::move(q), std::move(rec).finish()};
}

// ---- one-step actor-critic ---------------------------------------------------------

void AcConfig::validate() const {
  if (hidden == 0) throw ConfigError("ac.hidden must be positive");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("ac.gamma must lie in [0, 1]");
  require_finite_rates({actor_lr, critic_lr}, "ac");
}

nlohmann::ordered_json AcConfig::to_json() const {
  return {{"kind", "ac"},
          {"hidden", hidden},
          {"gamma", gamma},
          {"actor_lr", actor_lr},
          {"critic_lr", critic_lr},
          {"optimizer", optimizer == neural::OptimKind::adam ? "adam" : "sgd"},
          {"discount_actor", discount_actor},
          {"input_offset", input_offset},
          {"input_scale", input_scale}};
}

AcResult train_actor_critic(Env& env, std::size_t episodes, const AcConfig& config, std::uint64_t seed) {
  config.validate();
  const ActionSpace space = env.action_space();
  if (!space.discrete) {
    throw ConfigError("actor-critic needs a discrete action space (env " + env.kind() + ")");
  }
  const std::size_t dim = env.state_dim();
  AcResult out;
  out.actor = neural::mlp_init(neural::single_hidden(dim, config.hidden, space.count, Activation::relu, Activation::softmax),
                               mix_seed(seed, 1));
  out.critic = neural::mlp_init(neural::single_hidden(dim, config.hidden, 1, Activation::relu, Activation::linear),
                                mix_seed(seed, 2));
  neural::OptimState actor_opt = neural::make_optimizer(config.optimizer, config.actor_lr);
  neural::OptimState critic_opt = neural::make_optimizer(config.optimizer, config.critic_lr);
  Rng rng(mix_seed(seed, 3));
  TrajectoryRecorder rec(env, config.to_json(), seed);

  for (std::size_t ep = 0; ep < episodes; ++ep) {
    std::vector<double> state = env.reset();
    double discount = 1.0;
    try {
      while (true) {
        const std::vector<double> x = scaled(state, config.input_offset, config.input_scale);
        const Matrix input = row_matrix(x);
        const std::vector<double> probs = neural::mlp_forward(out.actor, x);
        const std::size_t action = sample_categorical(probs, rng);
        StepResult res = env.step(action);
        const double label = static_cast<double>(space.label(action));
        rec.record(ep, state, std::span<const double>(&label, 1), res.reward);

        const double value = neural::mlp_forward(out.critic, x)[0];
        const bool terminal = res.done && !res.truncated;
        const double next_value =
            terminal ? 0.0 : neural::mlp_forward(out.critic, scaled(res.state, config.input_offset, config.input_scale))[0];
        const double target = res.reward + config.gamma * next_value;
        const double delta = target - value;

        Matrix targets(1, 1, target);
        const auto critic_grad = neural::mlp_grad(out.critic, input, neural::MseLoss{targets});
        neural::opt_step(out.critic, critic_grad.gradient, critic_opt);

        const double weight = discount * delta;
        const auto actor_grad = neural::mlp_grad(
            out.actor, input, neural::PolicyGradientLoss{std::span<const double>(&weight, 1), std::span<const std::size_t>(&action, 1)});
        neural::opt_step(out.actor, actor_grad.gradient, actor_opt);

        if (config.discount_actor) discount *= config.gamma;
        if (res.done) break;
        state = std::move(res.state);
      }
    } catch (const NumericalError& e) {
      throw TrainingDiverged("actor-critic diverged in episode " + std::to_string(ep) + ": " + e.what(), ep,
                             std::move(rec).finish());
    }
  }
  out.batch = std::move(rec).finish();
  return out;
}

// ---- PPO ---------------------------------------------------------------------------------

void PpoConfig::validate() const {
  if (hidden == 0) throw ConfigError("ppo.hidden must be positive");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("ppo.gamma must lie in [0, 1]");
  require_finite_rates({lr}, "ppo");
  if (!(clip > 0.0 && clip < 1.0)) throw ConfigError("ppo.clip must lie in (0, 1)");
  if (minibatch == 0) throw ConfigError("ppo.minibatch must be positive");
  if (horizon == 0) throw ConfigError("ppo.horizon must be positive");
  if (epochs == 0) throw ConfigError("ppo.epochs must be positive");
  if (!(entropy_coef >= 0.0)) throw ConfigError("ppo.entropy_coef must be non-negative");
  if (!(update_scale > 0.0 && update_scale <= 1.0)) throw ConfigError("ppo.update_scale must lie in (0, 1]");
}

nlohmann::ordered_json PpoConfig::to_json() const {
  return {{"kind", "ppo"},
          {"hidden", hidden},
          {"activation", neural::to_string(activation)},
          {"gamma", gamma},
          {"lr", lr},
          {"clip", clip},
          {"minibatch", minibatch},
          {"horizon", horizon},
          {"epochs", epochs},
          {"entropy_coef", entropy_coef},
          {"update_scale", update_scale},
          {"damp_updates", damp_updates},
          {"initial_log_std", initial_log_std}};
}

double ppo_clip_factor(double ratio, double advantage, double clip) {
  return advantage >= 0.0 ? std::min(ratio, 1.0 + clip) : std::max(ratio, 1.0 - clip);
}

double ppo_surrogate_weight(double ratio, double advantage, double clip) {
  const bool active = advantage >= 0.0 ? ratio < 1.0 + clip : ratio > 1.0 - clip;
  return active ? advantage * ratio : 0.0;
}

namespace {

constexpr double kLogSqrtTwoPi = 0.91893853320467274178;

// Log-probabilities of the recorded actions under the current actor.
std::vector<double> log_probs(const MlpParams& actor, const Matrix& states, bool discrete,
                              std::span<const std::size_t> indices, const Matrix& actions,
                              std::span<const double> log_std) {
  const Matrix out = neural::mlp_forward_batch(actor, states);
  std::vector<double> lp(states.rows);
  for (std::size_t i = 0; i < states.rows; ++i) {
    if (discrete) {
      lp[i] = std::log(std::max(out(i, indices[i]), std::numeric_limits<double>::min()));
    } else {
      double s = 0.0;
      for (std::size_t j = 0; j < out.cols; ++j) {
        const double z = (actions(i, j) - out(i, j)) * std::exp(-log_std[j]);
        s += -0.5 * z * z - log_std[j] - kLogSqrtTwoPi;
      }
      lp[i] = s;
    }
  }
  return lp;
}

void blend(std::span<double> current, std::span<const double> start, double scale) {
  for (std::size_t i = 0; i < current.size(); ++i) current[i] = start[i] + scale * (current[i] - start[i]);
}

}  // namespace

PpoResult train_ppo(Env& env, std::size_t steps, const PpoConfig& config, std::uint64_t seed) {
  config.validate();
  const ActionSpace space = env.action_space();
  const bool discrete = space.discrete;
  const std::size_t dim = env.state_dim();
  const std::size_t act_dim = discrete ? space.count : space.low.size();
  if (act_dim == 0) throw ConfigError("ppo needs a non-empty action space");

  PpoResult out;
  out.actor = neural::mlp_init(
      neural::single_hidden(dim, config.hidden, act_dim, config.activation, discrete ? Activation::softmax : Activation::linear),
      mix_seed(seed, 1));
  out.critic = neural::mlp_init(neural::single_hidden(dim, config.hidden, 1, config.activation, Activation::linear),
                                mix_seed(seed, 2));
  if (!discrete) out.log_std.assign(act_dim, config.initial_log_std);
  neural::OptimState actor_opt = neural::make_optimizer(neural::OptimKind::adam, config.lr);
  neural::OptimState critic_opt = neural::make_optimizer(neural::OptimKind::adam, config.lr);
  neural::OptimState log_std_opt = neural::make_optimizer(neural::OptimKind::adam, config.lr);
  Rng rng(mix_seed(seed, 3));
  TrajectoryRecorder rec(env, config.to_json(), seed);

  std::vector<double> state = env.reset();
  std::size_t episode = 0;
  std::size_t taken = 0;
  std::size_t window_index = 0;
  while (taken < steps) {
    const std::size_t window = std::min(config.horizon, steps - taken);
    Matrix states(window, dim);
    std::vector<std::size_t> indices(discrete ? window : 0);
    Matrix actions(discrete ? 0 : window, discrete ? 0 : act_dim);
    std::vector<double> rewards(window), old_lp(window), values(window), bootstrap(window, 0.0);
    std::vector<char> ended(window, 0), terminal(window, 0);

    try {
      for (std::size_t i = 0; i < window; ++i) {
        std::copy(state.begin(), state.end(), states.row(i).begin());
        const std::vector<double> head = neural::mlp_forward(out.actor, state);
        std::vector<double> raw;
        if (discrete) {
          const std::size_t a = sample_categorical(head, rng);
          indices[i] = a;
          old_lp[i] = std::log(std::max(head[a], std::numeric_limits<double>::min()));
          raw = {static_cast<double>(a)};
        } else {
          raw.resize(act_dim);
          double lp = 0.0;
          for (std::size_t j = 0; j < act_dim; ++j) {
            const double z = rng.normal();
            raw[j] = head[j] + std::exp(out.log_std[j]) * z;
            actions(i, j) = raw[j];
            lp += -0.5 * z * z - out.log_std[j] - kLogSqrtTwoPi;
          }
          old_lp[i] = lp;
        }
        values[i] = neural::mlp_forward(out.critic, state)[0];
        auto [res, applied] = apply(env, space, raw);
        rec.record(episode, state, applied, res.reward);
        rewards[i] = res.reward;
        if (res.done) {
          ended[i] = 1;
          terminal[i] = !res.truncated;
          if (res.truncated) bootstrap[i] = neural::mlp_forward(out.critic, res.state)[0];
          ++episode;
          state = env.reset();
        } else {
          state = std::move(res.state);
        }
      }

      // Discounted returns, bootstrapped at truncations and at the window end.
      std::vector<double> returns(window);
      double next = neural::mlp_forward(out.critic, state)[0];
      for (std::size_t k = window; k-- > 0;) {
        if (ended[k]) next = terminal[k] ? 0.0 : bootstrap[k];
        next = rewards[k] + config.gamma * next;
        returns[k] = next;
      }
      std::vector<double> adv(window);
      for (std::size_t k = 0; k < window; ++k) adv[k] = returns[k] - values[k];
      if (window > 1) {
        const double m = mean(adv);
        const double s = sample_stddev(adv);
        for (double& a : adv) a = (a - m) / (s + 1e-8);
      }

      const MlpParams start_actor = out.actor;
      const std::vector<double> start_log_std = out.log_std;
      {
        const std::vector<double> lp = log_probs(out.actor, states, discrete, indices, actions, out.log_std);
        double worst = 0.0;
        for (std::size_t k = 0; k < window; ++k) worst = std::max(worst, std::abs(std::exp(lp[k] - old_lp[k]) - 1.0));
        out.first_epoch_ratio_error.push_back(worst);
      }

      std::vector<std::size_t> order(window);
      for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        rng.shuffle(std::span<std::size_t>(order));
        for (std::size_t begin = 0; begin < window; begin += config.minibatch) {
          const std::size_t b = std::min(config.minibatch, window - begin);
          Matrix mb_states(b, dim);
          Matrix mb_actions(discrete ? 0 : b, discrete ? 0 : act_dim);
          std::vector<std::size_t> mb_indices(discrete ? b : 0);
          Matrix mb_returns(b, 1);
          std::vector<double> mb_old(b), mb_adv(b);
          for (std::size_t r = 0; r < b; ++r) {
            const std::size_t k = order[begin + r];
            std::copy(states.row(k).begin(), states.row(k).end(), mb_states.row(r).begin());
            if (discrete) {
              mb_indices[r] = indices[k];
            } else {
              std::copy(actions.row(k).begin(), actions.row(k).end(), mb_actions.row(r).begin());
            }
            mb_returns(r, 0) = returns[k];
            mb_old[r] = old_lp[k];
            mb_adv[r] = adv[k];
          }
          const std::vector<double> lp = log_probs(out.actor, mb_states, discrete, mb_indices, mb_actions, out.log_std);
          std::vector<double> weights(b);
          for (std::size_t r = 0; r < b; ++r) {
            weights[r] = ppo_surrogate_weight(std::exp(lp[r] - mb_old[r]), mb_adv[r], config.clip);
          }

          neural::PolicyGradientLoss loss{weights};
          loss.entropy_coef = config.entropy_coef;
          if (discrete) {
            loss.discrete_actions = mb_indices;
          } else {
            loss.continuous_actions = &mb_actions;
            loss.log_std = out.log_std;
          }
          const auto actor_grad = neural::mlp_grad(out.actor, mb_states, loss);

          if (!discrete) {
            // d/d log_std of -mean w log pi - entropy_coef * entropy.
            const Matrix mu = neural::mlp_forward_batch(out.actor, mb_states);
            std::vector<double> g(act_dim, 0.0);
            for (std::size_t j = 0; j < act_dim; ++j) {
              const double inv_var = std::exp(-2.0 * out.log_std[j]);
              for (std::size_t r = 0; r < b; ++r) {
                const double d = mb_actions(r, j) - mu(r, j);
                g[j] -= weights[r] * (d * d * inv_var - 1.0);
              }
              g[j] = g[j] / static_cast<double>(b) - config.entropy_coef;
            }
            neural::opt_step(std::span<double>(out.log_std), std::span<const double>(g), log_std_opt);
          }
          neural::opt_step(out.actor, actor_grad.gradient, actor_opt);

          const auto critic_grad = neural::mlp_grad(out.critic, mb_states, neural::MseLoss{mb_returns});
          neural::opt_step(out.critic, critic_grad.gradient, critic_opt);
        }
      }
      if (config.damp_updates) {
        blend(out.actor.flat(), start_actor.flat(), config.update_scale);
        blend(out.log_std, start_log_std, config.update_scale);
      }
    } catch (const NumericalError& e) {
      throw TrainingDiverged("ppo diverged in update window " + std::to_string(window_index) + ": " + e.what(),
                             window_index, std::move(rec).finish());
    }

    taken += window;
    ++window_index;
  }
  out.batch = std::move(rec).finish();
  return out;
}

Policy actor_policy(const MlpParams& actor, const ActionSpace& space, bool greedy, double input_offset,
                    double input_scale) {
  return [actor, space, greedy, input_offset, input_scale](std::span<const double> state, Rng& rng) -> std::vector<double> {
    const std::vector<double> head = neural::mlp_forward(actor, scaled(state, input_offset, input_scale));
    if (!space.discrete) return clip_to(space, head);
    if (greedy) {
      return {static_cast<double>(std::max_element(head.begin(), head.end()) - head.begin())};
    }
    return {static_cast<double>(sample_categorical(head, rng))};
  };
}

}  // namespace terc
