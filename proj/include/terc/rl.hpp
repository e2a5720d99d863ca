#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "terc/common.hpp"
#include "terc/envs.hpp"
#include "terc/neural.hpp"
#include "terc/sample_table.hpp"

namespace terc {

// ---- trajectories -----------------------------------------------------------

struct TrajectoryRow {
  std::size_t episode = 0;
  std::size_t t = 0;
  std::vector<double> state;   // observed before acting
  std::vector<double> action;  // discrete: one entry holding the action label
  double reward = 0.0;
};

struct EpisodeSummary {
  std::size_t episode = 0;
  std::size_t steps = 0;
  double reward = 0.0;  // sum of the recorded step rewards, in step order
};

struct TrajectoryBatch {
  std::vector<std::string> variable_names;
  bool discrete_state = false;
  bool discrete_actions = true;
  std::vector<TrajectoryRow> rows;
  std::vector<EpisodeSummary> episodes;  // ascending episode index
  nlohmann::ordered_json env = nlohmann::ordered_json::object();
  nlohmann::ordered_json agent = nlohmann::ordered_json::object();
  std::uint64_t seed = 0;
  // Free-form flags such as {"expert_threshold": 475, "empty": true}.
  nlohmann::ordered_json notes = nlohmann::ordered_json::object();

  std::size_t episode_count() const { return episodes.size(); }
  // Mean episode reward over the last `count` episodes (all if fewer).
  double mean_last_rewards(std::size_t count) const;
  // Mean step reward over the last `count` rows (all if fewer).
  double mean_last_step_rewards(std::size_t count) const;
};

// Divergence during training; carries the trajectories recorded before it.
class TrainingDiverged : public NumericalError {
 public:
  TrainingDiverged(const std::string& what, std::size_t iteration, TrajectoryBatch partial)
      : NumericalError(what, iteration), partial_(std::make_shared<const TrajectoryBatch>(std::move(partial))) {}
  const TrajectoryBatch& partial() const noexcept { return *partial_; }

 private:
  std::shared_ptr<const TrajectoryBatch> partial_;
};

// Incrementally builds a batch while an agent interacts with an environment.
class TrajectoryRecorder {
 public:
  TrajectoryRecorder(const Env& env, nlohmann::ordered_json agent, std::uint64_t seed);

  void record(std::size_t episode, std::span<const double> state, std::span<const double> action,
              double reward);
  TrajectoryBatch finish() &&;

 private:
  TrajectoryBatch batch_;
  std::size_t next_t_ = 0;
};

// State columns plus an `action` column (discrete labels, or the value of a
// one-dimensional continuous action).
SampleTable to_sample_table(const TrajectoryBatch& batch);

// Four contiguous blocks by episode order; the remainder goes to the last
// block. Throws std::invalid_argument for fewer than 4 episodes.
std::vector<TrajectoryBatch> split_quartiles(const TrajectoryBatch& batch);
std::vector<SampleTable> quartile_tables(const TrajectoryBatch& batch);

// Episodes whose cumulative reward is at least `threshold`.
TrajectoryBatch expert_filter(const TrajectoryBatch& batch, double threshold);

// Episodes `first` .. `first + count - 1` in batch order (clamped).
TrajectoryBatch take_episodes(const TrajectoryBatch& batch, std::size_t first, std::size_t count);

// ---- policies -----------------------------------------------------------------

// Maps a state to an action vector (discrete: one entry holding the action index).
using Policy = std::function<std::vector<double>(std::span<const double> state, Rng& rng)>;

Policy uniform_random_policy(const ActionSpace& space);

// Plays `episodes` episodes with a fixed policy and records them.
TrajectoryBatch rollout(Env& env, const Policy& policy, std::size_t episodes, std::uint64_t seed);

// ---- tabular Q-learning ----------------------------------------------------------

struct QConfig {
  double alpha = 0.9;
  double gamma = 0.99;
  double epsilon_start = 1.0;
  // epsilon falls linearly by epsilon_start / decay_steps per step, floored at 0.
  std::size_t decay_steps = 40000;

  void validate() const;
};

// Action values keyed by the integer-valued state tuple; unseen states read as zeros.
class QTable {
 public:
  explicit QTable(std::size_t actions = 0) : actions_(actions) {}

  std::size_t action_count() const { return actions_; }
  std::size_t state_count() const { return values_.size(); }
  std::vector<double> values(std::span<const double> state) const;
  std::vector<double>& mutable_values(std::span<const double> state);
  // Argmax with uniformly random tie-breaking.
  std::size_t greedy(std::span<const double> state, Rng& rng) const;

  nlohmann::ordered_json to_json() const;
  static QTable from_json(const nlohmann::ordered_json& j);

 private:
  static std::vector<std::int64_t> key(std::span<const double> state);

  std::size_t actions_;
  std::map<std::vector<std::int64_t>, std::vector<double>> values_;
};

struct QResult {
  QTable table;
  TrajectoryBatch batch;
};

// Epsilon-greedy Q-learning; bootstraps through truncations, not terminals.
QResult train_q(Env& env, std::size_t episodes, const QConfig& config, std::uint64_t seed);

// ---- one-step actor-critic ---------------------------------------------------------

struct AcConfig {
  std::size_t hidden = 64;
  double gamma = 0.99;
  double actor_lr = 1e-4;
  double critic_lr = 1e-3;
  neural::OptimKind optimizer = neural::OptimKind::adam;
  // Scale the actor step by gamma^t within an episode.
  bool discount_actor = true;
  // Network inputs are (state - input_offset) * input_scale.
  double input_offset = 0.0;
  double input_scale = 1.0;

  void validate() const;
  nlohmann::ordered_json to_json() const;
};

struct AcResult {
  neural::MlpParams actor;   // softmax head over the discrete actions
  neural::MlpParams critic;  // scalar state value
  TrajectoryBatch batch;
};

// Throws TrainingDiverged carrying the episode index on divergence.
AcResult train_actor_critic(Env& env, std::size_t episodes, const AcConfig& config, std::uint64_t seed);

// ---- PPO ---------------------------------------------------------------------------------

struct PpoConfig {
  std::size_t hidden = 64;
  neural::Activation activation = neural::Activation::tanh;
  double gamma = 0.99;
  double lr = 3e-4;
  double clip = 0.2;
  std::size_t minibatch = 64;
  std::size_t horizon = 2048;
  std::size_t epochs = 10;
  double entropy_coef = 0.001;
  // After each update window the parameter change is scaled by this factor
  // (1 disables the damping).
  double update_scale = 0.95;
  bool damp_updates = true;
  double initial_log_std = 0.0;

  void validate() const;
  nlohmann::ordered_json to_json() const;
};

// Probability ratio factor entering the clipped surrogate min(rA, clip(r)A)
// for a given advantage sign.
double ppo_clip_factor(double ratio, double advantage, double clip);
// Weight w such that the surrogate gradient equals w * grad log pi.
double ppo_surrogate_weight(double ratio, double advantage, double clip);

struct PpoResult {
  neural::MlpParams actor;
  neural::MlpParams critic;
  std::vector<double> log_std;  // continuous actions only
  TrajectoryBatch batch;
  // Largest |ratio - 1| seen in the first minibatch pass of each window.
  std::vector<double> first_epoch_ratio_error;
};

// Throws TrainingDiverged carrying the update window index on divergence.
PpoResult train_ppo(Env& env, std::size_t steps, const PpoConfig& config, std::uint64_t seed);

// Policy of a trained actor: greedy (discrete argmax or Gaussian mean) or
// sampled. Inputs are transformed as in training:
// (state - input_offset) * input_scale.
Policy actor_policy(const neural::MlpParams& actor, const ActionSpace& space, bool greedy, double input_offset = 0.0,
                    double input_scale = 1.0);

}  // namespace terc
