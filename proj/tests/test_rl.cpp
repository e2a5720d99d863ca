#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "terc/rl.hpp"

using namespace terc;

namespace {

// Batch of `episodes` one-step episodes with the given rewards.
TrajectoryBatch synthetic_batch(const std::vector<double>& rewards) {
  Chain env({0.0, 0.0});
  TrajectoryRecorder rec(env, {{"kind", "test"}}, 0);
  for (std::size_t ep = 0; ep < rewards.size(); ++ep) {
    const double s[2] = {1.0, 0.0};
    const double a = 0.0;
    rec.record(ep, s, std::span<const double>(&a, 1), rewards[ep] / 2.0);
    const double s2[2] = {0.0, 1.0};
    rec.record(ep, s2, std::span<const double>(&a, 1), rewards[ep] - rewards[ep] / 2.0);
  }
  return std::move(rec).finish();
}

}  // namespace

TEST_CASE("quartiles are contiguous with the remainder in the last block") {
  std::vector<double> r(10);
  std::iota(r.begin(), r.end(), 0.0);
  const auto qs = split_quartiles(synthetic_batch(r));
  REQUIRE(qs.size() == 4);
  CHECK(qs[0].episode_count() == 2);
  CHECK(qs[1].episode_count() == 2);
  CHECK(qs[2].episode_count() == 2);
  CHECK(qs[3].episode_count() == 4);
  CHECK(qs[0].episodes.front().episode == 0);
  CHECK(qs[1].episodes.front().episode == 2);
  CHECK(qs[3].episodes.front().episode == 6);
  CHECK(qs[3].episodes.back().episode == 9);
  CHECK(qs[3].rows.size() == 8);

  const auto big = split_quartiles(synthetic_batch(std::vector<double>(40000, 1.0)));
  for (const auto& q : big) CHECK(q.episode_count() == 10000);

  CHECK_THROWS_AS(split_quartiles(synthetic_batch({1.0, 2.0, 3.0})), std::invalid_argument);
}

TEST_CASE("expert filter keeps episodes at or above the threshold") {
  const TrajectoryBatch b = synthetic_batch({1.0, 5.0, 3.0, 5.0});
  const TrajectoryBatch e = expert_filter(b, 3.0);
  REQUIRE(e.episode_count() == 3);
  CHECK(e.episodes[0].episode == 1);
  CHECK(e.episodes[1].episode == 2);
  CHECK(e.rows.size() == 6);
  CHECK(e.notes["expert_threshold"].get<double>() == 3.0);
  CHECK_FALSE(e.notes.contains("empty"));

  const TrajectoryBatch none = expert_filter(b, 100.0);
  CHECK(none.episode_count() == 0);
  CHECK(none.rows.empty());
  CHECK(none.notes["empty"].get<bool>());

  CHECK(expert_filter(b, -INFINITY).episode_count() == 4);
}

TEST_CASE("episode reward is the exact sum of the step rewards") {
  SecretKeyGame g({10, 4, {}});
  IteratedPrisonersDilemma ipd({3, 2, 50, true, {{{2.0, 0.0}, {3.0, 1.0}}}, 4});
  for (Env* env : {static_cast<Env*>(&g), static_cast<Env*>(&ipd)}) {
    const TrajectoryBatch b = rollout(*env, uniform_random_policy(env->action_space()), 20, 9);
    REQUIRE(b.episode_count() == 20);
    for (const EpisodeSummary& ep : b.episodes) {
      double sum = 0.0;
      std::size_t steps = 0;
      for (const TrajectoryRow& row : b.rows) {
        if (row.episode == ep.episode) {
          sum += row.reward;
          ++steps;
        }
      }
      CHECK(ep.reward == sum);
      CHECK(ep.steps == steps);
    }
  }
}

TEST_CASE("sample tables carry the state columns and the action labels") {
  SecretKeyGame g({5, 1, {}});
  const TrajectoryBatch b = rollout(g, uniform_random_policy(g.action_space()), 50, 2);
  const SampleTable t = to_sample_table(b);
  CHECK(t.rows() == 50);
  CHECK(t.variable_indices().size() == 5);
  const Column& a = t.column(t.action_index());
  for (std::size_t i = 0; i < t.rows(); ++i) {
    CHECK(a.symbols[i] >= -40);
    CHECK(a.symbols[i] <= 40);
    CHECK(static_cast<double>(a.symbols[i]) == b.rows[i].action[0]);
  }
}

TEST_CASE("q-learning is deterministic for a seed") {
  QConfig cfg;
  cfg.decay_steps = 2000;
  IteratedPrisonersDilemma a({3, 2, 100, true, {{{2.0, 0.0}, {3.0, 1.0}}}, 0});
  IteratedPrisonersDilemma b({3, 2, 100, true, {{{2.0, 0.0}, {3.0, 1.0}}}, 0});
  const QResult ra = train_q(a, 40, cfg, 17);
  const QResult rb = train_q(b, 40, cfg, 17);
  CHECK(ra.table.to_json() == rb.table.to_json());
  REQUIRE(ra.batch.rows.size() == rb.batch.rows.size());
  for (std::size_t i = 0; i < ra.batch.rows.size(); ++i) CHECK(ra.batch.rows[i].action == rb.batch.rows[i].action);
}

TEST_CASE("q-table json round trip") {
  QConfig cfg;
  cfg.decay_steps = 500;
  IteratedPrisonersDilemma env({3, 2, 100, true, {{{2.0, 0.0}, {3.0, 1.0}}}, 0});
  const QResult r = train_q(env, 10, cfg, 3);
  const QTable back = QTable::from_json(r.table.to_json());
  CHECK(back.to_json() == r.table.to_json());
  CHECK(back.state_count() == r.table.state_count());
}

TEST_CASE("q-learning exploits an opponent that never retaliates") {
  // With opponent_n beyond the game length the opponent always cooperates,
  // so defecting earns 3 per round.
  QConfig cfg;
  cfg.decay_steps = 5000;
  IteratedPrisonersDilemma env({1000000, 2, 100, true, {{{2.0, 0.0}, {3.0, 1.0}}}, 0});
  const QResult r = train_q(env, 100, cfg, 5);
  CHECK(r.batch.mean_last_step_rewards(2000) == doctest::Approx(3.0));
}

TEST_CASE("q-learning learns periodic defection against tit-for-three-tats") {
  // Two defections then one cooperation never trigger retaliation:
  // (3 + 3 + 2) / 3 = 8/3 per round.
  QConfig cfg;
  IteratedPrisonersDilemma env({3, 2, 100, true, {{{2.0, 0.0}, {3.0, 1.0}}}, 0});
  const QResult r = train_q(env, 600, cfg, 1);
  CHECK(r.batch.mean_last_step_rewards(1000) >= 2.6);
}

TEST_CASE("critic converges to the discounted return on a chain") {
  AcConfig cfg;
  cfg.critic_lr = 1e-2;
  Chain env({1.0, 2.0});
  const AcResult r = train_actor_critic(env, 3000, cfg, 3);
  const double s0[2] = {1.0, 0.0};
  const double s1[2] = {0.0, 1.0};
  CHECK(neural::mlp_forward(r.critic, s0)[0] == doctest::Approx(1.0 + 0.99 * 2.0).epsilon(0.05 / 2.98));
  CHECK(neural::mlp_forward(r.critic, s1)[0] == doctest::Approx(2.0).epsilon(0.05 / 2.0));
}

TEST_CASE("actor-critic prefers the best bandit arm") {
  AcConfig cfg;
  cfg.actor_lr = 1e-2;
  cfg.critic_lr = 1e-2;
  Bandit env({0.0, 1.0, 0.2}, 0.1, 11);
  const AcResult r = train_actor_critic(env, 3000, cfg, 4);
  const double s[1] = {1.0};
  CHECK(neural::mlp_forward(r.actor, s)[1] > 0.9);
}

TEST_CASE("zero learning rates leave the initial networks untouched") {
  AcConfig cfg;
  cfg.actor_lr = 0.0;
  cfg.critic_lr = 0.0;
  cfg.hidden = 8;
  SecretKeyGame env({4, 1, {}});
  const AcResult r = train_actor_critic(env, 20, cfg, 6);
  using neural::Activation;
  CHECK(r.actor == neural::mlp_init(neural::single_hidden(4, 8, 81, Activation::relu, Activation::softmax), mix_seed(6, 1)));
  CHECK(r.critic == neural::mlp_init(neural::single_hidden(4, 8, 1, Activation::relu, Activation::linear), mix_seed(6, 2)));
}

TEST_CASE("actor-critic beats a random policy on the secret key game") {
  AcConfig cfg;
  cfg.input_offset = 5.0;
  SecretKeyGame env({10, 1, {}});
  const AcResult r = train_actor_critic(env, 4000, cfg, 1);
  SecretKeyGame probe({10, 1, {}});
  const TrajectoryBatch random = rollout(probe, uniform_random_policy(probe.action_space()), 1000, 2);
  CHECK(r.batch.mean_last_rewards(1000) > random.mean_last_rewards(1000) + 5.0);
}

TEST_CASE("negative learning rates are rejected") {
  AcConfig cfg;
  cfg.actor_lr = -1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  SecretKeyGame g({3, 1, {}});
  CHECK_THROWS_AS(train_actor_critic(g, 1, cfg, 0), ConfigError);
}

TEST_CASE("continuous environments are rejected by tabular and actor-critic agents") {
  PointMass pm(0);
  CHECK_THROWS_AS(train_q(pm, 1, QConfig{}, 0), ConfigError);
  CHECK_THROWS_AS(train_actor_critic(pm, 1, AcConfig{}, 0), ConfigError);
}

TEST_CASE("ppo clipping factor") {
  CHECK(ppo_clip_factor(1.5, 1.0, 0.2) == doctest::Approx(1.2));
  CHECK(ppo_clip_factor(1.1, 1.0, 0.2) == doctest::Approx(1.1));
  CHECK(ppo_clip_factor(0.5, -1.0, 0.2) == doctest::Approx(0.8));
  CHECK(ppo_clip_factor(0.5, 1.0, 0.2) == doctest::Approx(0.5));
  // Outside the trust region the surrogate is flat.
  CHECK(ppo_surrogate_weight(1.5, 1.0, 0.2) == 0.0);
  CHECK(ppo_surrogate_weight(0.5, -1.0, 0.2) == 0.0);
  CHECK(ppo_surrogate_weight(1.1, 2.0, 0.2) == doctest::Approx(2.2));
  CHECK(ppo_surrogate_weight(1.5, -1.0, 0.2) == doctest::Approx(-1.5));
}

TEST_CASE("ppo starts every window at ratio one") {
  PpoConfig cfg;
  cfg.horizon = 256;
  PointMass env(1);
  const PpoResult r = train_ppo(env, 2048, cfg, 2);
  REQUIRE_FALSE(r.first_epoch_ratio_error.empty());
  for (double e : r.first_epoch_ratio_error) CHECK(e <= 1e-12);
}

TEST_CASE("ppo learns to hold a point mass at the origin") {
  PpoConfig cfg;
  cfg.horizon = 512;
  PointMass env(3);
  const PpoResult r = train_ppo(env, 60000, cfg, 3);
  PointMass probe(4);
  const TrajectoryBatch random = rollout(probe, uniform_random_policy(probe.action_space()), 200, 5);
  PointMass probe2(4);
  const TrajectoryBatch learnt = rollout(probe2, actor_policy(r.actor, probe2.action_space(), true), 200, 5);
  CHECK(learnt.mean_last_rewards(200) > random.mean_last_rewards(200));
  for (const TrajectoryRow& row : r.batch.rows) {
    CHECK(row.action[0] >= -1.0);
    CHECK(row.action[0] <= 1.0);
  }
}

TEST_CASE("ppo improves on the pendulum") {
  PpoConfig cfg;
  Pendulum env({0, 5.0, 200, 7});
  const PpoResult r = train_ppo(env, 100000, cfg, 7);
  const auto& eps = r.batch.episodes;
  REQUIRE(eps.size() >= 100);
  // Least-squares slope of episode reward against episode index.
  const double n = static_cast<double>(eps.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < eps.size(); ++i) {
    const double x = static_cast<double>(i);
    sx += x;
    sy += eps[i].reward;
    sxx += x * x;
    sxy += x * eps[i].reward;
  }
  CHECK((n * sxy - sx * sy) / (n * sxx - sx * sx) > 0.0);
}

TEST_CASE("ppo is deterministic for a seed") {
  PpoConfig cfg;
  cfg.horizon = 128;
  PointMass a(1), b(1);
  const PpoResult ra = train_ppo(a, 512, cfg, 9);
  const PpoResult rb = train_ppo(b, 512, cfg, 9);
  CHECK(ra.actor == rb.actor);
  CHECK(ra.log_std == rb.log_std);
}
