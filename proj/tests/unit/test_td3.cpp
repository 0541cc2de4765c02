#include <doctest.h>

#include <cmath>
#include <random>

#include "quadrl/td3.hpp"
#include "support/double_integrator.hpp"

using namespace quadrl;

namespace {

Td3Config small_config() {
  Td3Config c;
  c.batch_size = 32;
  c.hidden_sizes = {16, 16};
  c.warmup_steps = 100;
  c.buffer_capacity = 10'000;
  c.total_steps = 1'000;
  c.eval_interval = 500;
  c.eval_episodes = 2;
  c.seed = 7;
  return c;
}

void fill(Td3Agent& agent, int n, std::uint64_t seed, double done_prob = 0.1) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::bernoulli_distribution done(done_prob);
  for (int i = 0; i < n; ++i) {
    Transition t;
    t.observation = Eigen::Vector2d(u(rng), u(rng));
    t.action = Eigen::VectorXd::Constant(1, u(rng));
    t.reward = u(rng);
    t.next_observation = Eigen::Vector2d(u(rng), u(rng));
    t.done = done(rng);
    agent.buffer().add(t);
  }
}

double param_distance(const Mlp& a, const Mlp& b) { return (a.flatten() - b.flatten()).norm(); }

}  // namespace

TEST_SUITE("td3") {

TEST_CASE("replay buffer ring semantics") {
  ReplayBuffer buf(2, 1, 5);
  for (int i = 0; i < 7; ++i) {
    buf.add({Eigen::Vector2d(i, i), Eigen::VectorXd::Constant(1, i), double(i), Eigen::Vector2d(i, i), false});
  }
  CHECK(buf.size() == 5);
  CHECK(buf.insertions() == 7);
  // slots 0 and 1 now hold the newest entries 5 and 6; 2 is the oldest survivor
  CHECK(buf.at(0).reward == 5.0);
  CHECK(buf.at(1).reward == 6.0);
  CHECK(buf.at(2).reward == 2.0);
  std::mt19937_64 rng(1);
  CHECK_THROWS_AS(buf.sample(6, rng), std::logic_error);
  CHECK_THROWS_AS(buf.add({Eigen::Vector3d::Zero(), Eigen::VectorXd::Zero(1), 0, Eigen::Vector2d::Zero(), false}),
                  std::invalid_argument);
}

TEST_CASE("replay sampling is uniform (chi-square)") {
  ReplayBuffer buf(1, 1, 100);
  for (int i = 0; i < 100; ++i) {
    buf.add({Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1), 0.0, Eigen::VectorXd::Zero(1), false});
  }
  std::mt19937_64 rng(42);
  std::vector<double> counts(100, 0.0);
  const int draws = 1'000'000;
  for (int k = 0; k < draws / 100; ++k)
    for (auto i : buf.sample_indices(100, rng)) counts[static_cast<std::size_t>(i)] += 1.0;
  double chi2 = 0.0;
  const double expected = draws / 100.0;
  for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
  // 99th percentile of chi-square with 99 degrees of freedom
  CHECK(chi2 < 134.64);
}

TEST_CASE("select_action determinism and zero-weight exploration statistics") {
  Td3Config cfg = small_config();
  Td3Agent agent(2, 1, cfg);
  const Eigen::Vector2d obs(0.3, -0.2);
  CHECK(agent.select_action(obs, false) == agent.select_action(obs, false));

  agent.actor = Mlp::zeros(agent.actor.sizes());
  CHECK(agent.select_action(obs, false).norm() == 0.0);
  double sum = 0.0, sq = 0.0;
  const int n = 100'000;
  for (int i = 0; i < n; ++i) {
    const double a = agent.select_action(obs, true)[0];
    sum += a;
    sq += a * a;
  }
  const double stddev = std::sqrt(sq / n - (sum / n) * (sum / n));
  CHECK(std::abs(stddev / cfg.exploration_noise - 1.0) < 0.05);
}

TEST_CASE("critic targets: terminal masking, discount zero, twin minimum") {
  Td3Config cfg = small_config();
  cfg.target_noise = 0.0;
  Td3Agent agent(2, 1, cfg);
  fill(agent, 64, 3, 0.5);
  std::mt19937_64 rng(1);
  const ReplayBatch batch = agent.buffer().sample(32, rng);
  const Eigen::MatrixXd no_noise = Eigen::MatrixXd::Zero(1, 32);

  const Eigen::VectorXd y = agent.critic_targets(batch, no_noise);
  for (Eigen::Index j = 0; j < 32; ++j) {
    if (batch.dones[j] == 1.0) CHECK(y[j] == batch.rewards[j]);
  }

  // Q2' = Q1' + 1 everywhere: the target must use Q1'.
  agent.critic2_target = agent.critic1_target;
  agent.critic2_target.mutable_layers().back().bias[0] += 1.0;
  const Eigen::VectorXd y1 = agent.critic_targets(batch, no_noise);
  Eigen::MatrixXd next_a = agent.actor_target.predict(batch.next_observations).cwiseMax(-1.0).cwiseMin(1.0);
  Eigen::MatrixXd in(3, 32);
  in << batch.next_observations, next_a;
  const Eigen::RowVectorXd q1 = agent.critic1_target.predict(in).row(0);
  for (Eigen::Index j = 0; j < 32; ++j) {
    const double expect = batch.rewards[j] + cfg.discount * (1.0 - batch.dones[j]) * q1[j];
    CHECK(y1[j] == doctest::Approx(expect).epsilon(1e-14));
  }

  // Swapping the critics leaves the targets unchanged.
  std::swap(agent.critic1_target, agent.critic2_target);
  CHECK((agent.critic_targets(batch, no_noise) - y1).norm() == 0.0);

  Td3Config c0 = cfg;
  c0.discount = 1e-300;  // validate() requires discount > 0; this is zero for all purposes
  Td3Agent a0(2, 1, c0);
  const ReplayBatch b0 = batch;
  CHECK((a0.critic_targets(b0, no_noise) - b0.rewards).cwiseAbs().maxCoeff() < 1e-290);
}

TEST_CASE("target noise is clipped") {
  Td3Config cfg = small_config();
  cfg.target_noise = 5.0;
  Td3Agent agent(2, 1, cfg);
  const Eigen::MatrixXd n = agent.sample_target_noise(1000);
  CHECK(n.cwiseAbs().maxCoeff() <= cfg.target_noise_clip);
}

TEST_CASE("critic regression on a fixed batch decreases monotonically when the discount is negligible") {
  Td3Config cfg = small_config();
  cfg.discount = 1e-12;
  cfg.policy_delay = 1000;  // keep the actor fixed
  Td3Agent agent(2, 1, cfg);
  fill(agent, 32, 5);
  std::vector<std::int64_t> all(32);
  for (int i = 0; i < 32; ++i) all[static_cast<std::size_t>(i)] = i;
  const ReplayBatch batch = agent.buffer().gather(all);
  const Eigen::MatrixXd no_noise = Eigen::MatrixXd::Zero(1, 32);
  double prev = 1e300;
  bool monotone = true;
  for (int k = 0; k < 100; ++k) {
    const double loss = agent.train_on(batch, no_noise).critic_loss;
    monotone = monotone && loss < prev;
    prev = loss;
  }
  CHECK(monotone);
}

TEST_CASE("actor changes only every policy_delay calls, targets only through soft updates") {
  Td3Config cfg = small_config();
  Td3Agent agent(2, 1, cfg);
  fill(agent, 200, 6);
  for (int k = 1; k <= 10; ++k) {
    const Mlp actor_before = agent.actor;
    const Mlp target_before = agent.critic1_target;
    const TrainDiagnostics d = agent.train_step();
    const bool update = k % cfg.policy_delay == 0;
    CHECK(d.actor_updated == update);
    CHECK((param_distance(actor_before, agent.actor) > 0.0) == update);
    CHECK((param_distance(target_before, agent.critic1_target) > 0.0) == update);
    if (!update) CHECK(std::isnan(d.actor_loss));
  }
}

TEST_CASE("soft updates pull targets toward a frozen source") {
  Td3Config cfg = small_config();
  Td3Agent agent(2, 1, cfg);
  agent.critic1 = Mlp::random(agent.critic1.sizes(), agent.rng());
  double prev = param_distance(agent.critic1_target, agent.critic1);
  for (int k = 0; k < 20; ++k) {
    soft_update(agent.critic1_target, agent.critic1, cfg.tau);
    const double d = param_distance(agent.critic1_target, agent.critic1);
    CHECK(d < prev);
    prev = d;
  }
}

TEST_CASE("warmup fills the buffer one transition per step") {
  Td3Config cfg = small_config();
  cfg.total_steps = 150;
  cfg.warmup_steps = 150;
  testing::DoubleIntegrator env({}, 1);
  Td3Agent agent(2, 1, cfg);
  TrainHooks hooks;
  hooks.on_step = [](const Td3Agent& a, std::int64_t step) { CHECK(a.buffer().size() == step); };
  const TrainResult r = train(agent, env, hooks);
  CHECK(agent.train_calls() == 0);
  REQUIRE(r.curve.size() == 1);
  CHECK(r.curve[0].step == 150);
  CHECK(std::isnan(r.curve[0].critic_loss));
}

TEST_CASE("training is deterministic for a fixed seed") {
  Td3Config cfg = small_config();
  testing::DoubleIntegrator e1({}, 1), e2({}, 1);
  Td3Agent a1(2, 1, cfg), a2(2, 1, cfg);
  const TrainResult r1 = train(a1, e1), r2 = train(a2, e2);
  REQUIRE(r1.curve.size() == r2.curve.size());
  for (std::size_t i = 0; i < r1.curve.size(); ++i) {
    CHECK(r1.curve[i].mean_return == r2.curve[i].mean_return);
    CHECK(r1.curve[i].critic_loss == r2.curve[i].critic_loss);
  }
  CHECK(a1.actor.flatten() == a2.actor.flatten());
}

TEST_CASE("truncation bootstraps, termination does not") {
  Td3Config cfg = small_config();
  cfg.total_steps = 300;
  cfg.warmup_steps = 300;
  testing::DoubleIntegratorConfig dc;
  dc.horizon = 10;
  testing::DoubleIntegrator env(dc, 2);
  Td3Agent agent(2, 1, cfg);
  train(agent, env);
  // horizon 10 without crashes: every transition is stored as non-terminal
  for (std::int64_t i = 0; i < agent.buffer().size(); ++i) {
    const Transition t = agent.buffer().at(i);
    if (std::abs(t.next_observation[0]) <= dc.bound) CHECK_FALSE(t.done);
    else CHECK(t.done);
  }
}

TEST_CASE("config validation") {
  Td3Config cfg;
  cfg.discount = 1.0;
  CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("td3.discount"), std::invalid_argument);
  cfg = Td3Config{};
  cfg.policy_delay = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

}
