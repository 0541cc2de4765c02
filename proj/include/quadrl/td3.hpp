#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <vector>

#include "quadrl/env.hpp"
#include "quadrl/mlp.hpp"

namespace quadrl {

struct EnvStep {
  Eigen::VectorXd observation;
  double reward = 0.0;
  bool terminated = false;
  bool truncated = false;
};

/// Episodic continuous-control task with actions in [-1, 1]^n.
class Environment {
 public:
  virtual ~Environment() = default;
  virtual int observation_size() const = 0;
  virtual int action_size() const = 0;
  virtual Eigen::VectorXd reset() = 0;
  virtual EnvStep step(const Eigen::VectorXd& action) = 0;
  /// Fresh instance of the same task with its own random stream.
  virtual std::unique_ptr<Environment> clone(std::uint64_t seed) const = 0;
  /// Error measure reported in evaluation curves (position norm for the quadcopter).
  virtual double tracking_error() const { return 0.0; }
};

/// Adapts QuadEnv to the trainer interface.
class QuadTask : public Environment {
 public:
  QuadTask(EnvConfig cfg, RewardParams reward_params, QuadParams params, std::uint64_t seed);

  int observation_size() const override { return env_.config().observation_size(); }
  int action_size() const override { return 4; }
  Eigen::VectorXd reset() override { return env_.reset(); }
  EnvStep step(const Eigen::VectorXd& action) override;
  std::unique_ptr<Environment> clone(std::uint64_t seed) const override;
  double tracking_error() const override { return (env_.state().position - env_.reference()).norm(); }

  QuadEnv& env() { return env_; }

 private:
  QuadEnv env_;
};

struct Td3Config {
  std::int64_t total_steps = 300'000;
  int batch_size = 256;
  double actor_learning_rate = 1e-3;
  double critic_learning_rate = 1e-3;
  double discount = 0.99;
  double tau = 0.005;
  int policy_delay = 2;
  double exploration_noise = 0.1;
  double target_noise = 0.2;
  double target_noise_clip = 0.5;
  std::int64_t warmup_steps = 25'000;
  std::int64_t buffer_capacity = 1'000'000;
  std::uint64_t seed = 0;
  std::vector<int> hidden_sizes{64, 64};
  std::int64_t eval_interval = 25'000;
  int eval_episodes = 10;
  /// Weight of the quadratic penalty on actor outputs outside [-1, 1].
  double action_overshoot_penalty = 1.0;
  /// Initial value of the actor's output bias (weights keep the uniform init).
  double initial_action_bias = 0.0;

  void validate() const;
};

struct Transition {
  Eigen::VectorXd observation;
  Eigen::VectorXd action;
  double reward = 0.0;
  Eigen::VectorXd next_observation;
  bool done = false;
};

struct ReplayBatch {
  Eigen::MatrixXd observations;       // obs_dim x B
  Eigen::MatrixXd actions;            // act_dim x B
  Eigen::VectorXd rewards;            // B
  Eigen::MatrixXd next_observations;  // obs_dim x B
  Eigen::VectorXd dones;              // B, 1.0 for terminal
};

/// Fixed-capacity ring buffer of transitions stored column-wise. Storage grows
/// on demand up to the capacity, so short runs do not pay for a full buffer.
class ReplayBuffer {
 public:
  ReplayBuffer(int observation_size, int action_size, std::int64_t capacity);

  void add(const Transition& t);
  std::int64_t size() const { return size_; }
  std::int64_t capacity() const { return capacity_; }
  std::int64_t insertions() const { return insertions_; }

  std::vector<std::int64_t> sample_indices(int batch_size, std::mt19937_64& rng) const;
  ReplayBatch gather(const std::vector<std::int64_t>& indices) const;
  ReplayBatch sample(int batch_size, std::mt19937_64& rng) const;
  Transition at(std::int64_t index) const;

 private:
  void reserve_for(std::int64_t slot);

  int obs_dim_;
  int act_dim_;
  std::int64_t capacity_;
  std::int64_t size_ = 0;
  std::int64_t next_ = 0;
  std::int64_t insertions_ = 0;
  std::int64_t allocated_ = 0;
  std::vector<double> obs_;
  std::vector<double> next_obs_;
  std::vector<double> actions_;
  std::vector<double> rewards_;
  std::vector<double> dones_;
};

struct TrainDiagnostics {
  double critic_loss = 0.0;
  double actor_loss = 0.0;
  bool actor_updated = false;
};

class Td3Agent {
 public:
  Td3Agent(int observation_size, int action_size, Td3Config cfg);

  Eigen::VectorXd select_action(const Eigen::VectorXd& observation, bool explore);
  /// Uniform in [-1, 1]^n, used during warmup.
  Eigen::VectorXd random_action();

  TrainDiagnostics train_step();
  /// One update on a given batch; train_step() samples the batch and noise itself.
  TrainDiagnostics train_on(const ReplayBatch& batch, const Eigen::MatrixXd& target_action_noise);

  /// Critic regression targets for a batch, using the current target networks.
  /// `target_action_noise` must be act_dim x B (already clipped); pass zeros to disable smoothing.
  Eigen::VectorXd critic_targets(const ReplayBatch& batch,
                                 const Eigen::MatrixXd& target_action_noise) const;
  Eigen::MatrixXd sample_target_noise(int batch_size);

  const Td3Config& config() const { return cfg_; }
  ReplayBuffer& buffer() { return buffer_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  std::mt19937_64& rng() { return rng_; }
  std::int64_t train_calls() const { return train_calls_; }

  Mlp actor, actor_target;
  Mlp critic1, critic1_target;
  Mlp critic2, critic2_target;
  AdamState actor_opt, critic1_opt, critic2_opt;

 private:
  double update_critic(Mlp& critic, AdamState& opt, const Eigen::MatrixXd& input,
                       const Eigen::VectorXd& targets);
  double update_actor(const ReplayBatch& batch);

  Td3Config cfg_;
  int obs_dim_;
  int act_dim_;
  ReplayBuffer buffer_;
  std::mt19937_64 rng_;
  std::int64_t train_calls_ = 0;
};

struct CurvePoint {
  std::int64_t step = 0;
  double mean_return = 0.0;
  double mean_tracking_error = 0.0;
  double critic_loss = 0.0;  // mean over the interval, NaN before learning starts
  double actor_loss = 0.0;
};

struct EvalSummary {
  double mean_return = 0.0;
  double mean_tracking_error = 0.0;
};

/// Deterministic-policy rollouts on fresh clones of `env`; episode k uses seed `seed + k`.
EvalSummary evaluate_policy(const Mlp& actor, const Environment& env, int episodes,
                            std::uint64_t seed);

struct TrainResult {
  std::vector<CurvePoint> curve;
  Mlp best_actor;
  double best_return = 0.0;
};

struct TrainHooks {
  /// Called after every evaluation, e.g. to write a checkpoint.
  std::function<void(const Td3Agent&, const CurvePoint&)> on_eval;
  /// Called once per environment step after the transition is stored.
  std::function<void(const Td3Agent&, std::int64_t step)> on_step;
};

/// Runs the interaction loop. An evaluation row is emitted every eval_interval
/// steps and once more at the end if the last step is not on the grid.
TrainResult train(Td3Agent& agent, Environment& env, const TrainHooks& hooks = {});

}  // namespace quadrl
