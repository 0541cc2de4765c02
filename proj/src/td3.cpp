#include "quadrl/td3.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace quadrl {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<int> layer_sizes(int input, const std::vector<int>& hidden, int output) {
  std::vector<int> sizes{input};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(output);
  return sizes;
}

Eigen::MatrixXd stack(const Eigen::MatrixXd& top, const Eigen::MatrixXd& bottom) {
  Eigen::MatrixXd out(top.rows() + bottom.rows(), top.cols());
  out.topRows(top.rows()) = top;
  out.bottomRows(bottom.rows()) = bottom;
  return out;
}

}  // namespace

QuadTask::QuadTask(EnvConfig cfg, RewardParams reward_params, QuadParams params,
                   std::uint64_t seed)
    : env_(cfg, reward_params, params, seed) {}

EnvStep QuadTask::step(const Eigen::VectorXd& action) {
  if (action.size() != 4) throw std::invalid_argument("QuadTask::step: expected 4 actions");
  StepResult r = env_.step(Action(action));
  return {std::move(r.observation), r.reward, r.terminated, r.truncated};
}

std::unique_ptr<Environment> QuadTask::clone(std::uint64_t seed) const {
  auto task = std::make_unique<QuadTask>(env_.config(), env_.reward_params(), env_.params(), seed);
  task->env().set_reference(env_.reference());
  return task;
}

void Td3Config::validate() const {
  auto require = [](bool ok, const char* key) {
    if (!ok) throw std::invalid_argument(std::string("td3.") + key + " out of range");
  };
  require(total_steps > 0, "total_steps");
  require(batch_size > 0, "batch_size");
  require(actor_learning_rate > 0.0, "actor_learning_rate");
  require(critic_learning_rate > 0.0, "critic_learning_rate");
  require(discount > 0.0 && discount < 1.0, "discount");
  require(tau > 0.0 && tau <= 1.0, "tau");
  require(policy_delay >= 1, "policy_delay");
  require(exploration_noise >= 0.0, "exploration_noise");
  require(target_noise >= 0.0, "target_noise");
  require(target_noise_clip >= 0.0, "target_noise_clip");
  require(warmup_steps >= 0, "warmup_steps");
  require(buffer_capacity >= batch_size, "buffer_capacity");
  require(!hidden_sizes.empty(), "hidden_sizes");
  require(eval_interval > 0, "eval_interval");
  require(eval_episodes > 0, "eval_episodes");
  require(action_overshoot_penalty >= 0.0, "action_overshoot_penalty");
  require(initial_action_bias >= -1.0 && initial_action_bias <= 1.0, "initial_action_bias");
}

// ---------------------------------------------------------------------------
// Replay buffer

ReplayBuffer::ReplayBuffer(int observation_size, int action_size, std::int64_t capacity)
    : obs_dim_(observation_size), act_dim_(action_size), capacity_(capacity) {
  if (observation_size <= 0 || action_size <= 0 || capacity <= 0) {
    throw std::invalid_argument("ReplayBuffer: dimensions and capacity must be positive");
  }
}

void ReplayBuffer::reserve_for(std::int64_t slot) {
  if (slot < allocated_) return;
  const std::int64_t grown = std::min(capacity_, std::max<std::int64_t>(1024, 2 * allocated_));
  allocated_ = std::max(grown, slot + 1);
  obs_.resize(static_cast<std::size_t>(allocated_ * obs_dim_));
  next_obs_.resize(static_cast<std::size_t>(allocated_ * obs_dim_));
  actions_.resize(static_cast<std::size_t>(allocated_ * act_dim_));
  rewards_.resize(static_cast<std::size_t>(allocated_));
  dones_.resize(static_cast<std::size_t>(allocated_));
}

void ReplayBuffer::add(const Transition& t) {
  if (t.observation.size() != obs_dim_ || t.next_observation.size() != obs_dim_ ||
      t.action.size() != act_dim_) {
    throw std::invalid_argument("ReplayBuffer::add: transition dimensions do not match buffer");
  }
  reserve_for(next_);
  const auto slot = static_cast<std::size_t>(next_);
  std::copy_n(t.observation.data(), obs_dim_, obs_.data() + slot * obs_dim_);
  std::copy_n(t.next_observation.data(), obs_dim_, next_obs_.data() + slot * obs_dim_);
  std::copy_n(t.action.data(), act_dim_, actions_.data() + slot * act_dim_);
  rewards_[slot] = t.reward;
  dones_[slot] = t.done ? 1.0 : 0.0;
  next_ = (next_ + 1) % capacity_;
  size_ = std::min(size_ + 1, capacity_);
  ++insertions_;
}

std::vector<std::int64_t> ReplayBuffer::sample_indices(int batch_size, std::mt19937_64& rng) const {
  if (size_ < batch_size || batch_size <= 0) {
    throw std::logic_error("ReplayBuffer::sample: buffer holds " + std::to_string(size_) +
                           " transitions, batch needs " + std::to_string(batch_size));
  }
  std::uniform_int_distribution<std::int64_t> pick(0, size_ - 1);
  std::vector<std::int64_t> idx(static_cast<std::size_t>(batch_size));
  for (auto& i : idx) i = pick(rng);
  return idx;
}

ReplayBatch ReplayBuffer::gather(const std::vector<std::int64_t>& indices) const {
  const auto b = static_cast<Eigen::Index>(indices.size());
  ReplayBatch batch;
  batch.observations.resize(obs_dim_, b);
  batch.next_observations.resize(obs_dim_, b);
  batch.actions.resize(act_dim_, b);
  batch.rewards.resize(b);
  batch.dones.resize(b);
  for (Eigen::Index j = 0; j < b; ++j) {
    const auto i = static_cast<std::size_t>(indices[static_cast<std::size_t>(j)]);
    if (indices[static_cast<std::size_t>(j)] < 0 || indices[static_cast<std::size_t>(j)] >= size_) {
      throw std::out_of_range("ReplayBuffer::gather: index out of range");
    }
    std::copy_n(obs_.data() + i * obs_dim_, obs_dim_, batch.observations.col(j).data());
    std::copy_n(next_obs_.data() + i * obs_dim_, obs_dim_, batch.next_observations.col(j).data());
    std::copy_n(actions_.data() + i * act_dim_, act_dim_, batch.actions.col(j).data());
    batch.rewards[j] = rewards_[i];
    batch.dones[j] = dones_[i];
  }
  return batch;
}

ReplayBatch ReplayBuffer::sample(int batch_size, std::mt19937_64& rng) const {
  return gather(sample_indices(batch_size, rng));
}

Transition ReplayBuffer::at(std::int64_t index) const {
  const ReplayBatch b = gather({index});
  return {b.observations.col(0), b.actions.col(0), b.rewards[0], b.next_observations.col(0),
          b.dones[0] != 0.0};
}

// ---------------------------------------------------------------------------
// Agent

Td3Agent::Td3Agent(int observation_size, int action_size, Td3Config cfg)
    : cfg_(std::move(cfg)),
      obs_dim_(observation_size),
      act_dim_(action_size),
      buffer_(observation_size, action_size, cfg_.buffer_capacity),
      rng_(cfg_.seed) {
  cfg_.validate();
  actor = Mlp::random(layer_sizes(obs_dim_, cfg_.hidden_sizes, act_dim_), rng_);
  actor.mutable_layers().back().bias.setConstant(cfg_.initial_action_bias);
  critic1 = Mlp::random(layer_sizes(obs_dim_ + act_dim_, cfg_.hidden_sizes, 1), rng_);
  critic2 = Mlp::random(layer_sizes(obs_dim_ + act_dim_, cfg_.hidden_sizes, 1), rng_);
  actor_target = actor;
  critic1_target = critic1;
  critic2_target = critic2;
  actor_opt = AdamState::for_network(actor, cfg_.actor_learning_rate);
  critic1_opt = AdamState::for_network(critic1, cfg_.critic_learning_rate);
  critic2_opt = AdamState::for_network(critic2, cfg_.critic_learning_rate);
}

Eigen::VectorXd Td3Agent::select_action(const Eigen::VectorXd& observation, bool explore) {
  Eigen::VectorXd a = actor.predict(observation);
  if (explore && cfg_.exploration_noise > 0.0) {
    std::normal_distribution<double> n(0.0, cfg_.exploration_noise);
    for (Eigen::Index i = 0; i < a.size(); ++i) a[i] += n(rng_);
  }
  return a.cwiseMax(-1.0).cwiseMin(1.0);
}

Eigen::VectorXd Td3Agent::random_action() {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::VectorXd a(act_dim_);
  for (Eigen::Index i = 0; i < a.size(); ++i) a[i] = u(rng_);
  return a;
}

Eigen::MatrixXd Td3Agent::sample_target_noise(int batch_size) {
  Eigen::MatrixXd noise(act_dim_, batch_size);
  std::normal_distribution<double> n(0.0, cfg_.target_noise);
  const double c = cfg_.target_noise_clip;
  for (Eigen::Index j = 0; j < noise.cols(); ++j)
    for (Eigen::Index i = 0; i < noise.rows(); ++i)
      noise(i, j) = cfg_.target_noise > 0.0 ? std::clamp(n(rng_), -c, c) : 0.0;
  return noise;
}

Eigen::VectorXd Td3Agent::critic_targets(const ReplayBatch& batch,
                                         const Eigen::MatrixXd& target_action_noise) const {
  Eigen::MatrixXd next_actions = actor_target.predict(batch.next_observations) + target_action_noise;
  next_actions = next_actions.cwiseMax(-1.0).cwiseMin(1.0);
  const Eigen::MatrixXd input = stack(batch.next_observations, next_actions);
  const Eigen::RowVectorXd q1 = critic1_target.predict(input).row(0);
  const Eigen::RowVectorXd q2 = critic2_target.predict(input).row(0);
  const Eigen::VectorXd q_min = q1.cwiseMin(q2).transpose();
  return batch.rewards.array() +
         cfg_.discount * (1.0 - batch.dones.array()) * q_min.array();
}

double Td3Agent::update_critic(Mlp& critic, AdamState& opt, const Eigen::MatrixXd& input,
                               const Eigen::VectorXd& targets) {
  ForwardCache cache;
  const Eigen::MatrixXd q = critic.forward(input, cache);
  const Eigen::RowVectorXd err = q.row(0) - targets.transpose();
  const double n = static_cast<double>(err.size());
  const double loss = err.squaredNorm() / n;
  const Eigen::MatrixXd grad = (2.0 / n) * err;
  const BackwardResult back = critic.backward(cache, grad, true, false);
  adam_update(critic, back.grads, opt);
  return loss;
}

double Td3Agent::update_actor(const ReplayBatch& batch) {
  ForwardCache actor_cache;
  const Eigen::MatrixXd raw = actor.forward(batch.observations, actor_cache);
  const Eigen::MatrixXd clipped = raw.cwiseMax(-1.0).cwiseMin(1.0);
  ForwardCache critic_cache;
  const Eigen::MatrixXd q = critic1.forward(stack(batch.observations, clipped), critic_cache);
  const double n = static_cast<double>(q.cols());
  const Eigen::MatrixXd overshoot = raw - clipped;
  const double loss = -q.sum() / n + cfg_.action_overshoot_penalty * overshoot.squaredNorm() / n;

  const Eigen::MatrixXd dq = Eigen::MatrixXd::Constant(1, q.cols(), -1.0 / n);
  const BackwardResult critic_back = critic1.backward(critic_cache, dq, false, true);
  Eigen::MatrixXd da = critic_back.input_grad.bottomRows(act_dim_);
  // Outside the box the critic gradient only passes when it points back inside.
  for (Eigen::Index j = 0; j < da.cols(); ++j) {
    for (Eigen::Index i = 0; i < da.rows(); ++i) {
      const double o = overshoot(i, j);
      if ((o > 0.0 && da(i, j) < 0.0) || (o < 0.0 && da(i, j) > 0.0)) da(i, j) = 0.0;
    }
  }
  da += (2.0 * cfg_.action_overshoot_penalty / n) * overshoot;
  const BackwardResult actor_back = actor.backward(actor_cache, da, true, false);
  adam_update(actor, actor_back.grads, actor_opt);
  return loss;
}

TrainDiagnostics Td3Agent::train_step() {
  const ReplayBatch batch = buffer_.sample(cfg_.batch_size, rng_);
  return train_on(batch, sample_target_noise(cfg_.batch_size));
}

TrainDiagnostics Td3Agent::train_on(const ReplayBatch& batch,
                                    const Eigen::MatrixXd& target_action_noise) {
  const Eigen::VectorXd targets = critic_targets(batch, target_action_noise);

  const Eigen::MatrixXd input = stack(batch.observations, batch.actions);
  TrainDiagnostics diag;
  diag.critic_loss = 0.5 * (update_critic(critic1, critic1_opt, input, targets) +
                            update_critic(critic2, critic2_opt, input, targets));
  if (!std::isfinite(diag.critic_loss)) {
    throw NumericalDivergence("train_step: critic loss is not finite at update " +
                              std::to_string(train_calls_));
  }

  ++train_calls_;
  if (train_calls_ % cfg_.policy_delay == 0) {
    diag.actor_loss = update_actor(batch);
    diag.actor_updated = true;
    if (!std::isfinite(diag.actor_loss)) {
      throw NumericalDivergence("train_step: actor loss is not finite at update " +
                                std::to_string(train_calls_));
    }
    soft_update(critic1_target, critic1, cfg_.tau);
    soft_update(critic2_target, critic2, cfg_.tau);
    soft_update(actor_target, actor, cfg_.tau);
  } else {
    diag.actor_loss = kNaN;
  }
  return diag;
}

// ---------------------------------------------------------------------------
// Training loop

EvalSummary evaluate_policy(const Mlp& actor, const Environment& env, int episodes,
                            std::uint64_t seed) {
  EvalSummary summary;
  for (int k = 0; k < episodes; ++k) {
    auto episode_env = env.clone(seed + static_cast<std::uint64_t>(k));
    Eigen::VectorXd obs = episode_env->reset();
    double ret = 0.0;
    double err = 0.0;
    int steps = 0;
    for (;;) {
      const Eigen::VectorXd a = actor.predict(obs).cwiseMax(-1.0).cwiseMin(1.0);
      EnvStep s = episode_env->step(a);
      ret += s.reward;
      err += episode_env->tracking_error();
      ++steps;
      obs = std::move(s.observation);
      if (s.terminated || s.truncated) break;
    }
    summary.mean_return += ret / episodes;
    summary.mean_tracking_error += err / steps / episodes;
  }
  return summary;
}

TrainResult train(Td3Agent& agent, Environment& env, const TrainHooks& hooks) {
  const Td3Config& cfg = agent.config();
  if (env.observation_size() != agent.actor.input_size() ||
      env.action_size() != agent.actor.output_size()) {
    throw std::invalid_argument("train: environment and agent dimensions differ");
  }

  TrainResult result;
  result.best_actor = agent.actor;
  result.best_return = -std::numeric_limits<double>::infinity();

  const std::uint64_t eval_seed = cfg.seed + 1'000'000;
  double critic_sum = 0.0;
  double actor_sum = 0.0;
  std::int64_t critic_n = 0;
  std::int64_t actor_n = 0;

  auto emit = [&](std::int64_t step) {
    const EvalSummary eval = evaluate_policy(agent.actor, env, cfg.eval_episodes, eval_seed);
    CurvePoint p;
    p.step = step;
    p.mean_return = eval.mean_return;
    p.mean_tracking_error = eval.mean_tracking_error;
    p.critic_loss = critic_n > 0 ? critic_sum / critic_n : kNaN;
    p.actor_loss = actor_n > 0 ? actor_sum / actor_n : kNaN;
    critic_sum = actor_sum = 0.0;
    critic_n = actor_n = 0;
    if (eval.mean_return > result.best_return) {
      result.best_return = eval.mean_return;
      result.best_actor = agent.actor;
    }
    result.curve.push_back(p);
    if (hooks.on_eval) hooks.on_eval(agent, p);
  };

  Eigen::VectorXd obs = env.reset();
  for (std::int64_t step = 1; step <= cfg.total_steps; ++step) {
    const bool warming_up = step <= cfg.warmup_steps;
    const Eigen::VectorXd action =
        warming_up ? agent.random_action() : agent.select_action(obs, true);
    EnvStep s = env.step(action);
    agent.buffer().add({obs, action, s.reward, s.observation, s.terminated});
    obs = (s.terminated || s.truncated) ? env.reset() : std::move(s.observation);
    if (hooks.on_step) hooks.on_step(agent, step);

    if (!warming_up && agent.buffer().size() >= cfg.batch_size) {
      const TrainDiagnostics d = agent.train_step();
      critic_sum += d.critic_loss;
      ++critic_n;
      if (d.actor_updated) {
        actor_sum += d.actor_loss;
        ++actor_n;
      }
    }

    if (step % cfg.eval_interval == 0 || step == cfg.total_steps) emit(step);
  }
  return result;
}

}  // namespace quadrl
