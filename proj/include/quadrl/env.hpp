#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <deque>
#include <iosfwd>
#include <random>
#include <vector>

#include "quadrl/dynamics.hpp"

namespace quadrl {

using Observation = Eigen::VectorXd;
using Action = Eigen::Vector4d;
using Rng = std::mt19937_64;

struct RewardParams {
  double survival_bonus = 2.0;
  double position_weight = 2.5;
  double orientation_weight = 2.5;
  double velocity_weight = 0.05;
  double action_weight = 0.05;
  double action_baseline = 0.35;

  void validate() const;
};

struct EnvConfig {
  int action_history = 32;
  double control_period = 0.01;
  int substeps = 10;
  int episode_length = 500;

  double position_noise = 0.001;
  double orientation_noise = 0.001;
  double velocity_noise = 0.002;
  double angular_velocity_noise = 0.002;

  double init_position_half_width = 0.1;
  double init_max_tilt = kPi / 2.0;
  double init_max_speed = 1.0;
  double init_max_angular_speed = 1.0;

  double position_bound = 2.0;

  double min_action_rpm = -21702.0;
  double max_action_rpm = 27102.0;

  int observation_size() const { return 18 + 4 * action_history; }
  double sim_dt() const { return control_period / substeps; }

  void validate() const;
};

/// Clip every component into [-1, 1]; NaN maps to 0.
Action clip_action(const Action& a);

/// Normalized action -> rotor speed setpoints in rad/s, clamped to [0, max rotor speed].
Vec4 map_action(const Action& a, const EnvConfig& cfg, const QuadParams& params);

/// Inverse of the affine part of map_action, without clipping.
double rpm_to_normalized(double rpm, const EnvConfig& cfg);

double reward(const QuadState& s, const Action& a, const RewardParams& params);

bool is_terminal(const QuadState& s, const EnvConfig& cfg);

/// Writes [p, R row-major, v, w] for the state into out[0..18).
void write_state_block(const QuadState& s, double* out);

struct StepResult {
  Observation observation;
  double reward = 0.0;
  bool terminated = false;
  bool truncated = false;
  QuadState state;
};

/// Hover MDP around a reference point. The reference defaults to the origin;
/// tracking shifts it every control step, and all observation, reward and
/// termination quantities are taken relative to it.
class QuadEnv {
 public:
  QuadEnv(EnvConfig cfg, RewardParams reward_params, QuadParams params, std::uint64_t seed);

  Observation reset();
  /// Starts an episode from a given state instead of the reset distribution.
  Observation reset_to(const QuadState& state);
  StepResult step(const Action& action);

  void set_reference(const Vec3& reference) { reference_ = reference; }
  /// Overwrites the physical state without touching history or episode bookkeeping.
  void teleport(const QuadState& state) { state_ = state; }
  const Vec3& reference() const { return reference_; }

  const QuadState& state() const { return state_; }
  const EnvConfig& config() const { return cfg_; }
  const RewardParams& reward_params() const { return reward_params_; }
  const QuadParams& params() const { return params_; }
  int steps_taken() const { return steps_; }
  bool done() const { return done_; }
  Rng& rng() { return rng_; }

  /// Observation with noise, built from the current state and action history.
  Observation observe();
  /// Same layout, no noise.
  Observation observe_exact() const;

  QuadState sample_initial_state();

 private:
  QuadState relative_state() const;

  EnvConfig cfg_;
  RewardParams reward_params_;
  QuadParams params_;
  Rng rng_;
  QuadState state_;
  std::deque<Action> history_;
  Vec3 reference_ = Vec3::Zero();
  int steps_ = 0;
  bool done_ = true;
};

/// CSV rows of t, p, v, R (row-major), w, action, reward.
class EpisodeCsv {
 public:
  explicit EpisodeCsv(std::ostream& out);
  void write(double t, const QuadState& s, const Action& a, double r);

 private:
  std::ostream& out_;
};

}  // namespace quadrl
