#include "quadrl/env.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>
#include <string>

namespace quadrl {

namespace {

void require(bool ok, const std::string& key) {
  if (!ok) throw std::invalid_argument(key + " out of range");
}

Vec3 uniform_in_ball(Rng& rng, double radius) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (;;) {
    const Vec3 v(u(rng), u(rng), u(rng));
    if (v.squaredNorm() <= 1.0) return radius * v;
  }
}

// Haar-uniform rotation conditioned on a geodesic angle at most max_angle.
Mat3 uniform_rotation_within(Rng& rng, double max_angle) {
  std::normal_distribution<double> n(0.0, 1.0);
  for (;;) {
    Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
    q.normalize();
    const Mat3 R = q.toRotationMatrix();
    if (rotation_angle(R) <= max_angle) return R;
  }
}

}  // namespace

void RewardParams::validate() const {
  require(survival_bonus >= 0.0, "env.survival_bonus");
  require(position_weight >= 0.0, "env.position_weight");
  require(orientation_weight >= 0.0, "env.orientation_weight");
  require(velocity_weight >= 0.0, "env.velocity_weight");
  require(action_weight >= 0.0, "env.action_weight");
  require(std::isfinite(action_baseline), "env.action_baseline");
}

void EnvConfig::validate() const {
  require(action_history >= 0, "env.action_history");
  require(control_period > 0.0, "env.control_period");
  require(substeps > 0, "env.substeps");
  require(sim_dt() <= 0.01, "env.substeps");
  require(episode_length > 0, "env.episode_length");
  require(position_noise >= 0.0 && orientation_noise >= 0.0 && velocity_noise >= 0.0 &&
              angular_velocity_noise >= 0.0,
          "env.noise");
  require(init_position_half_width >= 0.0, "env.init_position_half_width");
  require(init_max_tilt >= 0.0 && init_max_tilt <= kPi, "env.init_max_tilt");
  require(init_max_speed >= 0.0, "env.init_max_speed");
  require(init_max_angular_speed >= 0.0, "env.init_max_angular_speed");
  require(position_bound > 0.0, "env.position_bound");
  require(max_action_rpm > min_action_rpm, "env.max_action_rpm");
}

Action clip_action(const Action& a) {
  Action out;
  for (int i = 0; i < 4; ++i) out[i] = std::isnan(a[i]) ? 0.0 : std::clamp(a[i], -1.0, 1.0);
  return out;
}

Vec4 map_action(const Action& a, const EnvConfig& cfg, const QuadParams& params) {
  const Action clipped = clip_action(a);
  const double mid = 0.5 * (cfg.max_action_rpm + cfg.min_action_rpm);
  const double half = 0.5 * (cfg.max_action_rpm - cfg.min_action_rpm);
  Vec4 out;
  for (int i = 0; i < 4; ++i) {
    const double rpm = mid + half * clipped[i];
    out[i] = std::clamp(rpm_to_rad_per_sec(rpm), 0.0, params.max_rotor_speed());
  }
  return out;
}

double rpm_to_normalized(double rpm, const EnvConfig& cfg) {
  const double mid = 0.5 * (cfg.max_action_rpm + cfg.min_action_rpm);
  const double half = 0.5 * (cfg.max_action_rpm - cfg.min_action_rpm);
  return (rpm - mid) / half;
}

double reward(const QuadState& s, const Action& a, const RewardParams& rp) {
  const double cos_angle = (s.rotation.trace() - 1.0) / 2.0;
  const double sin2_angle = 1.0 - cos_angle * cos_angle;
  const Action off = a.array() - rp.action_baseline;
  return rp.survival_bonus - rp.position_weight * s.position.squaredNorm() -
         rp.orientation_weight * sin2_angle - rp.velocity_weight * s.velocity.squaredNorm() -
         rp.action_weight * off.squaredNorm();
}

bool is_terminal(const QuadState& s, const EnvConfig& cfg) {
  if (!s.all_finite()) return true;
  return s.position.cwiseAbs().maxCoeff() > cfg.position_bound;
}

void write_state_block(const QuadState& s, double* out) {
  for (int i = 0; i < 3; ++i) out[i] = s.position[i];
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) out[3 + 3 * r + c] = s.rotation(r, c);
  for (int i = 0; i < 3; ++i) out[12 + i] = s.velocity[i];
  for (int i = 0; i < 3; ++i) out[15 + i] = s.body_rates[i];
}

QuadEnv::QuadEnv(EnvConfig cfg, RewardParams reward_params, QuadParams params, std::uint64_t seed)
    : cfg_(cfg), reward_params_(reward_params), params_(params), rng_(seed) {
  cfg_.validate();
  reward_params_.validate();
  params_.validate();
}

QuadState QuadEnv::sample_initial_state() {
  std::uniform_real_distribution<double> box(-cfg_.init_position_half_width,
                                             cfg_.init_position_half_width);
  QuadState s;
  s.position = Vec3(box(rng_), box(rng_), box(rng_));
  s.rotation = uniform_rotation_within(rng_, cfg_.init_max_tilt);
  s.velocity = uniform_in_ball(rng_, cfg_.init_max_speed);
  s.body_rates = uniform_in_ball(rng_, cfg_.init_max_angular_speed);
  s.rotor_speeds = Vec4::Constant(params_.hover_rotor_speed());
  return s;
}

Observation QuadEnv::reset() {
  QuadState s = sample_initial_state();
  s.position += reference_;
  return reset_to(s);
}

Observation QuadEnv::reset_to(const QuadState& state) {
  state_ = state;
  history_.assign(static_cast<std::size_t>(cfg_.action_history), Action::Zero());
  steps_ = 0;
  done_ = false;
  return observe();
}

QuadState QuadEnv::relative_state() const {
  QuadState s = state_;
  s.position -= reference_;
  return s;
}

Observation QuadEnv::observe_exact() const {
  Observation obs(cfg_.observation_size());
  write_state_block(relative_state(), obs.data());
  int k = 18;
  for (const Action& a : history_) {
    obs.segment<4>(k) = a;
    k += 4;
  }
  return obs;
}

Observation QuadEnv::observe() {
  Observation obs = observe_exact();
  std::normal_distribution<double> n(0.0, 1.0);
  auto perturb = [&](int begin, int count, double stddev) {
    if (stddev <= 0.0) return;
    for (int i = begin; i < begin + count; ++i) obs[i] += stddev * n(rng_);
  };
  perturb(0, 3, cfg_.position_noise);
  perturb(3, 9, cfg_.orientation_noise);
  perturb(12, 3, cfg_.velocity_noise);
  perturb(15, 3, cfg_.angular_velocity_noise);
  return obs;
}

StepResult QuadEnv::step(const Action& action) {
  if (done_) throw std::logic_error("QuadEnv::step called on a finished episode; call reset()");

  const Action a = clip_action(action);
  const Vec4 setpoints = map_action(a, cfg_, params_);
  const double dt = cfg_.sim_dt();

  StepResult result;
  bool diverged = false;
  for (int i = 0; i < cfg_.substeps; ++i) {
    try {
      state_ = integrate_step(state_, setpoints, dt, params_);
    } catch (const SimulationDivergence&) {
      diverged = true;
      break;
    }
  }
  ++steps_;
  if (cfg_.action_history > 0) {
    history_.pop_back();
    history_.push_front(a);
  }

  const QuadState rel = relative_state();
  result.state = state_;
  result.observation = observe();
  result.terminated = diverged || is_terminal(rel, cfg_);
  result.truncated = !result.terminated && steps_ >= cfg_.episode_length;
  result.reward = diverged ? 0.0 : reward(rel, a, reward_params_);
  done_ = result.terminated || result.truncated;
  return result;
}

EpisodeCsv::EpisodeCsv(std::ostream& out) : out_(out) {
  out_ << "t,x,y,z,vx,vy,vz,r11,r12,r13,r21,r22,r23,r31,r32,r33,wx,wy,wz,a1,a2,a3,a4,reward\n";
  out_.precision(17);
}

void EpisodeCsv::write(double t, const QuadState& s, const Action& a, double r) {
  out_ << t;
  for (int i = 0; i < 3; ++i) out_ << ',' << s.position[i];
  for (int i = 0; i < 3; ++i) out_ << ',' << s.velocity[i];
  for (int row = 0; row < 3; ++row)
    for (int c = 0; c < 3; ++c) out_ << ',' << s.rotation(row, c);
  for (int i = 0; i < 3; ++i) out_ << ',' << s.body_rates[i];
  for (int i = 0; i < 4; ++i) out_ << ',' << a[i];
  out_ << ',' << r << '\n';
}

}  // namespace quadrl
