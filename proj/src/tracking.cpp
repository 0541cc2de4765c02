#include "quadrl/tracking.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <stdexcept>

namespace quadrl {

Vec3 circle_trajectory(double t, double period, double radius, const Vec3& center) {
  if (!(period > 0.0)) throw std::invalid_argument("circle_trajectory: period must be positive");
  const double phase = 2.0 * kPi * t / period;
  return center + radius * Vec3(std::cos(phase), std::sin(phase), 0.0);
}

Vec3 CircleTrajectory::position(double t) const {
  return circle_trajectory(t, period, radius, center);
}

void CircleTrajectory::validate() const {
  if (!(period > 0.0)) throw std::invalid_argument("eval.period must be positive");
  if (!(radius >= 0.0)) throw std::invalid_argument("eval.radius must be non-negative");
  if (!(duration > 0.0)) throw std::invalid_argument("eval.duration must be positive");
  if (!center.allFinite()) throw std::invalid_argument("eval.center must be finite");
}

void TrackingLog::write_csv(std::ostream& out) const {
  out << "t,xd,yd,zd,x,y,z,vx,vy,vz,a1,a2,a3,a4\n";
  out << std::setprecision(17);
  for (const auto& s : samples) {
    out << s.t;
    for (int i = 0; i < 3; ++i) out << ',' << s.desired[i];
    for (int i = 0; i < 3; ++i) out << ',' << s.position[i];
    for (int i = 0; i < 3; ++i) out << ',' << s.velocity[i];
    for (int i = 0; i < 4; ++i) out << ',' << s.action[i];
    out << '\n';
  }
  if (crashed) out << "# crashed at t=" << crash_time << '\n';
}

double TrackingLog::peak_speed(double from_time) const {
  double peak = 0.0;
  for (const auto& s : samples) {
    if (s.t >= from_time) peak = std::max(peak, s.velocity.norm());
  }
  return peak;
}

TrackingErrors rmse(const TrackingLog& log, double from_time) {
  double sum_xyz = 0.0;
  double sum_xy = 0.0;
  std::size_t n = 0;
  for (const auto& s : log.samples) {
    if (s.t < from_time) continue;
    const Vec3 d = s.position - s.desired;
    sum_xy += d.x() * d.x() + d.y() * d.y();
    sum_xyz += d.squaredNorm();
    ++n;
  }
  if (n == 0) throw std::invalid_argument("rmse: no samples in the selected window");
  const double count = static_cast<double>(n);
  return {std::sqrt(sum_xyz / (3.0 * count)), std::sqrt(sum_xy / (2.0 * count))};
}

TrackingErrors tracking_metrics(const TrackingLog& log, double transient) {
  const bool window_empty =
      log.samples.empty() || log.samples.back().t < transient;
  return rmse(log, window_empty ? 0.0 : transient);
}

Action rotor_speeds_to_action(const Vec4& rotor_speeds, const EnvConfig& cfg) {
  Action a;
  for (int i = 0; i < 4; ++i) a[i] = rpm_to_normalized(rad_per_sec_to_rpm(rotor_speeds[i]), cfg);
  return clip_action(a);
}

Action PolicyController::act(QuadEnv&, const Observation& obs, const Vec3&) {
  return clip_action(actor_.predict(obs));
}

Action PidController::act(QuadEnv& env, const Observation&, const Vec3& desired) {
  const Vec4 speeds =
      pid_control(env.state(), {desired, 0.0}, gains_, state_, env.config().control_period, env.params());
  return rotor_speeds_to_action(speeds, env.config());
}

TrackingLog run_tracking(Controller& controller, const TrackingConfig& tracking,
                         const EnvConfig& env_cfg, const RewardParams& reward_params,
                         const QuadParams& params, std::uint64_t seed) {
  tracking.trajectory.validate();
  if (!(tracking.setpoint_rate > 0.0)) throw std::invalid_argument("eval.setpoint_rate must be positive");

  EnvConfig cfg = env_cfg;
  const double dt = cfg.control_period;
  const int steps = static_cast<int>(std::ceil(tracking.trajectory.duration / dt - 1e-9));
  cfg.episode_length = steps;

  QuadEnv env(cfg, reward_params, params, seed);
  auto held_setpoint = [&](int k) {
    const double t = std::floor(k * dt * tracking.setpoint_rate + 1e-9) / tracking.setpoint_rate;
    return tracking.trajectory.position(t);
  };

  QuadState start;
  start.position = tracking.trajectory.position(0.0);
  if (tracking.takeoff) start.position.z() = 0.0;
  start.rotor_speeds = Vec4::Constant(params.hover_rotor_speed());
  env.set_reference(held_setpoint(0));
  Observation obs = env.reset_to(start);
  controller.reset();

  TrackingLog log;
  log.controller = controller.name();
  log.sample_period = dt;
  log.samples.reserve(static_cast<std::size_t>(steps));
  for (int k = 0; k < steps; ++k) {
    const Vec3 desired = held_setpoint(k);
    if (k > 0) {
      env.set_reference(desired);
      obs = env.observe();
    }
    const Action a = controller.act(env, obs, desired);
    const QuadState& s = env.state();
    log.samples.push_back({k * dt, desired, s.position, s.velocity, a});

    const StepResult r = env.step(a);
    if (r.terminated) {
      log.crashed = true;
      log.crash_time = (k + 1) * dt;
      break;
    }
  }
  return log;
}

ComparisonReport compare_controllers(const std::vector<Controller*>& controllers,
                                     const TrackingConfig& tracking, const EnvConfig& env_cfg,
                                     const RewardParams& reward_params, const QuadParams& params,
                                     std::uint64_t seed) {
  ComparisonReport report;
  report.seed = seed;
  report.tracking = tracking;
  for (Controller* c : controllers) {
    const TrackingLog log = run_tracking(*c, tracking, env_cfg, reward_params, params, seed);
    ComparisonRow row;
    row.controller = c->name();
    row.errors = tracking_metrics(log, tracking.transient);
    row.crashed = log.crashed;
    row.samples = log.samples.size();
    row.peak_speed = log.peak_speed(tracking.transient);
    report.rows.push_back(row);
  }
  return report;
}

void ComparisonReport::write_csv(std::ostream& out) const {
  out << "controller,e_bar,e_bar_xy,crashed,samples,peak_speed,seed,period,radius,duration,transient\n";
  out << std::setprecision(17);
  for (const auto& r : rows) {
    out << r.controller << ',' << r.errors.all_axes << ',' << r.errors.horizontal << ','
        << (r.crashed ? 1 : 0) << ',' << r.samples << ',' << r.peak_speed << ',' << seed << ','
        << tracking.trajectory.period << ',' << tracking.trajectory.radius << ','
        << tracking.trajectory.duration << ',' << tracking.transient << '\n';
  }
}

void ComparisonReport::write_table(std::ostream& out) const {
  out << "Circle tracking, radius " << tracking.trajectory.radius << " m, T = "
      << tracking.trajectory.period << " s, seed " << seed << "\n";
  out << std::left << std::setw(12) << "Controller" << std::right << std::setw(12) << "e [m]"
      << std::setw(12) << "e_xy [m]" << std::setw(12) << "peak m/s" << "  status\n";
  out << std::fixed << std::setprecision(3);
  for (const auto& r : rows) {
    out << std::left << std::setw(12) << r.controller << std::right << std::setw(12)
        << r.errors.all_axes << std::setw(12) << r.errors.horizontal << std::setw(12)
        << r.peak_speed << "  " << (r.crashed ? "crashed" : "ok") << '\n';
  }
  out.unsetf(std::ios::fixed);
}

}  // namespace quadrl
