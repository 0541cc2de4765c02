#include "quadrl/pid.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace quadrl {

namespace {

Vec3 clamp_abs(const Vec3& v, const Vec3& limit) {
  return v.cwiseMax(-limit).cwiseMin(limit);
}

Vec3 run_loop(const LoopGains& g, LoopState& s, const Vec3& error, double dt, bool primed) {
  const Vec3 derivative = primed ? Vec3((error - s.previous_error) / dt) : Vec3::Zero();
  s.integral = clamp_abs(s.integral + error * dt, g.integral_limit);
  s.previous_error = error;
  const Vec3 out = g.kp.cwiseProduct(error) + g.ki.cwiseProduct(s.integral) +
                   g.kd.cwiseProduct(derivative);
  return clamp_abs(out, g.output_limit);
}

double wrap_angle(double a) {
  return std::remainder(a, 2.0 * kPi);
}

// Largest k in [0, 1] keeping base + k * delta inside [0, upper] componentwise,
// assuming base already lies inside.
double feasible_scale(const Vec4& base, const Vec4& delta, double upper) {
  double k = 1.0;
  for (int i = 0; i < 4; ++i) {
    if (delta[i] < 0.0) k = std::min(k, base[i] / -delta[i]);
    if (delta[i] > 0.0) k = std::min(k, (upper - base[i]) / delta[i]);
  }
  return std::clamp(k, 0.0, 1.0);
}

void check_loop(const LoopGains& g, const std::string& name) {
  const bool gains_ok = (g.kp.array() >= 0.0).all() && (g.ki.array() >= 0.0).all() &&
                        (g.kd.array() >= 0.0).all() && g.kp.allFinite() && g.ki.allFinite() &&
                        g.kd.allFinite();
  const bool clamps_ok = g.integral_limit.allFinite() && g.output_limit.allFinite() &&
                         (g.integral_limit.array() > 0.0).all() &&
                         (g.output_limit.array() > 0.0).all();
  if (!gains_ok) throw std::invalid_argument("pid." + name + " gains must be finite and >= 0");
  if (!clamps_ok) throw std::invalid_argument("pid." + name + " clamps must be finite and > 0");
}

}  // namespace

PidGains PidGains::defaults() {
  PidGains g;
  g.position.kp = Vec3(2.0, 2.0, 2.0);
  g.position.output_limit = Vec3(1.5, 1.5, 1.0);

  g.velocity.kp = Vec3(5.0, 5.0, 5.0);
  g.velocity.ki = Vec3(1.0, 1.0, 2.0);
  g.velocity.integral_limit = Vec3(0.5, 0.5, 0.5);
  g.velocity.output_limit = Vec3(6.0, 6.0, 6.0);

  g.attitude.kp = Vec3(10.0, 10.0, 1.0);
  g.attitude.output_limit = Vec3(6.0, 6.0, 0.5);

  g.rate.kp = Vec3(25.0, 25.0, 2.0);
  g.rate.output_limit = Vec3(400.0, 400.0, 10.0);

  g.max_tilt = 0.6;
  g.min_thrust_ratio = 0.5;
  g.torque_limit = Vec3(2e-3, 2e-3, 1e-7);
  return g;
}

void PidGains::validate() const {
  check_loop(position, "position");
  check_loop(velocity, "velocity");
  check_loop(attitude, "attitude");
  check_loop(rate, "rate");
  if (!(max_tilt > 0.0 && max_tilt < kPi / 2.0)) {
    throw std::invalid_argument("pid.max_tilt must lie in (0, pi/2)");
  }
  if (!(min_thrust_ratio >= 0.0 && min_thrust_ratio <= 1.0)) {
    throw std::invalid_argument("pid.min_thrust_ratio must lie in [0, 1]");
  }
  if (!torque_limit.allFinite() || (torque_limit.array() <= 0.0).any()) {
    throw std::invalid_argument("pid.torque_limit must be finite and > 0");
  }
}

MixResult mix_to_motors(double thrust, const Vec3& torque, const QuadParams& params) {
  if (!(thrust >= 0.0)) throw std::invalid_argument("mix_to_motors: thrust must be >= 0");
  const double kf = params.thrust_coefficient();
  const double upper = params.max_rotor_speed() * params.max_rotor_speed();

  MixResult result;
  double total = thrust / kf;  // sum of squared speeds
  if (total > 4.0 * upper) {
    total = 4.0 * upper;
    result.saturated = true;
  }
  const double b = torque.x() / (params.arm_length * kf);
  const double c = torque.y() / (params.arm_length * kf);
  const double d = params.drag_torque_ratio > 0.0 ? torque.z() / (params.drag_torque_ratio * kf) : 0.0;

  const Vec4 base = Vec4::Constant(total / 4.0);
  const Vec4 roll_pitch(-c / 2.0, b / 2.0, c / 2.0, -b / 2.0);
  const Vec4 yaw(-d / 4.0, d / 4.0, -d / 4.0, d / 4.0);

  const Vec4 exact = base + roll_pitch + yaw;
  if ((exact.array() >= 0.0).all() && (exact.array() <= upper).all()) {
    result.rotor_speeds = exact.cwiseSqrt();
    return result;
  }
  const double k_rp = feasible_scale(base, roll_pitch, upper);
  const Vec4 with_rp = base + k_rp * roll_pitch;
  const double k_yaw = feasible_scale(with_rp, yaw, upper);
  const Vec4 squared = (with_rp + k_yaw * yaw).cwiseMax(0.0).cwiseMin(upper);

  result.saturated = true;
  result.rotor_speeds = squared.cwiseSqrt();
  return result;
}

double heading_of(const Mat3& R) {
  return std::atan2(R(1, 0), R(0, 0));
}

Vec4 pid_control(const QuadState& state, const PidTarget& target, const PidGains& gains,
                 PidState& ps, double dt, const QuadParams& params) {
  if (!(dt > 0.0)) throw std::invalid_argument("pid_control: dt must be positive");
  const double g = params.gravity.norm();

  const Vec3 velocity_demand =
      run_loop(gains.position, ps.position, target.position - state.position, dt, ps.primed);
  const Vec3 accel =
      run_loop(gains.velocity, ps.velocity, velocity_demand - state.velocity, dt, ps.primed);

  // Small-angle map from horizontal acceleration to tilt in the heading frame.
  const double heading = heading_of(state.rotation);
  const double ch = std::cos(heading);
  const double sh = std::sin(heading);
  const double pitch = std::clamp((accel.x() * ch + accel.y() * sh) / g, -gains.max_tilt, gains.max_tilt);
  const double roll = std::clamp((accel.x() * sh - accel.y() * ch) / g, -gains.max_tilt, gains.max_tilt);
  const Mat3 desired = euler_to_rotation(roll, pitch, heading);

  const Vec3 thrust_vector = params.mass * (accel - params.gravity);
  const double thrust = std::max(gains.min_thrust_ratio * params.mass * g,
                                 thrust_vector.dot(state.rotation.col(2)));

  // Rotation error vee(Rd^T R - R^T Rd) / 2; the yaw slot is replaced by the heading error.
  const Mat3 e = desired.transpose() * state.rotation - state.rotation.transpose() * desired;
  const Vec3 rotation_error = 0.5 * Vec3(e(2, 1), e(0, 2), e(1, 0));
  const Vec3 attitude_error(-rotation_error.x(), -rotation_error.y(),
                            wrap_angle(target.yaw - heading));
  const Vec3 rate_demand = run_loop(gains.attitude, ps.attitude, attitude_error, dt, ps.primed);
  const Vec3 angular_accel =
      run_loop(gains.rate, ps.rate, rate_demand - state.body_rates, dt, ps.primed);
  ps.primed = true;

  const Vec3 momentum = params.inertia.cwiseProduct(state.body_rates);
  const Vec3 torque = params.inertia.cwiseProduct(angular_accel) - momentum.cross(state.body_rates);
  return mix_to_motors(thrust, clamp_abs(torque, gains.torque_limit), params).rotor_speeds;
}

}  // namespace quadrl
