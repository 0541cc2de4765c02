#pragma once

#include "quadrl/dynamics.hpp"

namespace quadrl {

struct LoopGains {
  Vec3 kp = Vec3::Zero();
  Vec3 ki = Vec3::Zero();
  Vec3 kd = Vec3::Zero();
  Vec3 integral_limit = Vec3::Constant(1.0);
  Vec3 output_limit = Vec3::Constant(1.0);
};

/// Cascade gains: position -> velocity -> attitude -> body rate.
///
/// The position loop outputs a velocity demand (m/s), the velocity loop an
/// acceleration demand (m/s^2), the attitude loop a body-rate demand (rad/s)
/// and the rate loop an angular acceleration (rad/s^2) that is turned into a
/// torque through the inertia and clamped by `torque_limit`.
struct PidGains {
  LoopGains position;
  LoopGains velocity;
  LoopGains attitude;
  LoopGains rate;
  double max_tilt = 0.6;     // rad
  // Collective thrust floor as a fraction of weight. Keeps torque authority
  // when the thrust axis is far from vertical and the projected demand is ~0.
  double min_thrust_ratio = 0.5;
  Vec3 torque_limit{2e-3, 2e-3, 1e-7};

  static PidGains defaults();
  void validate() const;
};

struct LoopState {
  Vec3 integral = Vec3::Zero();
  Vec3 previous_error = Vec3::Zero();
};

struct PidState {
  LoopState position;
  LoopState velocity;
  LoopState attitude;
  LoopState rate;
  bool primed = false;  // false until the first update has stored previous errors
};

struct PidTarget {
  Vec3 position = Vec3::Zero();
  double yaw = 0.0;
};

struct MixResult {
  Vec4 rotor_speeds = Vec4::Zero();
  bool saturated = false;
};

/// Inverts the rotor allocation for thrust and torque. Feasible requests are
/// solved exactly; otherwise roll/pitch and then yaw are scaled down so that
/// every squared rotor speed stays in [0, max^2]. Thrust is clamped to its range.
MixResult mix_to_motors(double thrust, const Vec3& torque, const QuadParams& params);

/// Yaw of the body x axis projected on the Earth xy plane.
double heading_of(const Mat3& R);

/// One controller update; returns rotor speed setpoints in rad/s.
Vec4 pid_control(const QuadState& state, const PidTarget& target, const PidGains& gains,
                 PidState& pid_state, double dt, const QuadParams& params);

}  // namespace quadrl
