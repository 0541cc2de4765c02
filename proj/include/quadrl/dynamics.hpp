#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace quadrl {

using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kPi = 3.14159265358979323846;

inline constexpr double rpm_to_rad_per_sec(double rpm) { return rpm * 2.0 * kPi / 60.0; }
inline constexpr double rad_per_sec_to_rpm(double w) { return w * 60.0 / (2.0 * kPi); }

/// Raised when the simulated state stops being finite.
class SimulationDivergence : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Physical constants of a 33 g nano-quadcopter airframe.
///
/// The rotor thrust coefficient is not taken from the airframe table; it is
/// derived from a thrust-to-weight ratio so that full throttle yields
/// `thrust_to_weight * m * |g|`.
struct QuadParams {
  double mass = 0.033;
  Vec3 gravity{0.0, 0.0, -9.81};
  double arm_length = 0.028;
  double drag_torque_ratio = 9.18e-7;
  Vec3 inertia{16.57e-6, 16.66e-6, 29.26e-6};
  double max_rpm = 27102.0;
  double motor_time_constant = 0.05;
  double thrust_to_weight = 1.9;

  double max_rotor_speed() const { return rpm_to_rad_per_sec(max_rpm); }
  /// k_f in N / (rad/s)^2.
  double thrust_coefficient() const;
  /// Rotor speed at which four equal rotors balance gravity.
  double hover_rotor_speed() const;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

struct QuadState {
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  Mat3 rotation = Mat3::Identity();  // body -> Earth
  Vec3 body_rates = Vec3::Zero();
  Vec4 rotor_speeds = Vec4::Zero();  // rad/s, lagged actual values

  bool all_finite() const;
};

struct WrenchBody {
  double thrust = 0.0;          // along body z, N
  Vec3 torque = Vec3::Zero();   // body frame, N*m
};

struct StateDerivative {
  Vec3 position;
  Vec3 velocity;
  Mat3 rotation;
  Vec3 body_rates;
};

Mat3 skew(const Vec3& w);

/// ZYX composition R = Rz(yaw) * Ry(pitch) * Rx(roll), body -> Earth.
Mat3 euler_to_rotation(double roll, double pitch, double yaw);

/// Geodesic angle between R and the identity.
double rotation_angle(const Mat3& R);

/// Closest rotation matrix in the Frobenius sense (polar decomposition).
Mat3 orthonormalize(const Mat3& R);

/// Plus-configuration rotor model: motor 1 on +x, 2 on +y, 3 on -x, 4 on -y.
WrenchBody rotor_wrench(const Vec4& rotor_speeds, const QuadParams& params);

/// First-order low-pass towards the setpoint, integrated exactly over dt.
Vec4 motor_lag_step(const Vec4& current, const Vec4& setpoint, double dt, double time_constant,
                    double max_rotor_speed);

StateDerivative dynamics_derivative(const QuadState& state, const WrenchBody& wrench,
                                    const QuadParams& params);

/// Motor lag followed by one RK4 step with the lagged rotor speeds held.
QuadState integrate_step(const QuadState& state, const Vec4& rotor_setpoints, double dt,
                         const QuadParams& params);

}  // namespace quadrl
