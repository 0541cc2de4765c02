#include "quadrl/dynamics.hpp"

#include <algorithm>
#include <cmath>

namespace quadrl {

double QuadParams::thrust_coefficient() const {
  const double w_max = max_rotor_speed();
  return thrust_to_weight * mass * gravity.norm() / (4.0 * w_max * w_max);
}

double QuadParams::hover_rotor_speed() const {
  return std::sqrt(mass * gravity.norm() / (4.0 * thrust_coefficient()));
}

void QuadParams::validate() const {
  auto require = [](bool ok, const char* field) {
    if (!ok) throw std::invalid_argument(std::string("physics.") + field + " out of range");
  };
  require(std::isfinite(mass) && mass > 0.0, "mass");
  require(std::isfinite(arm_length) && arm_length > 0.0, "arm_length");
  require(std::isfinite(drag_torque_ratio) && drag_torque_ratio >= 0.0, "drag_torque_ratio");
  require(inertia.allFinite() && (inertia.array() > 0.0).all(), "inertia");
  require(gravity.allFinite() && gravity.norm() > 0.0, "gravity");
  require(std::isfinite(max_rpm) && max_rpm > 0.0, "max_rpm");
  require(std::isfinite(motor_time_constant) && motor_time_constant > 0.0, "motor_time_constant");
  require(std::isfinite(thrust_to_weight) && thrust_to_weight > 1.0, "thrust_to_weight");
}

bool QuadState::all_finite() const {
  return position.allFinite() && velocity.allFinite() && rotation.allFinite() &&
         body_rates.allFinite() && rotor_speeds.allFinite();
}

Mat3 skew(const Vec3& w) {
  Mat3 s;
  s << 0.0, -w.z(), w.y(),
       w.z(), 0.0, -w.x(),
       -w.y(), w.x(), 0.0;
  return s;
}

Mat3 euler_to_rotation(double roll, double pitch, double yaw) {
  const Mat3 rz = Eigen::AngleAxisd(yaw, Vec3::UnitZ()).toRotationMatrix();
  const Mat3 ry = Eigen::AngleAxisd(pitch, Vec3::UnitY()).toRotationMatrix();
  const Mat3 rx = Eigen::AngleAxisd(roll, Vec3::UnitX()).toRotationMatrix();
  return rz * ry * rx;
}

double rotation_angle(const Mat3& R) {
  const double c = std::clamp((R.trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c);
}

Mat3 orthonormalize(const Mat3& R) {
  Eigen::JacobiSVD<Mat3> svd(R, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 out = svd.matrixU() * svd.matrixV().transpose();
  if (out.determinant() < 0.0) {
    Mat3 u = svd.matrixU();
    u.col(2) *= -1.0;
    out = u * svd.matrixV().transpose();
  }
  return out;
}

WrenchBody rotor_wrench(const Vec4& w, const QuadParams& params) {
  if (!w.allFinite() || (w.array() < 0.0).any()) {
    throw std::invalid_argument("rotor_wrench: rotor speeds must be finite and non-negative");
  }
  const double kf = params.thrust_coefficient();
  const Vec4 sq = w.array().square();
  WrenchBody out;
  out.thrust = kf * sq.sum();
  out.torque.x() = params.arm_length * kf * (sq[1] - sq[3]);
  out.torque.y() = params.arm_length * kf * (sq[2] - sq[0]);
  out.torque.z() = params.drag_torque_ratio * kf * (-sq[0] + sq[1] - sq[2] + sq[3]);
  return out;
}

Vec4 motor_lag_step(const Vec4& current, const Vec4& setpoint, double dt, double time_constant,
                    double max_rotor_speed) {
  if (!(dt > 0.0) || !(time_constant > 0.0)) {
    throw std::invalid_argument("motor_lag_step: dt and time constant must be positive");
  }
  const Vec4 target = setpoint.cwiseMax(0.0).cwiseMin(max_rotor_speed);
  const double decay = std::exp(-dt / time_constant);
  const Vec4 next = target + (current - target) * decay;
  return next.cwiseMax(0.0).cwiseMin(max_rotor_speed);
}

StateDerivative dynamics_derivative(const QuadState& s, const WrenchBody& wrench,
                                    const QuadParams& params) {
  StateDerivative d;
  d.position = s.velocity;
  d.velocity = params.gravity + s.rotation.col(2) * (wrench.thrust / params.mass);
  d.rotation = s.rotation * skew(s.body_rates);
  const Vec3 momentum = params.inertia.cwiseProduct(s.body_rates);
  d.body_rates = (momentum.cross(s.body_rates) + wrench.torque).cwiseQuotient(params.inertia);
  return d;
}

namespace {

QuadState advance(const QuadState& s, const StateDerivative& d, double h) {
  QuadState out = s;
  out.position += h * d.position;
  out.velocity += h * d.velocity;
  out.rotation += h * d.rotation;
  out.body_rates += h * d.body_rates;
  return out;
}

}  // namespace

QuadState integrate_step(const QuadState& state, const Vec4& rotor_setpoints, double dt,
                         const QuadParams& params) {
  if (!(dt > 0.0 && dt <= 0.01)) {
    throw std::invalid_argument("integrate_step: dt must lie in (0, 0.01]");
  }
  if (!state.all_finite() || !rotor_setpoints.allFinite()) {
    throw SimulationDivergence("integrate_step: non-finite state or setpoint");
  }

  QuadState s = state;
  s.rotor_speeds = motor_lag_step(state.rotor_speeds, rotor_setpoints, dt,
                                  params.motor_time_constant, params.max_rotor_speed());
  const WrenchBody wrench = rotor_wrench(s.rotor_speeds, params);

  const StateDerivative k1 = dynamics_derivative(s, wrench, params);
  const StateDerivative k2 = dynamics_derivative(advance(s, k1, 0.5 * dt), wrench, params);
  const StateDerivative k3 = dynamics_derivative(advance(s, k2, 0.5 * dt), wrench, params);
  const StateDerivative k4 = dynamics_derivative(advance(s, k3, dt), wrench, params);

  const double w = dt / 6.0;
  s.position += w * (k1.position + 2.0 * k2.position + 2.0 * k3.position + k4.position);
  s.velocity += w * (k1.velocity + 2.0 * k2.velocity + 2.0 * k3.velocity + k4.velocity);
  s.rotation += w * (k1.rotation + 2.0 * k2.rotation + 2.0 * k3.rotation + k4.rotation);
  s.body_rates += w * (k1.body_rates + 2.0 * k2.body_rates + 2.0 * k3.body_rates + k4.body_rates);

  if (!s.all_finite()) {
    throw SimulationDivergence("integrate_step: state became non-finite");
  }
  s.rotation = orthonormalize(s.rotation);
  return s;
}

}  // namespace quadrl
