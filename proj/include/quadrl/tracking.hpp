#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "quadrl/env.hpp"
#include "quadrl/mlp.hpp"
#include "quadrl/pid.hpp"

namespace quadrl {

/// Horizontal circle p(t) = center + radius * (cos(2 pi t / T), sin(2 pi t / T), 0).
struct CircleTrajectory {
  double period = 6.0;
  double radius = 1.0;
  Vec3 center{0.0, 0.0, 1.0};
  double duration = 12.0;

  Vec3 position(double t) const;
  void validate() const;
};

Vec3 circle_trajectory(double t, double period, double radius, const Vec3& center);

struct TrackingSample {
  double t = 0.0;
  Vec3 desired = Vec3::Zero();
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  Action action = Action::Zero();
};

struct TrackingLog {
  std::string controller;
  double sample_period = 0.0;
  std::vector<TrackingSample> samples;
  bool crashed = false;
  double crash_time = 0.0;

  /// Columns t, xd, yd, zd, x, y, z, vx, vy, vz, a1..a4; a trailing "# crashed at" line marks divergence.
  void write_csv(std::ostream& out) const;
  double peak_speed(double from_time = 0.0) const;
};

struct TrackingErrors {
  double all_axes = 0.0;    // e-bar
  double horizontal = 0.0;  // e-bar xy
};

/// RMSE over samples with t >= from_time; rejects an empty selection.
TrackingErrors rmse(const TrackingLog& log, double from_time = 0.0);

/// rmse after the transient; a run that crashed inside the transient is scored
/// over everything it logged so it still gets a (large) finite error.
TrackingErrors tracking_metrics(const TrackingLog& log, double transient);

struct TrackingConfig {
  CircleTrajectory trajectory;
  double setpoint_rate = 50.0;     // Hz, desired positions held between updates
  double transient = 1.0;          // s excluded from the metrics
  bool takeoff = false;            // start at ground level below the first setpoint
};

/// Closed-loop controller driven at control rate. `act` may inspect the
/// environment; fixtures are allowed to modify its state.
class Controller {
 public:
  virtual ~Controller() = default;
  virtual std::string name() const = 0;
  virtual void reset() {}
  virtual Action act(QuadEnv& env, const Observation& obs, const Vec3& desired) = 0;
};

/// Learned policy; sees the observation with position relative to the setpoint.
class PolicyController : public Controller {
 public:
  explicit PolicyController(Mlp actor) : actor_(std::move(actor)) {}
  std::string name() const override { return "policy"; }
  Action act(QuadEnv& env, const Observation& obs, const Vec3& desired) override;

 private:
  Mlp actor_;
};

/// Cascaded PID on the true state; its rotor setpoints are expressed as
/// normalized actions so both controllers share the same actuator path.
class PidController : public Controller {
 public:
  explicit PidController(PidGains gains) : gains_(std::move(gains)) {}
  std::string name() const override { return "pid"; }
  void reset() override { state_ = PidState{}; }
  Action act(QuadEnv& env, const Observation& obs, const Vec3& desired) override;

 private:
  PidGains gains_;
  PidState state_;
};

/// Normalized action that maps back onto the given rotor speeds.
Action rotor_speeds_to_action(const Vec4& rotor_speeds, const EnvConfig& cfg);

TrackingLog run_tracking(Controller& controller, const TrackingConfig& tracking,
                         const EnvConfig& env_cfg, const RewardParams& reward_params,
                         const QuadParams& params, std::uint64_t seed);

struct ComparisonRow {
  std::string controller;
  TrackingErrors errors;
  bool crashed = false;
  std::size_t samples = 0;
  double peak_speed = 0.0;
};

struct ComparisonReport {
  std::uint64_t seed = 0;
  TrackingConfig tracking;
  std::vector<ComparisonRow> rows;

  void write_csv(std::ostream& out) const;
  void write_table(std::ostream& out) const;
};

/// Runs every controller on the same trajectory and seed; rows keep the input order.
ComparisonReport compare_controllers(const std::vector<Controller*>& controllers,
                                     const TrackingConfig& tracking, const EnvConfig& env_cfg,
                                     const RewardParams& reward_params, const QuadParams& params,
                                     std::uint64_t seed);

}  // namespace quadrl
