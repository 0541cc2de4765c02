// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
//
//   quadrl_acceptance [--only 1,2,...] [--policy actor.qrlw] [--workdir DIR]
//
// Criteria 6 to 8 share one trained hover policy. --policy skips training and
// reuses a saved actor (e.g. from a longer `quadrl train` run).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "quadrl/config.hpp"
#include "quadrl/export.hpp"
#include "quadrl/tracking.hpp"
#include "support/compiled_policy.hpp"
#include "support/double_integrator.hpp"
#include "support/oracles.hpp"

using namespace quadrl;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// 1 -------------------------------------------------------------------------

Outcome observation_layout() {
  EnvConfig cfg;
  cfg.position_noise = cfg.orientation_noise = cfg.velocity_noise = cfg.angular_velocity_noise = 0.0;
  QuadEnv env(cfg, {}, {}, 1);
  QuadState s;
  s.position = Vec3(0.1, -0.2, 0.3);
  s.rotation = testing::hand_euler(0.2, -0.1, 0.5);
  s.velocity = Vec3(0.4, 0.5, -0.6);
  s.body_rates = Vec3(-0.7, 0.8, 0.9);
  env.reset_to(s);
  const Action a1(0.1, 0.2, 0.3, 0.4), a2(-0.5, 0.6, 0.7, 0.8);
  env.step(a1);
  const StepResult r = env.step(a2);
  const Observation& o = r.observation;
  const QuadState& n = r.state;

  // Expected vector assembled entry by entry: p, R row-major, v, w, newest action first.
  Eigen::VectorXd expected = Eigen::VectorXd::Zero(146);
  for (int i = 0; i < 3; ++i) expected[i] = n.position[i];
  for (int i = 0; i < 9; ++i) expected[3 + i] = n.rotation(i / 3, i % 3);
  for (int i = 0; i < 3; ++i) expected[12 + i] = n.velocity[i];
  for (int i = 0; i < 3; ++i) expected[15 + i] = n.body_rates[i];
  for (int i = 0; i < 4; ++i) expected[18 + i] = a2[i];
  for (int i = 0; i < 4; ++i) expected[22 + i] = a1[i];
  const bool ok = o.size() == 146 && cfg.observation_size() == 146 && o == expected;
  return {ok, fmt("size %d, layout %s", static_cast<int>(o.size()), o == expected ? "exact" : "mismatch")};
}

// 2 -------------------------------------------------------------------------

Outcome reward_oracle() {
  const RewardParams rp;
  const Action base = Action::Constant(0.35);
  QuadState at_target, offset, tilted;
  offset.position = Vec3(1, 0, 0);
  tilted.rotation = testing::hand_euler(kPi / 2, 0, 0);
  const double r0 = reward(at_target, base, rp), r1 = reward(offset, base, rp), r2 = reward(tilted, base, rp);
  bool ok = std::abs(r0 - 2.0) <= 1e-12 && std::abs(r1 + 0.5) <= 1e-12 && std::abs(r2 + 0.5) <= 1e-12;

  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    QuadState s;
    s.position = Vec3(u(rng), u(rng), u(rng));
    s.rotation = testing::random_rotation(rng);
    s.velocity = Vec3(u(rng), u(rng), u(rng));
    s.body_rates = Vec3(u(rng), u(rng), u(rng));
    const Action a(u(rng) / 2, u(rng) / 2, u(rng) / 2, u(rng) / 2);
    const double oracle = testing::hand_reward(s.position, s.rotation, s.velocity, a, 2.0, 2.5, 2.5,
                                               0.05, 0.05, 0.35);
    worst = std::max(worst, std::abs(reward(s, a, rp) - oracle));
  }
  ok = ok && worst <= 1e-12;
  return {ok, fmt("examples %.3g %.3g %.3g, random max error %.2e", r0, r1, r2, worst)};
}

// 3 -------------------------------------------------------------------------

Outcome dynamics_properties() {
  const QuadParams p;
  const double dt = 0.001;

  QuadState s;
  s.position = Vec3(0.3, -0.2, 1.0);
  s.velocity = Vec3(0.5, 0.25, 2.0);
  const QuadState s0 = s;
  double fall = 0.0;
  for (int k = 1; k <= 1000; ++k) {
    s = integrate_step(s, Vec4::Zero(), dt, p);
    const double t = k * dt;
    const Vec3 exact = s0.position + s0.velocity * t + 0.5 * p.gravity * t * t;
    fall = std::max(fall, (s.position - exact).cwiseAbs().maxCoeff());
  }

  // Equal rotor speeds: differential thrust and the alternating drag torques cancel.
  double torque = 0.0;
  for (double w : {500.0, 1500.0, 2500.0}) {
    torque = std::max(torque, rotor_wrench(Vec4::Constant(w), p).torque.cwiseAbs().maxCoeff());
  }

  QuadState h;
  h.rotor_speeds = Vec4::Constant(std::sqrt(p.mass * 9.81 / (4.0 * p.thrust_coefficient())));
  const Vec4 hover = h.rotor_speeds;
  for (int k = 0; k < 1000; ++k) h = integrate_step(h, hover, dt, p);
  const double drift = std::max(h.position.norm(), h.velocity.norm());

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, p.max_rotor_speed());
  QuadState q;
  q.rotor_speeds = hover;
  q.body_rates = Vec3(3, -2, 1);
  double closure = 0.0;
  for (int k = 0; k < 5000; ++k) {
    q = integrate_step(q, Vec4(u(rng), u(rng), u(rng), u(rng)), dt, p);
    closure = std::max(closure, (q.rotation.transpose() * q.rotation - Mat3::Identity()).cwiseAbs().maxCoeff());
    closure = std::max(closure, std::abs(q.rotation.determinant() - 1.0));
    q.position.setZero();
    q.velocity.setZero();
  }

  QuadState c;
  c.rotation = testing::hand_euler(0.4, -0.3, 0.7);
  c.velocity = Vec3(1.0, -0.5, 0.3);
  c.body_rates = Vec3(4.0, -3.0, 6.0);
  c.rotor_speeds = Vec4(1800, 2300, 2000, 2500);
  auto advance = [&](double step, int n) {
    QuadState x = c;
    for (int i = 0; i < n; ++i) x = integrate_step(x, c.rotor_speeds, step, p);
    return x;
  };
  auto distance = [](const QuadState& a, const QuadState& b) {
    return std::max({(a.position - b.position).norm(), (a.velocity - b.velocity).norm(),
                     (a.rotation - b.rotation).norm(), (a.body_rates - b.body_rates).norm()});
  };
  const double H = 0.01;
  const QuadState ref = advance(H / 8, 8);
  const double ratio = distance(advance(H, 1), ref) / distance(advance(H / 2, 2), ref);

  const bool ok = fall < 1e-12 && torque < 1e-12 && drift < 1e-9 && closure < 1e-9 && ratio >= 12.0 &&
                  ratio <= 20.0;
  return {ok, fmt("free fall %.1e, torque %.1e, hover drift %.1e, SO(3) %.1e, ratio %.2f", fall, torque,
                  drift, closure, ratio)};
}

// 4 -------------------------------------------------------------------------

Outcome gradient_check() {
  std::mt19937_64 rng(4);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) worst = std::max(worst, testing::gradient_check_trial(rng));
  return {worst < 1e-4, fmt("100 nets, max relative error %.2e", worst)};
}

// 5 -------------------------------------------------------------------------

Outcome toy_trainer() {
  auto run = [] {
    testing::DoubleIntegrator env({}, 5);
    Td3Agent agent(2, 1, testing::toy_td3_config(5));
    return train(agent, env);
  };
  const TrainResult a = run(), b = run();
  const double ceiling = testing::DoubleIntegrator({}, 0).ceiling();
  const std::int64_t from = a.curve.back().step - a.curve.back().step / 10;
  double sum = 0.0;
  int n = 0;
  for (const auto& pt : a.curve) {
    if (pt.step > from) {
      sum += pt.mean_return;
      ++n;
    }
  }
  const double mean = n ? sum / n : -1e300;
  bool same = a.curve.size() == b.curve.size();
  for (std::size_t i = 0; same && i < a.curve.size(); ++i) {
    same = a.curve[i].mean_return == b.curve[i].mean_return &&
           a.curve[i].mean_tracking_error == b.curve[i].mean_tracking_error;
  }
  same = same && a.best_actor.flatten() == b.best_actor.flatten();
  return {mean > 0.9 * ceiling && same,
          fmt("final-10%% mean return %.2f of ceiling %.0f, repeat run %s", mean, ceiling,
              same ? "identical" : "differs")};
}

// 6 to 8 ------------------------------------------------------------------

struct HoverPolicy {
  Mlp actor;
  std::string source;
};

HoverPolicy hover_policy(const std::optional<fs::path>& given, const fs::path& workdir) {
  if (given) return {load_weights(*given), given->string()};
  const RunConfig cfg;
  QuadTask task(cfg.env, cfg.reward, cfg.physics, cfg.seed);
  Td3Agent agent(task.observation_size(), task.action_size(), cfg.td3);
  const auto t0 = std::chrono::steady_clock::now();
  TrainHooks hooks;
  hooks.on_eval = [&](const Td3Agent&, const CurvePoint& pt) {
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("  training step %7lld  return %9.2f  |p| %.3f  (%.0f s)\n",
                static_cast<long long>(pt.step), pt.mean_return, pt.mean_tracking_error, s);
    std::fflush(stdout);
  };
  const TrainResult result = train(agent, task, hooks);
  fs::create_directories(workdir);
  save_weights(result.best_actor, workdir / "hover_actor.qrlw");
  return {result.best_actor, (workdir / "hover_actor.qrlw").string()};
}

Outcome hover_episodes(const Mlp& actor) {
  const RunConfig cfg;
  int ok = 0;
  double sum = 0.0;
  for (int k = 0; k < 50; ++k) {
    QuadEnv env(cfg.env, cfg.reward, cfg.physics, 2'000'000 + k);
    Observation obs = env.reset();
    StepResult r;
    do {
      r = env.step(actor.predict(obs));
      obs = r.observation;
    } while (!r.terminated && !r.truncated);
    const double dist = r.state.position.norm();
    sum += dist;
    if (!r.terminated && dist < 0.2) ++ok;
  }
  return {ok >= 40, fmt("%d/50 episodes end within 0.2 m (mean final |p| %.3f)", ok, sum / 50.0)};
}

Outcome circle_tracking(const Mlp& actor) {
  const RunConfig cfg;
  PolicyController policy(actor);
  const TrackingLog log = run_tracking(policy, cfg.eval, cfg.env, cfg.reward, cfg.physics, cfg.seed);
  const TrackingErrors e = tracking_metrics(log, cfg.eval.transient);
  return {!log.crashed && e.horizontal <= 0.25,
          fmt("T=%.0f s r=%.0f m: e_xy %.3f, e %.3f%s", cfg.eval.trajectory.period,
              cfg.eval.trajectory.radius, e.horizontal, e.all_axes, log.crashed ? ", crashed" : "")};
}

Outcome comparison(const Mlp& actor) {
  const RunConfig cfg;
  PolicyController policy(actor);
  PidController pid(cfg.pid);
  const ComparisonReport report =
      compare_controllers({&policy, &pid}, cfg.eval, cfg.env, cfg.reward, cfg.physics, cfg.seed);

  // Rerun each controller and score its log with rmse and with the hand loop;
  // the report rows must equal the rmse values and agree with the loop.
  bool same_path = report.rows.size() == 2;
  double oracle_gap = 0.0;
  Controller* controllers[] = {&policy, &pid};
  for (std::size_t i = 0; same_path && i < 2; ++i) {
    const TrackingLog log = run_tracking(*controllers[i], cfg.eval, cfg.env, cfg.reward, cfg.physics, cfg.seed);
    const double from = log.samples.back().t < cfg.eval.transient ? 0.0 : cfg.eval.transient;
    const TrackingErrors e = rmse(log, from);
    const auto [all, xy] = testing::hand_rmse(log, from);
    same_path = same_path && report.rows[i].errors.all_axes == e.all_axes &&
                report.rows[i].errors.horizontal == e.horizontal;
    oracle_gap = std::max({oracle_gap, std::abs(all - e.all_axes), std::abs(xy - e.horizontal)});
  }
  std::ostringstream table;
  report.write_table(table);
  std::cout << table.str();
  const ComparisonRow& pid_row = report.rows.back();
  const bool ok = same_path && oracle_gap <= 1e-12 && pid_row.controller == "pid" && !pid_row.crashed;
  return {ok, fmt("pid %s (e_xy %.3f), policy e_xy %.3f, rows from rmse %s, hand loop gap %.1e",
                  pid_row.crashed ? "crashed" : "completed", pid_row.errors.horizontal,
                  report.rows.front().errors.horizontal, same_path ? "yes" : "no", oracle_gap)};
}

// 9 -------------------------------------------------------------------------

Outcome metric_oracle() {
  const auto e1 = rmse(testing::constant_offset_log(Vec3(0.3, 0.4, 0.0)));
  const auto e2 = rmse(testing::constant_offset_log(Vec3(0.0, 0.0, 0.3)));
  bool ok = std::abs(e1.all_axes - std::sqrt(0.25 / 3.0)) <= 1e-12 &&
            std::abs(e1.horizontal - std::sqrt(0.125)) <= 1e-12 && std::abs(e2.horizontal) <= 1e-12 &&
            std::abs(e2.all_axes - std::sqrt(0.03)) <= 1e-12;

  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<int> len(1, 50);
  int violations = 0;
  for (int i = 0; i < 10000; ++i) {
    TrackingLog log;
    const int n = len(rng);
    for (int k = 0; k < n; ++k) {
      TrackingSample s;
      s.t = 0.01 * k;
      s.desired = Vec3(u(rng), u(rng), u(rng));
      s.position = Vec3(u(rng), u(rng), u(rng));
      log.samples.push_back(s);
    }
    const auto e = rmse(log);
    if (e.horizontal > e.all_axes * std::sqrt(1.5) * (1.0 + 1e-12)) ++violations;
  }
  ok = ok && violations == 0;
  return {ok, fmt("%.4f %.4f %.4f, bound violations %d/10000", e1.all_axes, e1.horizontal, e2.all_axes,
                  violations)};
}

// 10 ------------------------------------------------------------------------

Outcome export_equivalence() {
  std::mt19937_64 rng(10);
  const Mlp net = Mlp::random({146, 64, 64, 4}, rng);
  const auto bytes = encode_weights(net);
  const Mlp back = decode_weights(bytes);
  const Eigen::VectorXd a = net.flatten(), b = back.flatten();
  const bool bitwise = back.sizes() == net.sizes() &&
                       std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0 &&
                       encode_weights(back) == bytes;

  testing::CompiledPolicy lib64(generate_inference_source(net, Precision::F64).text, "accept64");
  testing::CompiledPolicy lib32(generate_inference_source(net, Precision::F32).text, "accept32");
  auto fwd64 = lib64.symbol<void (*)(const double*, double*)>("policy_forward");
  auto fwd32 = lib32.symbol<void (*)(const float*, float*)>("policy_forward");

  QuadEnv env(EnvConfig{}, {}, {}, 11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double worst64 = 0.0, worst32 = 0.0;
  for (int i = 0; i < 10000; ++i) {
    Eigen::VectorXd obs = env.reset();
    for (int k = 18; k < 146; ++k) obs[k] = u(rng);
    const Eigen::VectorXd ref = net.predict(obs);
    double out64[4];
    fwd64(obs.data(), out64);
    float in32[146], out32[4];
    for (int k = 0; k < 146; ++k) in32[k] = static_cast<float>(obs[k]);
    fwd32(in32, out32);
    for (int j = 0; j < 4; ++j) {
      worst64 = std::max(worst64, std::abs(out64[j] - ref[j]));
      worst32 = std::max(worst32, std::abs(static_cast<double>(out32[j]) - ref[j]));
    }
  }
  return {bitwise && worst64 < 1e-12 && worst32 < 1e-5,
          fmt("f64 %.1e, f32 %.1e over 10000 inputs, round trip %s", worst64, worst32,
              bitwise ? "bitwise" : "differs")};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  std::optional<fs::path> policy_path;
  fs::path workdir = fs::current_path() / "acceptance_artifacts";
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--only" && i + 1 < argc) {
      std::stringstream list(argv[++i]);
      std::string item;
      while (std::getline(list, item, ',')) only.insert(std::stoi(item));
    } else if (arg == "--policy" && i + 1 < argc) {
      policy_path = argv[++i];
    } else if (arg == "--workdir" && i + 1 < argc) {
      workdir = argv[++i];
    } else {
      std::cerr << "usage: quadrl_acceptance [--only 1,2,...] [--policy FILE] [--workdir DIR]\n";
      return 2;
    }
  }
  auto selected = [&](int c) { return only.empty() || only.count(c) > 0; };

  int failures = 0;
  auto report = [&](int id, const char* name, const std::function<Outcome()>& check) {
    if (!selected(id)) return;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("criterion %2d %s  %s: %s [%.1f s]\n", id, o.pass ? "PASS" : "FAIL", name, o.detail.c_str(), s);
    std::fflush(stdout);
    if (!o.pass) ++failures;
  };

  report(1, "observation layout", observation_layout);
  report(2, "reward oracle", reward_oracle);
  report(3, "dynamics properties", dynamics_properties);
  report(4, "gradient check", gradient_check);
  report(5, "toy double integrator", toy_trainer);

  if (selected(6) || selected(7) || selected(8)) {
    std::optional<HoverPolicy> hover;
    std::string error;
    try {
      hover = hover_policy(policy_path, workdir);
      std::printf("  hover policy: %s\n", hover->source.c_str());
    } catch (const std::exception& e) {
      error = std::string("exception: ") + e.what();
    }
    auto with_policy = [&](Outcome (*fn)(const Mlp&)) {
      return [&, fn]() -> Outcome { return hover ? fn(hover->actor) : Outcome{false, error}; };
    };
    report(6, "hover training", with_policy(hover_episodes));
    report(7, "circle tracking", with_policy(circle_tracking));
    report(8, "controller comparison", with_policy(comparison));
  }

  report(9, "metric oracle", metric_oracle);
  report(10, "export equivalence", export_equivalence);

  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
