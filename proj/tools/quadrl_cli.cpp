#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "quadrl/config.hpp"
#include "quadrl/export.hpp"
#include "quadrl/td3.hpp"
#include "quadrl/tracking.hpp"

namespace fs = std::filesystem;
using namespace quadrl;

namespace {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kConfigError = 2,
  kIoError = 3,
  kDivergence = 4,
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

RunConfig resolve_config(const std::string& path) {
  return path.empty() ? RunConfig{} : load_config(path);
}

void announce(const RunConfig& cfg, std::ostream& out = std::cout) {
  out << "# seed " << cfg.seed << "\n# resolved configuration\n";
  write_config(cfg, out);
  out << "# end configuration\n" << std::flush;
}

void write_echo(const RunConfig& cfg, const fs::path& dir) {
  auto out = open_out(dir / "config.ini");
  write_config(cfg, out);
}

// Adam moments share the network shape, so they reuse the weights format.
Mlp moments_as_network(const Mlp& shape, const std::vector<LayerGradient>& moments) {
  std::vector<DenseLayer> layers = shape.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i].weight = moments[i].weight;
    layers[i].bias = moments[i].bias;
  }
  return Mlp::from_layers(std::move(layers));
}

void write_checkpoint(const Td3Agent& agent, std::int64_t step, const fs::path& root) {
  const fs::path dir = root / "checkpoints" / ("step_" + std::to_string(step));
  fs::create_directories(dir);
  const std::pair<const char*, const Mlp*> nets[] = {
      {"actor", &agent.actor},         {"actor_target", &agent.actor_target},
      {"critic1", &agent.critic1},     {"critic1_target", &agent.critic1_target},
      {"critic2", &agent.critic2},     {"critic2_target", &agent.critic2_target},
  };
  for (const auto& [name, net] : nets) save_weights(*net, dir / (std::string(name) + ".qrlw"));
  const std::pair<const char*, std::pair<const Mlp*, const AdamState*>> opts[] = {
      {"actor", {&agent.actor, &agent.actor_opt}},
      {"critic1", {&agent.critic1, &agent.critic1_opt}},
      {"critic2", {&agent.critic2, &agent.critic2_opt}},
  };
  nlohmann::json meta;
  meta["step"] = step;
  meta["train_calls"] = agent.train_calls();
  meta["buffer_size"] = agent.buffer().size();
  meta["seed"] = agent.config().seed;
  for (const auto& [name, pair] : opts) {
    const auto& [net, opt] = pair;
    save_weights(moments_as_network(*net, opt->first_moment), dir / (std::string(name) + "_adam_m.qrlw"));
    save_weights(moments_as_network(*net, opt->second_moment), dir / (std::string(name) + "_adam_v.qrlw"));
    meta["optimizers"][name] = {{"step", opt->step},
                                {"learning_rate", opt->learning_rate},
                                {"beta1", opt->beta1},
                                {"beta2", opt->beta2},
                                {"epsilon", opt->epsilon}};
  }
  auto out = open_out(dir / "meta.json");
  out << meta.dump(2) << '\n';
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::int64_t steps = 0;
  std::optional<std::uint64_t> seed;
  bool full_steps = false;
  std::string output;
};

int cmd_train(const TrainArgs& args) {
  RunConfig cfg = resolve_config(args.config);
  if (args.full_steps) cfg.td3.total_steps = 5'000'000;
  if (args.steps > 0) cfg.td3.total_steps = args.steps;
  if (args.seed) cfg.seed = *args.seed;
  if (!args.output.empty()) cfg.io.output_dir = args.output;
  cfg.td3.seed = cfg.seed;
  cfg.validate();
  announce(cfg);

  const fs::path dir = cfg.io.output_dir;
  fs::create_directories(dir);
  write_echo(cfg, dir);

  QuadTask task(cfg.env, cfg.reward, cfg.physics, cfg.seed);
  Td3Agent agent(task.observation_size(), task.action_size(), cfg.td3);

  auto curve = open_out(dir / "curve.csv");
  curve << "step,mean_return,mean_pos_error,critic_loss,actor_loss\n" << std::setprecision(17);
  TrainHooks hooks;
  hooks.on_eval = [&](const Td3Agent&, const CurvePoint& p) {
    curve << p.step << ',' << p.mean_return << ',' << p.mean_tracking_error << ','
          << p.critic_loss << ',' << p.actor_loss << '\n' << std::flush;
    std::cout << "step " << p.step << "  return " << p.mean_return << "  |p| "
              << p.mean_tracking_error << std::endl;
  };
  hooks.on_step = [&](const Td3Agent& a, std::int64_t step) {
    if (step % cfg.io.checkpoint_interval == 0) write_checkpoint(a, step, dir);
  };

  const TrainResult result = train(agent, task, hooks);
  save_weights(agent.actor, dir / "actor_final.qrlw");
  save_weights(result.best_actor, dir / "actor_best.qrlw");
  std::cout << "best evaluation return " << result.best_return << "\nwrote " << dir.string() << '\n';
  return kOk;
}

struct TrackArgs {
  std::string weights;
  std::string config;
  std::optional<std::uint64_t> seed;
  int episodes = 0;
  std::optional<double> period, radius, duration, transient;
  bool takeoff = false;
  std::string output;
  std::string controllers = "policy,pid";
};

RunConfig tracking_config(const TrackArgs& args) {
  RunConfig cfg = resolve_config(args.config);
  if (args.seed) cfg.seed = *args.seed;
  if (args.episodes > 0) cfg.eval_episodes = args.episodes;
  if (args.period) cfg.eval.trajectory.period = *args.period;
  if (args.radius) cfg.eval.trajectory.radius = *args.radius;
  if (args.duration) cfg.eval.trajectory.duration = *args.duration;
  if (args.transient) cfg.eval.transient = *args.transient;
  if (args.takeoff) cfg.eval.takeoff = true;
  if (!args.output.empty()) cfg.io.output_dir = args.output;
  cfg.td3.seed = cfg.seed;
  cfg.validate();
  return cfg;
}

int cmd_evaluate(const TrackArgs& args) {
  const RunConfig cfg = tracking_config(args);
  announce(cfg);
  const Mlp actor = load_weights(args.weights);
  const fs::path dir = cfg.io.output_dir;
  write_echo(cfg, dir);

  auto metrics = open_out(dir / "metrics.csv");
  metrics << "episode,seed,e_bar,e_bar_xy,crashed,samples\n" << std::setprecision(17);
  double sum_all = 0.0, sum_xy = 0.0;
  int crashes = 0;
  for (int k = 0; k < cfg.eval_episodes; ++k) {
    const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(k);
    PolicyController policy(actor);
    const TrackingLog log = run_tracking(policy, cfg.eval, cfg.env, cfg.reward, cfg.physics, seed);
    auto csv = open_out(dir / ("tracking_" + std::to_string(k) + ".csv"));
    log.write_csv(csv);
    const TrackingErrors e = tracking_metrics(log, cfg.eval.transient);
    metrics << k << ',' << seed << ',' << e.all_axes << ',' << e.horizontal << ','
            << (log.crashed ? 1 : 0) << ',' << log.samples.size() << '\n';
    sum_all += e.all_axes;
    sum_xy += e.horizontal;
    crashes += log.crashed ? 1 : 0;
  }
  const double n = cfg.eval_episodes;
  std::cout << std::setprecision(6) << "episodes " << cfg.eval_episodes << "  mean e_bar "
            << sum_all / n << "  mean e_bar_xy " << sum_xy / n << "  crashes " << crashes << '\n';
  return kOk;
}

int cmd_compare(const TrackArgs& args) {
  const RunConfig cfg = tracking_config(args);
  announce(cfg);
  const fs::path dir = cfg.io.output_dir;
  write_echo(cfg, dir);

  std::vector<std::unique_ptr<Controller>> owned;
  std::stringstream list(args.controllers);
  std::string name;
  while (std::getline(list, name, ',')) {
    if (name == "policy") {
      if (args.weights.empty()) throw ConfigError("controllers", "policy needs --weights");
      owned.push_back(std::make_unique<PolicyController>(load_weights(args.weights)));
    } else if (name == "pid") {
      owned.push_back(std::make_unique<PidController>(cfg.pid));
    } else {
      throw ConfigError("controllers", "unknown controller '" + name + "'");
    }
  }
  std::vector<Controller*> controllers;
  for (auto& c : owned) controllers.push_back(c.get());

  const ComparisonReport report =
      compare_controllers(controllers, cfg.eval, cfg.env, cfg.reward, cfg.physics, cfg.seed);
  for (auto* c : controllers) {
    const TrackingLog log = run_tracking(*c, cfg.eval, cfg.env, cfg.reward, cfg.physics, cfg.seed);
    auto csv = open_out(dir / ("tracking_" + c->name() + ".csv"));
    log.write_csv(csv);
  }
  auto csv = open_out(dir / "comparison.csv");
  report.write_csv(csv);
  auto table = open_out(dir / "comparison.txt");
  report.write_table(table);
  report.write_table(std::cout);
  return kOk;
}

struct ExportArgs {
  std::string weights;
  std::string precision = "f32";
  std::string output;
  std::string timestamp;
};

int cmd_export(const ExportArgs& args) {
  if (args.precision != "f32" && args.precision != "f64") {
    throw ConfigError("precision", "expected f32 or f64");
  }
  const Mlp actor = load_weights(args.weights);
  const Precision p = args.precision == "f64" ? Precision::F64 : Precision::F32;
  const GeneratedSource src =
      generate_inference_source(actor, p, args.timestamp.empty() ? utc_timestamp() : args.timestamp);
  const fs::path out_path = args.output.empty() ? fs::path("policy.c") : fs::path(args.output);
  auto out = open_out(out_path);
  out << src.text;
  std::cout << "wrote " << out_path.string() << "  checksum 0x" << std::hex << std::setw(8)
            << std::setfill('0') << src.checksum << std::dec << "  multiply-adds "
            << src.multiply_adds << '\n';
  return kOk;
}

struct SimulateArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  double duration = 2.0;
  std::vector<double> rpm;
  bool from_reset = false;
  std::string output;
};

int cmd_simulate(const SimulateArgs& args) {
  RunConfig cfg = resolve_config(args.config);
  if (args.seed) cfg.seed = *args.seed;
  cfg.validate();
  announce(cfg);

  Vec4 rpm = Vec4::Constant(rad_per_sec_to_rpm(cfg.physics.hover_rotor_speed()));
  if (!args.rpm.empty()) {
    if (args.rpm.size() == 1) rpm.setConstant(args.rpm[0]);
    else if (args.rpm.size() == 4) rpm = Vec4(args.rpm[0], args.rpm[1], args.rpm[2], args.rpm[3]);
    else throw ConfigError("rpm", "give one value or four");
  }
  Action action;
  for (int i = 0; i < 4; ++i) action[i] = rpm_to_normalized(rpm[i], cfg.env);

  EnvConfig env_cfg = cfg.env;
  const int steps = static_cast<int>(std::ceil(args.duration / env_cfg.control_period - 1e-9));
  env_cfg.episode_length = std::max(1, steps);
  QuadEnv env(env_cfg, cfg.reward, cfg.physics, cfg.seed);
  if (args.from_reset) {
    env.reset();
  } else {
    QuadState start;
    start.rotor_speeds = Vec4::Constant(cfg.physics.hover_rotor_speed());
    env.reset_to(start);
  }

  const fs::path out_path = args.output.empty() ? fs::path(cfg.io.output_dir) / "simulate.csv"
                                                : fs::path(args.output);
  auto out = open_out(out_path);
  EpisodeCsv csv(out);
  csv.write(0.0, env.state(), Action::Zero(), 0.0);
  for (int k = 1; k <= steps; ++k) {
    const StepResult r = env.step(action);
    csv.write(k * env_cfg.control_period, r.state, clip_action(action), r.reward);
    if (r.terminated) {
      std::cout << "left the position bound at t=" << k * env_cfg.control_period << '\n';
      break;
    }
    if (r.truncated) break;
  }
  std::cout << "wrote " << out_path.string() << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quadcopter flight-control training, evaluation and export"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "Train a hover policy with TD3");
  train->add_option("--config", train_args.config, "Configuration file")->check(CLI::ExistingFile);
  train->add_option("--steps", train_args.steps, "Override td3.total_steps");
  train->add_option("--seed", train_args.seed, "Override the global seed");
  train->add_flag("--full-steps", train_args.full_steps, "Train for the full 5,000,000 steps");
  train->add_option("--output", train_args.output, "Override io.output_dir");

  TrackArgs eval_args;
  auto* evaluate = app.add_subcommand("evaluate", "Track the circle with a trained policy");
  evaluate->add_option("weights", eval_args.weights, "Actor weights file")->required()->check(CLI::ExistingFile);
  TrackArgs compare_args;
  auto* compare = app.add_subcommand("compare", "Compare controllers on the same circle and seed");
  compare->add_option("weights", compare_args.weights, "Actor weights file")->check(CLI::ExistingFile);
  compare->add_option("--controllers", compare_args.controllers, "Comma-separated: policy,pid");
  for (auto [sub, a] : {std::pair{evaluate, &eval_args}, std::pair{compare, &compare_args}}) {
    sub->add_option("--config", a->config, "Configuration file")->check(CLI::ExistingFile);
    sub->add_option("--seed", a->seed, "Override the global seed");
    sub->add_option("--episodes", a->episodes, "Override eval.episodes");
    sub->add_option("--period", a->period, "Circle period in seconds");
    sub->add_option("--radius", a->radius, "Circle radius in metres");
    sub->add_option("--duration", a->duration, "Run length in seconds");
    sub->add_option("--transient", a->transient, "Seconds excluded from the metrics");
    sub->add_flag("--takeoff", a->takeoff, "Start on the ground below the first setpoint");
    sub->add_option("--output", a->output, "Override io.output_dir");
  }

  ExportArgs export_args;
  auto* exp = app.add_subcommand("export", "Generate a C inference routine from actor weights");
  exp->add_option("weights", export_args.weights, "Actor weights file")->required()->check(CLI::ExistingFile);
  exp->add_option("--precision", export_args.precision, "f32 or f64");
  exp->add_option("--output", export_args.output, "Output .c file");
  exp->add_option("--timestamp", export_args.timestamp, "Timestamp recorded in the header comment");

  SimulateArgs sim_args;
  auto* simulate = app.add_subcommand("simulate", "Open-loop run at constant rotor commands");
  simulate->add_option("--config", sim_args.config, "Configuration file")->check(CLI::ExistingFile);
  simulate->add_option("--seed", sim_args.seed, "Override the global seed");
  simulate->add_option("--duration", sim_args.duration, "Seconds to simulate");
  simulate->add_option("--rpm", sim_args.rpm, "Rotor command in RPM, one value or four")->delimiter(',');
  simulate->add_flag("--from-reset", sim_args.from_reset, "Start from the reset distribution");
  simulate->add_option("--output", sim_args.output, "Output CSV path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }

  try {
    if (*train) return cmd_train(train_args);
    if (*evaluate) return cmd_evaluate(eval_args);
    if (*compare) return cmd_compare(compare_args);
    if (*exp) return cmd_export(export_args);
    if (*simulate) return cmd_simulate(sim_args);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const WeightsFormatError& e) {
    std::cerr << "weights error: " << e.what() << '\n';
    return kIoError;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kIoError;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kIoError;
  } catch (const NumericalDivergence& e) {
    std::cerr << "numerical divergence: " << e.what() << '\n';
    return kDivergence;
  } catch (const SimulationDivergence& e) {
    std::cerr << "simulation divergence: " << e.what() << '\n';
    return kDivergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kFailure;
}
