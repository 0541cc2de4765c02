#include "quadrl/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

namespace quadrl {

namespace {

namespace pt = boost::property_tree;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

// Shortest text that parses back to the same double.
std::string fmt(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double to_double(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    const double v = std::stod(trim(text), &used);
    if (used != trim(text).size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key, "expected a number, got '" + text + "'");
  }
}

long long to_integer(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(trim(text), &used);
    if (used != trim(text).size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key, "expected an integer, got '" + text + "'");
  }
}

bool to_bool(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  if (t == "true" || t == "1") return true;
  if (t == "false" || t == "0") return false;
  throw ConfigError(key, "expected true or false, got '" + text + "'");
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) parts.push_back(trim(item));
  return parts;
}

Vec3 to_vec3(const std::string& key, const std::string& text) {
  const auto parts = split_list(text);
  if (parts.size() != 3) throw ConfigError(key, "expected three comma-separated numbers");
  return Vec3(to_double(key, parts[0]), to_double(key, parts[1]), to_double(key, parts[2]));
}

std::string fmt(const Vec3& v) { return fmt(v.x()) + ", " + fmt(v.y()) + ", " + fmt(v.z()); }

struct Field {
  std::string section;
  std::string name;
  std::function<void(const std::string& key, const std::string& value)> set;
  std::function<std::string()> get;
};

class FieldTable {
 public:
  void add(std::string section, std::string name, double& ref) {
    fields_.push_back({section, name,
                       [&ref](const std::string& k, const std::string& v) { ref = to_double(k, v); },
                       [&ref] { return fmt(ref); }});
  }
  void add(std::string section, std::string name, int& ref) {
    fields_.push_back({section, name,
                       [&ref](const std::string& k, const std::string& v) {
                         ref = static_cast<int>(to_integer(k, v));
                       },
                       [&ref] { return std::to_string(ref); }});
  }
  void add(std::string section, std::string name, std::int64_t& ref) {
    fields_.push_back({section, name,
                       [&ref](const std::string& k, const std::string& v) { ref = to_integer(k, v); },
                       [&ref] { return std::to_string(ref); }});
  }
  void add(std::string section, std::string name, std::uint64_t& ref) {
    fields_.push_back({section, name,
                       [&ref](const std::string& k, const std::string& v) {
                         const long long x = to_integer(k, v);
                         if (x < 0) throw ConfigError(k, "must be non-negative");
                         ref = static_cast<std::uint64_t>(x);
                       },
                       [&ref] { return std::to_string(ref); }});
  }
  void add(std::string section, std::string name, bool& ref) {
    fields_.push_back({section, name,
                       [&ref](const std::string& k, const std::string& v) { ref = to_bool(k, v); },
                       [&ref] { return std::string(ref ? "true" : "false"); }});
  }
  void add(std::string section, std::string name, Vec3& ref) {
    fields_.push_back({section, name,
                       [&ref](const std::string& k, const std::string& v) { ref = to_vec3(k, v); },
                       [&ref] { return fmt(ref); }});
  }
  void add(std::string section, std::string name, std::string& ref) {
    fields_.push_back({section, name,
                       [&ref](const std::string&, const std::string& v) { ref = trim(v); },
                       [&ref] { return ref; }});
  }
  void add(std::string section, std::string name, std::vector<int>& ref) {
    fields_.push_back({section, name,
                       [&ref](const std::string& k, const std::string& v) {
                         ref.clear();
                         for (const auto& p : split_list(v)) ref.push_back(static_cast<int>(to_integer(k, p)));
                       },
                       [&ref] {
                         std::string s;
                         for (std::size_t i = 0; i < ref.size(); ++i) s += (i ? ", " : "") + std::to_string(ref[i]);
                         return s;
                       }});
  }
  void add_loop(const std::string& prefix, LoopGains& g) {
    add("pid", prefix + "_kp", g.kp);
    add("pid", prefix + "_ki", g.ki);
    add("pid", prefix + "_kd", g.kd);
    add("pid", prefix + "_integral_limit", g.integral_limit);
    add("pid", prefix + "_output_limit", g.output_limit);
  }

  const std::vector<Field>& fields() const { return fields_; }
  const Field* find(const std::string& section, const std::string& name) const {
    for (const auto& f : fields_) {
      if (f.section == section && f.name == name) return &f;
    }
    return nullptr;
  }
  bool has_section(const std::string& section) const {
    for (const auto& f : fields_) {
      if (f.section == section) return true;
    }
    return false;
  }

 private:
  std::vector<Field> fields_;
};

FieldTable bind(RunConfig& c) {
  FieldTable t;
  t.add("", "seed", c.seed);

  t.add("physics", "mass", c.physics.mass);
  t.add("physics", "gravity", c.physics.gravity);
  t.add("physics", "arm_length", c.physics.arm_length);
  t.add("physics", "drag_torque_ratio", c.physics.drag_torque_ratio);
  t.add("physics", "inertia", c.physics.inertia);
  t.add("physics", "max_rpm", c.physics.max_rpm);
  t.add("physics", "motor_time_constant", c.physics.motor_time_constant);
  t.add("physics", "thrust_to_weight", c.physics.thrust_to_weight);

  t.add("env", "action_history", c.env.action_history);
  t.add("env", "control_period", c.env.control_period);
  t.add("env", "substeps", c.env.substeps);
  t.add("env", "episode_length", c.env.episode_length);
  t.add("env", "position_noise", c.env.position_noise);
  t.add("env", "orientation_noise", c.env.orientation_noise);
  t.add("env", "velocity_noise", c.env.velocity_noise);
  t.add("env", "angular_velocity_noise", c.env.angular_velocity_noise);
  t.add("env", "init_position_half_width", c.env.init_position_half_width);
  t.add("env", "init_max_tilt", c.env.init_max_tilt);
  t.add("env", "init_max_speed", c.env.init_max_speed);
  t.add("env", "init_max_angular_speed", c.env.init_max_angular_speed);
  t.add("env", "position_bound", c.env.position_bound);
  t.add("env", "min_action_rpm", c.env.min_action_rpm);
  t.add("env", "max_action_rpm", c.env.max_action_rpm);
  t.add("env", "survival_bonus", c.reward.survival_bonus);
  t.add("env", "position_weight", c.reward.position_weight);
  t.add("env", "orientation_weight", c.reward.orientation_weight);
  t.add("env", "velocity_weight", c.reward.velocity_weight);
  t.add("env", "action_weight", c.reward.action_weight);
  t.add("env", "action_baseline", c.reward.action_baseline);

  t.add("td3", "total_steps", c.td3.total_steps);
  t.add("td3", "batch_size", c.td3.batch_size);
  t.add("td3", "actor_learning_rate", c.td3.actor_learning_rate);
  t.add("td3", "critic_learning_rate", c.td3.critic_learning_rate);
  t.add("td3", "discount", c.td3.discount);
  t.add("td3", "tau", c.td3.tau);
  t.add("td3", "policy_delay", c.td3.policy_delay);
  t.add("td3", "exploration_noise", c.td3.exploration_noise);
  t.add("td3", "target_noise", c.td3.target_noise);
  t.add("td3", "target_noise_clip", c.td3.target_noise_clip);
  t.add("td3", "warmup_steps", c.td3.warmup_steps);
  t.add("td3", "buffer_capacity", c.td3.buffer_capacity);
  t.add("td3", "hidden_sizes", c.td3.hidden_sizes);
  t.add("td3", "eval_interval", c.td3.eval_interval);
  t.add("td3", "eval_episodes", c.td3.eval_episodes);
  t.add("td3", "action_overshoot_penalty", c.td3.action_overshoot_penalty);
  t.add("td3", "initial_action_bias", c.td3.initial_action_bias);

  t.add_loop("position", c.pid.position);
  t.add_loop("velocity", c.pid.velocity);
  t.add_loop("attitude", c.pid.attitude);
  t.add_loop("rate", c.pid.rate);
  t.add("pid", "max_tilt", c.pid.max_tilt);
  t.add("pid", "min_thrust_ratio", c.pid.min_thrust_ratio);
  t.add("pid", "torque_limit", c.pid.torque_limit);

  t.add("eval", "period", c.eval.trajectory.period);
  t.add("eval", "radius", c.eval.trajectory.radius);
  t.add("eval", "center", c.eval.trajectory.center);
  t.add("eval", "duration", c.eval.trajectory.duration);
  t.add("eval", "setpoint_rate", c.eval.setpoint_rate);
  t.add("eval", "transient", c.eval.transient);
  t.add("eval", "takeoff", c.eval.takeoff);
  t.add("eval", "episodes", c.eval_episodes);

  t.add("io", "output_dir", c.io.output_dir);
  t.add("io", "checkpoint_interval", c.io.checkpoint_interval);
  return t;
}

template <typename Fn>
void rethrow_as(const std::string& section, Fn&& fn) {
  try {
    fn();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(section, e.what());
  }
}

}  // namespace

void RunConfig::validate() const {
  rethrow_as("physics", [&] { physics.validate(); });
  rethrow_as("env", [&] {
    env.validate();
    reward.validate();
  });
  rethrow_as("td3", [&] { td3.validate(); });
  rethrow_as("pid", [&] { pid.validate(); });
  rethrow_as("eval", [&] {
    eval.trajectory.validate();
    if (!(eval.setpoint_rate > 0.0)) throw std::invalid_argument("eval.setpoint_rate must be positive");
    if (!(eval.transient >= 0.0)) throw std::invalid_argument("eval.transient must be non-negative");
    if (eval_episodes <= 0) throw std::invalid_argument("eval.episodes must be positive");
  });
  if (io.checkpoint_interval <= 0) throw ConfigError("io.checkpoint_interval", "must be positive");
}

RunConfig parse_config(std::istream& in) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("config", e.message() + " at line " + std::to_string(e.line()));
  }

  RunConfig cfg;
  const FieldTable table = bind(cfg);
  for (const auto& [name, node] : tree) {
    const bool is_root_key = node.empty() && !node.data().empty();
    if (is_root_key) {
      const Field* f = table.find("", name);
      if (!f) throw ConfigError(name, "unknown top-level key");
      f->set(name, node.data());
      continue;
    }
    if (!table.has_section(name) || name.empty()) throw ConfigError(name, "unknown section");
    for (const auto& [key, value] : node) {
      const std::string full = name + "." + key;
      const Field* f = table.find(name, key);
      if (!f) throw ConfigError(full, "unknown key");
      f->set(full, value.data());
    }
  }
  cfg.td3.seed = cfg.seed;
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open " + path.string());
  return parse_config(in);
}

void write_config(const RunConfig& cfg, std::ostream& out) {
  RunConfig copy = cfg;
  const FieldTable table = bind(copy);
  std::string section = "\x01";
  for (const auto& f : table.fields()) {
    if (f.section != section) {
      if (!f.section.empty()) out << "\n[" << f.section << "]\n";
      section = f.section;
    }
    out << f.name << " = " << f.get() << '\n';
  }
}

}  // namespace quadrl
