#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "quadrl/config.hpp"
#include "quadrl/export.hpp"
#include "quadrl/tracking.hpp"

namespace py = pybind11;
using namespace quadrl;

namespace {

TrackingLog log_from_arrays(const Eigen::VectorXd& t, const Eigen::MatrixXd& desired,
                            const Eigen::MatrixXd& actual) {
  if (desired.rows() != t.size() || actual.rows() != t.size() || desired.cols() != 3 ||
      actual.cols() != 3) {
    throw std::invalid_argument("rmse: expected t (n,), desired (n, 3), actual (n, 3)");
  }
  TrackingLog log;
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    TrackingSample s;
    s.t = t[i];
    s.desired = desired.row(i).transpose();
    s.position = actual.row(i).transpose();
    log.samples.push_back(s);
  }
  return log;
}

py::dict state_dict(const QuadState& s) {
  py::dict d;
  d["position"] = s.position;
  d["rotation"] = s.rotation;
  d["velocity"] = s.velocity;
  d["body_rates"] = s.body_rates;
  d["rotor_speeds"] = s.rotor_speeds;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Quadcopter simulator, TD3 policy tools and tracking metrics";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<WeightsFormatError>(m, "WeightsFormatError", PyExc_IOError);
  py::register_exception<SimulationDivergence>(m, "SimulationDivergence", PyExc_RuntimeError);

  py::class_<QuadParams>(m, "QuadParams")
      .def(py::init<>())
      .def_readwrite("mass", &QuadParams::mass)
      .def_readwrite("gravity", &QuadParams::gravity)
      .def_readwrite("arm_length", &QuadParams::arm_length)
      .def_readwrite("drag_torque_ratio", &QuadParams::drag_torque_ratio)
      .def_readwrite("inertia", &QuadParams::inertia)
      .def_readwrite("max_rpm", &QuadParams::max_rpm)
      .def_readwrite("motor_time_constant", &QuadParams::motor_time_constant)
      .def_readwrite("thrust_to_weight", &QuadParams::thrust_to_weight)
      .def("thrust_coefficient", &QuadParams::thrust_coefficient)
      .def("hover_rotor_speed", &QuadParams::hover_rotor_speed)
      .def("max_rotor_speed", &QuadParams::max_rotor_speed);

  py::class_<EnvConfig>(m, "EnvConfig")
      .def(py::init<>())
      .def_readwrite("action_history", &EnvConfig::action_history)
      .def_readwrite("control_period", &EnvConfig::control_period)
      .def_readwrite("substeps", &EnvConfig::substeps)
      .def_readwrite("episode_length", &EnvConfig::episode_length)
      .def_readwrite("position_noise", &EnvConfig::position_noise)
      .def_readwrite("orientation_noise", &EnvConfig::orientation_noise)
      .def_readwrite("velocity_noise", &EnvConfig::velocity_noise)
      .def_readwrite("angular_velocity_noise", &EnvConfig::angular_velocity_noise)
      .def_readwrite("position_bound", &EnvConfig::position_bound)
      .def("observation_size", &EnvConfig::observation_size);

  py::class_<RewardParams>(m, "RewardParams")
      .def(py::init<>())
      .def_readwrite("survival_bonus", &RewardParams::survival_bonus)
      .def_readwrite("position_weight", &RewardParams::position_weight)
      .def_readwrite("orientation_weight", &RewardParams::orientation_weight)
      .def_readwrite("velocity_weight", &RewardParams::velocity_weight)
      .def_readwrite("action_weight", &RewardParams::action_weight)
      .def_readwrite("action_baseline", &RewardParams::action_baseline);

  py::class_<QuadEnv>(m, "QuadEnv")
      .def(py::init<EnvConfig, RewardParams, QuadParams, std::uint64_t>(), py::arg("config") = EnvConfig{},
           py::arg("reward") = RewardParams{}, py::arg("params") = QuadParams{}, py::arg("seed") = 0)
      .def("reset", &QuadEnv::reset)
      .def("step",
           [](QuadEnv& env, const Eigen::Vector4d& a) {
             const StepResult r = env.step(a);
             return py::make_tuple(r.observation, r.reward, r.terminated, r.truncated);
           })
      .def("state", [](const QuadEnv& env) { return state_dict(env.state()); })
      .def("set_reference", &QuadEnv::set_reference);

  m.def(
      "reward",
      [](const Eigen::Vector3d& p, const Eigen::Matrix3d& R, const Eigen::Vector3d& v,
         const Eigen::Vector4d& a, const RewardParams& rp) {
        QuadState s;
        s.position = p;
        s.rotation = R;
        s.velocity = v;
        return reward(s, a, rp);
      },
      py::arg("position"), py::arg("rotation"), py::arg("velocity"), py::arg("action"),
      py::arg("params") = RewardParams{});

  m.def("circle_trajectory", &circle_trajectory, py::arg("t"), py::arg("period") = 6.0,
        py::arg("radius") = 1.0, py::arg("center") = Vec3(0, 0, 1));

  m.def(
      "rmse",
      [](const Eigen::VectorXd& t, const Eigen::MatrixXd& desired, const Eigen::MatrixXd& actual,
         double from_time) {
        const TrackingErrors e = rmse(log_from_arrays(t, desired, actual), from_time);
        return py::make_tuple(e.all_axes, e.horizontal);
      },
      py::arg("t"), py::arg("desired"), py::arg("actual"), py::arg("from_time") = 0.0,
      "Returns (e_bar, e_bar_xy).");

  py::class_<Mlp>(m, "Mlp")
      .def("sizes", &Mlp::sizes)
      .def("parameter_count", &Mlp::parameter_count)
      .def("predict", py::overload_cast<const Eigen::VectorXd&>(&Mlp::predict, py::const_))
      .def("flatten", &Mlp::flatten);

  m.def("random_actor", [](std::vector<int> sizes, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return Mlp::random(sizes, rng);
  }, py::arg("sizes"), py::arg("seed") = 0);
  m.def("load_weights", &load_weights);
  m.def("save_weights", &save_weights);
  m.def("encode_weights", [](const Mlp& net) {
    const auto bytes = encode_weights(net);
    return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  });
  m.def("decode_weights", [](const py::bytes& b) {
    const std::string s = b;
    return decode_weights(std::vector<std::uint8_t>(s.begin(), s.end()));
  });
  m.def(
      "generate_inference_source",
      [](const Mlp& net, const std::string& precision, const std::string& timestamp) {
        if (precision != "f32" && precision != "f64") throw std::invalid_argument("precision must be f32 or f64");
        return generate_inference_source(net, precision == "f64" ? Precision::F64 : Precision::F32, timestamp)
            .text;
      },
      py::arg("net"), py::arg("precision") = "f32", py::arg("timestamp") = "");

  m.def("default_config_text", [] {
    std::ostringstream out;
    write_config(RunConfig{}, out);
    return out.str();
  });
  m.def("check_config", [](const std::string& text) {
    std::istringstream in(text);
    std::ostringstream out;
    write_config(parse_config(in), out);
    return out.str();
  }, "Parses config text and returns the fully resolved configuration.");
}
