#include "aeroflight/aero_model.hpp"
#include "aeroflight/axisym.hpp"
#include "aeroflight/dataset.hpp"
#include "aeroflight/errors.hpp"
#include "aeroflight/mlp.hpp"
#include "aeroflight/model.hpp"
#include "aeroflight/sim.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>
#include <vector>

namespace py = pybind11;
using namespace aeroflight;

namespace {

JointState make_state(const RobotModel& m, const VecX& s, const std::optional<Vec3>& base_position,
                      const std::optional<Eigen::Vector4d>& base_quat_wxyz, const std::optional<VecX>& nu) {
  JointState st = JointState::zero(m);
  if (s.size() != m.n_joints()) throw DimensionError("s must have one entry per joint");
  st.s = s;
  if (base_position) st.base_position = *base_position;
  if (base_quat_wxyz) {
    const auto& q = *base_quat_wxyz;
    st.base_orientation = Quat(q(0), q(1), q(2), q(3)).normalized();
  }
  if (nu) {
    if (nu->size() != m.n_velocity()) throw DimensionError("nu must have 6 + n_joints entries");
    st.base_angular_velocity = nu->head<3>();
    st.base_linear_velocity = nu->segment<3>(3);
    st.sdot = nu->tail(m.n_joints());
  }
  return st;
}

py::dict log_to_dict(const SimLog& log) {
  const auto n = static_cast<Eigen::Index>(log.records.size());
  VecX t(n), err(n), tilt(n);
  MatX com(n, 3), ref(n, 3), h(n, 6), hdot(n, 6);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = log.records[i];
    t(i) = r.t;
    err(i) = r.com_error;
    tilt(i) = r.tilt_deg;
    com.row(i) = r.com.transpose();
    ref.row(i) = r.com_ref.transpose();
    h.row(i) = r.h.transpose();
    hdot.row(i) = r.hdot.transpose();
  }
  py::dict d;
  d["scenario"] = log.scenario;
  d["status"] = to_string(log.status);
  d["verdict"] = log.verdict();
  d["reason"] = log.reason;
  d["end_time"] = log.end_time;
  d["max_com_error"] = log.max_com_error;
  d["max_tilt_deg"] = log.max_tilt_deg;
  d["t"] = t;
  d["com"] = com;
  d["com_ref"] = ref;
  d["com_error"] = err;
  d["tilt_deg"] = tilt;
  d["h"] = h;
  d["hdot"] = hdot;
  return d;
}

}  // namespace

PYBIND11_MODULE(_aeroflight, mod) {
  mod.doc() = "Aerodynamics-aware flight control of jet-powered humanoids";

  py::register_exception<IoError>(mod, "IoError", PyExc_OSError);
  py::register_exception<ParseError>(mod, "ParseError", PyExc_ValueError);
  py::register_exception<ValidationError>(mod, "ValidationError", PyExc_ValueError);
  py::register_exception<DimensionError>(mod, "DimensionError", PyExc_ValueError);
  py::register_exception<NonFiniteError>(mod, "NonFiniteError", PyExc_FloatingPointError);
  py::register_exception<ControllerFault>(mod, "ControllerFault", PyExc_RuntimeError);

  // Model
  py::class_<RobotModel>(mod, "RobotModel")
      .def_property_readonly("n_links", &RobotModel::n_links)
      .def_property_readonly("n_joints", &RobotModel::n_joints)
      .def_property_readonly("n_jets", &RobotModel::n_jets)
      .def_property_readonly("n_aero_links", &RobotModel::n_aero_links)
      .def_property_readonly("total_mass", &RobotModel::total_mass)
      .def_property_readonly("gravity", &RobotModel::gravity)
      .def_property_readonly("joint_names",
                             [](const RobotModel& m) {
                               std::vector<std::string> out;
                               for (int j : m.dof_joints()) out.push_back(m.joints()[j].name);
                               return out;
                             })
      .def_property_readonly("jet_names",
                             [](const RobotModel& m) {
                               std::vector<std::string> out;
                               for (const auto& j : m.jets()) out.push_back(j.name);
                               return out;
                             })
      .def("joint_limits", [](const RobotModel& m) {
        VecX lo(m.n_joints()), hi(m.n_joints());
        for (int i = 0; i < m.n_joints(); ++i) {
          lo(i) = m.lower_limit(i);
          hi(i) = m.upper_limit(i);
        }
        return py::make_tuple(lo, hi);
      });
  mod.def("load_model", &load_model_file, py::arg("path"));
  mod.def("parse_model", [](const std::string& text) { return load_model(text); }, py::arg("text"));

  mod.def(
      "centroidal_momentum",
      [](const RobotModel& m, const VecX& s, std::optional<Vec3> pos, std::optional<Eigen::Vector4d> quat,
         std::optional<VecX> nu) {
        const auto c = centroidal_momentum(m, make_state(m, s, pos, quat, nu));
        return py::make_tuple(c.h, c.com);
      },
      py::arg("model"), py::arg("s"), py::arg("base_position") = py::none(),
      py::arg("base_quat_wxyz") = py::none(), py::arg("nu") = py::none(),
      "Centroidal momentum (angular, linear) and CoM position.");
  mod.def(
      "mass_matrix",
      [](const RobotModel& m, const VecX& s, std::optional<Vec3> pos, std::optional<Eigen::Vector4d> quat) {
        return dynamics_terms(m, make_state(m, s, pos, quat, std::nullopt)).mass_matrix;
      },
      py::arg("model"), py::arg("s"), py::arg("base_position") = py::none(),
      py::arg("base_quat_wxyz") = py::none());

  // Dataset
  py::class_<AeroDataset>(mod, "AeroDataset")
      .def("__len__", &AeroDataset::size)
      .def_property_readonly("input_dim", &AeroDataset::input_dim)
      .def_property_readonly("output_dim", &AeroDataset::output_dim)
      .def("inputs", &dataset_inputs)
      .def("outputs", &dataset_outputs)
      .def("__eq__", [](const AeroDataset& a, const AeroDataset& b) { return a == b; });
  mod.def(
      "generate_dataset",
      [](const RobotModel& m, const std::string& config, std::optional<std::uint64_t> seed) {
        auto cfg = load_oracle_config(config);
        if (seed) cfg.seed = *seed;
        return oracle_generate(m, cfg);
      },
      py::arg("model"), py::arg("config"), py::arg("seed") = py::none());
  mod.def("split_dataset", &split, py::arg("dataset"), py::arg("ratio") = 0.8, py::arg("seed") = 7);
  mod.def("mirror_augment", &mirror_augment, py::arg("dataset"), py::arg("model"));
  mod.def("read_dataset", &read_dataset, py::arg("path"));
  mod.def("write_dataset", &write_dataset, py::arg("path"), py::arg("dataset"));
  mod.def("relative_error", &relative_error, py::arg("pred"), py::arg("target"));

  // Axisymmetric model
  py::class_<AxisymCoeffs>(mod, "AxisymCoeffs")
      .def("weights", [](const AxisymCoeffs& c, const std::string& link) { return c.at(link); })
      .def_property_readonly("links",
                             [](const AxisymCoeffs& c) {
                               std::vector<std::string> out;
                               for (const auto& l : c.links) out.push_back(l.link);
                               return out;
                             })
      .def("__str__", &format_coeffs);
  mod.def(
      "fit_axisym",
      [](const RobotModel& m, const AeroDataset& ds, std::optional<double> lambda) {
        FitOptions opt;
        opt.lambda = lambda;
        return fit_coefficients(m, ds, opt);
      },
      py::arg("model"), py::arg("dataset"), py::arg("lambda_") = py::none());
  mod.def("predict_axisym", &predict_dataset_axisym, py::arg("model"), py::arg("coeffs"), py::arg("dataset"));
  mod.def("load_coeffs", &load_coeffs_file, py::arg("path"));
  mod.def("save_coeffs", &save_coeffs_file, py::arg("path"), py::arg("coeffs"));

  // Network
  py::class_<Mlp>(mod, "Mlp")
      .def_property_readonly("input_dim", [](const Mlp& n) { return n.arch.input_dim; })
      .def_property_readonly("output_dim", [](const Mlp& n) { return n.arch.output_dim; })
      .def_property_readonly("hidden", [](const Mlp& n) { return n.arch.hidden; })
      .def("predict", &predict, py::arg("x"));
  mod.def(
      "mlp_init",
      [](int input_dim, int output_dim, int layers, int width, double dropout, std::uint64_t seed) {
        MlpArch a;
        a.input_dim = input_dim;
        a.output_dim = output_dim;
        a.hidden = std::vector<int>(layers, width);
        a.dropout = dropout;
        return mlp_init(a, seed);
      },
      py::arg("input_dim") = 22, py::arg("output_dim") = 39, py::arg("layers") = 9, py::arg("width") = 64,
      py::arg("dropout") = 0.1, py::arg("seed") = 1);
  mod.def(
      "train_mlp",
      [](Mlp& net, const AeroDataset& tr, const AeroDataset& va, int epochs, int batch, double lr,
         double lr_final, std::uint64_t seed, bool shared_output_scale) {
        TrainConfig cfg;
        cfg.shared_output_scale = shared_output_scale;
        cfg.epochs = epochs;
        cfg.batch_size = batch;
        cfg.lr = lr;
        cfg.lr_final = lr_final;
        cfg.seed = seed;
        TrainHistory h;
        {
          py::gil_scoped_release release;
          h = train(net, tr, va, cfg);
        }
        return py::make_tuple(h.train_loss, h.val_loss);
      },
      py::arg("mlp"), py::arg("train"), py::arg("val"), py::arg("epochs") = 2000, py::arg("batch") = 128,
      py::arg("lr") = 1e-3, py::arg("lr_final") = -1.0, py::arg("seed") = 1,
      py::arg("shared_output_scale") = false,
      "Trains in place; returns (train_loss, val_loss) per epoch.");
  mod.def("load_mlp", &load_mlp, py::arg("path"));
  mod.def("save_mlp", &save_mlp, py::arg("path"), py::arg("mlp"));

  // Simulation
  py::class_<Scenario>(mod, "Scenario")
      .def_readwrite("name", &Scenario::name)
      .def_readwrite("duration", &Scenario::duration)
      .def_readwrite("dt", &Scenario::dt)
      .def_readwrite("wind_speed", &Scenario::wind_speed)
      .def_readwrite("perturbation", &Scenario::perturbation)
      .def_readwrite("seed", &Scenario::seed)
      .def_property(
          "plant_aero", [](const Scenario& s) { return to_string(s.plant_aero); },
          [](Scenario& s, const std::string& v) { s.plant_aero = parse_aero_kind(v); })
      .def_property(
          "controller_aero",
          [](const Scenario& s) -> std::optional<std::string> {
            if (!s.controller_aero) return std::nullopt;
            return to_string(*s.controller_aero);
          },
          [](Scenario& s, const std::string& v) { s.controller_aero = parse_aero_kind(v); });
  mod.def("load_scenario", &load_scenario_file, py::arg("path"));
  mod.def(
      "run_scenario",
      [](Scenario sc, const std::string& log_path) {
        sc.validate();
        SimLog log;
        {
          py::gil_scoped_release release;
          log = run_scenario(sc);
        }
        if (!log_path.empty()) write_log(log_path, log);
        return log_to_dict(log);
      },
      py::arg("scenario"), py::arg("log_path") = "",
      "Runs the closed loop; returns the verdict and the main logged series.");
}
