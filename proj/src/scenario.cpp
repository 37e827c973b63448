#include "aeroflight/errors.hpp"
#include "aeroflight/rng.hpp"
#include "aeroflight/sim.hpp"
#include "aeroflight/text.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace aeroflight {

void Scenario::validate() const {
  if (model_path.empty()) throw ValidationError("scenario needs a model file");
  if (gains_path.empty()) throw ValidationError("scenario needs a gains file");
  if (envelope != "standard" && envelope != "hover") {
    throw ValidationError("unknown envelope '" + envelope + "' (expected standard or hover)");
  }
  if (!(dt > 0.0)) throw ValidationError("dt must be > 0");
  if (!(duration >= dt)) throw ValidationError("duration must be >= dt");
  if (!(control_dt >= dt)) throw ValidationError("control_dt must be >= dt");
  const double ratio = control_dt / dt;
  if (std::abs(ratio - std::round(ratio)) > 1e-9 * ratio) {
    throw ValidationError("control_dt must be an integer multiple of dt");
  }
  if (!(max_com_error > 0.0) || !(max_tilt_deg > 0.0)) {
    throw ValidationError("failure thresholds must be positive");
  }
  if (!(perturbation >= 0.0)) throw ValidationError("perturbation must be >= 0");
  if (!(rho > 0.0)) throw ValidationError("rho must be > 0");
  if (!(wind_speed >= 0.0)) throw ValidationError("wind_speed must be >= 0");
  if (wind) wind->validate();
}

Scenario parse_scenario(std::string_view contents, const std::string& base_dir) {
  Scenario sc;
  auto path = [&](const std::string& v) { return text::resolve(base_dir, v); };
  std::string shared_coeffs, shared_mlp;  // used where no side-specific file is given
  for (const auto& [k, v] : text::parse_kv_file(contents)) {
    if (k == "name") sc.name = v;
    else if (k == "model") sc.model_path = path(v);
    else if (k == "gains") sc.gains_path = path(v);
    else if (k == "plant_aero") sc.plant_aero = parse_aero_kind(v);
    else if (k == "controller_aero") sc.controller_aero = parse_aero_kind(v);
    else if (k == "coeffs") shared_coeffs = path(v);
    else if (k == "plant_coeffs") sc.plant_coeffs = path(v);
    else if (k == "controller_coeffs") sc.controller_coeffs = path(v);
    else if (k == "mlp") shared_mlp = path(v);
    else if (k == "plant_mlp") sc.plant_mlp = path(v);
    else if (k == "controller_mlp") sc.controller_mlp = path(v);
    else if (k == "envelope") sc.envelope = v;
    else if (k == "wind") sc.wind = parse_wind(v);
    else if (k == "wind_speed") sc.wind_speed = text::parse_double(v);
    else if (k == "duration") sc.duration = text::parse_double(v);
    else if (k == "dt") sc.dt = text::parse_double(v);
    else if (k == "control_dt") sc.control_dt = text::parse_double(v);
    else if (k == "seed") sc.seed = static_cast<std::uint64_t>(text::parse_long(v));
    else if (k == "perturbation") sc.perturbation = text::parse_double(v);
    else if (k == "max_com_error") sc.max_com_error = text::parse_double(v);
    else if (k == "max_tilt_deg") sc.max_tilt_deg = text::parse_double(v);
    else if (k == "rho") sc.rho = text::parse_double(v);
    else if (k == "posture") {
      for (const auto& item : text::split(v, ',')) {
        const auto t = text::trim(item);
        const auto colon = t.find(':');
        if (colon == std::string_view::npos) throw ParseError("posture entry '" + std::string(t) + "' lacks ':'");
        sc.posture.emplace_back(std::string(t.substr(0, colon)), text::parse_double(t.substr(colon + 1)));
      }
    } else {
      throw ParseError("unknown scenario key '" + k + "'");
    }
  }
  for (auto* p : {&sc.plant_coeffs, &sc.controller_coeffs}) {
    if (p->empty()) *p = shared_coeffs;
  }
  for (auto* p : {&sc.plant_mlp, &sc.controller_mlp}) {
    if (p->empty()) *p = shared_mlp;
  }
  sc.validate();
  return sc;
}

Scenario load_scenario_file(const std::string& path) {
  return parse_scenario(text::read_file(path), text::dirname(path));
}

namespace {

AeroModel make_aero(AeroKind kind, const std::string& coeffs, const std::string& mlp, double rho) {
  AeroModel a;
  a.kind = kind;
  a.factors.rho = rho;
  if (kind == AeroKind::axisym) {
    if (coeffs.empty()) throw ValidationError("axisymmetric aerodynamics need a coefficient file");
    a.coeffs = std::make_shared<AxisymCoeffs>(load_coeffs_file(coeffs));
  } else if (kind == AeroKind::mlp) {
    if (mlp.empty()) throw ValidationError("network aerodynamics need a weights file");
    a.mlp = std::make_shared<Mlp>(load_mlp(mlp));
  }
  return a;
}

double tilt_deg(const JointState& q) {
  const double c = (q.base_orientation.normalized().toRotationMatrix())(2, 2);
  return std::acos(std::clamp(c, -1.0, 1.0)) * 180.0 / M_PI;
}

}  // namespace

SimState initial_state(const RobotModel& model, const Scenario& sc) {
  SimState st;
  st.q = JointState::zero(model);
  for (const auto& [name, value] : sc.posture) {
    const auto& jt = model.joints()[model.joint_index(name)];
    if (jt.type != JointType::revolute) throw ValidationError("posture joint '" + name + "' is fixed");
    if (value < model.lower_limit(jt.dof) || value > model.upper_limit(jt.dof)) {
      throw ValidationError("posture of joint '" + name + "' is outside its limits");
    }
    st.q.s(jt.dof) = value;
  }
  if (sc.perturbation > 0.0) {
    Rng rng(sc.seed);
    for (int i = 0; i < model.n_joints(); ++i) {
      st.q.s(i) = std::clamp(st.q.s(i) + uniform(rng, -sc.perturbation, sc.perturbation),
                             model.lower_limit(i), model.upper_limit(i));
    }
  }
  st.thrust = hover_thrust(model, st.q);
  for (int j = 0; j < model.n_jets(); ++j) {
    const auto& jet = model.jets()[j];
    if (st.thrust(j) < jet.thrust_min || st.thrust(j) > jet.thrust_max) {
      throw ValidationError("hover thrust of jet '" + jet.name + "' is outside its limits");
    }
  }
  return st;
}

SimLog run_scenario(const Scenario& sc) {
  sc.validate();
  const RobotModel model = load_model_file(sc.model_path);
  const ControlGains gains = load_gains_file(sc.gains_path);
  const AeroKind ctrl_kind = sc.controller_aero.value_or(gains.aero_feedback);
  const AeroModel plant_aero = make_aero(sc.plant_aero, sc.plant_coeffs, sc.plant_mlp, sc.rho);
  plant_aero.check(model);
  AeroModel ctrl_aero = make_aero(ctrl_kind, sc.controller_coeffs, sc.controller_mlp, sc.rho);

  SimState st = initial_state(model, sc);
  const Vec3 com0 = forward_kinematics(model, st.q).com;
  Envelope env = sc.envelope == "hover" ? hover_envelope(com0) : standard_envelope(com0, sc.wind_speed);
  if (sc.wind) env.wind = *sc.wind;

  FlightController ctrl(model, gains, std::move(ctrl_aero), env.reference);
  ctrl.reset(st.q);
  st.thrust = st.thrust.cwiseMax(ctrl.thrust_min()).cwiseMin(ctrl.thrust_max());

  SimLog log;
  log.scenario = sc.name;
  log.dt = sc.dt;
  log.log_dt = sc.control_dt;
  for (const auto& j : model.jets()) log.jet_names.push_back(j.name);
  for (int i = 0; i < model.n_joints(); ++i) {
    log.joint_names.push_back(model.joints()[model.dof_joints()[i]].name);
  }
  const auto groups = joint_groups(model, &log.group_names);

  const long n_steps = std::lround(sc.duration / sc.dt);
  const long ratio = std::lround(sc.control_dt / sc.dt);
  ControlOutput out;
  long k = 0;
  try {
    for (; k < n_steps; ++k) {
      const double t = static_cast<double>(k) * sc.dt;
      st.t = t;
      const Vec3 v_w = wind_at(env.wind, t);
      const bool control_tick = k % ratio == 0;
      if (control_tick) out = ctrl.step(t, st.q, st.thrust, v_w, sc.control_dt);

      StepInfo info;
      SimState next = step(model, st, out.tau, v_w, plant_aero, sc.dt, &info);

      if (control_tick) {
        const auto kin = forward_kinematics(model, st.q);
        SimRecord r;
        r.t = t;
        r.com = kin.com;
        r.com_ref = env.reference.at(t).pos;
        r.com_error = (r.com - r.com_ref).norm();
        r.tilt_deg = tilt_deg(st.q);
        r.h = out.diag.h;
        r.hdot = momentum_dynamics(model, kin, st.q, st.thrust, info.f_a).hdot;
        r.h_tilde = out.diag.target.h_tilde;
        for (const auto& g : groups) {
          double sum = 0.0;
          for (int i : g) sum += std::abs(st.q.s(i) - ctrl.s_postural()(i));
          r.ds.push_back(sum);
        }
        r.thrust = st.thrust;
        r.s = st.q.s;
        r.tau = out.tau;
        r.f_a_plant = info.f_a.segment<3>(3);
        r.f_a_control = out.diag.f_a.segment<3>(3);
        r.wind = v_w;
        r.sigma_min = out.diag.sigma_min;
        log.max_com_error = std::max(log.max_com_error, r.com_error);
        log.max_tilt_deg = std::max(log.max_tilt_deg, r.tilt_deg);
        const bool failed = r.com_error > sc.max_com_error || r.tilt_deg > sc.max_tilt_deg;
        log.records.push_back(std::move(r));
        if (failed) {
          log.status = SimStatus::failed;
          log.end_time = t;
          log.reason = log.records.back().com_error > sc.max_com_error ? "com_error" : "tilt";
          return log;
        }
      }

      next.thrust = st.thrust + sc.dt * out.thrust_rate;
      st = std::move(next);
    }
  } catch (const ControllerFault& e) {
    log.status = SimStatus::fault;
    log.end_time = static_cast<double>(k) * sc.dt;
    log.reason = std::string("controller: ") + e.what();
    return log;
  } catch (const NonFiniteError& e) {
    log.status = SimStatus::fault;
    log.end_time = static_cast<double>(k) * sc.dt;
    log.reason = std::string("integrator: ") + e.what();
    return log;
  }
  log.status = SimStatus::completed;
  log.end_time = static_cast<double>(n_steps) * sc.dt;
  return log;
}

}  // namespace aeroflight
