#include "aeroflight/sim.hpp"

#include "aeroflight/errors.hpp"
#include "aeroflight/text.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace aeroflight {

void WindProfile::validate() const {
  for (std::size_t i = 0; i < knots.size(); ++i) {
    if (!std::isfinite(knots[i].first) || !knots[i].second.allFinite()) {
      throw ValidationError("wind knot " + std::to_string(i) + " is not finite");
    }
    if (i > 0 && !(knots[i].first > knots[i - 1].first)) {
      throw ValidationError("wind knot times must be strictly increasing");
    }
  }
}

Vec3 wind_at(const WindProfile& profile, double t) {
  const auto& k = profile.knots;
  if (k.empty()) return Vec3::Zero();
  if (t <= k.front().first) return k.front().second;
  if (t >= k.back().first) return k.back().second;
  const auto it = std::upper_bound(k.begin(), k.end(), t,
                                   [](double v, const auto& knot) { return v < knot.first; });
  const auto& b = *it;
  const auto& a = *(it - 1);
  if (t == a.first) return a.second;
  const double u = (t - a.first) / (b.first - a.first);
  return (1.0 - u) * a.second + u * b.second;
}

WindProfile parse_wind(std::string_view s) {
  WindProfile w;
  for (const auto& part : text::split(s, ';')) {
    const auto item = text::trim(part);
    if (item.empty()) continue;
    const auto colon = item.find(':');
    if (colon == std::string_view::npos) throw ParseError("wind knot '" + std::string(item) + "' lacks ':'");
    w.knots.emplace_back(text::parse_double(item.substr(0, colon)),
                         text::parse_vec3(item.substr(colon + 1)));
  }
  w.validate();
  return w;
}

std::string format_wind(const WindProfile& profile) {
  std::string out;
  for (const auto& [t, v] : profile.knots) {
    if (!out.empty()) out += ';';
    out += text::format_double(t) + ':' + text::format_double(v.x()) + ',' +
           text::format_double(v.y()) + ',' + text::format_double(v.z());
  }
  return out;
}

// ---------------------------------------------------------------------------

SimState step(const RobotModel& model, const SimState& state, const VecX& tau, const Vec3& v_w,
              const AeroModel& plant_aero, double dt, StepInfo* info) {
  if (!(dt > 0.0 && dt <= 5e-3)) throw ValidationError("plant step must lie in (0, 5 ms]");
  if (tau.size() != model.n_joints()) throw DimensionError("torque vector length mismatch");
  if (state.thrust.size() != model.n_jets()) throw DimensionError("thrust vector length mismatch");

  const auto& q = state.q;
  const auto kin = forward_kinematics(model, q);
  const auto vel = link_velocities(model, q, kin);
  const VecX nu = q.nu();

  const Vec3 v_com = centroidal_momentum_matrix(model, kin, q).bottomRows<3>() * nu /
                     model.total_mass();
  auto forces = plant_aero.link_forces(model, q, kin, vel, v_com, v_w);
  VecX f_a = total_wrench(model, kin, q, forces);

  VecX f = f_a + jet_generalized_force(model, kin, q, state.thrust);
  f.tail(model.n_joints()) += tau;
  const VecX p = mass_matrix(model, kin, q) * nu + dt * (f + momentum_rate_drift(model, kin, vel, q));

  SimState next = state;
  integrate_configuration(next.q, nu, dt);
  const auto kin_next = forward_kinematics(model, next.q);
  next.q.set_nu(mass_matrix(model, kin_next, next.q).llt().solve(p));
  next.t = state.t + dt;

  if (!next.q.nu().allFinite() || !next.q.base_position.allFinite() ||
      !next.q.base_orientation.coeffs().allFinite() || !next.q.s.allFinite()) {
    throw NonFiniteError("plant state became non-finite", std::lround(next.t / dt));
  }
  if (info) {
    info->link_forces = std::move(forces);
    info->f_a = std::move(f_a);
  }
  return next;
}

// ---------------------------------------------------------------------------

Envelope standard_envelope(const Vec3& start, double wind_speed) {
  Envelope e;
  e.reference = ComTrajectory(start);
  e.reference.add_move(10.0, 20.0, start + Vec3(2.0, 0.0, 0.0));
  e.reference.add_move(20.0, 30.0, start + Vec3(2.0, 1.0, 0.0));
  e.reference.add_move(30.0, 40.0, start);
  const double c = wind_speed * std::sqrt(0.5);
  e.wind.knots = {{0.0, Vec3::Zero()},
                  {5.0, Vec3(wind_speed, 0.0, 0.0)},
                  {30.0, Vec3(wind_speed, 0.0, 0.0)},
                  {31.0, Vec3(c, c, 0.0)},
                  {32.0, Vec3(0.0, wind_speed, 0.0)}};
  return e;
}

Envelope hover_envelope(const Vec3& start) {
  Envelope e;
  e.reference = ComTrajectory(start);
  return e;
}

// ---------------------------------------------------------------------------

std::string to_string(SimStatus s) {
  switch (s) {
    case SimStatus::completed: return "completed";
    case SimStatus::failed: return "failed";
    case SimStatus::fault: return "fault";
  }
  return "fault";
}

std::string SimLog::verdict() const {
  if (status == SimStatus::completed) return "completed";
  return to_string(status) + "@" + text::format_double(end_time);
}

std::vector<std::vector<int>> joint_groups(const RobotModel& model,
                                           std::vector<std::string>* names) {
  static const std::vector<std::string> kNames = {"torso", "left_arm", "right_arm", "left_leg",
                                                  "right_leg"};
  std::vector<std::vector<int>> groups(kNames.size());
  auto has = [](const std::string& s, std::initializer_list<const char*> keys) {
    for (const char* k : keys) {
      if (s.find(k) != std::string::npos) return true;
    }
    return false;
  };
  for (int i = 0; i < model.n_joints(); ++i) {
    const std::string& n = model.joints()[model.dof_joints()[i]].name;
    const bool left = n.rfind("l_", 0) == 0;
    const bool right = n.rfind("r_", 0) == 0;
    std::size_t g = 0;
    if (has(n, {"shoulder", "elbow", "wrist"}) && (left || right)) g = left ? 1 : 2;
    else if (has(n, {"hip", "knee", "ankle"}) && (left || right)) g = left ? 3 : 4;
    groups[g].push_back(i);
  }
  if (names) *names = kNames;
  return groups;
}

std::vector<std::string> SimLog::columns() const {
  std::vector<std::string> c = {"t",     "com_x",   "com_y",   "com_z",  "ref_x",
                                "ref_y", "ref_z",   "com_err", "tilt_deg"};
  for (const char* p : {"h", "hdot", "htilde"}) {
    for (const char* a : {"_lx", "_ly", "_lz", "_px", "_py", "_pz"}) c.push_back(std::string(p) + a);
  }
  for (const auto& g : group_names) c.push_back("ds_" + g);
  for (const auto& j : jet_names) c.push_back("T_" + j);
  for (const auto& j : joint_names) c.push_back("s_" + j);
  for (const auto& j : joint_names) c.push_back("tau_" + j);
  for (const char* p : {"fa_plant", "fa_ctrl", "wind"}) {
    for (const char* a : {"_x", "_y", "_z"}) c.push_back(std::string(p) + a);
  }
  c.push_back("sigma_min");
  return c;
}

std::string format_log(const SimLog& log) {
  std::ostringstream out;
  out << "# aeroflight-log v1 scenario=" << log.scenario << " status=" << to_string(log.status)
      << " end_time=" << text::format_double(log.end_time)
      << " dt=" << text::format_double(log.dt) << " log_dt=" << text::format_double(log.log_dt)
      << " max_com_error=" << text::format_double(log.max_com_error)
      << " max_tilt_deg=" << text::format_double(log.max_tilt_deg) << '\n';
  const auto cols = log.columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
  std::vector<double> row;
  for (const auto& r : log.records) {
    row.clear();
    row.push_back(r.t);
    for (int i = 0; i < 3; ++i) row.push_back(r.com(i));
    for (int i = 0; i < 3; ++i) row.push_back(r.com_ref(i));
    row.push_back(r.com_error);
    row.push_back(r.tilt_deg);
    for (const Vec6* v : {&r.h, &r.hdot, &r.h_tilde}) {
      for (int i = 0; i < 6; ++i) row.push_back((*v)(i));
    }
    row.insert(row.end(), r.ds.begin(), r.ds.end());
    for (const VecX* v : {&r.thrust, &r.s, &r.tau}) {
      for (Eigen::Index i = 0; i < v->size(); ++i) row.push_back((*v)(i));
    }
    for (const Vec3* v : {&r.f_a_plant, &r.f_a_control, &r.wind}) {
      for (int i = 0; i < 3; ++i) row.push_back((*v)(i));
    }
    row.push_back(r.sigma_min);
    if (row.size() != cols.size()) throw DimensionError("log record does not match the schema");
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << text::format_double(row[i]);
    out << '\n';
  }
  return out.str();
}

void write_log(const std::string& path, const SimLog& log) { text::write_file(path, format_log(log)); }

int LogTable::column(std::string_view name) const {
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i] == name) return static_cast<int>(i);
  }
  return -1;
}

LogTable parse_log(std::string_view contents) {
  LogTable t;
  std::size_t pos = 0;
  int line_no = 0;
  while (pos < contents.size()) {
    const auto end = std::min(contents.find('\n', pos), contents.size());
    const auto line = text::trim(contents.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;
    if (line.front() == '#') {
      if (t.header_comment.empty()) t.header_comment = std::string(line);
      continue;
    }
    const auto fields = text::split(line, ',');
    if (t.columns.empty()) {
      t.columns = fields;
      continue;
    }
    if (fields.size() != t.columns.size()) {
      throw ParseError("expected " + std::to_string(t.columns.size()) + " fields", line_no);
    }
    std::vector<double> row;
    row.reserve(fields.size());
    for (const auto& f : fields) row.push_back(text::parse_double(f, line_no));
    t.rows.push_back(std::move(row));
  }
  if (t.columns.empty()) throw ParseError("log has no header row");
  return t;
}

LogTable read_log(const std::string& path) { return parse_log(text::read_file(path)); }

}  // namespace aeroflight
