#include "aeroflight/model.hpp"

#include "aeroflight/errors.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <deque>
#include <set>

namespace aeroflight {

namespace {

// Mirror through the base x-z plane.
Vec3 mirror_vec(const Vec3& v) { return {v.x(), -v.y(), v.z()}; }

template <typename Spec>
int find_by_name(const std::vector<Spec>& items, std::string_view name) {
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

Vec3 normalized_direction(const Vec3& v, const std::string& what) {
  const double n = v.norm();
  if (!std::isfinite(n) || std::abs(n - 1.0) > 1e-6) {
    throw ValidationError(what + " must be a unit vector");
  }
  return v / n;
}

}  // namespace

RobotModel RobotModel::build(std::vector<LinkSpec> links, std::vector<JointSpec> joints,
                             std::vector<JetSpec> jets, double gravity, bool symmetric,
                             const std::vector<MirrorPair>& joint_pairs,
                             const std::vector<MirrorPair>& link_pairs) {
  RobotModel m;
  if (links.empty()) throw ValidationError("model has no links");
  if (!(gravity >= 0.0) || !std::isfinite(gravity)) {
    throw ValidationError("gravity must be finite and nonnegative");
  }

  std::set<std::string> names;
  for (const auto& l : links) {
    if (!names.insert(l.name).second) throw ValidationError("duplicate link name '" + l.name + "'");
    if (!(l.mass > 0.0) || !std::isfinite(l.mass)) {
      throw ValidationError("nonpositive mass for link '" + l.name + "'");
    }
    if ((l.inertia - l.inertia.transpose()).norm() > 1e-12 || !l.inertia.allFinite() ||
        Eigen::LLT<Mat3>(l.inertia).info() != Eigen::Success) {
      throw ValidationError("inertia of link '" + l.name + "' is not symmetric positive definite");
    }
    if (std::abs(l.axis.norm() - 1.0) > 1e-12) {
      throw ValidationError("symmetry axis of link '" + l.name + "' is not unit length");
    }
    if (!l.com.allFinite()) throw ValidationError("non-finite CoM for link '" + l.name + "'");
  }

  const int nl = static_cast<int>(links.size());
  std::vector<int> parent_joint(nl, -1);
  names.clear();
  int dof = 0;
  for (std::size_t j = 0; j < joints.size(); ++j) {
    auto& jt = joints[j];
    if (!names.insert(jt.name).second) throw ValidationError("duplicate joint name '" + jt.name + "'");
    if (jt.parent < 0 || jt.parent >= nl || jt.child < 0 || jt.child >= nl) {
      throw ValidationError("joint '" + jt.name + "' references an unknown link");
    }
    if (jt.parent == jt.child) {
      throw ValidationError("cycle detected: joint '" + jt.name + "' has parent == child");
    }
    if (parent_joint[jt.child] != -1) {
      throw ValidationError("cycle detected: link '" + links[jt.child].name +
                            "' has more than one parent joint");
    }
    parent_joint[jt.child] = static_cast<int>(j);
    if (jt.type == JointType::revolute) {
      jt.axis = normalized_direction(jt.axis, "axis of joint '" + jt.name + "'");
      if (!(jt.lower < jt.upper)) {
        throw ValidationError("joint '" + jt.name + "' has lower limit >= upper limit");
      }
      if (!(jt.vmax > 0.0)) throw ValidationError("joint '" + jt.name + "' has vmax <= 0");
      jt.dof = dof++;
    } else {
      jt.dof = -1;
    }
  }

  int base = -1;
  for (int i = 0; i < nl; ++i) {
    if (parent_joint[i] == -1) {
      if (base != -1) {
        throw ValidationError("joint graph is not a tree: links '" + links[base].name + "' and '" +
                              links[i].name + "' both lack a parent");
      }
      base = i;
    }
  }
  if (base == -1) throw ValidationError("cycle detected: no root link");

  // Breadth-first from the base; anything unreachable sits on a cycle.
  std::vector<std::vector<int>> children(nl);
  for (std::size_t j = 0; j < joints.size(); ++j) children[joints[j].parent].push_back(static_cast<int>(j));
  std::vector<int> topo;
  std::vector<bool> seen(nl, false);
  std::deque<int> queue{base};
  seen[base] = true;
  while (!queue.empty()) {
    const int l = queue.front();
    queue.pop_front();
    for (int j : children[l]) {
      const int c = joints[j].child;
      if (seen[c]) throw ValidationError("cycle detected at link '" + links[c].name + "'");
      seen[c] = true;
      topo.push_back(j);
      queue.push_back(c);
    }
  }
  for (int i = 0; i < nl; ++i) {
    if (!seen[i]) {
      throw ValidationError("cycle detected: link '" + links[i].name + "' is not reachable from the base");
    }
  }

  for (auto& jet : jets) {
    if (jet.link < 0 || jet.link >= nl) {
      throw ValidationError("jet '" + jet.name + "' references an unknown link");
    }
    jet.direction = normalized_direction(jet.direction, "direction of jet '" + jet.name + "'");
    if (!(jet.thrust_min >= 0.0) || !(jet.thrust_min < jet.thrust_max)) {
      throw ValidationError("jet '" + jet.name + "' needs 0 <= tmin < tmax");
    }
  }

  m.links_ = std::move(links);
  m.joints_ = std::move(joints);
  m.jets_ = std::move(jets);
  m.gravity_ = gravity;
  m.base_ = base;
  m.n_dof_ = dof;
  m.parent_joint_ = std::move(parent_joint);
  m.topo_joints_ = std::move(topo);
  m.total_mass_ = 0.0;
  for (int i = 0; i < nl; ++i) {
    m.total_mass_ += m.links_[i].mass;
    if (m.links_[i].aero) m.aero_links_.push_back(i);
  }
  m.dof_joints_.assign(dof, -1);
  for (std::size_t j = 0; j < m.joints_.size(); ++j) {
    if (m.joints_[j].dof >= 0) m.dof_joints_[m.joints_[j].dof] = static_cast<int>(j);
  }
  m.support_.assign(nl, {});
  for (int i = 0; i < nl; ++i) {
    int l = i;
    std::vector<int> path;
    while (m.parent_joint_[l] != -1) {
      const int j = m.parent_joint_[l];
      if (m.joints_[j].type == JointType::revolute) path.push_back(j);
      l = m.joints_[j].parent;
    }
    std::reverse(path.begin(), path.end());
    m.support_[i] = std::move(path);
  }

  if (symmetric) {
    // At the zero configuration every frame shares the base orientation, so
    // joint axes from the file can be compared directly.
    Symmetry sym;
    sym.declared = true;
    sym.joint_mirror.resize(dof);
    sym.joint_sign.resize(dof);
    for (int d = 0; d < dof; ++d) sym.joint_mirror[d] = d;
    sym.link_mirror.resize(nl);
    for (int i = 0; i < nl; ++i) sym.link_mirror[i] = i;
    std::vector<bool> paired(dof, false);
    for (const auto& p : joint_pairs) {
      const int a = m.joint_index(p.a), b = m.joint_index(p.b);
      const int da = m.joints_[a].dof, db = m.joints_[b].dof;
      if (da < 0 || db < 0) throw ValidationError("mirror pair '" + p.a + "," + p.b + "' must be revolute joints");
      if (paired[da] || paired[db]) throw ValidationError("joint listed in two mirror pairs");
      paired[da] = paired[db] = true;
      sym.joint_mirror[da] = db;
      sym.joint_mirror[db] = da;
    }
    for (int d = 0; d < dof; ++d) {
      const Vec3& a = m.joints_[m.dof_joints_[d]].axis;
      const Vec3& b = m.joints_[m.dof_joints_[sym.joint_mirror[d]]].axis;
      const double c = b.dot(mirror_vec(a));
      if (std::abs(std::abs(c) - 1.0) > 1e-9) {
        throw ValidationError("joint '" + m.joints_[m.dof_joints_[d]].name +
                              "' axis is not mirror-consistent with its pair");
      }
      sym.joint_sign[d] = c > 0.0 ? -1.0 : 1.0;
    }
    std::vector<bool> lpaired(nl, false);
    for (const auto& p : link_pairs) {
      const int a = m.link_index(p.a), b = m.link_index(p.b);
      if (lpaired[a] || lpaired[b]) throw ValidationError("link listed in two mirror pairs");
      lpaired[a] = lpaired[b] = true;
      sym.link_mirror[a] = b;
      sym.link_mirror[b] = a;
    }
    for (int i = 0; i < nl; ++i) {
      if (m.links_[i].aero != m.links_[sym.link_mirror[i]].aero) {
        throw ValidationError("mirror pair of link '" + m.links_[i].name + "' mixes aero and non-aero links");
      }
    }
    m.symmetry_ = std::move(sym);
  }
  return m;
}

int RobotModel::link_index(std::string_view name) const {
  const int i = find_by_name(links_, name);
  if (i < 0) throw ValidationError("unknown link '" + std::string(name) + "'");
  return i;
}

int RobotModel::joint_index(std::string_view name) const {
  const int i = find_by_name(joints_, name);
  if (i < 0) throw ValidationError("unknown joint '" + std::string(name) + "'");
  return i;
}

JointState JointState::zero(const RobotModel& model) {
  JointState s;
  s.s = VecX::Zero(model.n_joints());
  s.sdot = VecX::Zero(model.n_joints());
  return s;
}

VecX JointState::nu() const {
  VecX v(6 + s.size());
  v << base_angular_velocity, base_linear_velocity, sdot;
  return v;
}

void JointState::set_nu(const VecX& v) {
  base_angular_velocity = v.segment<3>(0);
  base_linear_velocity = v.segment<3>(3);
  sdot = v.tail(v.size() - 6);
}

void validate_state(const RobotModel& model, const JointState& state) {
  const auto n = model.n_joints();
  if (state.s.size() != n || state.sdot.size() != n) {
    throw ValidationError("joint vector length does not match the model (" + std::to_string(n) + ")");
  }
  if (std::abs(state.base_orientation.norm() - 1.0) > 1e-9) {
    throw ValidationError("base orientation is not a unit quaternion");
  }
  if (!state.base_position.allFinite() || !state.base_angular_velocity.allFinite() ||
      !state.base_linear_velocity.allFinite() || !state.s.allFinite() || !state.sdot.allFinite() ||
      !state.base_orientation.coeffs().allFinite()) {
    throw ValidationError("state contains non-finite values");
  }
}

void integrate_configuration(JointState& state, const VecX& nu, double dt) {
  const Vec3 w = nu.segment<3>(0);
  const double angle = w.norm() * dt;
  if (angle != 0.0) {
    const Quat dq(Eigen::AngleAxisd(angle, w.normalized()));
    state.base_orientation = (dq * state.base_orientation).normalized();
  }
  state.base_position += nu.segment<3>(3) * dt;
  state.s += nu.tail(nu.size() - 6) * dt;
}

Kinematics forward_kinematics(const RobotModel& model, const JointState& state) {
  const int nl = model.n_links();
  Kinematics k;
  k.rotation.resize(nl);
  k.position.resize(nl);
  k.link_com.resize(nl);
  k.joint_axis.resize(model.joints().size());
  const int b = model.base_link();
  k.rotation[b] = state.base_orientation.normalized().toRotationMatrix();
  k.position[b] = state.base_position;
  for (int j : model.topological_joints()) {
    const auto& jt = model.joints()[j];
    const Mat3& Rp = k.rotation[jt.parent];
    if (jt.type == JointType::revolute) {
      k.rotation[jt.child] = Rp * Eigen::AngleAxisd(state.s[jt.dof], jt.axis).toRotationMatrix();
    } else {
      k.rotation[jt.child] = Rp;
    }
    k.position[jt.child] = k.position[jt.parent] + Rp * jt.origin;
    k.joint_axis[j] = Rp * jt.axis;
  }
  Vec3 weighted = Vec3::Zero();
  for (int i = 0; i < nl; ++i) {
    k.link_com[i] = k.position[i] + k.rotation[i] * model.links()[i].com;
    weighted += model.links()[i].mass * k.link_com[i];
  }
  k.com = weighted / model.total_mass();
  return k;
}

LinkVelocities link_velocities(const RobotModel& model, const JointState& state,
                               const Kinematics& kin) {
  const int nl = model.n_links();
  LinkVelocities v;
  v.omega.resize(nl);
  v.v_origin.resize(nl);
  v.v_com.resize(nl);
  const int b = model.base_link();
  v.omega[b] = state.base_angular_velocity;
  v.v_origin[b] = state.base_linear_velocity;
  for (int j : model.topological_joints()) {
    const auto& jt = model.joints()[j];
    const int p = jt.parent, c = jt.child;
    v.omega[c] = v.omega[p];
    if (jt.type == JointType::revolute) v.omega[c] += kin.joint_axis[j] * state.sdot[jt.dof];
    v.v_origin[c] = v.v_origin[p] + v.omega[p].cross(kin.position[c] - kin.position[p]);
  }
  for (int i = 0; i < nl; ++i) {
    v.v_com[i] = v.v_origin[i] + v.omega[i].cross(kin.link_com[i] - kin.position[i]);
  }
  return v;
}

MatX point_jacobian(const RobotModel& model, const Kinematics& kin, const JointState& state,
                    int link, const Vec3& point) {
  MatX J = MatX::Zero(6, model.n_velocity());
  J.block<3, 3>(0, 0).setIdentity();
  J.block<3, 3>(3, 0) = -skew(point - state.base_position);
  J.block<3, 3>(3, 3).setIdentity();
  for (int j : model.support(link)) {
    const auto& jt = model.joints()[j];
    const Vec3& a = kin.joint_axis[j];
    J.block<3, 1>(0, 6 + jt.dof) = a;
    J.block<3, 1>(3, 6 + jt.dof) = a.cross(point - kin.position[jt.child]);
  }
  return J;
}

MatX link_jacobian(const RobotModel& model, const Kinematics& kin, const JointState& state,
                   int link) {
  if (link < 0 || link >= model.n_links()) throw ValidationError("unknown link index");
  return point_jacobian(model, kin, state, link, kin.position[link]);
}

MatX link_jacobian(const RobotModel& model, const JointState& state, int link) {
  return link_jacobian(model, forward_kinematics(model, state), state, link);
}

MatX link_jacobian(const RobotModel& model, const JointState& state, std::string_view link) {
  return link_jacobian(model, state, model.link_index(link));
}

MatX com_jacobian(const RobotModel& model, const Kinematics& kin, const JointState& state) {
  MatX J = MatX::Zero(3, model.n_velocity());
  J.block<3, 3>(0, 0) = -skew(kin.com - state.base_position);
  J.block<3, 3>(0, 3).setIdentity();
  const double M = model.total_mass();
  for (int i = 0; i < model.n_links(); ++i) {
    const double w = model.links()[i].mass / M;
    for (int j : model.support(i)) {
      const auto& jt = model.joints()[j];
      J.col(6 + jt.dof) += w * kin.joint_axis[j].cross(kin.link_com[i] - kin.position[jt.child]);
    }
  }
  return J;
}

namespace {

// Accumulates J(point)^T (torque, force) into out without forming J.
void add_jacobian_transpose(const RobotModel& model, const Kinematics& kin, const JointState& state,
                            int link, const Vec3& point, const Vec3& torque, const Vec3& force,
                            VecX& out) {
  out.segment<3>(0) += torque + (point - state.base_position).cross(force);
  out.segment<3>(3) += force;
  for (int j : model.support(link)) {
    const auto& jt = model.joints()[j];
    const Vec3& a = kin.joint_axis[j];
    out[6 + jt.dof] += a.dot(torque) + a.cross(point - kin.position[jt.child]).dot(force);
  }
}

}  // namespace

VecX point_force_to_generalized(const RobotModel& model, const Kinematics& kin,
                                const JointState& state, int link, const Vec3& point,
                                const Vec3& force) {
  VecX f = VecX::Zero(model.n_velocity());
  add_jacobian_transpose(model, kin, state, link, point, Vec3::Zero(), force, f);
  return f;
}

MatX centroidal_momentum_matrix(const RobotModel& model, const Kinematics& kin,
                                const JointState& state) {
  MatX A = MatX::Zero(6, model.n_velocity());
  for (int i = 0; i < model.n_links(); ++i) {
    const auto& L = model.links()[i];
    const MatX J = point_jacobian(model, kin, state, i, kin.link_com[i]);
    const Mat3 Iw = kin.rotation[i] * L.inertia * kin.rotation[i].transpose();
    A.topRows<3>() += Iw * J.topRows<3>() + L.mass * skew(kin.link_com[i] - kin.com) * J.bottomRows<3>();
    A.bottomRows<3>() += L.mass * J.bottomRows<3>();
  }
  return A;
}

CentroidalState centroidal_momentum(const RobotModel& model, const JointState& state) {
  const Kinematics kin = forward_kinematics(model, state);
  const LinkVelocities vel = link_velocities(model, state, kin);
  CentroidalState c;
  c.com = kin.com;
  Vec3 lin = Vec3::Zero(), ang = Vec3::Zero();
  for (int i = 0; i < model.n_links(); ++i) {
    const auto& L = model.links()[i];
    const Mat3 Iw = kin.rotation[i] * L.inertia * kin.rotation[i].transpose();
    lin += L.mass * vel.v_com[i];
    ang += Iw * vel.omega[i] + (kin.link_com[i] - kin.com).cross(L.mass * vel.v_com[i]);
  }
  c.h << ang, lin;
  c.com_velocity = lin / model.total_mass();
  return c;
}

MatX mass_matrix(const RobotModel& model, const Kinematics& kin, const JointState& state) {
  const int nv = model.n_velocity();
  MatX M = MatX::Zero(nv, nv);
  // Only the base block and the supporting joints of each link are nonzero,
  // so work on the compact column set.
  std::vector<int> cols;
  Eigen::Matrix<double, 6, Eigen::Dynamic> Jc;
  for (int i = 0; i < model.n_links(); ++i) {
    const auto& L = model.links()[i];
    const auto& sup = model.support(i);
    const int k = 6 + static_cast<int>(sup.size());
    cols.resize(k);
    Jc.setZero(6, k);
    const Vec3 c = kin.link_com[i];
    for (int q = 0; q < 6; ++q) cols[q] = q;
    Jc.block<3, 3>(0, 0).setIdentity();
    Jc.block<3, 3>(3, 0) = -skew(c - state.base_position);
    Jc.block<3, 3>(3, 3).setIdentity();
    for (std::size_t q = 0; q < sup.size(); ++q) {
      const auto& jt = model.joints()[sup[q]];
      const Vec3& a = kin.joint_axis[sup[q]];
      cols[6 + q] = 6 + jt.dof;
      Jc.block<3, 1>(0, 6 + q) = a;
      Jc.block<3, 1>(3, 6 + q) = a.cross(c - kin.position[jt.child]);
    }
    const Mat3 Iw = kin.rotation[i] * L.inertia * kin.rotation[i].transpose();
    const MatX Mi = Jc.topRows<3>().transpose() * Iw * Jc.topRows<3>() +
                    L.mass * Jc.bottomRows<3>().transpose() * Jc.bottomRows<3>();
    for (int r = 0; r < k; ++r) {
      for (int q = 0; q < k; ++q) M(cols[r], cols[q]) += Mi(r, q);
    }
  }
  return M;
}

DynamicsTerms dynamics_terms(const RobotModel& model, const Kinematics& kin,
                             const LinkVelocities& vel, const JointState& state) {
  const int nl = model.n_links();
  const int nv = model.n_velocity();
  DynamicsTerms d;
  d.mass_matrix = mass_matrix(model, kin, state);
  d.bias = VecX::Zero(nv);
  d.gravity = VecX::Zero(nv);

  // Velocity-product accelerations (nudot = 0) of every link frame.
  std::vector<Vec3> alpha(nl), acc(nl);
  const int b = model.base_link();
  alpha[b].setZero();
  acc[b].setZero();
  for (int j : model.topological_joints()) {
    const auto& jt = model.joints()[j];
    const int p = jt.parent, c = jt.child;
    const Vec3 r = kin.position[c] - kin.position[p];
    alpha[c] = alpha[p];
    if (jt.type == JointType::revolute) {
      alpha[c] += vel.omega[p].cross(kin.joint_axis[j] * state.sdot[jt.dof]);
    }
    acc[c] = acc[p] + alpha[p].cross(r) + vel.omega[p].cross(vel.omega[p].cross(r));
  }
  const Vec3 up = Vec3::UnitZ() * model.gravity();
  for (int i = 0; i < nl; ++i) {
    const auto& L = model.links()[i];
    const Vec3 rc = kin.link_com[i] - kin.position[i];
    const Vec3& w = vel.omega[i];
    const Vec3 acom = acc[i] + alpha[i].cross(rc) + w.cross(w.cross(rc));
    const Mat3 Iw = kin.rotation[i] * L.inertia * kin.rotation[i].transpose();
    const Vec3 torque = Iw * alpha[i] + w.cross(Iw * w);
    add_jacobian_transpose(model, kin, state, i, kin.link_com[i], torque, L.mass * acom, d.bias);
    add_jacobian_transpose(model, kin, state, i, kin.link_com[i], Vec3::Zero(), L.mass * up,
                           d.gravity);
  }
  d.bias += d.gravity;
  return d;
}

DynamicsTerms dynamics_terms(const RobotModel& model, const JointState& state) {
  const Kinematics kin = forward_kinematics(model, state);
  return dynamics_terms(model, kin, link_velocities(model, state, kin), state);
}

VecX momentum_rate_drift(const RobotModel& model, const Kinematics& kin,
                         const LinkVelocities& vel, const JointState& state) {
  const int nv = model.n_velocity();
  VecX out = VecX::Zero(nv);
  const Vec3 up = Vec3::UnitZ() * model.gravity();
  for (int i = 0; i < model.n_links(); ++i) {
    const auto& L = model.links()[i];
    const Vec3& c = kin.link_com[i];
    const Vec3& vc = vel.v_com[i];
    const Mat3 Iw = kin.rotation[i] * L.inertia * kin.rotation[i].transpose();
    const Vec3 ang = Iw * vel.omega[i];
    const Vec3 lin = L.mass * vc;
    // d/dt of J(c)^T applied to the link momentum (ang, lin).
    out.segment<3>(0) += (vc - state.base_linear_velocity).cross(lin);
    for (int j : model.support(i)) {
      const auto& jt = model.joints()[j];
      const Vec3& a = kin.joint_axis[j];
      const Vec3 adot = vel.omega[jt.child].cross(a);
      const Vec3 lin_col_dot = adot.cross(c - kin.position[jt.child]) +
                               a.cross(vc - vel.v_origin[jt.child]);
      out[6 + jt.dof] += adot.dot(ang) + lin_col_dot.dot(lin);
    }
    // Gravity.
    out.segment<3>(0) -= (c - state.base_position).cross(L.mass * up);
    out.segment<3>(3) -= L.mass * up;
    for (int j : model.support(i)) {
      const auto& jt = model.joints()[j];
      out[6 + jt.dof] -= kin.joint_axis[j].cross(c - kin.position[jt.child]).dot(L.mass * up);
    }
  }
  return out;
}

double kinetic_energy(const RobotModel& model, const JointState& state) {
  const Kinematics kin = forward_kinematics(model, state);
  const VecX nu = state.nu();
  return 0.5 * nu.dot(mass_matrix(model, kin, state) * nu);
}

double potential_energy(const RobotModel& model, const JointState& state) {
  const Kinematics kin = forward_kinematics(model, state);
  double e = 0.0;
  for (int i = 0; i < model.n_links(); ++i) {
    e += model.links()[i].mass * model.gravity() * kin.link_com[i].z();
  }
  return e;
}

}  // namespace aeroflight
