#include "aeroflight/control.hpp"

#include "aeroflight/errors.hpp"
#include "aeroflight/text.hpp"

#include <Eigen/LU>
#include <Eigen/QR>
#include <Eigen/SVD>

#include <algorithm>
#include <array>
#include <cmath>

namespace aeroflight {

namespace {

Vec6 gravity_wrench(const RobotModel& model) {
  Vec6 g = Vec6::Zero();
  g(5) = model.total_mass() * model.gravity();
  return g;
}

}  // namespace

JetFrames jet_frames(const RobotModel& model, const Kinematics& kin) {
  JetFrames f;
  for (const auto& jet : model.jets()) {
    const Mat3& r = kin.rotation[jet.link];
    f.position.push_back(kin.position[jet.link] + r * jet.position);
    f.direction.push_back(r * jet.direction);
  }
  return f;
}

MomentumDynamics momentum_dynamics(const RobotModel& model, const Kinematics& kin,
                                   const JointState& state, const VecX& thrust, const VecX& f_a) {
  if (thrust.size() != model.n_jets()) throw DimensionError("thrust vector length mismatch");
  if (f_a.size() != model.n_velocity()) throw DimensionError("aerodynamic wrench length mismatch");
  MomentumDynamics md;
  const auto jets = jet_frames(model, kin);
  md.a_t.resize(6, model.n_jets());
  for (int j = 0; j < model.n_jets(); ++j) {
    md.a_t.col(j) << (jets.position[j] - kin.com).cross(jets.direction[j]), jets.direction[j];
  }
  md.a_a.block<3, 3>(0, 3) = -skew(kin.com - state.base_position);
  md.hdot = md.a_t * thrust + md.a_a * f_a.head<6>() - gravity_wrench(model);
  return md;
}

MomentumDynamics momentum_dynamics(const RobotModel& model, const JointState& state,
                                   const VecX& thrust, const VecX& f_a) {
  validate_state(model, state);
  return momentum_dynamics(model, forward_kinematics(model, state), state, thrust, f_a);
}

AugmentedDynamics augmented_dynamics(const RobotModel& model, const Kinematics& kin,
                                     const JointState& state, const VecX& thrust,
                                     const VecX& f_a) {
  if (thrust.size() != model.n_jets()) throw DimensionError("thrust vector length mismatch");
  if (f_a.size() != model.n_velocity()) throw DimensionError("aerodynamic wrench length mismatch");
  const int nv = model.n_velocity();
  AugmentedDynamics aug;
  aug.lambda = MatX::Zero(6, nv);
  aug.a_t.resize(6, model.n_jets());
  const MatX jg = com_jacobian(model, kin, state);
  const auto jets = jet_frames(model, kin);
  for (int j = 0; j < model.n_jets(); ++j) {
    const Vec3& p = jets.position[j];
    const Vec3& t = jets.direction[j];
    const Vec3 r = p - kin.com;
    aug.a_t.col(j) << r.cross(t), t;
    const MatX jp = point_jacobian(model, kin, state, model.jets()[j].link, p);
    const Mat3 st = skew(t);
    // d/dt (r x t) = rdot x t + r x (omega x t), d/dt t = omega x t.
    aug.lambda.topRows<3>() +=
        thrust(j) * (-st * (jp.bottomRows<3>() - jg) - skew(r) * st * jp.topRows<3>());
    aug.lambda.bottomRows<3>() += thrust(j) * (-st * jp.topRows<3>());
  }
  // Aerodynamic wrench frozen: only the arm between CoM and base origin moves.
  const Vec3 force = f_a.segment<3>(3);
  MatX arm_rate = jg;
  arm_rate.block<3, 3>(0, 3) -= Mat3::Identity();
  aug.lambda.topRows<3>() += skew(force) * arm_rate;
  return aug;
}

AugmentedDynamics augmented_dynamics(const RobotModel& model, const JointState& state,
                                     const VecX& thrust, const VecX& f_a) {
  validate_state(model, state);
  return augmented_dynamics(model, forward_kinematics(model, state), state, thrust, f_a);
}

VecX jet_generalized_force(const RobotModel& model, const Kinematics& kin, const JointState& state,
                           const VecX& thrust) {
  if (thrust.size() != model.n_jets()) throw DimensionError("thrust vector length mismatch");
  const auto jets = jet_frames(model, kin);
  VecX f = VecX::Zero(model.n_velocity());
  for (int j = 0; j < model.n_jets(); ++j) {
    f += point_force_to_generalized(model, kin, state, model.jets()[j].link, jets.position[j],
                                    thrust(j) * jets.direction[j]);
  }
  return f;
}

VecX hover_thrust(const RobotModel& model, const JointState& state) {
  const auto kin = forward_kinematics(model, state);
  const auto md = momentum_dynamics(model, kin, state, VecX::Zero(model.n_jets()),
                                    VecX::Zero(model.n_velocity()));
  // Only roll/pitch torque and vertical force: near-vertical jets cannot hold the
  // horizontal force or yaw rows of a slightly tilted posture.
  const std::array<int, 3> rows{0, 1, 5};
  const Vec6 g = gravity_wrench(model);
  Eigen::Matrix<double, 3, Eigen::Dynamic> a(3, model.n_jets());
  Vec3 b;
  for (int r = 0; r < 3; ++r) {
    a.row(r) = md.a_t.row(rows[r]);
    b(r) = g(rows[r]);
  }
  return a.completeOrthogonalDecomposition().solve(b);
}

// ---------------------------------------------------------------------------

void ComTrajectory::add_move(double t0, double t1, const Vec3& target) {
  if (!(t1 > t0)) throw ValidationError("trajectory move must have positive duration");
  if (!segments_.empty() && t0 < segments_.back().t1) {
    throw ValidationError("trajectory moves must not overlap");
  }
  const Vec3 p0 = segments_.empty() ? start_ : segments_.back().p1;
  segments_.push_back({t0, t1, p0, target});
}

ComTrajectory::Sample ComTrajectory::at(double t) const {
  Sample s{start_, Vec3::Zero(), Vec3::Zero(), Vec3::Zero()};
  for (const auto& seg : segments_) {
    if (t < seg.t0) return s;
    if (t >= seg.t1) {
      s.pos = seg.p1;
      continue;
    }
    const double dur = seg.t1 - seg.t0;
    const double u = (t - seg.t0) / dur;
    const double u2 = u * u, u3 = u2 * u;
    const Vec3 d = seg.p1 - seg.p0;
    s.pos = seg.p0 + d * (10 * u3 - 15 * u3 * u + 6 * u3 * u2);
    s.vel = d * (30 * u2 - 60 * u3 + 30 * u2 * u2) / dur;
    s.acc = d * (60 * u - 180 * u2 + 120 * u3) / (dur * dur);
    s.jerk = d * (60 - 360 * u + 360 * u2) / (dur * dur * dur);
    return s;
  }
  return s;
}

ComTrajectory ComTrajectory::rebased(const Vec3& start) const {
  ComTrajectory out(start);
  const Vec3 offset = start - start_;
  for (const auto& seg : segments_) out.add_move(seg.t0, seg.t1, seg.p1 + offset);
  return out;
}

// ---------------------------------------------------------------------------

void ControlGains::validate() const {
  if ((kp.array() <= 0.0).any() || (kd.array() <= 0.0).any() || (ki.array() <= 0.0).any()) {
    throw ValidationError("momentum gains must be positive");
  }
  if (!(kp_joint > 0.0) || !(kd_joint > 0.0)) throw ValidationError("joint gains must be positive");
  if (!(w1 > 0.0) || !(w2 > 0.0)) throw ValidationError("QP weights must be positive");
  if (!(damping >= 0.0)) throw ValidationError("damping must be >= 0");
  if (!(k_postural >= 0.0)) throw ValidationError("postural gain must be >= 0");
  if (!(bound_rate > 0.0) || !(bound_sharpness > 0.0)) {
    throw ValidationError("bound parameters must be positive");
  }
}

ControlGains parse_gains(std::string_view contents) {
  ControlGains g;
  const auto kv = text::parse_kv_file(contents);
  auto triple = [](const std::string& v) -> Vec3 {
    const auto parts = text::split(v, ',');
    if (parts.size() == 1) return Vec3::Constant(text::parse_double(parts[0]));
    if (parts.size() == 3) return text::parse_vec3(v);
    throw ParseError("expected 1 or 3 values, got '" + v + "'");
  };
  for (const auto& [k, v] : kv) {
    if (k == "kp_lin") g.kp.tail<3>() = triple(v);
    else if (k == "kp_ang") g.kp.head<3>() = triple(v);
    else if (k == "kd_lin") g.kd.tail<3>() = triple(v);
    else if (k == "kd_ang") g.kd.head<3>() = triple(v);
    else if (k == "ki_lin") g.ki.tail<3>() = triple(v);
    else if (k == "ki_ang") g.ki.head<3>() = triple(v);
    else if (k == "kp_joint") g.kp_joint = text::parse_double(v);
    else if (k == "kd_joint") g.kd_joint = text::parse_double(v);
    else if (k == "w1") g.w1 = text::parse_double(v);
    else if (k == "w2") g.w2 = text::parse_double(v);
    else if (k == "damping") g.damping = text::parse_double(v);
    else if (k == "k_postural") g.k_postural = text::parse_double(v);
    else if (k == "bound_rate") g.bound_rate = text::parse_double(v);
    else if (k == "bound_sharpness") g.bound_sharpness = text::parse_double(v);
    else if (k == "aero_feedback") g.aero_feedback = parse_aero_kind(v);
    else if (k.rfind("t_min_", 0) == 0) g.thrust_min_override.emplace_back(k.substr(6), text::parse_double(v));
    else if (k.rfind("t_max_", 0) == 0) g.thrust_max_override.emplace_back(k.substr(6), text::parse_double(v));
    else throw ParseError("unknown gains key '" + k + "'");
  }
  g.validate();
  return g;
}

ControlGains load_gains_file(const std::string& path) { return parse_gains(text::read_file(path)); }

Bounds tanh_bounds(const VecX& x, const VecX& lo, const VecX& hi, const VecX& rate,
                   const VecX& kappa) {
  const auto n = x.size();
  if (lo.size() != n || hi.size() != n || rate.size() != n || kappa.size() != n) {
    throw DimensionError("tanh_bounds: length mismatch");
  }
  Bounds b{VecX(n), VecX(n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    const double xc = std::clamp(x(i), lo(i), hi(i));
    b.upper(i) = rate(i) * std::tanh(kappa(i) * (hi(i) - xc));
    b.lower(i) = -rate(i) * std::tanh(kappa(i) * (xc - lo(i)));
  }
  return b;
}

Bounds input_bounds(const RobotModel& model, const VecX& t_min, const VecX& t_max,
                    const VecX& thrust, const VecX& s, const ControlGains& gains) {
  const int m = model.n_jets();
  const int n = model.n_joints();
  VecX x(m + n), lo(m + n), hi(m + n), rate(m + n), kappa(m + n);
  for (int j = 0; j < m; ++j) {
    const double range = t_max(j) - t_min(j);
    x(j) = thrust(j);
    lo(j) = t_min(j);
    hi(j) = t_max(j);
    rate(j) = gains.bound_rate * range;
    kappa(j) = gains.bound_sharpness / range;
  }
  for (int i = 0; i < n; ++i) {
    const double range = model.upper_limit(i) - model.lower_limit(i);
    x(m + i) = s(i);
    lo(m + i) = model.lower_limit(i);
    hi(m + i) = model.upper_limit(i);
    rate(m + i) = std::min(gains.bound_rate * range, model.joints()[model.dof_joints()[i]].vmax);
    kappa(m + i) = gains.bound_sharpness / range;
  }
  return tanh_bounds(x, lo, hi, rate, kappa);
}

VecX qp_solve(const VecX& u_star, const VecX& sdot_postural, double w1, double w2,
              const Bounds& box, int n_thrust) {
  const auto n = u_star.size();
  if (box.lower.size() != n || box.upper.size() != n || n_thrust < 0 || n_thrust > n ||
      sdot_postural.size() != n - n_thrust) {
    throw DimensionError("qp: length mismatch");
  }
  if (!(w1 > 0.0) || !(w2 >= 0.0)) throw ValidationError("qp: weights must satisfy w1 > 0, w2 >= 0");
  VecX u(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(box.lower(i) <= box.upper(i))) throw ValidationError("qp: inconsistent bounds");
    // Diagonal objective: the clamped per-channel minimizer is the box minimizer.
    const double target = i < n_thrust ? u_star(i)
                                       : (w1 * u_star(i) + w2 * sdot_postural(i - n_thrust)) /
                                             (w1 + w2);
    u(i) = std::clamp(target, box.lower(i), box.upper(i));
  }
  return u;
}

double qp_objective(const VecX& u, const VecX& u_star, const VecX& sdot_postural, double w1,
                    double w2, int n_thrust) {
  const auto ns = u.size() - n_thrust;
  return w1 * (u - u_star).squaredNorm() + w2 * (u.tail(ns) - sdot_postural).squaredNorm();
}

// ---------------------------------------------------------------------------

Vec6 commanded_hddot(const MomentumTarget& t, const ControlGains& g) {
  return t.hddot_desired - g.kd.cwiseProduct(t.hdot_tilde) - g.kp.cwiseProduct(t.h_tilde) -
         g.ki.cwiseProduct(t.integral);
}

LinearizedInput linearize_inputs(const RobotModel& model, const Kinematics& kin,
                                 const JointState& state, const AugmentedDynamics& aug,
                                 const VecX& t_min, const VecX& t_max) {
  const int m = model.n_jets();
  const int n = model.n_joints();
  const MatX ag = centroidal_momentum_matrix(model, kin, state);
  const Vec6 h = ag * state.nu();
  const Eigen::Matrix<double, 6, 6> ab = ag.leftCols<6>();
  const MatX k = ab.transpose().partialPivLu().solve(aug.lambda.leftCols<6>().transpose()).transpose();
  LinearizedInput lin;
  lin.b.resize(6, m + n);
  lin.b.leftCols(m) = aug.a_t;
  lin.b.rightCols(n) = aug.lambda.rightCols(n) - k * ag.rightCols(n);
  lin.c = k * h;
  lin.scale = VecX::Ones(m + n);
  lin.scale.head(m) = t_max - t_min;
  return lin;
}

FeedbackResult feedback_linearize(const LinearizedInput& lin, const Vec6& hddot_star,
                                  const VecX& sdot_postural, double damping) {
  const auto nu = lin.b.cols();
  const auto ns = sdot_postural.size();
  if (lin.scale.size() != nu || ns > nu) throw DimensionError("feedback: length mismatch");
  const MatX bw = lin.b * lin.scale.asDiagonal();
  Eigen::JacobiSVD<MatX> svd(bw);
  const VecX sv = svd.singularValues();
  FeedbackResult r;
  const double smax = sv.size() ? sv(0) : 0.0;
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv(i) > 1e-9 * smax && smax > 0.0) ++r.rank;
  }
  r.sigma_min = sv.size() ? sv(sv.size() - 1) : 0.0;
  if (r.rank < 3) {
    throw ControllerFault("momentum input matrix rank collapsed to " + std::to_string(r.rank));
  }
  const Eigen::Matrix<double, 6, 6> gram =
      bw * bw.transpose() + damping * Eigen::Matrix<double, 6, 6>::Identity();
  const MatX pinv = bw.transpose() * gram.ldlt().solve(Eigen::Matrix<double, 6, 6>::Identity());
  VecX post = VecX::Zero(nu);
  post.tail(ns) = sdot_postural.cwiseQuotient(lin.scale.tail(ns));
  const VecX uw = pinv * (hddot_star - lin.c) + post - pinv * (bw * post);
  r.u_star = lin.scale.cwiseProduct(uw);
  return r;
}

// ---------------------------------------------------------------------------

JointSpaceDynamics joint_space_dynamics(const RobotModel& model, const DynamicsTerms& dyn,
                                        const VecX& f_ext) {
  const int n = model.n_joints();
  if (f_ext.size() != model.n_velocity()) throw DimensionError("external force length mismatch");
  const MatX& mm = dyn.mass_matrix;
  const VecX beta = dyn.bias - f_ext;
  const auto lu = mm.topLeftCorner<6, 6>().eval().ldlt();
  const MatX mbb_inv_mbs = lu.solve(mm.topRightCorner(6, n));
  JointSpaceDynamics jd;
  jd.m_bar = mm.bottomRightCorner(n, n) - mm.bottomLeftCorner(n, 6) * mbb_inv_mbs;
  jd.b_bar = beta.tail(n) - mm.bottomLeftCorner(n, 6) * lu.solve(beta.head<6>());
  return jd;
}

VecX inner_loop_torque(const JointSpaceDynamics& jd, const JointState& state,
                       const VecX& sdot_star, const VecX& s_star, double kp, double kd) {
  const VecX sddot = -kd * (state.sdot - sdot_star) - kp * (state.s - s_star);
  return jd.m_bar * sddot + jd.b_bar;
}

// ---------------------------------------------------------------------------

FlightController::FlightController(const RobotModel& model, ControlGains gains, AeroModel aero,
                                   ComTrajectory reference)
    : model_(model), gains_(std::move(gains)), aero_(std::move(aero)), ref_(std::move(reference)) {
  gains_.validate();
  aero_.check(model_);
  t_min_.resize(model_.n_jets());
  t_max_.resize(model_.n_jets());
  for (int j = 0; j < model_.n_jets(); ++j) {
    t_min_(j) = model_.jets()[j].thrust_min;
    t_max_(j) = model_.jets()[j].thrust_max;
  }
  auto jet_id = [&](const std::string& name) {
    for (int j = 0; j < model_.n_jets(); ++j) {
      if (model_.jets()[j].name == name) return j;
    }
    throw ValidationError("gains reference unknown jet '" + name + "'");
  };
  for (const auto& [name, v] : gains_.thrust_min_override) t_min_(jet_id(name)) = v;
  for (const auto& [name, v] : gains_.thrust_max_override) t_max_(jet_id(name)) = v;
  for (int j = 0; j < model_.n_jets(); ++j) {
    if (!(t_min_(j) >= 0.0 && t_min_(j) < t_max_(j))) {
      throw ValidationError("thrust limits of jet '" + model_.jets()[j].name + "' are inconsistent");
    }
  }
}

void FlightController::reset(const JointState& state) {
  validate_state(model_, state);
  s_des_ = state.s;
  s_star_ = state.s;
  angular_integral_.setZero();
  initialized_ = true;
}

ControlOutput FlightController::step(double t, const JointState& state, const VecX& thrust,
                                     const Vec3& v_w, double dt) {
  if (!initialized_) reset(state);
  validate_state(model_, state);
  const int m = model_.n_jets();
  const int n = model_.n_joints();
  const double mass = model_.total_mass();

  const auto kin = forward_kinematics(model_, state);
  const auto vel = link_velocities(model_, state, kin);
  const MatX ag = centroidal_momentum_matrix(model_, kin, state);
  const Vec6 h = ag * state.nu();
  const Vec3 v_com = h.tail<3>() / mass;

  ControlOutput out;
  auto& diag = out.diag;
  diag.link_forces = aero_.link_forces(model_, state, kin, vel, v_com, v_w);
  diag.f_a = total_wrench(model_, kin, state, diag.link_forces);
  const auto md = momentum_dynamics(model_, kin, state, thrust, diag.f_a);

  const auto ref = ref_.at(t);
  auto& tgt = diag.target;
  tgt.h_tilde = h;
  tgt.h_tilde.tail<3>() -= mass * ref.vel;
  tgt.hdot_tilde = md.hdot;
  tgt.hdot_tilde.tail<3>() -= mass * ref.acc;
  tgt.integral << angular_integral_, mass * (kin.com - ref.pos);
  tgt.hddot_desired.setZero();
  tgt.hddot_desired.tail<3>() = mass * ref.jerk;
  diag.h = h;
  diag.hdot_model = md.hdot;
  diag.hddot_star = commanded_hddot(tgt, gains_);

  const auto aug = augmented_dynamics(model_, kin, state, thrust, diag.f_a);
  const auto lin = linearize_inputs(model_, kin, state, aug, t_min_, t_max_);
  const VecX sdot_post = -gains_.k_postural * (state.s - s_des_);
  const auto fb = feedback_linearize(lin, diag.hddot_star, sdot_post, gains_.damping);
  diag.u_star = fb.u_star;
  diag.sigma_min = fb.sigma_min;

  // Joint bounds act on the integrated reference s*, which the inner loop tracks.
  diag.box = input_bounds(model_, t_min_, t_max_, thrust, s_star_, gains_);
  diag.u = qp_solve(fb.u_star, sdot_post, gains_.w1, gains_.w2, diag.box, m);
  out.thrust_rate = diag.u.head(m);
  out.sdot_ref = diag.u.tail(n);

  for (int i = 0; i < n; ++i) {
    s_star_(i) = std::clamp(s_star_(i) + out.sdot_ref(i) * dt, model_.lower_limit(i),
                            model_.upper_limit(i));
  }
  angular_integral_ += tgt.h_tilde.head<3>() * dt;

  const auto dyn = dynamics_terms(model_, kin, vel, state);
  const VecX f_ext = jet_generalized_force(model_, kin, state, thrust) + diag.f_a;
  const auto jd = joint_space_dynamics(model_, dyn, f_ext);
  out.tau = inner_loop_torque(jd, state, out.sdot_ref, s_star_, gains_.kp_joint, gains_.kd_joint);
  return out;
}

}  // namespace aeroflight
