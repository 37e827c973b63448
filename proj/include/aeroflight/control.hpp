#pragma once

// Momentum-based flight controller with aerodynamic feedback.
//
// Outer loop: the centroidal momentum h = (L_G, m v_G) obeys
//   hdot = A_T T + A_a f_a - m g e,           e = (0,0,0, 0,0,1)
//   hddot = (Lambda_a + Lambda_T) nu + A_T Tdot
// with the aerodynamic generalized force f_a held constant over a step.
// The inputs u = (Tdot, sdot) are chosen by feedback linearization and then
// projected on state-dependent tanh boxes (a separable QP). The inner loop
// turns the joint velocity references into torques.

#include "aeroflight/aero_model.hpp"
#include "aeroflight/model.hpp"

#include <string>
#include <vector>

namespace aeroflight {

// ---------------------------------------------------------------------------
// Momentum dynamics

struct MomentumDynamics {
  Vec6 hdot = Vec6::Zero();
  MatX a_t;  // 6 x n_jets
  Eigen::Matrix<double, 6, 6> a_a = Eigen::Matrix<double, 6, 6>::Identity();  // acts on base rows of f_a
};

/// World position and direction of every jet.
struct JetFrames {
  std::vector<Vec3> position;
  std::vector<Vec3> direction;
};
JetFrames jet_frames(const RobotModel& model, const Kinematics& kin);

MomentumDynamics momentum_dynamics(const RobotModel& model, const JointState& state,
                                   const VecX& thrust, const VecX& f_a);
MomentumDynamics momentum_dynamics(const RobotModel& model, const Kinematics& kin,
                                   const JointState& state, const VecX& thrust, const VecX& f_a);

struct AugmentedDynamics {
  MatX lambda;  // 6 x (6+n): Lambda_a + Lambda_T
  MatX a_t;     // 6 x n_jets
};

AugmentedDynamics augmented_dynamics(const RobotModel& model, const JointState& state,
                                     const VecX& thrust, const VecX& f_a);
AugmentedDynamics augmented_dynamics(const RobotModel& model, const Kinematics& kin,
                                     const JointState& state, const VecX& thrust,
                                     const VecX& f_a);

/// Generalized force of the jets, sum_j T_j J_j^T t_j.
VecX jet_generalized_force(const RobotModel& model, const Kinematics& kin, const JointState& state,
                           const VecX& thrust);

/// Minimum-norm thrusts balancing gravity in vertical force and roll/pitch torque.
VecX hover_thrust(const RobotModel& model, const JointState& state);

// ---------------------------------------------------------------------------
// References

/// Minimum-jerk (quintic) moves between waypoints; C2 at every join.
class ComTrajectory {
 public:
  struct Segment {
    double t0, t1;
    Vec3 p0, p1;
  };
  struct Sample {
    Vec3 pos, vel, acc, jerk;
  };

  ComTrajectory() = default;
  explicit ComTrajectory(Vec3 start) : start_(start) {}
  /// Appends a move to `target` (absolute) over [t0, t1]; t0 must not precede the previous end.
  void add_move(double t0, double t1, const Vec3& target);
  Sample at(double t) const;
  const std::vector<Segment>& segments() const { return segments_; }
  Vec3 start() const { return start_; }
  /// Same trajectory with every waypoint offset so that it starts at `start`.
  ComTrajectory rebased(const Vec3& start) const;

 private:
  Vec3 start_ = Vec3::Zero();
  std::vector<Segment> segments_;
};

// ---------------------------------------------------------------------------
// Gains and bounds

struct ControlGains {
  Vec6 kp = Vec6::Constant(1.0);
  Vec6 kd = Vec6::Constant(1.0);
  Vec6 ki = Vec6::Constant(1.0);
  double kp_joint = 100.0;
  double kd_joint = 20.0;
  double w1 = 1.0;
  double w2 = 0.01;
  double damping = 1e-4;
  double k_postural = 1.0;
  double bound_rate = 0.2;     // r = bound_rate * range per second
  double bound_sharpness = 10.0;  // kappa = bound_sharpness / range
  AeroKind aero_feedback = AeroKind::none;
  std::vector<std::pair<std::string, double>> thrust_min_override, thrust_max_override;

  void validate() const;
};

/// key=value gains file (kp_lin=, kp_ang=, kd_lin=, kd_ang=, ki_lin=, ki_ang=,
/// kp_joint=, kd_joint=, w1=, w2=, damping=, k_postural=, bound_rate=,
/// bound_sharpness=, aero_feedback=, t_min_<jet>=, t_max_<jet>=).
ControlGains parse_gains(std::string_view text);
ControlGains load_gains_file(const std::string& path);

struct Bounds {
  VecX lower, upper;
};

/// Per channel: upper = r tanh(kappa (hi - x)), lower = -r tanh(kappa (x - lo)),
/// with x projected onto [lo, hi] first.
Bounds tanh_bounds(const VecX& x, const VecX& lo, const VecX& hi, const VecX& rate,
                   const VecX& kappa);

/// Box on u = (Tdot, sdot) for the current thrusts and joint positions.
Bounds input_bounds(const RobotModel& model, const VecX& t_min, const VecX& t_max,
                    const VecX& thrust, const VecX& s, const ControlGains& gains);

/// argmin w1 |u - u*|^2 + w2 |sdot - sdot_post|^2 on the box. The first
/// n_thrust channels are thrust rates and carry only the w1 term.
VecX qp_solve(const VecX& u_star, const VecX& sdot_postural, double w1, double w2,
              const Bounds& box, int n_thrust);

double qp_objective(const VecX& u, const VecX& u_star, const VecX& sdot_postural, double w1,
                    double w2, int n_thrust);

// ---------------------------------------------------------------------------
// Feedback linearization

struct MomentumTarget {
  Vec6 h_tilde = Vec6::Zero();
  Vec6 hdot_tilde = Vec6::Zero();
  Vec6 integral = Vec6::Zero();
  Vec6 hddot_desired = Vec6::Zero();
};

/// hddot* = hddot_d - K_D hdot_tilde - K_P h_tilde - K_I I
Vec6 commanded_hddot(const MomentumTarget& target, const ControlGains& gains);

struct LinearizedInput {
  MatX b;              // 6 x (n_jets + n): input matrix for u = (Tdot, sdot)
  Vec6 c = Vec6::Zero();  // drift, hddot = b u + c
  VecX scale;          // column scaling used by the pseudoinverse
};

/// Input matrix consistent with momentum conservation: the base velocity is
/// recovered from h and sdot, nu_B = A_B^-1 (h - A_s sdot).
LinearizedInput linearize_inputs(const RobotModel& model, const Kinematics& kin,
                                 const JointState& state, const AugmentedDynamics& aug,
                                 const VecX& t_min, const VecX& t_max);

struct FeedbackResult {
  VecX u_star;
  double sigma_min = 0.0;
  int rank = 0;
};

/// u* = W (B W)^+_mu (hddot* - c) + W N W^-1 (0, sdot_post), where N projects on the
/// null space of B W. Throws ControllerFault when rank(B) < 3.
FeedbackResult feedback_linearize(const LinearizedInput& lin, const Vec6& hddot_star,
                                  const VecX& sdot_postural, double damping);

// ---------------------------------------------------------------------------
// Inner loop

struct JointSpaceDynamics {
  MatX m_bar;  // n x n reduced (free-floating) joint inertia
  VecX b_bar;  // n reduced bias including external forces
};

/// Reduced joint dynamics tau = M_bar sddot + b_bar of the floating system under
/// the generalized external force f_ext (jets and aerodynamics).
JointSpaceDynamics joint_space_dynamics(const RobotModel& model, const DynamicsTerms& dyn,
                                        const VecX& f_ext);

/// tau = M_bar sddot** + b_bar with sddot** = -K_Ds (sdot - sdot*) - K_Ps (s - s*).
VecX inner_loop_torque(const JointSpaceDynamics& jd, const JointState& state,
                       const VecX& sdot_star, const VecX& s_star, double kp, double kd);

// ---------------------------------------------------------------------------
// Full controller

struct ControlDiagnostics {
  MomentumTarget target;
  Vec6 h = Vec6::Zero();
  Vec6 hdot_model = Vec6::Zero();
  Vec6 hddot_star = Vec6::Zero();
  VecX u_star;
  VecX u;
  Bounds box;
  VecX f_a;
  std::vector<Vec3> link_forces;
  double sigma_min = 0.0;
};

struct ControlOutput {
  VecX tau;
  VecX thrust_rate;
  VecX sdot_ref;
  ControlDiagnostics diag;
};

class FlightController {
 public:
  FlightController(const RobotModel& model, ControlGains gains, AeroModel aero,
                   ComTrajectory reference);

  /// Resets the integral states; the postural target becomes `state.s`.
  void reset(const JointState& state);

  /// One control update at time t with sampling period dt.
  ControlOutput step(double t, const JointState& state, const VecX& thrust, const Vec3& v_w,
                     double dt);

  const VecX& thrust_min() const { return t_min_; }
  const VecX& thrust_max() const { return t_max_; }
  const VecX& s_star() const { return s_star_; }
  const VecX& s_postural() const { return s_des_; }
  const ComTrajectory& reference() const { return ref_; }
  const ControlGains& gains() const { return gains_; }

 private:
  const RobotModel& model_;
  ControlGains gains_;
  AeroModel aero_;
  ComTrajectory ref_;
  VecX t_min_, t_max_;
  VecX s_star_, s_des_;
  Vec3 angular_integral_ = Vec3::Zero();
  bool initialized_ = false;
};

}  // namespace aeroflight
