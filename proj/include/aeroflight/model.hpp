#pragma once

// Floating-base multibody model.
//
// Conventions used everywhere in the library:
//  * world frame: x forward, y left, z up; gravity along -z.
//  * generalized velocity nu = (omega, v_B, sdot) where omega is the base
//    angular velocity and v_B the base-origin linear velocity, both expressed
//    in the world frame (the "mixed" base frame with inertial orientation).
//  * every spatial 6-vector is ordered (angular, linear).

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <string>
#include <string_view>
#include <vector>

namespace aeroflight {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;
using Quat = Eigen::Quaterniond;

inline constexpr double kDefaultGravity = 9.81;

inline Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

struct LinkSpec {
  std::string name;
  double mass = 0.0;
  Mat3 inertia = Mat3::Zero();  // about the link CoM, link frame
  Vec3 com = Vec3::Zero();      // link frame
  Vec3 axis = Vec3::UnitZ();    // aerodynamic symmetry axis, link frame
  bool aero = false;
};

enum class JointType { revolute, fixed };

struct JointSpec {
  std::string name;
  JointType type = JointType::revolute;
  int parent = -1;
  int child = -1;
  Vec3 axis = Vec3::UnitZ();  // child frame
  Vec3 origin = Vec3::Zero(); // child frame origin in the parent frame
  double lower = -3.14159;
  double upper = 3.14159;
  double vmax = 10.0;
  int dof = -1;               // index into s, -1 for fixed joints
};

struct JetSpec {
  std::string name;
  int link = -1;
  Vec3 position = Vec3::Zero();    // mount point, link frame
  Vec3 direction = Vec3::UnitZ();  // thrust direction, link frame
  double thrust_min = 0.0;
  double thrust_max = 0.0;
};

/// Left/right pairing used for dataset mirroring. Only the base y axis is
/// supported as lateral axis, i.e. the mirror plane is the base x-z plane.
struct Symmetry {
  bool declared = false;
  std::vector<int> joint_mirror;   // dof -> mirrored dof
  std::vector<double> joint_sign;  // mirrored value = sign * value
  std::vector<int> link_mirror;    // link -> mirrored link
};

class RobotModel {
 public:
  struct MirrorPair {
    std::string a, b;
  };

  /// Validates the description and computes the derived tree data.
  /// Throws ValidationError naming the violated invariant.
  static RobotModel build(std::vector<LinkSpec> links, std::vector<JointSpec> joints,
                          std::vector<JetSpec> jets, double gravity = kDefaultGravity,
                          bool symmetric = false, const std::vector<MirrorPair>& joint_pairs = {},
                          const std::vector<MirrorPair>& link_pairs = {});

  const std::vector<LinkSpec>& links() const { return links_; }
  const std::vector<JointSpec>& joints() const { return joints_; }
  const std::vector<JetSpec>& jets() const { return jets_; }
  const Symmetry& symmetry() const { return symmetry_; }

  int n_links() const { return static_cast<int>(links_.size()); }
  int n_joints() const { return n_dof_; }
  int n_velocity() const { return 6 + n_dof_; }
  int n_jets() const { return static_cast<int>(jets_.size()); }
  int n_aero_links() const { return static_cast<int>(aero_links_.size()); }
  double total_mass() const { return total_mass_; }
  double gravity() const { return gravity_; }
  int base_link() const { return base_; }

  /// Links with aero=1, in declaration order.
  const std::vector<int>& aero_links() const { return aero_links_; }
  /// Joint index whose child is the link, -1 for the base.
  int parent_joint(int link) const { return parent_joint_[link]; }
  /// Joint indices sorted so parents come before children.
  const std::vector<int>& topological_joints() const { return topo_joints_; }
  /// Revolute joints (as joint indices) between the base and the link.
  const std::vector<int>& support(int link) const { return support_[link]; }
  /// Joint index of each degree of freedom.
  const std::vector<int>& dof_joints() const { return dof_joints_; }

  int link_index(std::string_view name) const;   // throws ValidationError when unknown
  int joint_index(std::string_view name) const;  // ditto
  double lower_limit(int dof) const { return joints_[dof_joints_[dof]].lower; }
  double upper_limit(int dof) const { return joints_[dof_joints_[dof]].upper; }

 private:
  std::vector<LinkSpec> links_;
  std::vector<JointSpec> joints_;
  std::vector<JetSpec> jets_;
  Symmetry symmetry_;
  double gravity_ = kDefaultGravity;
  double total_mass_ = 0.0;
  int base_ = 0;
  int n_dof_ = 0;
  std::vector<int> aero_links_;
  std::vector<int> parent_joint_;
  std::vector<int> topo_joints_;
  std::vector<std::vector<int>> support_;
  std::vector<int> dof_joints_;
};

/// Parses the line-based model format (see README). Throws ParseError or ValidationError.
RobotModel load_model(std::string_view text);
RobotModel load_model_file(const std::string& path);

struct JointState {
  Vec3 base_position = Vec3::Zero();
  Quat base_orientation = Quat::Identity();
  Vec3 base_angular_velocity = Vec3::Zero();  // world frame
  Vec3 base_linear_velocity = Vec3::Zero();   // world frame, base origin
  VecX s;
  VecX sdot;

  static JointState zero(const RobotModel& model);
  VecX nu() const;
  void set_nu(const VecX& nu);
};

/// Throws ValidationError for non-unit orientation, wrong lengths or non-finite values.
void validate_state(const RobotModel& model, const JointState& state);

/// Advances the configuration along nu for a time dt (base rotation via the
/// exponential map, quaternion renormalized). Velocities are left untouched.
void integrate_configuration(JointState& state, const VecX& nu, double dt);

struct Kinematics {
  std::vector<Mat3> rotation;   // link -> world
  std::vector<Vec3> position;   // link frame origin, world
  std::vector<Vec3> link_com;   // world
  std::vector<Vec3> joint_axis; // per joint, world (meaningful for revolute joints)
  Vec3 com = Vec3::Zero();
};

Kinematics forward_kinematics(const RobotModel& model, const JointState& state);

/// Link twists for the given state: angular velocity, origin and CoM linear velocity (world).
struct LinkVelocities {
  std::vector<Vec3> omega;
  std::vector<Vec3> v_origin;
  std::vector<Vec3> v_com;
};
LinkVelocities link_velocities(const RobotModel& model, const JointState& state,
                               const Kinematics& kin);

/// 6 x (6+n) map from nu to (omega_link, velocity of the link frame origin).
MatX link_jacobian(const RobotModel& model, const JointState& state, int link);
MatX link_jacobian(const RobotModel& model, const Kinematics& kin, const JointState& state,
                   int link);
MatX link_jacobian(const RobotModel& model, const JointState& state, std::string_view link);

/// 6 x (6+n) Jacobian of a world point rigidly attached to a link.
MatX point_jacobian(const RobotModel& model, const Kinematics& kin, const JointState& state,
                    int link, const Vec3& point);

/// 3 x (6+n) Jacobian of the robot CoM.
MatX com_jacobian(const RobotModel& model, const Kinematics& kin, const JointState& state);

/// Generalized force of a pure force applied at a world point on a link (J_v^T f).
VecX point_force_to_generalized(const RobotModel& model, const Kinematics& kin,
                                const JointState& state, int link, const Vec3& point,
                                const Vec3& force);

struct CentroidalState {
  Vec6 h = Vec6::Zero();  // (angular about CoM, linear), world orientation
  Vec3 com = Vec3::Zero();
  Vec3 com_velocity = Vec3::Zero();
};

CentroidalState centroidal_momentum(const RobotModel& model, const JointState& state);
/// Centroidal momentum matrix: h = A_G(q) nu.
MatX centroidal_momentum_matrix(const RobotModel& model, const Kinematics& kin,
                                const JointState& state);

/// Equations of motion M(q) nudot + bias(q, nu) = external generalized forces.
/// bias holds Coriolis/centrifugal and gravity terms (left-hand-side convention).
struct DynamicsTerms {
  MatX mass_matrix;
  VecX bias;
  VecX gravity;  // gravity part of bias
};
DynamicsTerms dynamics_terms(const RobotModel& model, const JointState& state);
DynamicsTerms dynamics_terms(const RobotModel& model, const Kinematics& kin,
                             const LinkVelocities& vel, const JointState& state);

MatX mass_matrix(const RobotModel& model, const Kinematics& kin, const JointState& state);

/// Rate of the generalized momentum p = M nu, excluding applied forces:
/// pdot = f_applied + momentum_rate_drift(...). Contains gravity and the
/// J̇^T (link momentum) terms; used by the momentum-form integrator.
VecX momentum_rate_drift(const RobotModel& model, const Kinematics& kin,
                         const LinkVelocities& vel, const JointState& state);

double kinetic_energy(const RobotModel& model, const JointState& state);
double potential_energy(const RobotModel& model, const JointState& state);

}  // namespace aeroflight
