#pragma once

// Axisymmetric per-link aerodynamic model.
//
// Each aerodynamic link is treated as a body of revolution about its axis k.
// The force areas depend only on the angle of attack alpha between the
// relative air velocity v_a and k:
//   C_D A(alpha) = w0 + w1 cos a + w2 sin^2 a + w3 sin^3 a + w4 cos^3 a
//   C_N A(alpha) = w5 sin^2 a cos a
// and the force is
//   F = -k_a |v_a| C_D A v_a + k_a C_N A ((v_a x k) x v_a) / sin a,  k_a = rho / 2.

#include "aeroflight/model.hpp"

#include <array>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace aeroflight {

struct AeroDataset;

inline constexpr int kAxisymWeights = 6;
using AxisymWeights = std::array<double, kAxisymWeights>;

struct LinkCoeffs {
  std::string link;
  AxisymWeights w{};
};

/// Per-link weights, keyed by link name.
struct AxisymCoeffs {
  std::vector<LinkCoeffs> links;

  const AxisymWeights* find(std::string_view link) const;
  /// Throws ValidationError when the link has no entry.
  const AxisymWeights& at(std::string_view link) const;
  void set(const std::string& link, const AxisymWeights& w);
};

struct AeroFactors {
  double rho = 1.225;
  double k_a() const { return 0.5 * rho; }
};

/// Angle between v_a and the unit axis k, in [0, pi]; 0 when |v_a| < 1e-12.
/// Throws ValidationError when |k| differs from 1 by more than 1e-9.
double angle_of_attack(const Vec3& v_a, const Vec3& k);

std::array<double, 5> drag_basis(double alpha);
double normal_basis(double alpha);

/// Returns (C_D A, C_N A) at alpha.
std::pair<double, double> eval_force_areas(const AxisymWeights& w, double alpha);

/// Force on a link for relative air velocity v_a and axis k (same frame).
Vec3 eval_link_force(const AxisymWeights& w, const AeroFactors& f, const Vec3& v_a, const Vec3& k);

/// Force area triple (force per unit k_a |v|^2) for a unit relative air
/// velocity direction d: -C_D A d + C_N A (k - d cos a) / sin a.
Vec3 force_area_vector(const AxisymWeights& w, const Vec3& d, const Vec3& k);

/// Concatenated base-frame force-area triples of every aero link for a robot
/// at rest in configuration s with unit relative air velocity direction d
/// (base frame).
VecX predict_force_areas_axisym(const RobotModel& model, const AxisymCoeffs& coeffs,
                                const VecX& s, const Vec3& d);

/// World-frame force on every aero link (in aero_links() order). The relative
/// air velocity of link i is the velocity of its CoM minus the wind v_w.
std::vector<Vec3> predict_link_forces_axisym(const RobotModel& model, const JointState& state,
                                             const Vec3& v_w, const AxisymCoeffs& coeffs,
                                             const AeroFactors& factors);
std::vector<Vec3> predict_link_forces_axisym(const RobotModel& model, const Kinematics& kin,
                                             const LinkVelocities& vel, const Vec3& v_w,
                                             const AxisymCoeffs& coeffs,
                                             const AeroFactors& factors);

/// Generalized force sum_i J_i^T F_i of pure forces applied at the aero link CoMs.
VecX total_wrench(const RobotModel& model, const JointState& state,
                  const std::vector<Vec3>& forces);
VecX total_wrench(const RobotModel& model, const Kinematics& kin, const JointState& state,
                  const std::vector<Vec3>& forces);

// ---------------------------------------------------------------------------
// Fitting

/// Samples of one link reduced to (alpha, C_D A, C_N A).
struct LinkFitData {
  std::vector<double> alpha;
  std::vector<double> cda;
  std::vector<double> cna;  // NaN where the normal direction is undefined
};

struct FitOptions {
  std::optional<double> lambda;  // fixed Lasso weight; cross-validated when empty
  int folds = 5;
  int n_lambda = 20;
  double lambda_ratio = 1e-6;  // smallest grid value relative to lambda_max
  double tol = 1e-10;
  int max_sweeps = 100000;
  bool enforce_positive_drag = true;
};

struct LinkFitReport {
  double lambda_drag = 0.0;
  double lambda_normal = 0.0;
  std::array<bool, kAxisymWeights> support{};
  bool rank_deficient = false;
  int positivity_constraints = 0;
};

/// Cyclic coordinate descent for min (1/2N)|y - X w|^2 + lambda |w|_1.
/// X and y are used as given (no intercept, no scaling).
VecX lasso_cd(const MatX& x, const VecX& y, double lambda, double tol, int max_sweeps,
              int* sweeps_used = nullptr);

AxisymWeights fit_link(const LinkFitData& data, const FitOptions& opt,
                       LinkFitReport* report = nullptr);

/// Projects every sample onto the drag and normal directions of each aero link.
std::vector<LinkFitData> project_dataset(const RobotModel& model, const AeroDataset& ds);

AxisymCoeffs fit_coefficients(const RobotModel& model, const AeroDataset& ds,
                              const FitOptions& opt, std::vector<LinkFitReport>* reports = nullptr);

/// Force-area rows predicted for every sample of a dataset (same layout as dataset_outputs).
MatX predict_dataset_axisym(const RobotModel& model, const AxisymCoeffs& coeffs,
                            const AeroDataset& ds);

/// Text format: one `coeffs <link> w0=.. w1=.. w2=.. w3=.. w4=.. w5=..` line per link.
AxisymCoeffs parse_coeffs(std::string_view text);
std::string format_coeffs(const AxisymCoeffs& c);
AxisymCoeffs load_coeffs_file(const std::string& path);
void save_coeffs_file(const std::string& path, const AxisymCoeffs& c);

}  // namespace aeroflight
