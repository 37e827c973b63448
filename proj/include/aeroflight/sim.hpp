#pragma once

// Closed-loop flight simulation: plant integrator, wind profiles, reference
// envelopes and the scenario runner.

#include "aeroflight/aero_model.hpp"
#include "aeroflight/control.hpp"
#include "aeroflight/model.hpp"

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace aeroflight {

// ---------------------------------------------------------------------------
// Wind

/// Piecewise-linear wind velocity table; constant beyond the first and last knot.
struct WindProfile {
  std::vector<std::pair<double, Vec3>> knots;

  /// Throws ValidationError unless knot times are strictly increasing and finite.
  void validate() const;
};

Vec3 wind_at(const WindProfile& profile, double t);

/// "t:vx,vy,vz;t:vx,vy,vz;..." (empty string is still air).
WindProfile parse_wind(std::string_view text);
std::string format_wind(const WindProfile& profile);

// ---------------------------------------------------------------------------
// Plant

struct SimState {
  JointState q;
  VecX thrust;
  double t = 0.0;
};

/// Plant-side quantities evaluated at the state a step started from.
struct StepInfo {
  std::vector<Vec3> link_forces;
  VecX f_a;
};

/// One integrator step of length dt (0 < dt <= 5 ms) with thrusts held constant.
/// Momentum-form Euler: p = M nu is advanced by the applied generalized forces and
/// the drift, the configuration by the current nu, and the new nu = M(q+)^-1 p+.
/// This keeps linear and angular momentum exactly balanced against the applied
/// wrenches. Throws NonFiniteError on a non-finite result.
SimState step(const RobotModel& model, const SimState& state, const VecX& tau, const Vec3& v_w,
              const AeroModel& plant_aero, double dt, StepInfo* info = nullptr);

// ---------------------------------------------------------------------------
// Envelopes

struct Envelope {
  ComTrajectory reference;
  WindProfile wind;
};

/// Representative flight envelope starting at `start`: hover 0-10 s, +2 m along x
/// over 10-20 s, +1 m along y over 20-30 s, back to start over 30-40 s, then hover.
/// Wind ramps to `wind_speed` along +x over 5 s and turns to +y around t = 30 s.
Envelope standard_envelope(const Vec3& start, double wind_speed = 5.0);

/// Constant CoM reference at `start`, still air.
Envelope hover_envelope(const Vec3& start);

// ---------------------------------------------------------------------------
// Scenario

struct Scenario {
  std::string name = "scenario";
  std::string model_path;
  std::string gains_path;
  AeroKind plant_aero = AeroKind::none;
  std::optional<AeroKind> controller_aero;  // defaults to the gains file setting
  std::string plant_coeffs, controller_coeffs;
  std::string plant_mlp, controller_mlp;
  std::string envelope = "standard";  // standard | hover
  std::optional<WindProfile> wind;    // overrides the envelope wind
  double wind_speed = 5.0;
  double duration = 60.0;
  double dt = 1e-3;
  double control_dt = 1e-2;
  std::uint64_t seed = 1;
  double perturbation = 0.0;  // uniform initial joint offset amplitude, rad
  double max_com_error = 1.0;
  double max_tilt_deg = 60.0;
  double rho = 1.225;
  std::vector<std::pair<std::string, double>> posture;  // initial joint positions

  void validate() const;
};

/// key=value scenario file. Relative paths are resolved against `base_dir`.
Scenario parse_scenario(std::string_view text, const std::string& base_dir = "");
Scenario load_scenario_file(const std::string& path);

// ---------------------------------------------------------------------------
// Log

struct SimRecord {
  double t = 0.0;
  Vec3 com = Vec3::Zero();
  Vec3 com_ref = Vec3::Zero();
  double com_error = 0.0;
  double tilt_deg = 0.0;
  Vec6 h = Vec6::Zero();
  Vec6 hdot = Vec6::Zero();  // momentum rate model evaluated with the plant aerodynamics
  Vec6 h_tilde = Vec6::Zero();
  std::vector<double> ds;  // absolute joint error sums per group
  VecX thrust;
  VecX s;
  VecX tau;
  Vec3 f_a_plant = Vec3::Zero();
  Vec3 f_a_control = Vec3::Zero();
  Vec3 wind = Vec3::Zero();
  double sigma_min = 0.0;
};

enum class SimStatus { completed, failed, fault };
std::string to_string(SimStatus s);

struct SimLog {
  std::string scenario;
  std::vector<std::string> jet_names, joint_names, group_names;
  std::vector<SimRecord> records;
  SimStatus status = SimStatus::completed;
  double end_time = 0.0;
  std::string reason;
  double max_com_error = 0.0;
  double max_tilt_deg = 0.0;
  double dt = 0.0;        // plant step
  double log_dt = 0.0;    // spacing of records

  std::vector<std::string> columns() const;
  /// Verdict text: "completed" or "failed@<t>".
  std::string verdict() const;
};

/// Joint groups for the error sums: torso, left_arm, right_arm, left_leg, right_leg
/// (by joint name: l_/r_ prefix, shoulder/elbow/wrist = arm, hip/knee/ankle = leg).
std::vector<std::vector<int>> joint_groups(const RobotModel& model,
                                           std::vector<std::string>* names = nullptr);

std::string format_log(const SimLog& log);
void write_log(const std::string& path, const SimLog& log);

/// Loaded log table: column names and rows.
struct LogTable {
  std::string header_comment;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
  int column(std::string_view name) const;  // -1 if absent
};
LogTable parse_log(std::string_view text);
LogTable read_log(const std::string& path);

// ---------------------------------------------------------------------------
// Runner

/// Initial hovering state: posture applied, base at the origin, thrusts at the
/// minimum-norm hover solution (must lie within the jet limits).
SimState initial_state(const RobotModel& model, const Scenario& sc);

/// Runs the closed loop: control at control_dt (zero-order hold on tau and Tdot),
/// plant at dt, thrusts integrated every plant step. Failure thresholds end the run
/// with status failed; controller faults and non-finite states end it with fault.
SimLog run_scenario(const Scenario& sc);

}  // namespace aeroflight
