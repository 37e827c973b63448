#pragma once

// Selector over the aerodynamic models, shared by the plant and the controller.

#include "aeroflight/axisym.hpp"
#include "aeroflight/mlp.hpp"
#include "aeroflight/model.hpp"

#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace aeroflight {

enum class AeroKind { none, axisym, mlp };

/// Accepts "none", "axisym" or "mlp"; throws ValidationError otherwise.
AeroKind parse_aero_kind(std::string_view s);
std::string to_string(AeroKind k);

struct AeroModel {
  AeroKind kind = AeroKind::none;
  std::shared_ptr<const AxisymCoeffs> coeffs;
  std::shared_ptr<const Mlp> mlp;
  AeroFactors factors;

  /// Throws ValidationError when the selected model is missing or does not fit the robot.
  void check(const RobotModel& model) const;

  /// World-frame force on every aero link; all zero for AeroKind::none.
  std::vector<Vec3> link_forces(const RobotModel& model, const JointState& state,
                                const Kinematics& kin, const LinkVelocities& vel,
                                const Vec3& com_velocity, const Vec3& v_w) const;
};

}  // namespace aeroflight
