#include "aeroflight/aero_model.hpp"

#include "aeroflight/errors.hpp"

namespace aeroflight {

AeroKind parse_aero_kind(std::string_view s) {
  if (s == "none") return AeroKind::none;
  if (s == "axisym") return AeroKind::axisym;
  if (s == "mlp") return AeroKind::mlp;
  throw ValidationError("unknown aerodynamic model '" + std::string(s) +
                        "' (expected none, axisym or mlp)");
}

std::string to_string(AeroKind k) {
  switch (k) {
    case AeroKind::none: return "none";
    case AeroKind::axisym: return "axisym";
    case AeroKind::mlp: return "mlp";
  }
  return "none";
}

void AeroModel::check(const RobotModel& model) const {
  if (kind == AeroKind::axisym) {
    if (!coeffs) throw ValidationError("axisymmetric aerodynamics selected without coefficients");
    for (int l : model.aero_links()) coeffs->at(model.links()[l].name);
  } else if (kind == AeroKind::mlp) {
    if (!mlp) throw ValidationError("network aerodynamics selected without a network");
    if (mlp->arch.input_dim != 3 + model.n_joints() ||
        mlp->arch.output_dim != 3 * model.n_aero_links()) {
      throw ValidationError("network dimensions do not match the robot model");
    }
  }
  if (!(factors.rho > 0.0)) throw ValidationError("air density must be > 0");
}

std::vector<Vec3> AeroModel::link_forces(const RobotModel& model, const JointState& state,
                                         const Kinematics& kin, const LinkVelocities& vel,
                                         const Vec3& com_velocity, const Vec3& v_w) const {
  switch (kind) {
    case AeroKind::axisym:
      return predict_link_forces_axisym(model, kin, vel, v_w, *coeffs, factors);
    case AeroKind::mlp:
      return predict_link_forces_mlp(*mlp, model, state, com_velocity, v_w, factors);
    case AeroKind::none:
      break;
  }
  return std::vector<Vec3>(model.n_aero_links(), Vec3::Zero());
}

}  // namespace aeroflight
