#pragma once

// Helpers shared by the unit and acceptance tests.

#include "aeroflight/model.hpp"
#include "aeroflight/rng.hpp"
#include "aeroflight/text.hpp"

#include <string>

namespace testing_support {

using namespace aeroflight;

inline std::string data_path(const std::string& name) {
  return std::string(AEROFLIGHT_DATA_DIR) + "/" + name;
}

inline const RobotModel& humanoid() {
  static const RobotModel m = load_model_file(data_path("jet_humanoid.model"));
  return m;
}

/// The humanoid with gravity switched off.
inline RobotModel humanoid_without_gravity() {
  std::string t = text::read_file(data_path("jet_humanoid.model"));
  const auto pos = t.find("gravity 9.81");
  t.replace(pos, 12, "gravity 0");
  return load_model(t);
}

inline Quat random_rotation(Rng& rng) {
  Eigen::Vector4d q;
  for (int i = 0; i < 4; ++i) q(i) = uniform(rng, -1.0, 1.0);
  q.normalize();
  return Quat(q(0), q(1), q(2), q(3));
}

/// Random pose inside the joint limits with velocities of the given scale.
inline JointState random_state(const RobotModel& m, Rng& rng, double vel = 1.0) {
  JointState s = JointState::zero(m);
  s.base_position = Vec3(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1));
  s.base_orientation = random_rotation(rng);
  s.base_angular_velocity = vel * Vec3(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1));
  s.base_linear_velocity = vel * Vec3(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1));
  for (int i = 0; i < m.n_joints(); ++i) {
    s.s(i) = uniform(rng, m.lower_limit(i), m.upper_limit(i));
    s.sdot(i) = vel * uniform(rng, -1, 1);
  }
  return s;
}

/// State advanced along its own velocity for time h (configuration only).
inline JointState advanced(const JointState& s, double h) {
  JointState out = s;
  integrate_configuration(out, s.nu(), h);
  return out;
}

/// Rotation vector w with R1 = exp([w]x) R0, for nearby rotations.
inline Vec3 rotation_delta(const Mat3& r1, const Mat3& r0) {
  const Eigen::AngleAxisd aa(r1 * r0.transpose());
  return aa.angle() * aa.axis();
}

inline double rel_err(double a, double b, double floor = 1.0) {
  return std::abs(a - b) / std::max(floor, std::max(std::abs(a), std::abs(b)));
}

template <typename A, typename B>
double rel_err_vec(const A& a, const B& b, double floor = 1.0) {
  return (a - b).norm() / std::max(floor, std::max(a.norm(), b.norm()));
}

/// One free rigid body; jets optional.
inline RobotModel single_body(double mass, const std::string& extra = "", double gravity = 9.81) {
  return load_model("gravity " + text::format_double(gravity) + "\nlink body mass=" +
                    text::format_double(mass) +
                    " com=0,0,0 inertia=0.4,0.6,0.9,0.05,0,0.02 axis=0,0,1 aero=1\n" + extra);
}

}  // namespace testing_support
