#include "aeroflight/axisym.hpp"
#include "aeroflight/dataset.hpp"
#include "aeroflight/errors.hpp"
#include "support.hpp"

#include <cmath>
#include <doctest.h>

using namespace aeroflight;
using namespace testing_support;

namespace {

constexpr double kPi = 3.14159265358979323846;

AxisymWeights random_weights(Rng& rng) {
  AxisymWeights w;
  for (double& x : w) x = uniform(rng, -0.2, 0.2);
  return w;
}

Vec3 random_vec(Rng& rng, double scale = 1.0) {
  return scale * Vec3(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1));
}

// Central-difference derivative in alpha.
template <typename F>
double d_alpha(F f, double a, double h = 1e-5) {
  return (f(a + h) - f(a - h)) / (2 * h);
}

}  // namespace

TEST_CASE("angle of attack") {
  CHECK(angle_of_attack(Vec3(3, 0, 0), Vec3(1, 0, 0)) == doctest::Approx(0.0));
  CHECK(angle_of_attack(Vec3(0, 0, 5), Vec3(1, 0, 0)) == doctest::Approx(kPi / 2));
  CHECK(angle_of_attack(Vec3(1, 0, 1), Vec3(0, 0, 1)) == doctest::Approx(kPi / 4));
  CHECK(angle_of_attack(Vec3(-2, 0, 0), Vec3(1, 0, 0)) == doctest::Approx(kPi));
  CHECK(angle_of_attack(Vec3::Zero(), Vec3(1, 0, 0)) == 0.0);
  CHECK_THROWS_AS(angle_of_attack(Vec3(1, 0, 0), Vec3(2, 0, 0)), ValidationError);
}

TEST_CASE("force-area basis") {
  AxisymWeights w{};
  auto [cd, cn] = eval_force_areas(w, 0.7);
  CHECK(cd == 0.0);
  CHECK(cn == 0.0);

  w[0] = 0.3;
  for (double a : {0.0, 0.4, 1.5, kPi}) {
    std::tie(cd, cn) = eval_force_areas(w, a);
    CHECK(cd == doctest::Approx(0.3));
    CHECK(cn == 0.0);
  }

  AxisymWeights n{};
  n[5] = 0.2;
  std::tie(cd, cn) = eval_force_areas(n, kPi / 4);
  CHECK(cn == doctest::Approx(0.070711).epsilon(1e-6));

  // Independent evaluation of every basis term.
  Rng rng(1);
  for (int t = 0; t < 50; ++t) {
    const auto ww = random_weights(rng);
    const double a = uniform(rng, 0, kPi);
    const double c = std::cos(a), s = std::sin(a);
    std::tie(cd, cn) = eval_force_areas(ww, a);
    CHECK(cd == doctest::Approx(ww[0] + ww[1] * c + ww[2] * s * s + ww[3] * s * s * s + ww[4] * c * c * c));
    CHECK(cn == doctest::Approx(ww[5] * s * s * c));
  }
}

TEST_CASE("link force examples") {
  const AeroFactors f;
  Rng rng(2);
  const auto w = random_weights(rng);
  CHECK(eval_link_force(w, f, Vec3::Zero(), Vec3::UnitZ()).norm() == 0.0);

  // Broadside at 17 m/s with C_D A = 0.1.
  AxisymWeights broad{};
  broad[0] = 0.1;
  broad[5] = 0.7;
  const Vec3 v(17, 0, 0);
  const Vec3 force = eval_link_force(broad, f, v, Vec3::UnitZ());
  CHECK(force.norm() == doctest::Approx(17.70).epsilon(1e-3));
  CHECK(force.normalized().dot(-v.normalized()) == doctest::Approx(1.0));
}

TEST_CASE("normal-term magnitude and orthogonality") {
  const AeroFactors f;
  Rng rng(3);
  for (int t = 0; t < 200; ++t) {
    AxisymWeights w{};
    w[5] = uniform(rng, -0.5, 0.5);
    const Vec3 v = random_vec(rng, 20.0);
    const Vec3 k = random_vec(rng).normalized();
    const double a = angle_of_attack(v, k);
    const Vec3 fn = eval_link_force(w, f, v, k);  // drag weights are zero: pure normal term
    const double expected = f.k_a() * std::abs(eval_force_areas(w, a).second) * v.squaredNorm();
    CHECK(std::abs(fn.norm() - expected) <= 1e-9 * std::max(1.0, expected));
    CHECK(std::abs(fn.dot(v)) <= 1e-10 * std::max(1.0, fn.norm() * v.norm()));
  }
}

TEST_CASE("drag term opposes the relative wind and scales quadratically") {
  const AeroFactors f;
  Rng rng(4);
  for (int t = 0; t < 50; ++t) {
    auto w = random_weights(rng);
    w[0] = 0.5;  // keeps C_D A positive
    w[5] = 0.0;
    const Vec3 v = random_vec(rng, 10.0);
    const Vec3 k = random_vec(rng).normalized();
    const Vec3 fd = eval_link_force(w, f, v, k);
    CHECK(fd.normalized().dot(-v.normalized()) == doctest::Approx(1.0).epsilon(1e-12));
    auto wf = random_weights(rng);
    const Vec3 f1 = eval_link_force(wf, f, v, k);
    const Vec3 f3 = eval_link_force(wf, f, 3.0 * v, k);
    CHECK(rel_err_vec(f3, Vec3(9.0 * f1), 1e-12) < 1e-12);
  }
}

TEST_CASE("endpoint constraints hold for any weights") {
  Rng rng(5);
  for (int t = 0; t < 20; ++t) {
    const auto w = random_weights(rng);
    auto cd = [&](double a) { return eval_force_areas(w, a).first; };
    auto cn = [&](double a) { return eval_force_areas(w, a).second; };
    for (double end : {0.0, kPi}) {
      CHECK(std::abs(cn(end)) < 1e-15);
      // Slopes on a 0.1 degree grid shrink linearly towards the endpoint.
      for (int i = 1; i <= 5; ++i) {
        const double delta = i * 0.1 * kPi / 180.0;
        const double a = end == 0.0 ? delta : kPi - delta;
        CHECK(std::abs(d_alpha(cd, a, 1e-7)) < 3.0 * delta);
        CHECK(std::abs(d_alpha(cn, a, 1e-7)) < 3.0 * delta);
        CHECK(std::abs(cn(a)) < delta * delta);
      }
    }
  }
}

TEST_CASE("force is continuous across the small-angle guard") {
  const AeroFactors f;
  Rng rng(6);
  for (int t = 0; t < 20; ++t) {
    const auto w = random_weights(rng);
    const Vec3 k = random_vec(rng).normalized();
    const double speed = uniform(rng, 1, 20);
    const Vec3 perp = k.unitOrthogonal();
    const Vec3 v0 = speed * k;
    const Vec3 v1 = speed * (std::cos(1e-7) * k + std::sin(1e-7) * perp);
    const double diff = (eval_link_force(w, f, v1, k) - eval_link_force(w, f, v0, k)).norm();
    CHECK(diff < 1e-6 * f.k_a() * speed * speed);
  }
}

TEST_CASE("force-area vector matches the unit-speed force") {
  const AeroFactors f;
  Rng rng(7);
  for (int t = 0; t < 20; ++t) {
    const auto w = random_weights(rng);
    const Vec3 d = random_vec(rng).normalized();
    const Vec3 k = random_vec(rng).normalized();
    CHECK(rel_err_vec(force_area_vector(w, d, k), Vec3(eval_link_force(w, f, d, k) / f.k_a())) < 1e-12);
  }
}

TEST_CASE("link forces of the robot") {
  const auto& m = humanoid();
  const auto coeffs = load_coeffs_file(data_path("ground_truth.coeffs"));
  const AeroFactors f;
  Rng rng(8);

  SUBCASE("wind equal to a rigid translation gives zero force") {
    auto st = random_state(m, rng, 0.0);
    st.base_linear_velocity = Vec3(2, -1, 3);
    const auto forces = predict_link_forces_axisym(m, st, Vec3(2, -1, 3), coeffs, f);
    for (const auto& fi : forces) CHECK(fi.norm() < 1e-12);
  }
  SUBCASE("wind along a link axis is pure drag") {
    const auto st = random_state(m, rng, 0.0);
    const auto kin = forward_kinematics(m, st);
    const int a = 0;
    const int link = m.aero_links()[a];
    const Vec3 k = kin.rotation[link] * m.links()[link].axis;
    const Vec3 wind = -8.0 * k;  // relative air velocity +8 k
    const auto forces = predict_link_forces_axisym(m, st, wind, coeffs, f);
    const auto& w = coeffs.at(m.links()[link].name);
    const Vec3 expected = -f.k_a() * 64.0 * (w[0] + w[1] + w[4]) * k;
    CHECK(rel_err_vec(forces[a], expected, 1e-9) < 1e-12);
  }
  SUBCASE("rotating the scene rotates every force") {
    for (int t = 0; t < 10; ++t) {
      auto st = random_state(m, rng);
      const Vec3 wind = random_vec(rng, 5.0);
      const auto f0 = predict_link_forces_axisym(m, st, wind, coeffs, f);
      const Quat r = random_rotation(rng);
      st.base_position = r * st.base_position;
      st.base_orientation = r * st.base_orientation;
      st.base_angular_velocity = r * st.base_angular_velocity;
      st.base_linear_velocity = r * st.base_linear_velocity;
      const auto f1 = predict_link_forces_axisym(m, st, r * wind, coeffs, f);
      for (std::size_t i = 0; i < f0.size(); ++i) CHECK(rel_err_vec(f1[i], Vec3(r * f0[i])) < 1e-10);
    }
  }
  SUBCASE("missing coefficients are reported") {
    AxisymCoeffs partial;
    partial.set("pelvis", {0.1, 0, 0, 0, 0, 0});
    CHECK_THROWS_AS(predict_link_forces_axisym(m, JointState::zero(m), Vec3::Zero(), partial, f),
                    ValidationError);
  }
}

TEST_CASE("total aerodynamic wrench") {
  const auto& m = humanoid();
  Rng rng(9);
  const auto st = random_state(m, rng);
  const auto kin = forward_kinematics(m, st);

  std::vector<Vec3> zero(m.n_aero_links(), Vec3::Zero());
  CHECK(total_wrench(m, st, zero).norm() == 0.0);
  CHECK_THROWS_AS(total_wrench(m, st, std::vector<Vec3>(2, Vec3::Zero())), DimensionError);

  SUBCASE("single force on the base link") {
    const auto b = single_body(2.0);
    auto sb = random_state(b, rng);
    const Vec3 force(1, 2, -3);
    const VecX g = total_wrench(b, sb, {force});
    const Vec3 c = forward_kinematics(b, sb).link_com[0];
    CHECK((g.head<3>() - (c - sb.base_position).cross(force)).norm() < 1e-14);
    CHECK((g.segment<3>(3) - force).norm() < 1e-14);
  }
  SUBCASE("matches a spatial transform-and-sum") {
    std::vector<Vec3> forces;
    for (int i = 0; i < m.n_aero_links(); ++i) forces.push_back(random_vec(rng, 10.0));
    VecX expected = VecX::Zero(m.n_velocity());
    for (int a = 0; a < m.n_aero_links(); ++a) {
      const int link = m.aero_links()[a];
      const Vec3 c = kin.link_com[link];
      expected.head<3>() += (c - st.base_position).cross(forces[a]);
      expected.segment<3>(3) += forces[a];
      for (int j : m.support(link)) {
        const auto& jt = m.joints()[j];
        const Vec3 moment = (c - kin.position[jt.child]).cross(forces[a]);
        expected(6 + jt.dof) += kin.joint_axis[j].dot(moment);
      }
    }
    CHECK(rel_err_vec(total_wrench(m, st, forces), expected) < 1e-12);
  }
}

TEST_CASE("Lasso coordinate descent") {
  Rng rng(10);
  MatX x(40, 3);
  for (int i = 0; i < x.size(); ++i) x.data()[i] = uniform(rng, -1, 1);
  const VecX w_true = Eigen::Vector3d(1.5, 0.0, -0.7);
  const VecX y = x * w_true;
  const VecX w0 = lasso_cd(x, y, 0.0, 1e-14, 100000);
  CHECK((w0 - w_true).norm() < 1e-8);
  // Above lambda_max = |X^T y|_inf / N everything is zero.
  const double lmax = (x.transpose() * y).cwiseAbs().maxCoeff() / x.rows();
  CHECK(lasso_cd(x, y, 1.01 * lmax, 1e-12, 1000).norm() == 0.0);
  CHECK(lasso_cd(x, VecX::Zero(40), 0.1, 1e-12, 1000).norm() == 0.0);
}

TEST_CASE("fit recovers basis-generated weights") {
  Rng rng(11);
  for (int t = 0; t < 5; ++t) {
    auto w = random_weights(rng);
    w[0] = 0.6;  // keep drag positive over the whole range
    LinkFitData d;
    for (int i = 0; i < 19; ++i) {
      const double a = i * kPi / 18.0;
      const auto [cd, cn] = eval_force_areas(w, a);
      d.alpha.push_back(a);
      d.cda.push_back(cd);
      d.cna.push_back(i == 0 || i == 18 ? std::nan("") : cn);
    }
    FitOptions opt;
    opt.lambda = 0.0;
    const auto fit = fit_link(d, opt);
    for (int i = 0; i < kAxisymWeights; ++i) {
      CHECK(std::abs(fit[i] - w[i]) <= 1e-8 * std::max(1.0, std::abs(w[i])));
    }
  }
}

TEST_CASE("fit edge cases") {
  LinkFitData d;
  for (int i = 0; i < 19; ++i) {
    d.alpha.push_back(i * kPi / 18.0);
    d.cda.push_back(0.0);
    d.cna.push_back(0.0);
  }
  const auto zero = fit_link(d, FitOptions{});
  for (double v : zero) CHECK(v == 0.0);

  // A huge penalty keeps only the constant drag level.
  Rng rng(12);
  auto w = random_weights(rng);
  w[0] = 0.5;
  double mean = 0.0;
  for (std::size_t i = 0; i < d.alpha.size(); ++i) {
    const auto [cd, cn] = eval_force_areas(w, d.alpha[i]);
    d.cda[i] = cd;
    d.cna[i] = cn;
    mean += cd / d.alpha.size();
  }
  FitOptions big;
  big.lambda = 1e6;
  LinkFitReport rep;
  const auto shrunk = fit_link(d, big, &rep);
  CHECK(shrunk[0] == doctest::Approx(mean).epsilon(1e-9));
  for (int i = 1; i < kAxisymWeights; ++i) CHECK(shrunk[i] == 0.0);

  auto err = [&](const AxisymWeights& ww) {
    double e = 0.0;
    for (std::size_t i = 0; i < d.alpha.size(); ++i) {
      e += std::pow(eval_force_areas(ww, d.alpha[i]).first - d.cda[i], 2);
    }
    return e;
  };
  FitOptions exact;
  exact.lambda = 0.0;
  CHECK(err(shrunk) >= err(fit_link(d, exact)));

  LinkFitData few;
  few.alpha = {0.1, 0.2};
  few.cda = {1, 1};
  few.cna = {0, 0};
  CHECK_THROWS_AS(fit_link(few, FitOptions{}), ValidationError);
}

TEST_CASE("fitting the clean oracle recovers the ground truth") {
  const auto& m = humanoid();
  auto cfg = load_oracle_config(data_path("oracle_clean.cfg"));
  cfg.n_configs = 4;
  const auto ds = oracle_generate(m, cfg);
  FitOptions opt;
  opt.lambda = 0.0;
  const auto fit = fit_coefficients(m, ds, opt);
  const MatX pred = predict_dataset_axisym(m, fit, ds);
  CHECK(relative_error(pred, dataset_outputs(ds)) < 1e-6);
}

TEST_CASE("coefficient files round trip") {
  const auto c = load_coeffs_file(data_path("ground_truth.coeffs"));
  CHECK(c.links.size() == 13u);
  const auto back = parse_coeffs(format_coeffs(c));
  REQUIRE(back.links.size() == c.links.size());
  for (std::size_t i = 0; i < c.links.size(); ++i) {
    CHECK(back.links[i].link == c.links[i].link);
    CHECK(back.links[i].w == c.links[i].w);
  }
  CHECK_THROWS_AS(parse_coeffs("coeffs pelvis w0=1\n"), ParseError);
  CHECK_THROWS_AS(parse_coeffs("bogus line\n"), ParseError);
}
