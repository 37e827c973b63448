#include "aeroflight/control.hpp"
#include "aeroflight/errors.hpp"
#include "aeroflight/sim.hpp"
#include "support.hpp"

#include <cmath>
#include <doctest.h>

using namespace aeroflight;
using namespace testing_support;

namespace {

SimState at_rest(const RobotModel& m) {
  SimState s;
  s.q = JointState::zero(m);
  s.thrust = VecX::Zero(m.n_jets());
  return s;
}

Scenario hover_scenario() { return load_scenario_file(data_path("../scenarios/hover.scn")); }

}  // namespace

TEST_CASE("wind profile interpolation") {
  WindProfile w;
  w.knots = {{1.0, Vec3(1, 0, 0)}, {3.0, Vec3(3, 2, 0)}};
  CHECK(wind_at(w, 0.0) == Vec3(1, 0, 0));
  CHECK(wind_at(w, 2.0) == Vec3(2, 1, 0));
  CHECK(wind_at(w, 3.0) == Vec3(3, 2, 0));
  CHECK(wind_at(w, 1.0) == Vec3(1, 0, 0));
  CHECK(wind_at(w, 9.0) == Vec3(3, 2, 0));
  CHECK(wind_at(WindProfile{}, 4.0) == Vec3::Zero());
}

TEST_CASE("wind profile text") {
  const auto w = parse_wind("0:0,0,0; 5:5,0,0;10:0,5,0");
  REQUIRE(w.knots.size() == 3u);
  CHECK(w.knots[1].second == Vec3(5, 0, 0));
  CHECK(parse_wind(format_wind(w)).knots == w.knots);
  CHECK(parse_wind("").knots.empty());
  CHECK_THROWS_AS(parse_wind("1:0,0,0;1:1,1,1"), ValidationError);
  CHECK_THROWS_AS(parse_wind("2:0,0,0;1:1,1,1"), ValidationError);
  CHECK_THROWS_AS(parse_wind("1-0,0,0"), ParseError);
  CHECK_THROWS_AS(parse_wind("1:0,0"), ParseError);
}

TEST_CASE("plant step examples") {
  SUBCASE("free fall") {
    const auto b = single_body(3.0);
    const auto next = step(b, at_rest(b), VecX::Zero(0), Vec3::Zero(), AeroModel{}, 1e-3);
    CHECK(next.q.base_linear_velocity.z() == doctest::Approx(-9.81e-3).epsilon(1e-12));
    CHECK(next.q.base_linear_velocity.head<2>().norm() == 0.0);
    CHECK(next.t == 1e-3);
  }
  SUBCASE("jets through the CoM hold a hover") {
    const auto b = single_body(4.0, "jet a link=body dir=0,0,1 pos=0.2,0,0 tmin=0 tmax=100\n"
                                    "jet b link=body dir=0,0,1 pos=-0.2,0,0 tmin=0 tmax=100\n");
    auto s = at_rest(b);
    s.thrust = Eigen::Vector2d::Constant(0.5 * 4.0 * 9.81);
    for (int k = 0; k < 1000; ++k) s = step(b, s, VecX::Zero(0), Vec3::Zero(), AeroModel{}, 1e-3);
    CHECK(s.q.nu().norm() < 1e-12);
    CHECK(s.q.base_position.norm() < 1e-12);
  }
  SUBCASE("argument checks") {
    const auto b = single_body(1.0);
    CHECK_THROWS_AS(step(b, at_rest(b), VecX::Zero(0), Vec3::Zero(), AeroModel{}, 6e-3), ValidationError);
    CHECK_THROWS_AS(step(b, at_rest(b), VecX::Zero(0), Vec3::Zero(), AeroModel{}, 0.0), ValidationError);
    CHECK_THROWS_AS(step(b, at_rest(b), VecX::Zero(2), Vec3::Zero(), AeroModel{}, 1e-3), DimensionError);
    auto bad = at_rest(b);
    bad.q.base_linear_velocity.x() = std::nan("");
    CHECK_THROWS_AS(step(b, bad, VecX::Zero(0), Vec3::Zero(), AeroModel{}, 1e-3), NonFiniteError);
  }
}

TEST_CASE("torque-free motion conserves momentum") {
  SUBCASE("tumbling rigid body") {
    const auto b = single_body(2.0, "", 0.0);
    auto s = at_rest(b);
    s.q.base_angular_velocity = Vec3(0.3, 2.0, 0.1);  // near the unstable middle axis
    s.q.base_linear_velocity = Vec3(0.1, 0.0, -0.2);
    const Vec6 h0 = centroidal_momentum(b, s.q).h;
    for (int k = 0; k < 10000; ++k) s = step(b, s, VecX::Zero(0), Vec3::Zero(), AeroModel{}, 1e-3);
    const Vec6 h1 = centroidal_momentum(b, s.q).h;
    CHECK(rel_err_vec(Vec3(h1.head<3>()), Vec3(h0.head<3>()), 1e-12) < 1e-6);
    CHECK(rel_err_vec(Vec3(h1.tail<3>()), Vec3(h0.tail<3>()), 1e-12) < 1e-6);
  }
  SUBCASE("articulated humanoid") {
    const auto m = humanoid_without_gravity();
    Rng rng(1);
    auto s = at_rest(m);
    s.q = random_state(m, rng, 0.3);
    for (int i = 0; i < m.n_joints(); ++i) {
      s.q.s(i) = 0.5 * (m.lower_limit(i) + m.upper_limit(i));
    }
    // Centre-of-mass frame: the angular momentum about the CoM is then exact
    // for the momentum-form step.
    s.q.base_linear_velocity -= centroidal_momentum(m, s.q).com_velocity;
    const Vec6 h0 = centroidal_momentum(m, s.q).h;
    const double e0 = kinetic_energy(m, s.q);
    const VecX tau = VecX::Zero(m.n_joints());
    for (int k = 0; k < 10000; ++k) s = step(m, s, tau, Vec3::Zero(), AeroModel{}, 1e-3);
    const Vec6 h1 = centroidal_momentum(m, s.q).h;
    CHECK(rel_err_vec(Vec3(h1.head<3>()), Vec3(h0.head<3>()), 1e-12) < 1e-6);
    CHECK(h1.tail<3>().norm() < 1e-9);
    // First-order integrator: energy drifts, but only slowly.
    CHECK(std::abs(kinetic_energy(m, s.q) - e0) < 0.05 * e0);
  }
  SUBCASE("drifting humanoid") {
    // With net linear momentum the CoM displacement is integrated to first order,
    // which shows up as an O(dt) drift of the angular momentum about the CoM.
    const auto m = humanoid_without_gravity();
    Rng rng(1);
    JointState q = random_state(m, rng, 0.3);
    for (int i = 0; i < m.n_joints(); ++i) q.s(i) = 0.5 * (m.lower_limit(i) + m.upper_limit(i));
    auto drift = [&](double dt) {
      SimState s = at_rest(m);
      s.q = q;
      const Vec6 h0 = centroidal_momentum(m, s.q).h;
      const VecX tau = VecX::Zero(m.n_joints());
      for (int k = 0; k < std::lround(2.0 / dt); ++k) s = step(m, s, tau, Vec3::Zero(), AeroModel{}, dt);
      const Vec6 h1 = centroidal_momentum(m, s.q).h;
      CHECK((h1.tail<3>() - h0.tail<3>()).norm() < 1e-12 * h0.tail<3>().norm() + 1e-12);
      return (h1.head<3>() - h0.head<3>()).norm() / h0.head<3>().norm();
    };
    const double coarse = drift(2e-3), fine = drift(1e-3);
    CHECK(coarse < 1e-3);
    CHECK(fine < 0.6 * coarse);
  }
}

TEST_CASE("energy balance under gravity") {
  const auto& m = humanoid();
  Rng rng(2);
  auto s = at_rest(m);
  s.q = random_state(m, rng, 0.2);
  for (int i = 0; i < m.n_joints(); ++i) s.q.s(i) = 0.5 * (m.lower_limit(i) + m.upper_limit(i));
  auto energy = [&](const JointState& q) { return kinetic_energy(m, q) + potential_energy(m, q); };
  const double e0 = energy(s.q);
  const double scale = kinetic_energy(m, s.q) + m.total_mass() * m.gravity() * 1.0;
  const VecX tau = VecX::Zero(m.n_joints());
  for (int k = 0; k < 500; ++k) s = step(m, s, tau, Vec3::Zero(), AeroModel{}, 1e-3);
  CHECK(std::abs(energy(s.q) - e0) < 1e-2 * scale);
}

TEST_CASE("standard envelope") {
  const Vec3 start(0.1, -0.2, 0.9);
  const auto env = standard_envelope(start, 5.0);
  CHECK((env.reference.at(0.0).pos - start).norm() == 0.0);
  CHECK((env.reference.at(20.0).pos - (start + Vec3(2, 0, 0))).norm() < 1e-12);
  CHECK((env.reference.at(30.0).pos - (start + Vec3(2, 1, 0))).norm() < 1e-12);
  CHECK((env.reference.at(40.0).pos - start).norm() < 1e-12);
  CHECK((env.reference.at(59.0).pos - start).norm() < 1e-12);
  const double h = 1e-6;
  for (double t : {10.0, 20.0, 30.0, 40.0}) {
    const Vec3 left = (env.reference.at(t).pos - env.reference.at(t - h).pos) / h;
    const Vec3 right = (env.reference.at(t + h).pos - env.reference.at(t).pos) / h;
    CHECK((left - right).norm() < 1e-4);
  }
  CHECK(wind_at(env.wind, 0.0).norm() == 0.0);
  CHECK((wind_at(env.wind, 2.5) - Vec3(2.5, 0, 0)).norm() < 1e-12);
  CHECK((wind_at(env.wind, 20.0) - Vec3(5, 0, 0)).norm() < 1e-12);
  CHECK((wind_at(env.wind, 45.0) - Vec3(0, 5, 0)).norm() < 1e-12);

  const auto hov = hover_envelope(start);
  CHECK((hov.reference.at(33.0).pos - start).norm() == 0.0);
  CHECK(hov.wind.knots.empty());
}

TEST_CASE("scenario files") {
  const auto sc = hover_scenario();
  CHECK(sc.name == "hover");
  CHECK(sc.envelope == "hover");
  CHECK(sc.plant_aero == AeroKind::axisym);
  CHECK(sc.controller_coeffs == sc.plant_coeffs);
  CHECK(sc.posture.size() == 6u);

  const std::string base = "model=m.model\ngains=g.gains\n";
  const auto p = parse_scenario(base + "wind=0:1,0,0;2:0,1,0\nplant_coeffs=a\ncoeffs=b\n", "/dir");
  CHECK(p.model_path == "/dir/m.model");
  CHECK(p.plant_coeffs == "/dir/a");
  CHECK(p.controller_coeffs == "/dir/b");
  REQUIRE(p.wind.has_value());
  CHECK(p.wind->knots.size() == 2u);

  CHECK_THROWS_AS(parse_scenario(base + "colour=blue\n"), ParseError);
  CHECK_THROWS_AS(parse_scenario("gains=g\n"), ValidationError);
  CHECK_THROWS_AS(parse_scenario(base + "envelope=loop\n"), ValidationError);
  CHECK_THROWS_AS(parse_scenario(base + "dt=0\n"), ValidationError);
  CHECK_THROWS_AS(parse_scenario(base + "control_dt=0.0105\n"), ValidationError);
  CHECK_THROWS_AS(parse_scenario(base + "plant_aero=cfd\n"), ValidationError);
  CHECK_THROWS_AS(parse_scenario(base + "posture=l_knee\n"), ParseError);
  CHECK_THROWS_AS(load_scenario_file("/nonexistent/x.scn"), IoError);
}

TEST_CASE("initial hover state") {
  const auto sc = hover_scenario();
  const auto m = load_model_file(sc.model_path);
  const auto st = initial_state(m, sc);
  const auto md = momentum_dynamics(m, st.q, st.thrust, VecX::Zero(m.n_velocity()));
  CHECK(md.hdot.norm() < 1e-9);
  auto bad = sc;
  bad.posture = {{"l_knee", 10.0}};
  CHECK_THROWS_AS(initial_state(m, bad), ValidationError);
}

TEST_CASE("hover scenario") {
  auto sc = hover_scenario();
  const auto log = run_scenario(sc);
  CHECK(log.status == SimStatus::completed);
  CHECK(log.verdict() == "completed");
  CHECK(log.max_com_error < 0.05);
  CHECK(log.records.size() == 3000u);

  // Every logged input stays in its box and every thrust in its limits.
  const auto m = load_model_file(sc.model_path);
  for (const auto& r : log.records) {
    for (int j = 0; j < m.n_jets(); ++j) {
      CHECK(r.thrust(j) >= m.jets()[j].thrust_min);
      CHECK(r.thrust(j) <= m.jets()[j].thrust_max);
    }
    for (int i = 0; i < m.n_joints(); ++i) {
      CHECK(r.s(i) >= m.lower_limit(i) - 1e-3);
      CHECK(r.s(i) <= m.upper_limit(i) + 1e-3);
    }
  }

  // Halving the plant step barely moves the final CoM.
  sc.dt = 5e-4;
  const auto fine = run_scenario(sc);
  REQUIRE(fine.status == SimStatus::completed);
  CHECK((fine.records.back().com - log.records.back().com).norm() < 1e-3);
}

TEST_CASE("runs are deterministic and logs round trip") {
  auto sc = hover_scenario();
  sc.envelope = "standard";
  sc.duration = 3.0;
  sc.perturbation = 0.02;
  const auto a = run_scenario(sc);
  const auto b = run_scenario(sc);
  const std::string text = format_log(a);
  CHECK(text == format_log(b));

  const auto table = parse_log(text);
  CHECK(table.columns == a.columns());
  REQUIRE(table.rows.size() == a.records.size());
  const int c = table.column("com_x");
  REQUIRE(c >= 0);
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    CHECK(table.rows[i][c] == a.records[i].com.x());
    CHECK(table.rows[i][0] == a.records[i].t);
  }
  CHECK(table.column("no_such_column") == -1);
  CHECK(table.header_comment.find("status=completed") != std::string::npos);

  CHECK_THROWS_AS(parse_log(""), ParseError);
  std::string broken = text;
  broken.erase(broken.rfind(','));
  CHECK_THROWS_AS(parse_log(broken), ParseError);
}

TEST_CASE("joint groups partition the joints") {
  const auto& m = humanoid();
  std::vector<std::string> names;
  const auto groups = joint_groups(m, &names);
  CHECK(names.size() == 5u);
  std::vector<int> seen(m.n_joints(), 0);
  for (const auto& g : groups) {
    for (int i : g) ++seen[i];
  }
  for (int k : seen) CHECK(k == 1);
  CHECK(groups[1].size() == groups[2].size());
  CHECK(groups[3].size() == groups[4].size());
}

TEST_CASE("logged momentum rate matches the trajectory") {
  auto sc = hover_scenario();
  sc.envelope = "standard";
  sc.duration = 15.0;
  const auto log = run_scenario(sc);
  REQUIRE(log.status == SimStatus::completed);
  const double dt = log.log_dt;
  double max_hddot = 0.0, worst = 0.0;
  for (std::size_t k = 0; k + 1 < log.records.size(); ++k) {
    const auto& a = log.records[k];
    const auto& b = log.records[k + 1];
    max_hddot = std::max(max_hddot, ((b.hdot - a.hdot) / dt).norm());
    worst = std::max(worst, ((b.h - a.h) / dt - a.hdot).norm());
  }
  CHECK(worst < 10.0 * dt * max_hddot);
}
