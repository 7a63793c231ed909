#include <doctest.h>

#include "oracles.hpp"
#include "satlmi/errors.hpp"
#include "satlmi/saturated_sys.hpp"
#include "satlmi/synthesis.hpp"

#include <numbers>
#include <sstream>

using namespace satlmi;

namespace {

Vec v1(double a) { return Vec::Constant(1, a); }
Vec v2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

const SynthesisResult& model_result() {
  static const SynthesisResult r = [] {
    SynthesisConfig cfg;
    cfg.lambda = 0.05;
    cfg.mu_grid = {0.3};
    return *synthesize(Plant::benchmark(), cfg).best;
  }();
  return r;
}

}  // namespace

TEST_SUITE("saturated_sys") {
  TEST_CASE("sat examples") {
    CHECK(sat(v1(3), v1(5))(0) == 3.0);
    CHECK(sat(v1(7), v1(5))(0) == 5.0);
    CHECK(sat(v2(-9, 2), v2(5, 1)) == v2(-5, 1));
    CHECK_THROWS_AS(sat(v2(1, 1), v1(1)), ShapeError);
  }

  TEST_CASE("deadzone examples") {
    CHECK(deadzone(v1(3), v1(5))(0) == 0.0);
    CHECK(deadzone(v1(7), v1(5))(0) == -2.0);
    CHECK(deadzone(v1(-9), v1(5))(0) == 4.0);
  }

  TEST_CASE("sat is idempotent and deadzone is sat minus identity") {
    oracle::Gen g(31);
    for (int t = 0; t < 1000; ++t) {
      const Vec u = 10.0 * g.normal_vec(3);
      Vec ub(3);
      for (int i = 0; i < 3; ++i) ub(i) = g.uniform(0.1, 5.0);
      const Vec s = sat(u, ub);
      CHECK(sat(s, ub) == s);
      CHECK(deadzone(u, ub) == s - u);
      CHECK((s.cwiseAbs().array() <= ub.array()).all());
    }
  }

  TEST_CASE("sector condition") {
    const Controller c{Mat::Constant(1, 2, 0.5), Mat::Constant(1, 2, 0.1)};
    // Unsaturated: the dead-zone vanishes.
    const SectorCheck in = sector_holds(v2(1, 1), c, v1(1.0), v1(5.0));
    CHECK(in.lhs == 0.0);
    CHECK(in.ok);

    // Outside S(G) the condition can fail.
    const Controller bad{Mat::Constant(1, 1, 1.0), Mat::Constant(1, 1, -2.0)};
    const Vec x = v1(10.0);
    CHECK_FALSE(in_S_of_G(x, bad.G, v1(1.0)));
    const SectorCheck out = sector_holds(x, bad, v1(1.0), v1(1.0));
    CHECK(out.lhs == doctest::Approx(171.0));
    CHECK_FALSE(out.ok);

    // Inside S(G) for a synthesized pair, with T = S^{-1}.
    const SynthesisResult& r = model_result();
    const Vec T = r.S.cwiseInverse();
    const Plant plant = Plant::benchmark();
    Rng rng(33);
    int tested = 0, failed = 0;
    while (tested < 10000) {
      const Vec xs = rng.in_ball(2, 20.0);
      if (!in_S_of_G(xs, r.G, plant.u_bar)) continue;
      ++tested;
      if (!sector_holds(xs, r.controller(), T, plant.u_bar).ok) ++failed;
    }
    CHECK(failed == 0);
  }

  TEST_CASE("in_S_of_G examples") {
    CHECK(in_S_of_G(v2(0, 0), Mat::Identity(2, 2), v2(1, 1)));
    CHECK_FALSE(in_S_of_G(v2(2, 0), Mat::Identity(2, 2), v2(1, 1)));
    CHECK(in_S_of_G(v2(1, 0), Mat::Identity(2, 2), v2(1, 1)));
  }

  TEST_CASE("ellipsoid_in_S examples") {
    CHECK(ellipsoid_in_S(SymMatrix::identity(2), Mat::Identity(2, 2), v2(2, 2)));
    Mat z(1, 2);
    z << 1, 0;
    CHECK_FALSE(ellipsoid_in_S(SymMatrix::identity(2), z, v1(1)));
    CHECK(ellipsoid_in_S(SymMatrix::identity(2), z, v1(1.001)));
    CHECK_THROWS_AS(ellipsoid_in_S(SymMatrix::zeros(2), z, v1(1)), SingularBlock);

    const SynthesisResult& r = model_result();
    const Plant plant = Plant::benchmark();
    REQUIRE(ellipsoid_in_S(r.W, r.Z, plant.u_bar));
    Rng rng(34);
    int outside = 0;
    for (int i = 0; i < 10000; ++i)
      if (!in_S_of_G(sample_in_ellipsoid(r.basin(), rng), r.G, plant.u_bar)) ++outside;
    CHECK(outside == 0);
  }

  TEST_CASE("boundary points") {
    const auto pts = ellipsoid_boundary_points({SymMatrix::identity(2), 1.0}, 4);
    REQUIRE(pts.size() == 4);
    CHECK((pts[0] - v2(1, 0)).norm() <= 1e-15);
    CHECK((pts[1] - v2(0, 1)).norm() <= 1e-15);
    CHECK((pts[2] - v2(-1, 0)).norm() <= 1e-15);
    CHECK((pts[3] - v2(0, -1)).norm() <= 1e-15);

    const Ellipsoid e{SymMatrix::diagonal(v2(4, 1)), 1.0};
    const auto q = ellipsoid_boundary_points(e, 4);
    CHECK(q[0](0) == doctest::Approx(0.5));
    CHECK(q[1](1) == doctest::Approx(1.0));

    oracle::Gen g(35);
    Rng rng(35);
    const Ellipsoid e3{SymMatrix(g.pd(3)), 2.5};
    for (const Vec& p : ellipsoid_boundary_points(e3, 100, &rng))
      CHECK(e3.level(p) == doctest::Approx(e3.bound()).epsilon(1e-12));
  }

  TEST_CASE("volume") {
    CHECK(Ellipsoid{SymMatrix::identity(2), 1.0}.volume() == doctest::Approx(std::numbers::pi));
    // Semi-axes 0.5 and 1 scaled by alpha^{-1/2}.
    CHECK(Ellipsoid{SymMatrix::diagonal(v2(4, 1)), 4.0}.volume() == doctest::Approx(std::numbers::pi * 0.25 * 0.5));
    CHECK(Ellipsoid{SymMatrix::identity(3), 1.0}.volume() == doctest::Approx(4.0 / 3.0 * std::numbers::pi));
  }

  TEST_CASE("samples land where they should") {
    Rng rng(36);
    const Ellipsoid e{SymMatrix(oracle::Gen(36).pd(2)), 3.0};
    for (int i = 0; i < 1000; ++i) {
      CHECK(e.contains(sample_in_ellipsoid(e, rng), 1e-12));
      const Vec s = sample_in_shell(e.M, 0.2, 0.7, rng);
      const double level = s.dot(e.M.mat() * s);
      CHECK(level >= 0.2 - 1e-12);
      CHECK(level <= 0.7 + 1e-12);
    }
  }

  TEST_CASE("step examples") {
    const Plant p = Plant::benchmark();
    const Mat K = Mat::Zero(1, 2);
    CHECK(step(p, K, Vec::Zero(2), Vec::Zero(2)) == Vec::Zero(2));
    const Vec x = v2(0.3, -0.7);
    CHECK(step(p, K, x, Vec::Zero(2)) == p.A * x);
    CHECK_THROWS_AS(step(p, Mat::Zero(2, 2), x, Vec::Zero(2)), ShapeError);
  }

  TEST_CASE("step agrees with the dead-zone form") {
    const Plant p = Plant::benchmark();
    oracle::Gen g(37);
    for (int t = 0; t < 1000; ++t) {
      const Mat K = 3.0 * g.normal_mat(1, 2);
      const Vec x = 5.0 * g.normal_vec(2), w = 0.1 * g.normal_vec(2);
      const Vec a = step(p, K, x, w), b = step_deadzone_form(p, K, x, w);
      CHECK((a - b).norm() <= 1e-12 * (1.0 + a.norm() + (p.A * x).norm() + (K * x).norm()));
    }
  }

  TEST_CASE("simulate") {
    const Plant p = Plant::benchmark();
    const Mat K = Mat::Constant(1, 2, -0.3);
    const Trajectory zero = simulate(p, K, Vec::Zero(2), {}, 50);
    REQUIRE(zero.size() == 51);
    for (const Vec& x : zero) CHECK(x == Vec::Zero(2));

    const std::vector<Vec> w{v2(0.1, 0.0), v2(1.0, 0.0)};
    CHECK_THROWS_AS(simulate(p, K, Vec::Zero(2), w, 5, 0.05), NoiseBoundViolation);
    const Trajectory t = simulate(p, K, Vec::Zero(2), w, 1, 0.05);
    CHECK(t[1] == w[0]);

    SynthesisConfig cfg;
    const SynthesisResult r = *synthesize(p, cfg).best;
    Rng rng(38);
    for (int i = 0; i < 20; ++i) {
      const Trajectory tr = simulate(p, r.K, sample_in_ellipsoid(r.basin(), rng), {}, 500);
      CHECK(tr.back().norm() <= 1e-6);
    }
  }

  TEST_CASE("attractor_entry") {
    const Ellipsoid unit{SymMatrix::identity(2), 1.0};
    const Trajectory in_stay{v2(3, 0), v2(2, 0), v2(0.5, 0), v2(0.2, 0)};
    const AttractorEntry a = attractor_entry(in_stay, unit);
    CHECK(a.entered);
    CHECK(a.first_index == 2);
    CHECK(a.stayed);
    CHECK(a.max_level_after == doctest::Approx(0.25));

    const Trajectory leave{v2(0.5, 0), v2(2, 0)};
    const AttractorEntry b = attractor_entry(leave, unit);
    CHECK(b.entered);
    CHECK_FALSE(b.stayed);

    const Trajectory never{v2(3, 0)};
    CHECK_FALSE(attractor_entry(never, unit).entered);
  }

  TEST_CASE("spectral radius") {
    Mat r(2, 2);
    r << 0, -1, 1, 0;
    CHECK(spectral_radius(r) == doctest::Approx(1.0));
    CHECK(spectral_radius(Plant::benchmark().A) > 1.0);
  }

  TEST_CASE("CSV writers") {
    std::ostringstream t;
    write_trajectory_csv(t, {v2(1, 2), v2(0.5, 0.25)}, SymMatrix::identity(2));
    CHECK(t.str() == "k,x1,x2,V\n0,1,2,5\n1,0.5,0.25,0.3125\n");

    std::ostringstream e;
    write_ellipse_csv(e, {SymMatrix::identity(2), 1.0}, 4);
    std::istringstream in(e.str());
    std::string header;
    std::getline(in, header);
    CHECK(header == "theta,x1,x2");
    int rows = 0;
    for (std::string line; std::getline(in, line);) ++rows;
    CHECK(rows == 4);
    CHECK_THROWS_AS(write_ellipse_csv(e, {SymMatrix::identity(3), 1.0}, 4), ShapeError);
  }

  TEST_CASE("plant validation") {
    Plant p = Plant::benchmark();
    CHECK_NOTHROW(p.validate());
    p.u_bar(0) = -1.0;
    CHECK_THROWS(p.validate());
    Plant q = Plant::benchmark();
    q.B = Mat::Zero(3, 1);
    CHECK_THROWS_AS(q.validate(), ShapeError);
  }
}
