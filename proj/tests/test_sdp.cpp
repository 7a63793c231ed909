#include <doctest.h>

#include "oracles.hpp"
#include "satlmi/errors.hpp"
#include "satlmi/sdp.hpp"
#include "satlmi/synthesis.hpp"

#include <nlohmann/json.hpp>

using namespace satlmi;

namespace {

Mat scalar(double v) { return Mat::Constant(1, 1, v); }

// maximize t  s.t.  (1 - t) I >= 0
LmiProblem unit_cap() {
  LmiProblem p;
  p.vars.add_scalar("t");
  const AffineMat expr = AffineMat(Mat::Identity(2, 2)) - scaled(Mat::Identity(2, 2), p.vars.var("t"));
  p.constraints.push_back(LmiConstraint::from_affine("cap", expr));
  p.objective = Vec::Ones(1);
  return p;
}

LmiProblem negative_constant() {
  LmiProblem p;
  p.vars.add_scalar("y");
  const AffineMat expr = AffineMat(scalar(-1.0)) + scaled(scalar(0.0), p.vars.var("y"));
  p.constraints.push_back(LmiConstraint::from_affine("neg", expr));
  p.objective = Vec::Zero(1);
  return p;
}

// maximize tr(W) s.t. W >= 0 and 1 - tr(W)/2 >= 0
LmiProblem trace_cap() {
  LmiProblem p;
  p.vars.add_sym("W", 2);
  const AffineMat W = p.vars.var("W");
  AffineMat tr(1, 1);
  for (const auto& [k, c] : W.terms()) tr.add_term(k, Mat::Constant(1, 1, c.trace()));
  AffineBlocks b({2, 1});
  b.set(0, 0, W);
  b.set(1, 1, AffineMat(scalar(1.0)) - 0.5 * tr);
  p.constraints.push_back(b.constraint("cap"));
  p.objective = Vec::Zero(p.vars.size());
  for (const auto& [k, c] : W.terms()) p.objective(k) = c.trace();
  return p;
}

LmiProblem scaled_problem(const LmiProblem& p, double s) {
  LmiProblem q = p;
  for (auto& c : q.constraints) {
    c.F0 = c.F0 * s;
    for (auto& [k, f] : c.Fi) f = f * s;
  }
  return q;
}

}  // namespace

TEST_SUITE("sdp") {
  TEST_CASE("VarSpace packing order and bijection") {
    VarSpace v;
    v.add_rect("Y", 1, 2).add_diag("S", 2).add_sym("W", 2).add_scalar("eps");
    CHECK(v.size() == 1 + 3 + 2 + 2);
    CHECK(v.scalar_index("eps") == 0);
    CHECK(v.entry("W").offset == 1);
    CHECK(v.entry("S").offset == 4);
    CHECK(v.entry("Y").offset == 6);
    CHECK(v.coordinate_label(2) == "W[0,1]");
    CHECK_THROWS_AS(v.add_scalar("eps"), ShapeError);
    CHECK_THROWS_AS(v.entry("nope"), ShapeError);

    oracle::Gen g(21);
    for (int t = 0; t < 50; ++t) {
      const Vec y = g.normal_vec(v.size());
      const auto vals = v.unpack(y);
      CHECK(vals.at("W") == vals.at("W").transpose());
      CHECK(v.pack(vals) == y);
      CHECK(v.value("Y", y) == v.var("Y").eval(y));
      const Mat S = v.value("S", y);
      CHECK(S(0, 1) == 0.0);
    }
  }

  TEST_CASE("AffineMat evaluation is linear") {
    VarSpace v;
    v.add_sym("W", 3).add_rect("Y", 2, 3);
    oracle::Gen g(22);
    const Mat A = g.normal_mat(3, 3), L = g.normal_mat(2, 2), R = g.normal_mat(2, 3);
    const AffineMat e = v.var("W") * A + (L * v.var("Y")).transpose() * R - 2.0 * v.var("W");
    for (int t = 0; t < 20; ++t) {
      const Vec y1 = g.normal_vec(v.size()), y2 = g.normal_vec(v.size());
      const double a = g.normal(), b = g.normal();
      const Mat lhs = e.eval(a * y1 + b * y2) - e.constant();
      const Mat rhs = a * (e.eval(y1) - e.constant()) + b * (e.eval(y2) - e.constant());
      CHECK((lhs - rhs).norm() <= 1e-10 * (1.0 + rhs.norm()));
      const Mat W = v.value("W", y1), Y = v.value("Y", y1);
      CHECK((e.eval(y1) - (W * A + (L * Y).transpose() * R - 2.0 * W)).norm() <= 1e-12 * (1.0 + W.norm()));
    }
  }

  TEST_CASE("LmiConstraint from_affine rejects asymmetric expressions") {
    VarSpace v;
    v.add_rect("Y", 2, 2);
    CHECK_THROWS_AS(LmiConstraint::from_affine("bad", v.var("Y")), ShapeError);
    CHECK_NOTHROW(LmiConstraint::from_affine("ok", v.var("Y") + v.var("Y").transpose()));
    CHECK_THROWS_AS(AffineBlocks({1, 2}).set(1, 0, AffineMat(2, 1)), ShapeError);
  }

  TEST_CASE("maximize t with (1 - t) I >= 0") {
    const SolveReport r = solve(unit_cap());
    REQUIRE(r.status == SolveStatus::Optimal);
    CHECK(r.y(0) == doctest::Approx(1.0).epsilon(1e-5));
    CHECK(r.y(0) <= 1.0);
    CHECK(check_feasible(unit_cap(), r.y, 0.0).ok);
  }

  TEST_CASE("constant negative block is infeasible with a certificate") {
    const SolveReport r = solve(negative_constant());
    CHECK(r.status == SolveStatus::Infeasible);
    REQUIRE(r.diagnostics.count("farkas_value") == 1);
    CHECK(r.diagnostics.at("farkas_value") < 0.0);
    CHECK(r.diagnostics.at("farkas_residual") <= 1e-6);
    CHECK(r.diagnostics.at("farkas_trace") > 0.0);
  }

  TEST_CASE("trace cap matches a bisection oracle") {
    const SolveOptions opts;
    // W = (tau/2) I is optimal for the scalarization; feasibility at margin
    // is then tau/2 >= margin and 1 - tau/2 >= margin.
    auto feasible = [&](double tau) { return tau / 2 >= opts.margin && 1.0 - tau / 2 >= opts.margin; };
    double lo = 0.0, hi = 10.0;
    for (int i = 0; i < 200; ++i) {
      const double mid = 0.5 * (lo + hi);
      (feasible(mid) ? lo : hi) = mid;
    }
    const LmiProblem p = trace_cap();
    const SolveReport r = solve(p, opts);
    REQUIRE(r.status == SolveStatus::Optimal);
    CHECK(std::abs(r.objective - lo) <= 1e-5);
    CHECK(p.vars.value("W", r.y).trace() == doctest::Approx(r.objective));
  }

  TEST_CASE("unbounded objective is reported") {
    LmiProblem p;
    p.vars.add_scalar("y");
    p.constraints.push_back(LmiConstraint::from_affine("pos", AffineMat(scalar(1.0)) + scaled(scalar(1.0), p.vars.var("y"))));
    p.objective = Vec::Ones(1);
    CHECK(solve(p).status == SolveStatus::Unbounded);
  }

  TEST_CASE("lower bounds are honoured") {
    LmiProblem p = unit_cap();
    p.objective = -Vec::Ones(1);
    p.lower_bounds[0] = 0.25;
    const SolveReport r = solve(p);
    REQUIRE(r.status == SolveStatus::Optimal);
    CHECK(r.y(0) >= 0.25);
    CHECK(r.y(0) == doctest::Approx(0.25).epsilon(1e-5));
  }

  TEST_CASE("validate catches malformed problems") {
    LmiProblem p = unit_cap();
    p.objective = Vec::Ones(3);
    CHECK_THROWS_AS(p.validate(), ShapeError);
    LmiProblem q = unit_cap();
    q.lower_bounds[5] = 0.0;
    CHECK_THROWS_AS(q.validate(), ShapeError);
  }

  TEST_CASE("check_feasible examples") {
    LmiProblem p;
    p.vars.add_scalar("y");
    p.constraints.push_back(LmiConstraint::from_affine("id", AffineMat(Mat::Identity(3, 3))));
    p.objective = Vec::Zero(1);
    oracle::Gen g(23);
    for (int t = 0; t < 5; ++t) {
      const FeasibilityCheck c = check_feasible(p, g.normal_vec(1), 0.0);
      CHECK(c.ok);
      CHECK(c.worst == doctest::Approx(1.0));
    }
    CHECK_THROWS_AS(check_feasible(p, Vec::Zero(2), 0.0), ShapeError);

    SynthesisConfig cfg;
    cfg.lambda = 0.05;
    const LmiProblem phi = model_problem(Plant::benchmark(), 0.4, cfg);
    CHECK_FALSE(check_feasible(phi, Vec::Zero(phi.vars.size()), 0.0).ok);
  }

  TEST_CASE("every Optimal run replays as feasible") {
    const SolveOptions opts;
    SynthesisConfig cfg;
    cfg.lambda = 0.05;
    std::vector<LmiProblem> problems{unit_cap(), trace_cap()};
    for (double mu : {0.1, 0.3, 0.5}) problems.push_back(model_problem(Plant::benchmark(), mu, cfg));
    int optimal = 0;
    for (const auto& p : problems) {
      const SolveReport r = solve(p, opts);
      if (r.status != SolveStatus::Optimal) continue;
      ++optimal;
      CHECK(check_feasible(p, r.y, opts.margin - 2 * opts.feas_tol).ok);
      REQUIRE(r.min_block_eigs.size() == p.constraints.size());
    }
    CHECK(optimal == static_cast<int>(problems.size()));
  }

  TEST_CASE("scaling every block by 10 keeps the status") {
    SynthesisConfig cfg;
    cfg.lambda = 0.05;
    for (const LmiProblem& p : {unit_cap(), negative_constant(), trace_cap(), model_problem(Plant::benchmark(), 0.3, cfg)}) {
      const SolveReport a = solve(p), b = solve(scaled_problem(p, 10.0));
      CHECK(to_string(a.status) == to_string(b.status));
      if (a.status == SolveStatus::Optimal)
        CHECK(std::abs(a.objective - b.objective) <= 1e-4 * (1.0 + std::abs(a.objective)));
    }
  }

  TEST_CASE("solve is deterministic") {
    SynthesisConfig cfg;
    cfg.lambda = 0.05;
    const LmiProblem p = model_problem(Plant::benchmark(), 0.3, cfg);
    const SolveReport a = solve(p), b = solve(p);
    CHECK(a.y == b.y);
    CHECK(a.iterations == b.iterations);
  }

  TEST_CASE("dump_problem lists variables and blocks") {
    const nlohmann::json j = dump_problem(trace_cap());
    CHECK(j.at("sense") == "maximize");
    CHECK(j.at("variables").size() == 1);
    CHECK(j.at("blocks").size() == 1);
    CHECK(j.at("blocks")[0].at("dim") == 3);
    CHECK(j.at("objective").size() == 3);
  }
}
