#include <doctest.h>

#include "oracles.hpp"
#include "satlmi/errors.hpp"
#include "satlmi/synthesis.hpp"

#include <nlohmann/json.hpp>

#include <sstream>

using namespace satlmi;

namespace {

NoiseModel noise_of(double lambda) { return {lambda, SymMatrix(Mat(0.05 * Mat::Identity(2, 2)))}; }

struct Point {
  Mat W{2, 2};
  double S = 3.0;
  Mat Y{1, 2};
  Mat Z{1, 2};
  double eps = 2.0;
  double eta = 0.7;
  Point() {
    W << 2.0, 0.5, 0.5, 1.0;
    Y << 0.1, -0.2;
    Z << 0.3, 0.4;
  }
  Vec pack(const VarSpace& v) const {
    std::map<std::string, Mat> m{{"eps", Mat::Constant(1, 1, eps)},
                                 {"W", W},
                                 {"S", Mat::Constant(1, 1, S)},
                                 {"Y", Y},
                                 {"Z", Z}};
    if (v.contains("eta")) m["eta"] = Mat::Constant(1, 1, eta);
    return v.pack(m);
  }
};

const SynthesisResult& model_result_03() {
  static const SynthesisResult r = [] {
    SynthesisConfig cfg;
    cfg.lambda = 0.05;
    cfg.mu_grid = {0.3};
    return *synthesize(Plant::benchmark(), cfg).best;
  }();
  return r;
}

}  // namespace

TEST_SUITE("synthesis") {
  TEST_CASE("phi matches a hand assembly entry by entry") {
    const Plant plant = Plant::benchmark();
    const double mu = 0.4, lambda = 0.05;
    const VarSpace v = make_var_space(2, 1, false);
    const Point pt;
    const Mat phi = build_phi(plant, v, mu, lambda).eval(pt.pack(v)).mat();

    const Mat& A = plant.A;
    const Mat& B = plant.B;
    Mat ref = Mat::Zero(5, 5);
    ref.block(0, 0, 2, 2) = (1 - mu) * pt.W;
    ref.block(0, 2, 2, 1) = pt.Y.transpose() + pt.Z.transpose();
    ref.block(0, 3, 2, 2) = pt.W * A.transpose() + pt.Y.transpose() * B.transpose();
    ref(2, 2) = 2 * pt.S;
    ref.block(2, 3, 1, 2) = pt.S * B.transpose();
    ref.block(3, 3, 2, 2) = pt.W - (lambda * pt.eps / mu) * Mat::Identity(2, 2);
    ref = ref.selfadjointView<Eigen::Upper>();
    CHECK((phi - ref).cwiseAbs().maxCoeff() <= 1e-15);
    CHECK(phi(0, 0) == doctest::Approx(0.6 * 2.0));
  }

  TEST_CASE("epsilon drops out of phi when lambda is zero") {
    const VarSpace v = make_var_space(2, 1, false);
    const LmiConstraint c = build_phi(Plant::benchmark(), v, 0.4, 0.0);
    const int k = v.scalar_index("eps");
    CHECK((c.Fi.count(k) == 0 || c.Fi.at(k).mat().isZero()));
    const LmiConstraint d = build_phi(Plant::benchmark(), v, 0.4, 0.05);
    REQUIRE(d.Fi.count(k) == 1);
    CHECK(d.Fi.at(k)(3, 3) == doctest::Approx(-0.05 / 0.4));
  }

  TEST_CASE("phi rejects mu outside (0, 1)") {
    const VarSpace v = make_var_space(2, 1, false);
    CHECK_THROWS_AS(build_phi(Plant::benchmark(), v, 0.0, 0.05), InputError);
    CHECK_THROWS_AS(build_phi(Plant::benchmark(), v, 1.0, 0.05), InputError);
  }

  TEST_CASE("reported W and epsilon are feasible up to their rounding") {
    // The printed values are rounded to two decimals and the optimum sits on
    // the boundary of the feasible set, so with W and eps frozen at the
    // printed values the best achievable margin is slightly negative.
    const VarSpace v = make_var_space(2, 1, false);
    Point pt;
    pt.W << 78.67, -14.16, -14.16, 27.09;
    pt.eps = 79.54;
    const Vec fixed = pt.pack(v);
    std::vector<int> frozen{v.scalar_index("eps")};
    for (int k = 0; k < v.entry("W").size; ++k) frozen.push_back(v.entry("W").offset + k);

    LmiProblem p;
    p.vars = v;
    std::vector<LmiConstraint> cs{build_phi(Plant::benchmark(), v, 0.3, 0.05)};
    for (auto& c : build_inclusion(v, Vec::Constant(1, 5.0))) cs.push_back(c);
    for (LmiConstraint c : cs) {
      for (int k : frozen) {
        if (!c.Fi.count(k)) continue;
        c.F0 = c.F0 + fixed(k) * c.Fi.at(k);
        c.Fi.erase(k);
      }
      p.constraints.push_back(c);
    }
    p.objective = Vec::Zero(v.size());
    const SolveReport r = solve(p);
    CHECK(r.diagnostics.at("phase1_t") > -5e-3);

    // The exact optimum rounds to the printed values.
    const SynthesisResult& best = model_result_03();
    CHECK((best.W.mat() - pt.W).cwiseAbs().maxCoeff() <= 0.005);
    CHECK(std::abs(best.epsilon - pt.eps) <= 0.005);
    CHECK(oracle::jacobi_min(build_phi(Plant::benchmark(), v, 0.3, 0.05).eval(best.report.y).mat()) > 0.0);
  }

  TEST_CASE("inclusion constraints") {
    const VarSpace v = make_var_space(2, 1, false);
    const auto inc = build_inclusion(v, Vec::Constant(1, 5.0));
    REQUIRE(inc.size() == 1);
    CHECK(inc[0].block_dim == 3);
    CHECK(inc[0].F0(2, 2) == 25.0);

    Point pt;
    pt.W = Mat::Identity(2, 2);
    pt.Z = Mat::Zero(1, 2);
    CHECK(oracle::jacobi_min(inc[0].eval(pt.pack(v)).mat()) == doctest::Approx(1.0));
    pt.Z << 1e3, 0.0;
    CHECK(oracle::jacobi_min(inc[0].eval(pt.pack(v)).mat()) < 0.0);

    Vec ub(2);
    ub << 1.0, 2.0;
    const VarSpace v2 = make_var_space(3, 2, false);
    CHECK(build_inclusion(v2, ub).size() == 2);
  }

  TEST_CASE("psi structure") {
    const Plant plant = Plant::benchmark();
    const NoiseModel noise = noise_of(0.05);
    const GeneratedData g = generate_data(plant, noise, 20, 1);
    const VarSpace v = make_var_space(2, 1, true);
    const LmiConstraint psi = build_psi(g.data, noise, v, 0.3);
    CHECK(psi.block_dim == 8);

    Point pt;
    pt.eta = 0.0;
    CHECK(oracle::jacobi_min(psi.eval(pt.pack(v)).mat()) <= 0.0);

    // Coefficient of eta in the third diagonal block: X+ X+' - p lambda delta.
    const int k = v.scalar_index("eta");
    const Mat c = psi.Fi.at(k).mat().block(3, 3, 2, 2);
    const Mat expected = g.data.Xplus * g.data.Xplus.transpose() - 0.05 * Mat::Identity(2, 2);
    CHECK((c - expected).norm() <= 1e-12 * (1.0 + expected.norm()));

    const Mat stacked = g.data.stacked();
    CHECK((psi.Fi.at(k).mat().block(5, 5, 3, 3) - stacked * stacked.transpose()).norm() <= 1e-12 * stacked.squaredNorm());

    CHECK_THROWS_AS(build_psi(g.data, noise, make_var_space(3, 1, true), 0.3), ShapeError);
  }

  TEST_CASE("assembled constraints are affine") {
    const Plant plant = Plant::benchmark();
    const NoiseModel noise = noise_of(0.05);
    const GeneratedData g = generate_data(plant, noise, 20, 2);
    SynthesisConfig cfg;
    cfg.lambda = 0.05;
    const LmiProblem mp = model_problem(plant, 0.3, cfg);
    const LmiProblem dp = data_problem(g.data, noise, plant.u_bar, 0.3, cfg);
    oracle::Gen rng(41);
    for (const LmiProblem* p : {&mp, &dp}) {
      for (const auto& c : p->constraints) {
        const Vec y0 = rng.normal_vec(p->vars.size());
        const Vec d = rng.normal_vec(p->vars.size());
        const double h = 0.37;
        const Mat fd = (c.eval(y0 + h * d).mat() - c.eval(y0).mat()) / h;
        Mat lin = Mat::Zero(c.block_dim, c.block_dim);
        for (const auto& [k, f] : c.Fi) lin += d(k) * f.mat();
        CHECK((fd - lin).norm() <= 1e-9 * (1.0 + lin.norm()));
      }
    }
  }

  TEST_CASE("optimal objective is non-increasing in lambda") {
    double prev = std::numeric_limits<double>::infinity();
    for (double lambda : {0.01, 0.05, 0.1}) {
      SynthesisConfig cfg;
      cfg.lambda = lambda;
      const SolveReport r = solve(model_problem(Plant::benchmark(), 0.3, cfg), cfg.solver);
      REQUIRE(r.status == SolveStatus::Optimal);
      CHECK(r.objective <= prev * (1 + 1e-6));
      prev = r.objective;
    }
  }

  TEST_CASE("controller extraction") {
    const SynthesisResult& r = model_result_03();
    CHECK((r.K * r.W.mat() - r.Y).norm() <= 1e-8 * (1.0 + r.Y.norm()));
    CHECK((r.G * r.W.mat() - r.Z).norm() <= 1e-8 * (1.0 + r.Z.norm()));
    CHECK((r.P().mat() * r.W.mat() - Mat::Identity(2, 2)).norm() <= 1e-10);
    CHECK(r.epsilon > 1.0);
    CHECK(r.attractor().volume() < r.basin().volume());
    CHECK(spectral_radius(Plant::benchmark().A + Plant::benchmark().B * r.K) < 1.0);
  }

  TEST_CASE("model path result passes the certification battery") {
    const CertificationReport rep = certify(model_result_03(), Plant::benchmark(), noise_of(0.05), 10000, 1);
    CHECK(rep.passed());
    for (const char* name : {"inclusion", "sector", "decrease", "invariance", "nesting"}) {
      const CheckResult* c = rep.find(name);
      REQUIRE(c != nullptr);
      CHECK(c->passed);
      CHECK(c->violations == 0);
    }
    CHECK(rep.find("convergence") == nullptr);
  }

  TEST_CASE("sign-flipped K fails the decrease check with a witness") {
    SynthesisResult bad = model_result_03();
    bad.K = -bad.K;
    const CertificationReport rep = certify(bad, Plant::benchmark(), noise_of(0.05), 2000, 1);
    CHECK_FALSE(rep.passed());
    const CheckResult* d = rep.find("decrease");
    REQUIRE(d != nullptr);
    CHECK_FALSE(d->passed);
    REQUIRE_FALSE(d->witnesses.empty());
    // Replay the witness independently.
    const Plant plant = Plant::benchmark();
    const Vec xw = d->witnesses.front();
    const Vec x = xw.head(2), w = xw.tail(2);
    Vec u = bad.K * x;
    u(0) = std::clamp(u(0), -5.0, 5.0);
    const Vec xp = plant.A * x + plant.B * u + w;
    const Mat P = bad.W.mat().inverse();
    CHECK(xp.dot(P * xp) > x.dot(P * x));
  }

  TEST_CASE("lambda zero adds the convergence check") {
    SynthesisConfig cfg;
    const SynthesisOutcome out = synthesize(Plant::benchmark(), cfg);
    REQUIRE(out.best.has_value());
    CHECK(out.best->epsilon <= cfg.epsilon_cap * (1 + 1e-6));
    const CertificationReport rep = certify(*out.best, Plant::benchmark(), noise_of(0.0), 2000, 1);
    const CheckResult* c = rep.find("convergence");
    REQUIRE(c != nullptr);
    CHECK(c->passed);
    CHECK(rep.passed());
  }

  TEST_CASE("noiseless data path stabilizes the plant") {
    const Plant plant = Plant::benchmark();
    const NoiseModel noise = noise_of(0.0);
    const GeneratedData g = generate_data(plant, noise, 20, 5);
    SynthesisConfig cfg;
    const SynthesisOutcome out = synthesize(g.data, noise, plant.u_bar, cfg);
    REQUIRE(out.best.has_value());
    CHECK(spectral_radius(plant.A + plant.B * out.best->K) < 1.0);
  }

  TEST_CASE("sweep table and tie-break") {
    SynthesisConfig cfg;
    cfg.lambda = 0.05;
    cfg.mu_grid = {0.1, 0.3, 0.5};
    const SynthesisOutcome out = sweep_mu(Plant::benchmark(), cfg);
    REQUIRE(out.table.size() == 3);
    REQUIRE(out.best.has_value());
    double best = -std::numeric_limits<double>::infinity();
    for (const MuRow& r : out.table)
      if (r.accepted) best = std::max(best, r.objective);
    CHECK(out.best->objective == best);

    cfg.jobs = 3;
    const SynthesisOutcome par = sweep_mu(Plant::benchmark(), cfg);
    CHECK(par.best->W == out.best->W);
    std::ostringstream a, b;
    write_mu_table_csv(a, out.table);
    write_mu_table_csv(b, par.table);
    CHECK(a.str() == b.str());
    CHECK(a.str().rfind("mu,status,accepted,objective,epsilon,trace_W,eta\n", 0) == 0);
  }

  TEST_CASE("infeasible plant raises AllInfeasible") {
    Plant p;
    p.A = 3.0 * Mat::Identity(2, 2);
    p.B = Mat(2, 1);
    p.B << 0.0, 1e-3;
    p.u_bar = Vec::Constant(1, 1e-3);
    SynthesisConfig cfg;
    cfg.lambda = 0.05;
    cfg.mu_grid = {0.2, 0.6};
    const SynthesisOutcome out = sweep_mu(p, cfg);
    CHECK_FALSE(out.best.has_value());
    for (const MuRow& r : out.table) CHECK_FALSE(r.accepted);
    CHECK_THROWS_AS(synthesize(p, cfg), AllInfeasible);
  }

  TEST_CASE("non-informative data are rejected") {
    const Plant plant = Plant::benchmark();
    const GeneratedData g = generate_data(plant, noise_of(0.05), 2, 1);
    CHECK_THROWS_AS(synthesize(g.data, noise_of(0.05), plant.u_bar, SynthesisConfig{}), InputError);
  }

  TEST_CASE("JSON round trip") {
    const SynthesisResult& r = model_result_03();
    const nlohmann::json j = to_json(r);
    for (const char* key : {"mu", "epsilon", "eta", "objective", "W", "S", "Y", "Z", "K", "G", "status", "iterations"})
      CHECK(j.contains(key));
    const SynthesisResult back = result_from_json(nlohmann::json::parse(j.dump()));
    CHECK(back.W == r.W);
    CHECK(back.K == r.K);
    CHECK(back.G == r.G);
    CHECK(back.S == r.S);
    CHECK(back.epsilon == r.epsilon);
    CHECK(back.mu == r.mu);
    CHECK_FALSE(back.eta.has_value());
    CHECK_THROWS_AS(result_from_json(nlohmann::json::object()), InputError);
  }

  TEST_CASE("mu grids") {
    const auto d = default_mu_grid();
    REQUIRE(d.size() == 19);
    CHECK(d.front() == 0.05);
    CHECK(d.back() == 0.95);
    CHECK(d[5] == 0.3);
    const auto r = mu_range(0.1, 0.5, 0.1);
    REQUIRE(r.size() == 5);
    CHECK(r[2] == 0.3);
    CHECK(mu_range(0.5, 0.1, 0.1).empty());
    CHECK_THROWS_AS(mu_range(0.1, 0.5, 0.0), InputError);
    SynthesisConfig cfg;
    cfg.mu_grid = {1.2};
    CHECK_THROWS_AS(cfg.validate(), InputError);
  }
}
