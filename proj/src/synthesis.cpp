#include "satlmi/synthesis.hpp"

#include "satlmi/errors.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

namespace satlmi {

std::vector<double> default_mu_grid() { return mu_range(0.05, 0.95, 0.05); }

std::vector<double> mu_range(double a, double b, double step) {
  if (!(step > 0.0) || !std::isfinite(a) || !std::isfinite(b)) throw InputError("mu range: step must be positive");
  std::vector<double> out;
  for (int k = 0;; ++k) {
    const double mu = a + k * step;
    if (mu > b + step * 1e-6) break;
    // Round to 12 digits so 0.05 + 5*0.05 prints as 0.3.
    out.push_back(std::round(mu * 1e12) / 1e12);
  }
  return out;
}

void SynthesisConfig::validate() const {
  if (mu_grid.empty()) throw InputError("mu grid is empty");
  for (double mu : mu_grid)
    if (!(mu > 0.0 && mu < 1.0)) throw InputError("mu must lie strictly inside (0, 1)");
  if (!(alpha1 > 0.0) || !(alpha2 > 0.0)) throw InputError("alpha1 and alpha2 must be positive");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InputError("lambda must be nonnegative");
  if (!(epsilon_lower > 1.0)) throw InputError("epsilon lower bound must exceed 1");
  if (!(epsilon_cap > epsilon_lower)) throw InputError("epsilon cap must exceed the lower bound");
  if (!(eta_lower > 0.0)) throw InputError("eta lower bound must be positive");
}

SymMatrix SynthesisResult::P() const {
  Eigen::LLT<Mat> llt(W.mat());
  if (llt.info() != Eigen::Success) throw SingularBlock("W is not positive definite");
  return SymMatrix(Mat(llt.solve(Mat::Identity(W.dim(), W.dim()))));
}

VarSpace make_var_space(Eigen::Index nx, Eigen::Index nu, bool with_eta) {
  VarSpace v;
  v.add_scalar("eps");
  if (with_eta) v.add_scalar("eta");
  v.add_sym("W", nx).add_diag("S", nu).add_rect("Y", nu, nx).add_rect("Z", nu, nx);
  return v;
}

namespace {

void check_mu(double mu) {
  if (!(mu > 0.0 && mu < 1.0)) throw InputError("mu must lie strictly inside (0, 1)");
}

Eigen::Index var_rows(const VarSpace& vars, const std::string& name) { return vars.entry(name).rows; }

}  // namespace

LmiConstraint build_phi(const Plant& plant, const VarSpace& vars, double mu, double lambda) {
  check_mu(mu);
  if (!(lambda >= 0.0)) throw InputError("lambda must be nonnegative");
  plant.validate();
  const Eigen::Index nx = plant.nx(), nu = plant.nu();
  if (var_rows(vars, "W") != nx || var_rows(vars, "S") != nu || var_rows(vars, "Y") != nu)
    throw ShapeError("build_phi: variable space does not match the plant");
  const AffineMat W = vars.var("W"), S = vars.var("S"), Y = vars.var("Y"), Z = vars.var("Z"), e = vars.var("eps");
  const Mat At = plant.A.transpose(), Bt = plant.B.transpose();
  AffineBlocks phi({nx, nu, nx});
  phi.set(0, 0, (1.0 - mu) * W)
      .set(0, 1, Y.transpose() + Z.transpose())
      .set(0, 2, W * At + Y.transpose() * Bt)
      .set(1, 1, 2.0 * S)
      .set(1, 2, S * Bt)
      .set(2, 2, W - (lambda / mu) * scaled(Mat::Identity(nx, nx), e));
  return phi.constraint("phi");
}

std::vector<LmiConstraint> build_inclusion(const VarSpace& vars, const Vec& u_bar) {
  const Eigen::Index nx = var_rows(vars, "W"), nu = var_rows(vars, "Z");
  if (u_bar.size() != nu) throw ShapeError("build_inclusion: u_bar must have one entry per row of Z");
  const AffineMat W = vars.var("W"), Z = vars.var("Z");
  std::vector<LmiConstraint> out;
  for (Eigen::Index i = 0; i < nu; ++i) {
    const Mat pick = Mat::Identity(nu, nu).row(i);
    AffineBlocks inc({nx, 1});
    inc.set(0, 0, W).set(0, 1, (pick * Z).transpose()).set(1, 1, AffineMat(Mat::Constant(1, 1, u_bar(i) * u_bar(i))));
    out.push_back(inc.constraint("inclusion_" + std::to_string(i)));
  }
  return out;
}

LmiConstraint build_psi(const DataCollection& data, const NoiseModel& noise, const VarSpace& vars, double mu) {
  check_mu(mu);
  data.validate();
  noise.validate(data.nx());
  const Eigen::Index nx = data.nx(), nu = data.nu();
  if (var_rows(vars, "W") != nx || var_rows(vars, "S") != nu || var_rows(vars, "Y") != nu)
    throw ShapeError("build_psi: variable space does not match the data");
  const AffineMat W = vars.var("W"), S = vars.var("S"), Y = vars.var("Y"), Z = vars.var("Z"), e = vars.var("eps"),
                  eta = vars.var("eta");
  const Mat& Xp = data.Xplus;
  const Mat& X = data.X;
  const Mat& U = data.U;
  const double p = static_cast<double>(data.p());
  const Mat n1 = Xp * Xp.transpose() - p * noise.lambda * noise.delta_omega.mat();

  AffineBlocks psi({nx, nu, nx, nx, nu});
  psi.set(0, 0, (1.0 - mu) * W)
      .set(0, 1, Y.transpose() + Z.transpose())
      .set(0, 3, W)
      .set(0, 4, Y.transpose())
      .set(1, 1, 2.0 * S)
      .set(1, 4, S)
      .set(2, 2, W - (noise.lambda / mu) * scaled(Mat::Identity(nx, nx), e) + scaled(n1, eta))
      .set(2, 3, scaled(Mat(-Xp * X.transpose()), eta))
      .set(2, 4, scaled(Mat(-Xp * U.transpose()), eta))
      .set(3, 3, scaled(Mat(X * X.transpose()), eta))
      .set(3, 4, scaled(Mat(X * U.transpose()), eta))
      .set(4, 4, scaled(Mat(U * U.transpose()), eta));
  return psi.constraint("psi");
}

namespace {

void finish_problem(LmiProblem& p, const SynthesisConfig& cfg, double lambda) {
  const VarSpace& v = p.vars;
  p.objective = Vec::Zero(v.size());
  p.objective(v.scalar_index("eps")) = cfg.alpha1;
  const AffineMat W = v.var("W");
  for (const auto& [k, c] : W.terms()) p.objective(k) += cfg.alpha2 * c.trace();
  p.lower_bounds[v.scalar_index("eps")] = cfg.epsilon_lower;
  if (v.contains("eta")) p.lower_bounds[v.scalar_index("eta")] = cfg.eta_lower;
  const auto& s = v.entry("S");
  for (int k = 0; k < s.size; ++k) p.lower_bounds[s.offset + k] = cfg.solver.margin;
  if (lambda == 0.0) {
    const AffineMat cap = AffineMat(Mat::Constant(1, 1, cfg.epsilon_cap)) - v.var("eps");
    p.constraints.push_back(LmiConstraint::from_affine("eps_cap", cap));
  }
}

}  // namespace

LmiProblem model_problem(const Plant& plant, double mu, const SynthesisConfig& cfg) {
  LmiProblem p;
  p.vars = make_var_space(plant.nx(), plant.nu(), false);
  p.constraints.push_back(build_phi(plant, p.vars, mu, cfg.lambda));
  for (auto& c : build_inclusion(p.vars, plant.u_bar)) p.constraints.push_back(std::move(c));
  finish_problem(p, cfg, cfg.lambda);
  return p;
}

LmiProblem data_problem(const DataCollection& data, const NoiseModel& noise, const Vec& u_bar, double mu,
                        const SynthesisConfig& cfg) {
  LmiProblem p;
  p.vars = make_var_space(data.nx(), data.nu(), true);
  p.constraints.push_back(build_psi(data, noise, p.vars, mu));
  for (auto& c : build_inclusion(p.vars, u_bar)) p.constraints.push_back(std::move(c));
  finish_problem(p, cfg, noise.lambda);
  return p;
}

SynthesisResult extract_result(const LmiProblem& problem, const SolveReport& report, double mu) {
  const VarSpace& v = problem.vars;
  SynthesisResult r;
  r.W = SymMatrix(v.value("W", report.y));
  r.S = v.value("S", report.y).diagonal();
  r.Y = v.value("Y", report.y);
  r.Z = v.value("Z", report.y);
  r.epsilon = report.y(v.scalar_index("eps"));
  if (v.contains("eta")) r.eta = report.y(v.scalar_index("eta"));
  r.mu = mu;
  Eigen::LLT<Mat> llt(r.W.mat());
  if (llt.info() != Eigen::Success) throw NumericalError("extract_result: W is not positive definite");
  r.K = llt.solve(Mat(r.Y.transpose())).transpose();
  r.G = llt.solve(Mat(r.Z.transpose())).transpose();
  r.objective = report.objective;
  r.report = report;
  return r;
}

namespace {

struct Attempt {
  MuRow row;
  std::optional<SynthesisResult> result;
};

Attempt attempt(const LmiProblem& problem, double mu, const SynthesisConfig& cfg) {
  Attempt a;
  a.row.mu = mu;
  const SolveReport rep = solve(problem, cfg.solver);
  a.row.status = rep.status;
  if (rep.y.size() == problem.vars.size()) {
    const VarSpace& v = problem.vars;
    a.row.objective = rep.objective;
    a.row.epsilon = rep.y(v.scalar_index("eps"));
    a.row.trace_W = v.value("W", rep.y).trace();
    if (v.contains("eta")) a.row.eta = rep.y(v.scalar_index("eta"));
  }
  if (rep.status == SolveStatus::Optimal && check_feasible(problem, rep.y, 0.0).ok) {
    try {
      a.result = extract_result(problem, rep, mu);
      a.row.accepted = a.result->epsilon > 1.0;
      if (!a.row.accepted) a.result.reset();
    } catch (const NumericalError&) {
      a.row.status = SolveStatus::NumericalError;
    }
  }
  return a;
}

SynthesisOutcome run_grid(const std::function<LmiProblem(double)>& make, const SynthesisConfig& cfg) {
  cfg.validate();
  const std::size_t n = cfg.mu_grid.size();
  std::vector<Attempt> attempts(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) attempts[i] = attempt(make(cfg.mu_grid[i]), cfg.mu_grid[i], cfg);
  };
  const int jobs = std::clamp(cfg.jobs, 1, static_cast<int>(n));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  SynthesisOutcome out;
  for (auto& a : attempts) {
    out.table.push_back(a.row);
    if (!a.result) continue;
    const bool better = !out.best || a.result->objective > out.best->objective ||
                        (a.result->objective == out.best->objective && a.result->mu < out.best->mu);
    if (better) out.best = std::move(a.result);
  }
  return out;
}

void require_any(const SynthesisOutcome& out) {
  if (out.best) return;
  const bool decided = std::any_of(out.table.begin(), out.table.end(), [](const MuRow& r) {
    return r.status == SolveStatus::Infeasible || r.status == SolveStatus::Unbounded ||
           r.status == SolveStatus::Optimal;
  });
  if (!decided) throw NumericalError("synthesis: the solver failed at every grid point");
  throw AllInfeasible("synthesis: no grid point admits a solution");
}

}  // namespace

SynthesisOutcome sweep_mu(const Plant& plant, const SynthesisConfig& cfg) {
  plant.validate();
  return run_grid([&](double mu) { return model_problem(plant, mu, cfg); }, cfg);
}

SynthesisOutcome sweep_mu(const DataCollection& data, const NoiseModel& noise, const Vec& u_bar,
                          const SynthesisConfig& cfg) {
  data.validate();
  noise.validate(data.nx());
  if (u_bar.size() != data.nu()) throw ShapeError("u_bar must have one entry per input");
  return run_grid([&](double mu) { return data_problem(data, noise, u_bar, mu, cfg); }, cfg);
}

SynthesisOutcome synthesize(const Plant& plant, const SynthesisConfig& cfg) {
  SynthesisOutcome out = sweep_mu(plant, cfg);
  require_any(out);
  return out;
}

SynthesisOutcome synthesize(const DataCollection& data, const NoiseModel& noise, const Vec& u_bar,
                            const SynthesisConfig& cfg) {
  if (!informativity(data).informative) throw InputError("data are not informative");
  SynthesisOutcome out = sweep_mu(data, noise, u_bar, cfg);
  require_any(out);
  return out;
}

// ---------------------------------------------------------------------------
// Certification

bool CertificationReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

const CheckResult* CertificationReport::find(const std::string& name) const {
  for (const auto& c : checks)
    if (c.name == name) return &c;
  return nullptr;
}

namespace {

constexpr std::size_t kWitnesses = 8;
constexpr double kLevelTol = 1e-9;

class Tally {
 public:
  explicit Tally(std::string name) { r_.name = std::move(name); r_.worst = -std::numeric_limits<double>::infinity(); }

  // measure > 0 is a violation.
  void add(double measure, const Vec& witness) {
    ++r_.samples;
    r_.worst = std::max(r_.worst, measure);
    if (!(measure <= 0.0)) {
      ++r_.violations;
      bad_.emplace_back(measure, witness);
      std::sort(bad_.begin(), bad_.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
      if (bad_.size() > kWitnesses) bad_.pop_back();
    }
  }

  CheckResult done(bool extra_ok = true, std::string detail = {}) {
    r_.passed = extra_ok && r_.violations == 0;
    for (auto& [m, w] : bad_) r_.witnesses.push_back(w);
    if (r_.samples == 0) r_.worst = 0.0;
    r_.detail = std::move(detail);
    return r_;
  }

 private:
  CheckResult r_;
  std::vector<std::pair<double, Vec>> bad_;
};

Vec stack(const Vec& a, const Vec& b) {
  Vec s(a.size() + b.size());
  s << a, b;
  return s;
}

}  // namespace

CertificationReport certify(const SynthesisResult& result, const Plant& plant, const NoiseModel& noise,
                            int samples, std::uint64_t seed) {
  plant.validate();
  noise.validate(plant.nx());
  const Eigen::Index nx = plant.nx();
  const SymMatrix P = result.P();
  const Ellipsoid basin{P, 1.0};
  const double eps = result.epsilon;
  const double lambda = noise.lambda;
  const Rng root(seed);
  const int n = std::max(samples, 1);

  auto draw_w = [&](Rng& rng, int k) -> Vec {
    if (lambda <= 0.0) return Vec::Zero(nx);
    return k % 2 == 0 ? rng.on_sphere(nx, std::sqrt(lambda)) : rng.in_ball(nx, std::sqrt(lambda));
  };
  auto V = [&](const Vec& x) { return x.dot(P.mat() * x); };

  CertificationReport rep;

  {
    Tally t("inclusion");
    Rng rng = root.split("inclusion");
    bool strict = false;
    std::string detail;
    try {
      strict = ellipsoid_in_S(result.W, result.Z, plant.u_bar, 0.0);
    } catch (const SingularBlock& e) {
      detail = e.what();
    }
    for (int k = 0; k < n; ++k) {
      const Vec x = sample_in_ellipsoid(basin, rng);
      const Vec gx = result.G * x;
      double m = -std::numeric_limits<double>::infinity();
      for (Eigen::Index i = 0; i < gx.size(); ++i) m = std::max(m, std::abs(gx(i)) / plant.u_bar(i) - 1.0);
      if (!in_S_of_G(x, result.G, plant.u_bar)) m = std::max(m, std::numeric_limits<double>::min());
      t.add(m, x);
    }
    if (!strict && detail.empty()) detail = "ellipsoid_in_S is false";
    rep.checks.push_back(t.done(strict, detail));
  }

  {
    Tally t("sector");
    Rng rng = root.split("sector");
    const Vec T = result.S.cwiseInverse();
    for (int k = 0; k < n; ++k) {
      const Vec x = sample_in_ellipsoid(basin, rng);
      const SectorCheck s = sector_holds(x, result.controller(), T, plant.u_bar);
      t.add(s.ok ? std::min(s.lhs, 0.0) : std::max(s.lhs, std::numeric_limits<double>::min()), x);
    }
    rep.checks.push_back(t.done());
  }

  {
    Tally t("decrease");
    Rng rng = root.split("decrease");
    for (int k = 0; k < n; ++k) {
      const Vec x = sample_in_shell(P, 1.0 / eps, 1.0, rng);
      const Vec w = draw_w(rng, k);
      const Vec xp = step(plant, result.K, x, w);
      t.add(V(xp) - V(x) - kLevelTol, stack(x, w));
    }
    rep.checks.push_back(t.done());
  }

  {
    Tally t("invariance");
    Rng rng = root.split("invariance");
    const Ellipsoid attractor{P, eps};
    for (int k = 0; k < n; ++k) {
      const Vec x = k % 2 == 0 ? sample_in_ellipsoid(attractor, rng) : sample_in_shell(P, 1.0 / eps, 1.0 / eps, rng);
      const Vec w = draw_w(rng, k / 2);
      const Vec xp = step(plant, result.K, x, w);
      t.add(V(xp) - 1.0 / eps - kLevelTol, stack(x, w));
    }
    rep.checks.push_back(t.done());
  }

  {
    Tally t("nesting");
    const Ellipsoid attractor{P, eps};
    Rng rng = root.split("nesting");
    for (const Vec& x : ellipsoid_boundary_points(attractor, 1000, &rng)) t.add(V(x) - 1.0 - 1e-12, x);
    std::string detail = eps > 1.0 ? "" : "epsilon <= 1";
    rep.checks.push_back(t.done(eps > 1.0, detail));
  }

  if (lambda <= 0.0) {
    // No noise: the attractor shrinks to the origin and invariance becomes
    // asymptotic convergence.
    Tally t("convergence");
    const double rho = spectral_radius(plant.A + plant.B * result.K);
    const std::vector<Vec> starts = ellipsoid_boundary_points(basin, 40, nullptr);
    const std::vector<Vec> none;
    for (const Vec& x0 : starts) {
      const Trajectory traj = simulate(plant, result.K, x0, none, 1000);
      double rise = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 1; k < traj.size(); ++k) rise = std::max(rise, V(traj[k]) - V(traj[k - 1]) - 1e-12);
      const double tail = V(traj.back()) - 1e-6 * std::max(V(x0), 1e-300);
      t.add(std::max(rise, tail), x0);
    }
    std::ostringstream detail;
    detail << "spectral radius " << rho;
    rep.checks.push_back(t.done(rho < 1.0, detail.str()));
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

nlohmann::json mat_json(const Mat& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Mat json_mat(const nlohmann::json& j) {
  if (!j.is_array() || j.empty() || !j[0].is_array()) throw InputError("expected a matrix as an array of rows");
  Mat m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(j[0].size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const auto& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != m.cols()) throw InputError("ragged matrix");
    for (Eigen::Index k = 0; k < m.cols(); ++k) m(i, k) = row[static_cast<std::size_t>(k)].get<double>();
  }
  return m;
}

}  // namespace

nlohmann::json to_json(const SynthesisResult& r) {
  nlohmann::json j;
  j["mu"] = r.mu;
  j["epsilon"] = r.epsilon;
  j["eta"] = r.eta ? nlohmann::json(*r.eta) : nlohmann::json(nullptr);
  j["objective"] = r.objective;
  j["W"] = mat_json(r.W.mat());
  j["S"] = mat_json(Mat(r.S.asDiagonal()));
  j["Y"] = mat_json(r.Y);
  j["Z"] = mat_json(r.Z);
  j["K"] = mat_json(r.K);
  j["G"] = mat_json(r.G);
  j["status"] = to_string(r.report.status);
  j["iterations"] = r.report.iterations;
  return j;
}

nlohmann::json to_json(const CertificationReport& report) {
  nlohmann::json j;
  j["passed"] = report.passed();
  nlohmann::json checks = nlohmann::json::array();
  for (const auto& c : report.checks) {
    nlohmann::json w = nlohmann::json::array();
    for (const auto& v : c.witnesses) w.push_back(mat_json(Mat(v.transpose())).at(0));
    checks.push_back({{"name", c.name},
                      {"passed", c.passed},
                      {"samples", c.samples},
                      {"violations", c.violations},
                      {"worst", c.worst},
                      {"witnesses", w},
                      {"detail", c.detail}});
  }
  j["checks"] = checks;
  return j;
}

SynthesisResult result_from_json(const nlohmann::json& j) {
  try {
    SynthesisResult r;
    r.mu = j.at("mu").get<double>();
    r.epsilon = j.at("epsilon").get<double>();
    if (j.contains("eta") && !j["eta"].is_null()) r.eta = j["eta"].get<double>();
    r.objective = j.value("objective", 0.0);
    r.W = SymMatrix(json_mat(j.at("W")));
    r.S = json_mat(j.at("S")).diagonal();
    r.Y = json_mat(j.at("Y"));
    r.Z = json_mat(j.at("Z"));
    r.K = json_mat(j.at("K"));
    r.G = json_mat(j.at("G"));
    r.report.status = SolveStatus::Optimal;
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("result json: ") + e.what());
  }
}

void write_mu_table_csv(std::ostream& out, const std::vector<MuRow>& table) {
  out << "mu,status,accepted,objective,epsilon,trace_W,eta\n";
  for (const auto& r : table) {
    out << format_real(r.mu) << ',' << to_string(r.status) << ',' << (r.accepted ? 1 : 0) << ','
        << format_real(r.objective) << ',' << format_real(r.epsilon) << ',' << format_real(r.trace_W) << ',';
    if (r.eta) out << format_real(*r.eta);
    out << '\n';
  }
}

}  // namespace satlmi
