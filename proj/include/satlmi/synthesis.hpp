#pragma once

#include "satlmi/data.hpp"
#include "satlmi/saturated_sys.hpp"
#include "satlmi/sdp.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace satlmi {

/// 0.05, 0.10, ..., 0.95.
std::vector<double> default_mu_grid();
/// a, a+step, ... up to b inclusive (within step/1e6).
std::vector<double> mu_range(double a, double b, double step);

struct SynthesisConfig {
  std::vector<double> mu_grid = default_mu_grid();
  double alpha1 = 1.0;
  double alpha2 = 1e-3;
  double lambda = 0.0;
  SolveOptions solver;
  double epsilon_lower = 1.0 + 1e-6;
  double eta_lower = 1e-9;
  /// Upper bound on epsilon, imposed only when lambda == 0 (epsilon drops
  /// out of every constraint there).
  double epsilon_cap = 1e4;
  int jobs = 1;

  void validate() const;
};

struct SynthesisResult {
  SymMatrix W;
  Vec S;  // diagonal of S
  Mat Y;
  Mat Z;
  double epsilon = 0.0;
  std::optional<double> eta;
  double mu = 0.0;
  Mat K;  // Y W^{-1}
  Mat G;  // Z W^{-1}
  double objective = 0.0;
  SolveReport report;

  SymMatrix P() const;  // W^{-1}
  Ellipsoid basin() const { return {P(), 1.0}; }
  Ellipsoid attractor() const { return {P(), epsilon}; }
  Controller controller() const { return {K, G}; }
};

struct MuRow {
  double mu = 0.0;
  SolveStatus status = SolveStatus::NumericalError;
  bool accepted = false;
  double objective = 0.0;
  double epsilon = 0.0;
  double trace_W = 0.0;
  std::optional<double> eta;
};

struct SynthesisOutcome {
  std::optional<SynthesisResult> best;
  std::vector<MuRow> table;
};

/// eps, [eta], W (sym nx), S (diag nu), Y and Z (nu x nx).
VarSpace make_var_space(Eigen::Index nx, Eigen::Index nu, bool with_eta);

/// [[(1-mu) W, Y'+Z', W A'+Y' B'], [*, 2S, S B'], [*, *, W - (lambda eps/mu) I]].
LmiConstraint build_phi(const Plant& plant, const VarSpace& vars, double mu, double lambda);
/// [[W, Z_(i)'], [*, u_bar_i^2]] for every input.
std::vector<LmiConstraint> build_inclusion(const VarSpace& vars, const Vec& u_bar);
/// The data-driven matrix with block sizes (nx, nu, nx, nx, nu).
LmiConstraint build_psi(const DataCollection& data, const NoiseModel& noise, const VarSpace& vars, double mu);

/// The fixed-mu problems, objective alpha1 eps + alpha2 tr(W).
LmiProblem model_problem(const Plant& plant, double mu, const SynthesisConfig& cfg);
LmiProblem data_problem(const DataCollection& data, const NoiseModel& noise, const Vec& u_bar, double mu,
                        const SynthesisConfig& cfg);

/// Extracts W, S, Y, Z, eps, eta and K, G from a solved problem.
SynthesisResult extract_result(const LmiProblem& problem, const SolveReport& report, double mu);

/// Solves every grid point and keeps the accepted result with the largest
/// objective (ties: smaller mu). Never throws for infeasibility.
SynthesisOutcome sweep_mu(const Plant& plant, const SynthesisConfig& cfg);
SynthesisOutcome sweep_mu(const DataCollection& data, const NoiseModel& noise, const Vec& u_bar,
                          const SynthesisConfig& cfg);

/// sweep_mu, throwing AllInfeasible when no grid point is accepted
/// (NumericalError when no grid point was even decided). The data path
/// throws InputError for non-informative data.
SynthesisOutcome synthesize(const Plant& plant, const SynthesisConfig& cfg);
SynthesisOutcome synthesize(const DataCollection& data, const NoiseModel& noise, const Vec& u_bar,
                            const SynthesisConfig& cfg);

struct CheckResult {
  std::string name;
  bool passed = true;
  int samples = 0;
  int violations = 0;
  /// Largest violation measure seen (<= 0 when every sample passes).
  double worst = 0.0;
  /// Worst samples; [x; w] stacked for the checks that draw noise.
  std::vector<Vec> witnesses;
  std::string detail;
};

struct CertificationReport {
  std::vector<CheckResult> checks;

  bool passed() const;
  const CheckResult* find(const std::string& name) const;
};

/// Property battery on the true plant: inclusion, sector, decrease,
/// invariance, nesting, plus convergence when lambda == 0. Noise is drawn
/// half on the sphere of radius sqrt(lambda), half in the ball.
CertificationReport certify(const SynthesisResult& result, const Plant& plant, const NoiseModel& noise,
                            int samples, std::uint64_t seed = 1);

nlohmann::json to_json(const SynthesisResult& result);
nlohmann::json to_json(const CertificationReport& report);
SynthesisResult result_from_json(const nlohmann::json& j);
/// Header "mu,status,accepted,objective,epsilon,trace_W,eta".
void write_mu_table_csv(std::ostream& out, const std::vector<MuRow>& table);

}  // namespace satlmi
