#pragma once

#include "satlmi/data.hpp"
#include "satlmi/synthesis.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace satlmi {

struct ExperimentPlan {
  std::vector<double> lambdas{0.01, 0.05, 0.1};
  std::vector<double> mus{0.08, 0.3, 0.6};
  /// Sweep the default mu grid per (lambda, p) and keep the best instead of
  /// one cell per mu.
  bool full_grid = false;
  std::vector<int> p_values{5, 20};
  std::uint64_t seed = 1;
  int trajectories = 40;
  int steps = 200;
  double alpha1 = 1.0;
  double alpha2 = 1e-3;
  bool model = true;
  bool data = true;
  double delta_scale = 0.05;  // delta_omega = delta_scale * I
  std::optional<Vec> u_range;
  int jobs = 1;
  int cert_samples = 10000;
  SolveOptions solver;

  void validate() const;
};

struct CellResult {
  std::string id;
  std::string path;  // "model" or "data"
  double lambda = 0.0;
  double mu = 0.0;
  int p = 0;  // 0 on the model path
  bool feasible = false;
  std::string status;
  std::string error;
  std::optional<SynthesisResult> result;
  std::vector<MuRow> table;
  std::optional<CertificationReport> certification;
  std::vector<Trajectory> trajectories;
  std::vector<AttractorEntry> entries;
  bool all_converged = false;
  double basin_area = 0.0;
  double attractor_area = 0.0;
};

struct ExperimentReport {
  std::uint64_t seed = 0;
  std::vector<CellResult> cells;

  nlohmann::json summary() const;
  const CellResult* find(const std::string& id) const;
};

/// "model_l0.05_mu0.3", "data_p20_l0.05_mu0.3"; mu is "best" for full-grid
/// cells.
std::string cell_id(const std::string& path, double lambda, std::optional<double> mu, int p);

/// One job per cell on a pool of plan.jobs workers. Data are generated once
/// per (lambda, p) from a stream derived from the seed and shared by the mu
/// cells. Infeasible cells are recorded, not fatal.
ExperimentReport run_experiment(const ExperimentPlan& plan, const Plant& plant);

/// Boundary-initialized simulations of a synthesized controller with noise
/// on the sphere of radius sqrt(lambda).
std::vector<Trajectory> boundary_trajectories(const SynthesisResult& result, const Plant& plant, double lambda,
                                              int count, int steps, Rng& rng);

enum class FigureFormat { Csv, Svg, Json };

FigureFormat parse_format(const std::string& s);

/// Per feasible cell: <id>_basin.csv, <id>_attractor.csv and
/// <id>_traj_NN.csv (csv), or <id>.svg with one polyline per ellipse and
/// trajectory (svg). json writes only summary.json. Returns the written
/// paths; an empty report writes nothing.
std::vector<std::filesystem::path> emit_figures(const ExperimentReport& report, const std::filesystem::path& dir,
                                                FigureFormat format);

void write_summary(const ExperimentReport& report, const std::filesystem::path& file);

/// Shared SVG rendering of ellipses and trajectories (2-D).
std::string render_svg(const Ellipsoid& basin, const Ellipsoid& attractor, const std::vector<Trajectory>& trajs,
                       int ellipse_points = 200);

}  // namespace satlmi
