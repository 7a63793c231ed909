#include "satlmi/experiment.hpp"

#include "satlmi/errors.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

namespace satlmi {

void ExperimentPlan::validate() const {
  if (lambdas.empty()) throw InputError("plan: no lambda values");
  if (!full_grid && mus.empty()) throw InputError("plan: no mu values");
  if (data && p_values.empty()) throw InputError("plan: no p values");
  if (!model && !data) throw InputError("plan: neither model nor data path selected");
  for (double l : lambdas)
    if (!(l >= 0.0) || !std::isfinite(l)) throw InputError("plan: lambda must be nonnegative");
  for (double mu : mus)
    if (!(mu > 0.0 && mu < 1.0)) throw InputError("plan: mu must lie strictly inside (0, 1)");
  for (int p : p_values)
    if (p < 1) throw InputError("plan: p must be at least 1");
  if (trajectories < 0 || steps < 0) throw InputError("plan: negative trajectory or step count");
  if (!(alpha1 > 0.0) || !(alpha2 > 0.0)) throw InputError("plan: alpha1 and alpha2 must be positive");
  if (!(delta_scale > 0.0)) throw InputError("plan: delta scale must be positive");
  if (cert_samples < 1) throw InputError("plan: cert_samples must be positive");
}

namespace {

std::string num(double v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

}  // namespace

std::string cell_id(const std::string& path, double lambda, std::optional<double> mu, int p) {
  std::string id = path;
  if (p > 0) id += "_p" + std::to_string(p);
  id += "_l" + num(lambda);
  id += "_mu" + (mu ? num(*mu) : std::string("best"));
  return id;
}

std::vector<Trajectory> boundary_trajectories(const SynthesisResult& result, const Plant& plant, double lambda,
                                              int count, int steps, Rng& rng) {
  const Eigen::Index nx = plant.nx();
  const std::vector<Vec> starts = ellipsoid_boundary_points(result.basin(), count, &rng);
  std::vector<Trajectory> out;
  out.reserve(starts.size());
  for (const Vec& x0 : starts) {
    std::vector<Vec> noise;
    noise.reserve(static_cast<std::size_t>(steps));
    for (int k = 0; k < steps; ++k)
      noise.push_back(lambda > 0.0 ? rng.on_sphere(nx, std::sqrt(lambda)) : Vec(Vec::Zero(nx)));
    out.push_back(simulate(plant, result.K, x0, noise, steps, lambda));
  }
  return out;
}

namespace {

struct CellJob {
  CellResult cell;
  std::optional<double> mu;  // empty: full grid
  const DataCollection* data = nullptr;
};

NoiseModel noise_for(const ExperimentPlan& plan, double lambda, Eigen::Index nx) {
  return {lambda, SymMatrix(Mat(plan.delta_scale * Mat::Identity(nx, nx)))};
}

void run_cell(CellJob& job, const ExperimentPlan& plan, const Plant& plant) {
  CellResult& c = job.cell;
  const NoiseModel noise = noise_for(plan, c.lambda, plant.nx());
  SynthesisConfig cfg;
  cfg.mu_grid = job.mu ? std::vector<double>{*job.mu} : default_mu_grid();
  cfg.alpha1 = plan.alpha1;
  cfg.alpha2 = plan.alpha2;
  cfg.lambda = c.lambda;
  cfg.solver = plan.solver;
  try {
    SynthesisOutcome out;
    if (job.data) {
      if (!informativity(*job.data).informative) {
        c.status = "NotInformative";
        return;
      }
      out = sweep_mu(*job.data, noise, plant.u_bar, cfg);
    } else {
      out = sweep_mu(plant, cfg);
    }
    c.table = out.table;
    if (!out.best) {
      c.status = out.table.size() == 1 ? to_string(out.table.front().status) : "AllInfeasible";
      return;
    }
    c.feasible = true;
    c.status = "Optimal";
    c.result = std::move(out.best);
    c.mu = c.result->mu;
    const Rng root = Rng(plan.seed).split(c.id);
    c.certification = certify(*c.result, plant, noise, plan.cert_samples, root.split("certify").seed());
    Rng traj_rng = root.split("trajectories");
    c.trajectories = boundary_trajectories(*c.result, plant, c.lambda, plan.trajectories, plan.steps, traj_rng);
    const Ellipsoid attractor = c.result->attractor();
    c.all_converged = true;
    for (const auto& t : c.trajectories) {
      c.entries.push_back(attractor_entry(t, attractor, 1e-9));
      c.all_converged = c.all_converged && c.entries.back().entered && c.entries.back().stayed;
    }
    c.basin_area = c.result->basin().volume();
    c.attractor_area = attractor.volume();
  } catch (const Error& e) {
    c.feasible = false;
    c.status = "Error";
    c.error = e.what();
  }
}

}  // namespace

ExperimentReport run_experiment(const ExperimentPlan& plan, const Plant& plant) {
  plan.validate();
  plant.validate();
  ExperimentReport report;
  report.seed = plan.seed;

  const std::vector<std::optional<double>> mus = [&] {
    std::vector<std::optional<double>> m;
    if (plan.full_grid) {
      m.push_back(std::nullopt);
    } else {
      for (double mu : plan.mus) m.push_back(mu);
    }
    return m;
  }();

  // Data first, sequentially: one collection per (lambda, p).
  std::map<std::pair<double, int>, DataCollection> collections;
  const Rng root(plan.seed);
  if (plan.data) {
    for (double lambda : plan.lambdas)
      for (int p : plan.p_values) {
        const std::string stream = "data_p" + std::to_string(p) + "_l" + num(lambda);
        collections[{lambda, p}] =
            generate_data(plant, noise_for(plan, lambda, plant.nx()), p, root.split(stream).seed(), plan.u_range)
                .data;
      }
  }

  std::vector<CellJob> jobs;
  for (double lambda : plan.lambdas) {
    if (plan.model)
      for (const auto& mu : mus) {
        CellJob j;
        j.cell.path = "model";
        j.cell.lambda = lambda;
        j.cell.mu = mu.value_or(0.0);
        j.cell.id = cell_id("model", lambda, mu, 0);
        j.mu = mu;
        jobs.push_back(std::move(j));
      }
    if (plan.data)
      for (int p : plan.p_values)
        for (const auto& mu : mus) {
          CellJob j;
          j.cell.path = "data";
          j.cell.lambda = lambda;
          j.cell.mu = mu.value_or(0.0);
          j.cell.p = p;
          j.cell.id = cell_id("data", lambda, mu, p);
          j.mu = mu;
          j.data = &collections.at({lambda, p});
          jobs.push_back(std::move(j));
        }
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) run_cell(jobs[i], plan, plant);
  };
  const int workers = std::clamp(plan.jobs, 1, std::max(1, static_cast<int>(jobs.size())));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  for (auto& j : jobs) report.cells.push_back(std::move(j.cell));
  return report;
}

const CellResult* ExperimentReport::find(const std::string& id) const {
  for (const auto& c : cells)
    if (c.id == id) return &c;
  return nullptr;
}

nlohmann::json ExperimentReport::summary() const {
  nlohmann::json j;
  j["seed"] = seed;
  j["rng_version"] = Rng::kVersion;
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& c : cells) {
    nlohmann::json e;
    e["id"] = c.id;
    e["path"] = c.path;
    e["lambda"] = c.lambda;
    e["mu"] = c.mu;
    if (c.p > 0) e["p"] = c.p;
    e["feasible"] = c.feasible;
    e["status"] = c.status;
    if (!c.error.empty()) e["error"] = c.error;
    if (c.result) {
      const auto& r = *c.result;
      e["result"] = to_json(r);
      e["trace_W"] = r.W.mat().trace();
      e["basin_area"] = c.basin_area;
      e["attractor_area"] = c.attractor_area;
      e["all_converged"] = c.all_converged;
      int converged = 0;
      for (const auto& en : c.entries) converged += en.entered && en.stayed ? 1 : 0;
      e["converged"] = converged;
      e["trajectories"] = c.trajectories.size();
    }
    if (c.certification) {
      nlohmann::json checks = nlohmann::json::object();
      for (const auto& ch : c.certification->checks)
        checks[ch.name] = {{"passed", ch.passed}, {"violations", ch.violations}, {"worst", ch.worst}};
      e["certification"] = {{"passed", c.certification->passed()}, {"checks", checks}};
    }
    nlohmann::json table = nlohmann::json::array();
    for (const auto& row : c.table)
      table.push_back({{"mu", row.mu},
                       {"status", to_string(row.status)},
                       {"accepted", row.accepted},
                       {"objective", row.objective},
                       {"epsilon", row.epsilon},
                       {"trace_W", row.trace_W}});
    e["mu_table"] = table;
    arr.push_back(std::move(e));
  }
  j["cells"] = arr;
  return j;
}

FigureFormat parse_format(const std::string& s) {
  if (s == "csv") return FigureFormat::Csv;
  if (s == "svg") return FigureFormat::Svg;
  if (s == "json") return FigureFormat::Json;
  throw InputError("unknown format '" + s + "' (csv, svg, json)");
}

void write_summary(const ExperimentReport& report, const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw InputError("cannot write " + file.string());
  out << report.summary().dump(2) << '\n';
}

namespace {

std::vector<Vec> ellipse_polyline(const Ellipsoid& e, int count) {
  std::vector<Vec> pts = ellipsoid_boundary_points(e, count, nullptr);
  if (!pts.empty()) pts.push_back(pts.front());
  return pts;
}

}  // namespace

std::string render_svg(const Ellipsoid& basin, const Ellipsoid& attractor, const std::vector<Trajectory>& trajs,
                       int ellipse_points) {
  if (basin.M.dim() != 2) throw ShapeError("render_svg: 2-D only");
  const auto b = ellipse_polyline(basin, ellipse_points);
  const auto a = ellipse_polyline(attractor, ellipse_points);
  double lo_x = std::numeric_limits<double>::infinity(), hi_x = -lo_x, lo_y = lo_x, hi_y = -lo_x;
  auto grow = [&](const Vec& v) {
    lo_x = std::min(lo_x, v(0));
    hi_x = std::max(hi_x, v(0));
    lo_y = std::min(lo_y, v(1));
    hi_y = std::max(hi_y, v(1));
  };
  for (const auto& v : b) grow(v);
  for (const auto& t : trajs)
    for (const auto& v : t) grow(v);
  const double pad = 0.05 * std::max(hi_x - lo_x, hi_y - lo_y);
  lo_x -= pad;
  hi_x += pad;
  lo_y -= pad;
  hi_y += pad;
  const double width = 600.0, height = width * (hi_y - lo_y) / (hi_x - lo_x);

  std::ostringstream s;
  s << std::setprecision(6);
  auto poly = [&](const std::vector<Vec>& pts, const char* style) {
    s << "<polyline fill=\"none\" " << style << " points=\"";
    for (std::size_t k = 0; k < pts.size(); ++k) {
      const double px = (pts[k](0) - lo_x) / (hi_x - lo_x) * width;
      const double py = (hi_y - pts[k](1)) / (hi_y - lo_y) * height;
      s << (k ? " " : "") << px << ',' << py;
    }
    s << "\"/>\n";
  };
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\" viewBox=\"0 0 "
    << width << ' ' << height << "\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (const auto& t : trajs) poly(t, "stroke=\"#d62728\" stroke-width=\"0.6\" stroke-opacity=\"0.7\"");
  poly(b, "stroke=\"#1f77b4\" stroke-width=\"1.5\" stroke-dasharray=\"6,4\"");
  poly(a, "stroke=\"black\" stroke-width=\"1.5\"");
  s << "</svg>\n";
  return s.str();
}

std::vector<std::filesystem::path> emit_figures(const ExperimentReport& report, const std::filesystem::path& dir,
                                                FigureFormat format) {
  std::vector<std::filesystem::path> written;
  if (report.cells.empty()) return written;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw InputError("cannot create " + dir.string() + ": " + ec.message());
  auto open = [&](const std::filesystem::path& p) {
    std::ofstream out(p);
    if (!out) throw InputError("cannot write " + p.string());
    written.push_back(p);
    return out;
  };

  if (format == FigureFormat::Json) {
    write_summary(report, dir / "summary.json");
    written.push_back(dir / "summary.json");
    return written;
  }
  for (const auto& c : report.cells) {
    if (!c.result) continue;
    const Ellipsoid basin = c.result->basin(), attractor = c.result->attractor();
    const bool planar = basin.M.dim() == 2;
    if (format == FigureFormat::Csv) {
      if (planar) {
        auto b = open(dir / (c.id + "_basin.csv"));
        write_ellipse_csv(b, basin, 200);
        auto a = open(dir / (c.id + "_attractor.csv"));
        write_ellipse_csv(a, attractor, 200);
      }
      for (std::size_t k = 0; k < c.trajectories.size(); ++k) {
        std::ostringstream name;
        name << c.id << "_traj_" << std::setw(2) << std::setfill('0') << k << ".csv";
        auto t = open(dir / name.str());
        write_trajectory_csv(t, c.trajectories[k], basin.M);
      }
    } else if (planar) {
      auto s = open(dir / (c.id + ".svg"));
      s << render_svg(basin, attractor, c.trajectories, 200);
    }
  }
  return written;
}

}  // namespace satlmi
