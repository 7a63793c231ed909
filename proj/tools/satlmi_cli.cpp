#include "satlmi/data.hpp"
#include "satlmi/errors.hpp"
#include "satlmi/experiment.hpp"
#include "satlmi/qmi.hpp"
#include "satlmi/synthesis.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace satlmi;

namespace {

enum Exit { kOk = 0, kInfeasible = 2, kInvalid = 3, kNumerical = 4 };

struct Options {
  std::string plant_file;
  std::string data_file;
  std::vector<double> lambda;
  std::vector<double> mu;
  std::string mu_grid;
  std::vector<int> p;
  std::uint64_t seed = 1;
  double alpha1 = 1.0;
  double alpha2 = 1e-3;
  std::string out;
  std::string format = "json";
  double delta_scale = 0.05;
  std::vector<double> u_range;
  int jobs = 1;
  int trajectories = 40;
  int steps = 200;
  int samples = 10000;
  std::string result_file;
  std::string instance_file;
  int count = 20;
  std::string path = "both";
  bool full_grid = false;
};

Plant plant_of(const Options& o) { return o.plant_file.empty() ? Plant::benchmark() : load_plant(o.plant_file); }

double single_lambda(const Options& o, double fallback) {
  if (o.lambda.empty()) return fallback;
  if (o.lambda.size() != 1) throw InputError("--lambda takes a single value here");
  return o.lambda.front();
}

int single_p(const Options& o) {
  if (o.p.empty()) return 20;
  if (o.p.size() != 1) throw InputError("--p takes a single value here");
  return o.p.front();
}

std::vector<double> parse_grid(const std::string& spec) {
  std::vector<double> parts;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ':')) {
    try {
      std::size_t used = 0;
      parts.push_back(std::stod(item, &used));
      if (used != item.size()) throw InputError("bad number");
    } catch (const std::exception&) {
      throw InputError("--mu-grid expects a:b:step, got '" + spec + "'");
    }
  }
  if (parts.size() != 3) throw InputError("--mu-grid expects a:b:step, got '" + spec + "'");
  return mu_range(parts[0], parts[1], parts[2]);
}

std::vector<double> mus_of(const Options& o) {
  if (!o.mu.empty() && !o.mu_grid.empty()) throw InputError("use either --mu or --mu-grid");
  if (!o.mu_grid.empty()) return parse_grid(o.mu_grid);
  if (!o.mu.empty()) return o.mu;
  return default_mu_grid();
}

NoiseModel noise_of(double lambda, Eigen::Index nx, double scale) {
  return {lambda, SymMatrix(Mat(scale * Mat::Identity(nx, nx)))};
}

SynthesisConfig config_of(const Options& o, double lambda) {
  SynthesisConfig cfg;
  cfg.mu_grid = mus_of(o);
  cfg.alpha1 = o.alpha1;
  cfg.alpha2 = o.alpha2;
  cfg.lambda = lambda;
  cfg.jobs = o.jobs;
  cfg.validate();
  return cfg;
}

fs::path out_dir(const Options& o) {
  const fs::path dir = o.out;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw InputError("cannot create " + dir.string() + ": " + ec.message());
  return dir;
}

void write_text(const fs::path& file, const std::string& text) {
  std::ofstream out(file);
  if (!out) throw InputError("cannot write " + file.string());
  out << text;
}

void print_line(const SynthesisResult& r, const CertificationReport& cert) {
  std::cout << "mu=" << r.mu << " epsilon=" << r.epsilon << " trace_W=" << r.W.mat().trace();
  if (r.eta) std::cout << " eta=" << *r.eta;
  std::cout << " objective=" << r.objective << " certified=" << (cert.passed() ? "yes" : "no") << '\n';
  std::cout << "K = " << r.K.format(Eigen::IOFormat(Eigen::FullPrecision, 0, ", ", "; ", "", "", "[", "]")) << '\n';
}

int emit_synthesis(const Options& o, const SynthesisOutcome& out, const CertificationReport& cert) {
  nlohmann::json j = to_json(*out.best);
  j["certification"] = to_json(cert);
  if (o.out.empty()) {
    std::cout << j.dump(2) << '\n';
    return kOk;
  }
  const fs::path dir = out_dir(o);
  write_text(dir / "result.json", j.dump(2) + "\n");
  std::ofstream csv(dir / "mu_table.csv");
  write_mu_table_csv(csv, out.table);
  print_line(*out.best, cert);
  return kOk;
}

int cmd_synth_model(const Options& o) {
  const Plant plant = plant_of(o);
  const double lambda = single_lambda(o, 0.05);
  const SynthesisOutcome out = synthesize(plant, config_of(o, lambda));
  const CertificationReport cert =
      certify(*out.best, plant, noise_of(lambda, plant.nx(), o.delta_scale), o.samples, o.seed);
  return emit_synthesis(o, out, cert);
}

int cmd_synth_data(const Options& o) {
  const Plant plant = plant_of(o);
  const double lambda = single_lambda(o, 0.05);
  const NoiseModel noise = noise_of(lambda, plant.nx(), o.delta_scale);
  DataCollection data;
  if (!o.data_file.empty()) {
    data = load_data(o.data_file);
  } else {
    std::optional<Vec> range;
    if (!o.u_range.empty()) range = Eigen::Map<const Vec>(o.u_range.data(), static_cast<Eigen::Index>(o.u_range.size()));
    data = generate_data(plant, noise, single_p(o), o.seed, range).data;
  }
  if (data.nx() != plant.nx() || data.nu() != plant.nu()) throw InputError("data do not match the plant dimensions");
  const SynthesisOutcome out = synthesize(data, noise, plant.u_bar, config_of(o, lambda));
  // Certification runs against the plant file (the benchmark by default).
  const CertificationReport cert = certify(*out.best, plant, noise, o.samples, o.seed);
  return emit_synthesis(o, out, cert);
}

int cmd_gen_data(const Options& o) {
  const Plant plant = plant_of(o);
  const double lambda = single_lambda(o, 0.05);
  std::optional<Vec> range;
  if (!o.u_range.empty()) range = Eigen::Map<const Vec>(o.u_range.data(), static_cast<Eigen::Index>(o.u_range.size()));
  const GeneratedData g = generate_data(plant, noise_of(lambda, plant.nx(), o.delta_scale), single_p(o), o.seed, range);
  if (o.out.empty()) {
    write_data(std::cout, g.data);
    return kOk;
  }
  const fs::path dir = out_dir(o);
  save_data((dir / "data.txt").string(), g.data);
  save_matrix((dir / "omega.txt").string(), g.omega);
  const Informativity inf = informativity(g.data);
  std::cout << "p=" << g.data.p() << " informative=" << (inf.informative ? "yes" : "no")
            << " min_singular=" << inf.min_singular << '\n';
  return kOk;
}

int cmd_simulate(const Options& o) {
  const Plant plant = plant_of(o);
  const double lambda = single_lambda(o, 0.05);
  SynthesisResult r;
  if (!o.result_file.empty()) {
    std::ifstream in(o.result_file);
    if (!in) throw InputError("cannot open " + o.result_file);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw InputError(std::string("result file: ") + e.what());
    }
    r = result_from_json(j);
    if (r.K.cols() != plant.nx() || r.K.rows() != plant.nu()) throw InputError("controller does not match the plant");
  } else {
    r = *synthesize(plant, config_of(o, lambda)).best;
  }
  Rng rng = Rng(o.seed).split("simulate");
  const auto trajs = boundary_trajectories(r, plant, lambda, o.trajectories, o.steps, rng);
  int converged = 0;
  for (const auto& t : trajs) {
    const AttractorEntry e = attractor_entry(t, r.attractor(), 1e-9);
    converged += e.entered && e.stayed ? 1 : 0;
  }
  std::cout << "trajectories=" << trajs.size() << " converged=" << converged << '\n';
  if (o.out.empty()) return kOk;

  ExperimentReport rep;
  rep.seed = o.seed;
  CellResult c;
  c.id = "simulate";
  c.path = "model";
  c.lambda = lambda;
  c.mu = r.mu;
  c.feasible = true;
  c.status = "Optimal";
  c.result = r;
  c.trajectories = trajs;
  rep.cells.push_back(std::move(c));
  emit_figures(rep, out_dir(o), parse_format(o.format));
  return kOk;
}

int cmd_sweep(const Options& o) {
  const Plant plant = plant_of(o);
  ExperimentPlan plan;
  if (!o.lambda.empty()) plan.lambdas = o.lambda;
  if (!o.mu.empty() || !o.mu_grid.empty()) plan.mus = mus_of(o);
  if (!o.p.empty()) plan.p_values = o.p;
  plan.full_grid = o.full_grid;
  plan.seed = o.seed;
  plan.alpha1 = o.alpha1;
  plan.alpha2 = o.alpha2;
  plan.trajectories = o.trajectories;
  plan.steps = o.steps;
  plan.delta_scale = o.delta_scale;
  plan.jobs = o.jobs;
  plan.cert_samples = o.samples;
  plan.model = o.path != "data";
  plan.data = o.path != "model";
  if (!o.u_range.empty()) plan.u_range = Eigen::Map<const Vec>(o.u_range.data(), static_cast<Eigen::Index>(o.u_range.size()));
  const FigureFormat fmt = parse_format(o.format);

  const ExperimentReport rep = run_experiment(plan, plant);
  int feasible = 0;
  for (const auto& c : rep.cells) {
    feasible += c.feasible ? 1 : 0;
    std::cout << c.id << ' ' << c.status;
    if (c.result) {
      std::cout << " epsilon=" << c.result->epsilon << " basin_area=" << c.basin_area
                << " attractor_area=" << c.attractor_area << " converged=" << (c.all_converged ? "all" : "no")
                << " certified=" << (c.certification && c.certification->passed() ? "yes" : "no");
    }
    std::cout << '\n';
  }
  if (!o.out.empty()) {
    const fs::path dir = out_dir(o);
    write_summary(rep, dir / "summary.json");
    if (fmt != FigureFormat::Json) emit_figures(rep, dir, fmt);
  } else {
    std::cout << rep.summary().dump(2) << '\n';
  }
  return feasible == 0 && !rep.cells.empty() ? kInfeasible : kOk;
}

int cmd_lemma_check(const Options& o) {
  Rng rng = Rng(o.seed).split("lemma-check");
  const int samples = std::max(o.samples, 1);
  auto report = [&](const std::string& label, const RelaxationInstance& inst) {
    const EquivalenceReport r = check_equivalence(inst, samples, rng);
    std::cout << label << " dims=" << inst.n1() << "," << inst.n2() << "," << inst.n3()
              << " ii=" << (r.ii_feasible ? "feasible" : "infeasible");
    if (r.eta_star) std::cout << " eta=" << *r.eta_star;
    std::cout << " relaxed_min_eig=" << r.relaxed_min_eig << " samples=" << r.samples
              << " i_violations=" << r.i_violations.size() << " worst_min_eig=" << r.worst_min_eig << '\n';
    return r;
  };
  if (!o.instance_file.empty()) {
    std::ifstream in(o.instance_file);
    if (!in) throw InputError("cannot open " + o.instance_file);
    const EquivalenceReport r = report(o.instance_file, read_instance(in));
    return r.ii_feasible && !r.i_violations.empty() ? kNumerical : kOk;
  }
  int unsound = 0;
  for (int k = 0; k < o.count; ++k) {
    auto dim = [&] { return static_cast<Eigen::Index>(1 + rng.next() % 4); };
    const Eigen::Index n1 = dim(), n2 = dim(), n3 = dim();
    const RelaxationInstance inst = random_instance(rng, n1, n2, n3);
    const EquivalenceReport r = report("instance_" + std::to_string(k), inst);
    if (r.ii_feasible && !r.i_violations.empty()) ++unsound;
    if (!o.out.empty()) {
      std::ofstream f(out_dir(o) / ("instance_" + std::to_string(k) + ".txt"));
      write_instance(f, inst);
    }
  }
  std::cout << "unsound=" << unsound << '\n';
  return unsound ? kNumerical : kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Saturating state-feedback synthesis from models or noisy data"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "key=value file mirroring the flags (flags win)");

  Options o;
  app.add_option("--plant", o.plant_file, "plant file (A, B, u_bar); default: built-in benchmark");
  app.add_option("--data", o.data_file, "data file (Xplus, X, U)");
  app.add_option("--lambda", o.lambda, "noise energy bound; comma list for sweep")->delimiter(',');
  app.add_option("--mu", o.mu, "mu values, comma separated")->delimiter(',');
  app.add_option("--mu-grid", o.mu_grid, "mu grid a:b:step");
  app.add_option("--p", o.p, "number of samples; comma list for sweep")->delimiter(',');
  app.add_option("--seed", o.seed, "random seed");
  app.add_option("--alpha1", o.alpha1, "weight on epsilon");
  app.add_option("--alpha2", o.alpha2, "weight on tr(W)");
  app.add_option("--out", o.out, "output directory");
  app.add_option("--format", o.format, "csv|svg|json")->check(CLI::IsMember({"csv", "svg", "json"}));
  app.add_option("--delta-scale", o.delta_scale, "delta_omega = scale * I");
  app.add_option("--u-range", o.u_range, "input sampling range per channel")->delimiter(',');
  app.add_option("--jobs", o.jobs, "worker threads");
  app.add_option("--trajectories", o.trajectories, "boundary trajectories per cell");
  app.add_option("--steps", o.steps, "steps per trajectory");
  app.add_option("--samples", o.samples, "certification / lemma samples");
  app.add_option("--result", o.result_file, "result.json with the controller to simulate");
  app.add_option("--instance", o.instance_file, "relaxation instance file for lemma-check");
  app.add_option("--count", o.count, "random instances for lemma-check");
  app.add_option("--path", o.path, "sweep paths: model|data|both")->check(CLI::IsMember({"model", "data", "both"}));
  app.add_flag("--full-grid", o.full_grid, "sweep: best over the default mu grid per (lambda, p)");

  auto* synth_model = app.add_subcommand("synth-model", "model-based synthesis over a mu grid");
  auto* synth_data = app.add_subcommand("synth-data", "data-driven synthesis over a mu grid");
  auto* gen_data = app.add_subcommand("gen-data", "generate a noisy data collection");
  auto* simulate_cmd = app.add_subcommand("simulate", "boundary-initialized simulations");
  auto* sweep = app.add_subcommand("sweep", "lambda x mu [x p] experiment with figures");
  auto* lemma = app.add_subcommand("lemma-check", "check the relaxation on instances");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInvalid;
  }

  try {
    if (synth_model->parsed()) return cmd_synth_model(o);
    if (synth_data->parsed()) return cmd_synth_data(o);
    if (gen_data->parsed()) return cmd_gen_data(o);
    if (simulate_cmd->parsed()) return cmd_simulate(o);
    if (sweep->parsed()) return cmd_sweep(o);
    if (lemma->parsed()) return cmd_lemma_check(o);
  } catch (const AllInfeasible& e) {
    std::cerr << "infeasible: " << e.what() << '\n';
    return kInfeasible;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const SingularBlock& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const Error& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kInvalid;
  }
  return kInvalid;
}
