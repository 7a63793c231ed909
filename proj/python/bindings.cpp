#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <nlohmann/json.hpp>

#include "satlmi/data.hpp"
#include "satlmi/errors.hpp"
#include "satlmi/experiment.hpp"
#include "satlmi/qmi.hpp"
#include "satlmi/synthesis.hpp"

namespace py = pybind11;
using namespace satlmi;

namespace {

py::object to_py(const nlohmann::json& j) {
  switch (j.type()) {
    case nlohmann::json::value_t::null: return py::none();
    case nlohmann::json::value_t::boolean: return py::bool_(j.get<bool>());
    case nlohmann::json::value_t::number_integer: return py::int_(j.get<long long>());
    case nlohmann::json::value_t::number_unsigned: return py::int_(j.get<unsigned long long>());
    case nlohmann::json::value_t::number_float: return py::float_(j.get<double>());
    case nlohmann::json::value_t::string: return py::str(j.get<std::string>());
    case nlohmann::json::value_t::array: {
      py::list l;
      for (const auto& e : j) l.append(to_py(e));
      return std::move(l);
    }
    case nlohmann::json::value_t::object: {
      py::dict d;
      for (const auto& [k, v] : j.items()) d[py::str(k)] = to_py(v);
      return std::move(d);
    }
    default: return py::none();
  }
}

NoiseModel noise(double lambda, Eigen::Index nx, double delta_scale) {
  return {lambda, SymMatrix(Mat(delta_scale * Mat::Identity(nx, nx)))};
}

SynthesisConfig config(double lambda, std::optional<std::vector<double>> mu_grid, double alpha1, double alpha2,
                       int jobs) {
  SynthesisConfig cfg;
  if (mu_grid) cfg.mu_grid = *mu_grid;
  cfg.lambda = lambda;
  cfg.alpha1 = alpha1;
  cfg.alpha2 = alpha2;
  cfg.jobs = jobs;
  return cfg;
}

py::list table(const std::vector<MuRow>& rows) {
  py::list l;
  for (const auto& r : rows) {
    py::dict d;
    d["mu"] = r.mu;
    d["status"] = to_string(r.status);
    d["accepted"] = r.accepted;
    d["objective"] = r.objective;
    d["epsilon"] = r.epsilon;
    d["trace_W"] = r.trace_W;
    d["eta"] = r.eta ? py::object(py::float_(*r.eta)) : py::none();
    l.append(d);
  }
  return l;
}

RelaxationInstance instance(const Mat& M1, const Mat& M2, const Mat& M3, const Mat& N1, const Mat& N2, const Mat& N3) {
  RelaxationInstance inst;
  inst.M1 = SymMatrix(M1);
  inst.M2 = M2;
  inst.M3 = SymMatrix(M3);
  inst.N.N1 = SymMatrix(N1);
  inst.N.N2 = N2;
  inst.N.N3 = SymMatrix(N3);
  inst.validate();
  return inst;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Saturating state-feedback synthesis from models or noisy data";

  static py::exception<Error> base(m, "Error", PyExc_RuntimeError);
  static py::exception<AllInfeasible> infeasible(m, "InfeasibleError", base.ptr());
  static py::exception<NumericalError> numerical(m, "NumericalError", base.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const AllInfeasible& e) {
      py::set_error(infeasible, e.what());
    } catch (const NumericalError& e) {
      py::set_error(numerical, e.what());
    } catch (const InputError& e) {
      py::set_error(PyExc_ValueError, e.what());
    } catch (const ShapeError& e) {
      py::set_error(PyExc_ValueError, e.what());
    } catch (const Error& e) {
      py::set_error(base, e.what());
    }
  });

  py::class_<Plant>(m, "Plant")
      .def(py::init([](const Mat& A, const Mat& B, const Vec& u_bar) {
             Plant p{A, B, u_bar};
             p.validate();
             return p;
           }),
           py::arg("A"), py::arg("B"), py::arg("u_bar"))
      .def_static("benchmark", &Plant::benchmark)
      .def_readonly("A", &Plant::A)
      .def_readonly("B", &Plant::B)
      .def_readonly("u_bar", &Plant::u_bar)
      .def_property_readonly("nx", &Plant::nx)
      .def_property_readonly("nu", &Plant::nu);

  py::class_<SynthesisResult>(m, "SynthesisResult")
      .def_property_readonly("W", [](const SynthesisResult& r) { return r.W.mat(); })
      .def_readonly("S", &SynthesisResult::S)
      .def_readonly("Y", &SynthesisResult::Y)
      .def_readonly("Z", &SynthesisResult::Z)
      .def_readonly("K", &SynthesisResult::K)
      .def_readonly("G", &SynthesisResult::G)
      .def_readonly("epsilon", &SynthesisResult::epsilon)
      .def_readonly("eta", &SynthesisResult::eta)
      .def_readonly("mu", &SynthesisResult::mu)
      .def_readonly("objective", &SynthesisResult::objective)
      .def_property_readonly("status", [](const SynthesisResult& r) { return to_string(r.report.status); })
      .def_property_readonly("basin_area", [](const SynthesisResult& r) { return r.basin().volume(); })
      .def_property_readonly("attractor_area", [](const SynthesisResult& r) { return r.attractor().volume(); })
      .def("to_dict", [](const SynthesisResult& r) { return to_py(to_json(r)); });

  m.def(
      "synthesize_model",
      [](const Plant& plant, double lam, std::optional<std::vector<double>> mu_grid, double alpha1, double alpha2,
         int jobs) {
        SynthesisOutcome out = synthesize(plant, config(lam, mu_grid, alpha1, alpha2, jobs));
        return py::make_tuple(*out.best, table(out.table));
      },
      py::arg("plant"), py::arg("lam"), py::arg("mu_grid") = py::none(), py::arg("alpha1") = 1.0,
      py::arg("alpha2") = 1e-3, py::arg("jobs") = 1,
      "Best result over the mu grid and the per-mu table. Raises InfeasibleError.");

  m.def(
      "synthesize_data",
      [](const Mat& Xplus, const Mat& X, const Mat& U, const Vec& u_bar, double lam, double delta_scale,
         std::optional<std::vector<double>> mu_grid, double alpha1, double alpha2, int jobs) {
        const DataCollection d{Xplus, X, U};
        SynthesisOutcome out =
            synthesize(d, noise(lam, d.nx(), delta_scale), u_bar, config(lam, mu_grid, alpha1, alpha2, jobs));
        return py::make_tuple(*out.best, table(out.table));
      },
      py::arg("Xplus"), py::arg("X"), py::arg("U"), py::arg("u_bar"), py::arg("lam"), py::arg("delta_scale") = 0.05,
      py::arg("mu_grid") = py::none(), py::arg("alpha1") = 1.0, py::arg("alpha2") = 1e-3, py::arg("jobs") = 1);

  m.def(
      "certify",
      [](const SynthesisResult& r, const Plant& plant, double lam, int samples, std::uint64_t seed,
         double delta_scale) { return to_py(to_json(certify(r, plant, noise(lam, plant.nx(), delta_scale), samples, seed))); },
      py::arg("result"), py::arg("plant"), py::arg("lam"), py::arg("samples") = 10000, py::arg("seed") = 1,
      py::arg("delta_scale") = 0.05);

  m.def(
      "generate_data",
      [](const Plant& plant, double lam, int p, std::uint64_t seed, double delta_scale) {
        const GeneratedData g = generate_data(plant, noise(lam, plant.nx(), delta_scale), p, seed);
        return py::make_tuple(g.data.Xplus, g.data.X, g.data.U, g.omega);
      },
      py::arg("plant"), py::arg("lam"), py::arg("p"), py::arg("seed") = 1, py::arg("delta_scale") = 0.05,
      "Returns (Xplus, X, U, omega).");

  m.def(
      "informativity",
      [](const Mat& Xplus, const Mat& X, const Mat& U) {
        const Informativity i = informativity(DataCollection{Xplus, X, U});
        return py::make_tuple(i.informative, i.min_singular);
      },
      py::arg("Xplus"), py::arg("X"), py::arg("U"));

  m.def(
      "simulate",
      [](const Plant& plant, const Mat& K, const Vec& x0, const Mat& noise_rows, int steps) {
        std::vector<Vec> w;
        for (Eigen::Index k = 0; k < noise_rows.rows(); ++k) w.push_back(noise_rows.row(k).transpose());
        const Trajectory t = simulate(plant, K, x0, w, steps);
        Mat out(static_cast<Eigen::Index>(t.size()), plant.nx());
        for (std::size_t k = 0; k < t.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = t[k].transpose();
        return out;
      },
      py::arg("plant"), py::arg("K"), py::arg("x0"), py::arg("noise"), py::arg("steps"),
      "Trajectory as a (steps+1) x nx array; row k of `noise` is w_k.");

  m.def("sat", &sat, py::arg("u"), py::arg("u_bar"));
  m.def("deadzone", &deadzone, py::arg("u"), py::arg("u_bar"));

  m.def(
      "relaxed_lmi",
      [](const Mat& M1, const Mat& M2, const Mat& M3, const Mat& N1, const Mat& N2, const Mat& N3, double eta) {
        return relaxed_lmi(instance(M1, M2, M3, N1, N2, N3), eta).mat();
      },
      py::arg("M1"), py::arg("M2"), py::arg("M3"), py::arg("N1"), py::arg("N2"), py::arg("N3"), py::arg("eta"));

  m.def(
      "check_equivalence",
      [](const Mat& M1, const Mat& M2, const Mat& M3, const Mat& N1, const Mat& N2, const Mat& N3, int samples,
         std::uint64_t seed) {
        Rng rng(seed);
        const EquivalenceReport r = check_equivalence(instance(M1, M2, M3, N1, N2, N3), samples, rng);
        py::dict d;
        d["ii_feasible"] = r.ii_feasible;
        d["eta_star"] = r.eta_star ? py::object(py::float_(*r.eta_star)) : py::none();
        d["relaxed_min_eig"] = r.relaxed_min_eig;
        d["violations"] = r.i_violations.size();
        d["worst_min_eig"] = r.worst_min_eig;
        d["samples"] = r.samples;
        return d;
      },
      py::arg("M1"), py::arg("M2"), py::arg("M3"), py::arg("N1"), py::arg("N2"), py::arg("N3"),
      py::arg("samples") = 1000, py::arg("seed") = 1);

  m.def(
      "run_sweep",
      [](std::vector<double> lambdas, std::vector<double> mus, std::vector<int> p_values, std::uint64_t seed,
         int trajectories, int steps, bool model, bool data, int jobs) {
        ExperimentPlan plan;
        plan.lambdas = std::move(lambdas);
        plan.mus = std::move(mus);
        plan.p_values = std::move(p_values);
        plan.seed = seed;
        plan.trajectories = trajectories;
        plan.steps = steps;
        plan.model = model;
        plan.data = data;
        plan.jobs = jobs;
        ExperimentReport rep;
        {
          py::gil_scoped_release release;
          rep = run_experiment(plan, Plant::benchmark());
        }
        return to_py(rep.summary());
      },
      py::arg("lambdas"), py::arg("mus"), py::arg("p_values") = std::vector<int>{5, 20}, py::arg("seed") = 1,
      py::arg("trajectories") = 40, py::arg("steps") = 200, py::arg("model") = true, py::arg("data") = true,
      py::arg("jobs") = 1, "Runs the benchmark sweep and returns the summary as a dict.");
}
