#include "satlmi/saturated_sys.hpp"

#include "satlmi/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>

namespace satlmi {

void Plant::validate() const {
  if (A.rows() < 1 || A.rows() != A.cols()) throw ShapeError("Plant: A must be square");
  if (B.rows() != A.rows() || B.cols() < 1) throw ShapeError("Plant: B must have as many rows as A");
  if (u_bar.size() != B.cols()) throw ShapeError("Plant: u_bar length must equal the number of inputs");
  if (!A.allFinite() || !B.allFinite() || !u_bar.allFinite()) throw InputError("Plant: non-finite entry");
  if ((u_bar.array() <= 0).any()) throw InputError("Plant: saturation levels must be positive");
}

Plant Plant::benchmark() {
  Plant p;
  p.A.resize(2, 2);
  p.A << 0.8, 0.5, -0.4, 1.2;
  p.B.resize(2, 1);
  p.B << 0.0, 1.0;
  p.u_bar = Vec::Constant(1, 5.0);
  return p;
}

void NoiseModel::validate(Eigen::Index nx) const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InputError("NoiseModel: lambda must be >= 0");
  if (delta_omega.dim() != nx) throw ShapeError("NoiseModel: delta_omega has the wrong dimension");
  if (!is_pd(delta_omega)) throw InputError("NoiseModel: delta_omega must be positive definite");
}

double Ellipsoid::volume() const {
  const double n = static_cast<double>(M.dim());
  const double unit_ball = std::pow(std::numbers::pi, n / 2.0) / std::tgamma(n / 2.0 + 1.0);
  // x'Mx <= 1/alpha  has semi-axes  (alpha * lambda_k)^{-1/2}.
  return unit_ball * std::pow(alpha, -n / 2.0) / std::sqrt(M.mat().determinant());
}

namespace {

void require_same_length(const Vec& a, const Vec& b, const char* what) {
  if (a.size() != b.size()) throw ShapeError(std::string(what) + ": length mismatch");
}

}  // namespace

Vec sat(const Vec& u, const Vec& u_bar) {
  require_same_length(u, u_bar, "sat");
  Vec out(u.size());
  for (Eigen::Index i = 0; i < u.size(); ++i) out(i) = std::clamp(u(i), -u_bar(i), u_bar(i));
  return out;
}

Vec deadzone(const Vec& u, const Vec& u_bar) { return sat(u, u_bar) - u; }

SectorCheck sector_holds(const Vec& x, const Controller& ctrl, const Vec& t_diag, const Vec& u_bar) {
  if (ctrl.K.cols() != x.size() || ctrl.G.cols() != x.size() || ctrl.K.rows() != ctrl.G.rows())
    throw ShapeError("sector_holds: controller shape");
  if (t_diag.size() != ctrl.K.rows()) throw ShapeError("sector_holds: T has the wrong size");
  const Vec u = ctrl.K * x;
  const Vec s = sat(u, u_bar);
  const Vec phi = s - u;
  const Vec gx = ctrl.G * x;
  SectorCheck out;
  out.lhs = phi.dot(t_diag.cwiseProduct(s + gx));
  const double scale = 1.0 + phi.cwiseAbs().dot(t_diag.cwiseAbs().cwiseProduct(s.cwiseAbs() + gx.cwiseAbs()));
  out.ok = out.lhs <= 1e-12 * scale;
  return out;
}

bool in_S_of_G(const Vec& x, const Mat& G, const Vec& u_bar) {
  if (G.cols() != x.size() || G.rows() != u_bar.size()) throw ShapeError("in_S_of_G: shape mismatch");
  const Vec gx = G * x;
  for (Eigen::Index i = 0; i < gx.size(); ++i)
    if (std::abs(gx(i)) > u_bar(i)) return false;
  return true;
}

bool ellipsoid_in_S(const SymMatrix& W, const Mat& Z, const Vec& u_bar, double margin) {
  if (Z.cols() != W.dim() || Z.rows() != u_bar.size()) throw ShapeError("ellipsoid_in_S: shape mismatch");
  Eigen::LLT<Mat> llt(W.mat());
  if (llt.info() != Eigen::Success) throw SingularBlock("ellipsoid_in_S: W is not positive definite");
  for (Eigen::Index i = 0; i < Z.rows(); ++i) {
    const Vec zi = Z.row(i).transpose();
    const double q = zi.dot(llt.solve(zi));
    if (!(u_bar(i) * u_bar(i) - q > margin)) return false;
  }
  return true;
}

std::vector<double> boundary_angles(int count) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(std::max(count, 0)));
  for (int k = 0; k < count; ++k) out.push_back(2.0 * std::numbers::pi * k / count);
  return out;
}

std::vector<Vec> ellipsoid_boundary_points(const Ellipsoid& e, int count, Rng* rng) {
  std::vector<Vec> out;
  if (count <= 0) return out;
  out.reserve(static_cast<std::size_t>(count));
  const Eigen::Index n = e.M.dim();
  Rng fallback(0);
  Rng& r = rng ? *rng : fallback;
  const auto angles = boundary_angles(count);
  for (int k = 0; k < count; ++k) {
    Vec d;
    if (n == 2) {
      d = Vec(2);
      d << std::cos(angles[static_cast<std::size_t>(k)]), std::sin(angles[static_cast<std::size_t>(k)]);
    } else {
      d = r.unit_vec(n);
    }
    out.push_back(d / std::sqrt(e.alpha * d.dot(e.M.mat() * d)));
  }
  return out;
}

Vec sample_in_ellipsoid(const Ellipsoid& e, Rng& rng) {
  // x = L^{-T} z with M = L L' and z uniform in the ball of radius alpha^{-1/2}.
  Eigen::LLT<Mat> llt(e.M.mat());
  if (llt.info() != Eigen::Success) throw SingularBlock("sample_in_ellipsoid: M is not positive definite");
  const Vec z = rng.in_ball(e.M.dim(), std::sqrt(e.bound()));
  return llt.matrixU().solve(z);
}

Vec sample_in_shell(const SymMatrix& M, double inner_level, double outer_level, Rng& rng) {
  Eigen::LLT<Mat> llt(M.mat());
  if (llt.info() != Eigen::Success) throw SingularBlock("sample_in_shell: M is not positive definite");
  const double r = rng.uniform(std::sqrt(inner_level), std::sqrt(outer_level));
  const Vec z = rng.on_sphere(M.dim(), r);
  return llt.matrixU().solve(z);
}

namespace {

void check_step_shapes(const Plant& plant, const Mat& K, const Vec& x, const Vec& w) {
  if (x.size() != plant.nx() || w.size() != plant.nx()) throw ShapeError("step: state/noise length");
  if (K.rows() != plant.nu() || K.cols() != plant.nx()) throw ShapeError("step: K has the wrong shape");
}

}  // namespace

Vec step(const Plant& plant, const Mat& K, const Vec& x, const Vec& w) {
  check_step_shapes(plant, K, x, w);
  return plant.A * x + plant.B * sat(K * x, plant.u_bar) + w;
}

Vec step_deadzone_form(const Plant& plant, const Mat& K, const Vec& x, const Vec& w) {
  check_step_shapes(plant, K, x, w);
  const Vec u = K * x;
  return (plant.A + plant.B * K) * x + plant.B * deadzone(u, plant.u_bar) + w;
}

Trajectory simulate(const Plant& plant, const Mat& K, const Vec& x0, std::span<const Vec> noise, int steps,
                    std::optional<double> lambda) {
  if (steps < 0) throw InputError("simulate: negative step count");
  if (lambda) {
    for (std::size_t k = 0; k < noise.size() && k < static_cast<std::size_t>(steps); ++k) {
      const double e = noise[k].squaredNorm();
      if (e > *lambda * (1.0 + 1e-12)) {
        throw NoiseBoundViolation("simulate: noise sample " + std::to_string(k) + " has energy " +
                                  std::to_string(e) + " > lambda");
      }
    }
  }
  Trajectory traj;
  traj.reserve(static_cast<std::size_t>(steps) + 1);
  traj.push_back(x0);
  const Vec zero = Vec::Zero(plant.nx());
  for (int k = 0; k < steps; ++k) {
    const auto idx = static_cast<std::size_t>(k);
    const Vec& w = idx < noise.size() ? noise[idx] : zero;
    traj.push_back(step(plant, K, traj.back(), w));
  }
  return traj;
}

AttractorEntry attractor_entry(const Trajectory& traj, const Ellipsoid& attractor, double tol) {
  AttractorEntry out;
  for (std::size_t k = 0; k < traj.size(); ++k) {
    if (attractor.contains(traj[k], tol)) {
      out.entered = true;
      out.first_index = static_cast<int>(k);
      break;
    }
  }
  if (!out.entered) return out;
  out.stayed = true;
  for (std::size_t k = static_cast<std::size_t>(out.first_index); k < traj.size(); ++k) {
    const double v = attractor.level(traj[k]);
    out.max_level_after = std::max(out.max_level_after, v);
    if (v > attractor.bound() + tol) out.stayed = false;
  }
  return out;
}

double spectral_radius(const Mat& m) {
  Eigen::EigenSolver<Mat> es(m, false);
  if (es.info() != Eigen::Success) throw NumericalError("spectral_radius: eigensolver failed");
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

void write_trajectory_csv(std::ostream& out, const Trajectory& traj, const SymMatrix& P) {
  const Eigen::Index n = P.dim();
  out << 'k';
  for (Eigen::Index i = 0; i < n; ++i) out << ",x" << i + 1;
  out << ",V\n";
  for (std::size_t k = 0; k < traj.size(); ++k) {
    out << k;
    for (Eigen::Index i = 0; i < n; ++i) out << ',' << format_real(traj[k](i));
    out << ',' << format_real(traj[k].dot(P.mat() * traj[k])) << '\n';
  }
}

void write_ellipse_csv(std::ostream& out, const Ellipsoid& e, int count) {
  if (e.M.dim() != 2) throw ShapeError("write_ellipse_csv: ellipse must be 2-D");
  const auto pts = ellipsoid_boundary_points(e, count);
  const auto angles = boundary_angles(count);
  out << "theta,x1,x2\n";
  for (std::size_t k = 0; k < pts.size(); ++k)
    out << format_real(angles[k]) << ',' << format_real(pts[k](0)) << ',' << format_real(pts[k](1)) << '\n';
}

}  // namespace satlmi
