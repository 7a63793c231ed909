#pragma once

#include "satlmi/linalg.hpp"
#include "satlmi/rng.hpp"

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace satlmi {

/// x+ = A x + B sat(u) + w, with saturation levels u_bar.
struct Plant {
  Mat A;
  Mat B;
  Vec u_bar;

  Eigen::Index nx() const { return A.rows(); }
  Eigen::Index nu() const { return B.cols(); }
  /// Throws ShapeError / InputError when the invariants are violated.
  void validate() const;

  /// The unstable second-order benchmark plant with a single input
  /// saturated at 5.
  static Plant benchmark();
};

/// Noise energy bounds: w'w <= lambda per sample, and the collected noise
/// matrix satisfies omega omega' <= p lambda delta_omega.
struct NoiseModel {
  double lambda = 0.0;
  SymMatrix delta_omega;

  void validate(Eigen::Index nx) const;
};

/// E(M, alpha) = { x : x' M x <= 1/alpha }.
struct Ellipsoid {
  SymMatrix M;
  double alpha = 1.0;

  double level(const Vec& x) const { return x.dot(M.mat() * x); }
  double bound() const { return 1.0 / alpha; }
  bool contains(const Vec& x, double tol = 0.0) const { return level(x) <= bound() + tol; }
  /// Area (2-D) or volume (n-D) of the ellipsoid.
  double volume() const;
};

struct Controller {
  Mat K;
  Mat G;
};

Vec sat(const Vec& u, const Vec& u_bar);
Vec deadzone(const Vec& u, const Vec& u_bar);

struct SectorCheck {
  double lhs = 0.0;
  bool ok = false;
};

/// Evaluates phi(Kx)' T (sat(Kx) + G x) with T = diag(t_diag).
SectorCheck sector_holds(const Vec& x, const Controller& ctrl, const Vec& t_diag, const Vec& u_bar);

/// |G_(i) x| <= u_bar_i for every row (closed set).
bool in_S_of_G(const Vec& x, const Mat& G, const Vec& u_bar);

/// Strict test u_bar_i^2 - Z_(i) W^{-1} Z_(i)' > margin for every i, which
/// certifies E(W^{-1}, 1) inside S(Z W^{-1}). Throws SingularBlock if W
/// cannot be factored.
bool ellipsoid_in_S(const SymMatrix& W, const Mat& Z, const Vec& u_bar, double margin = 0.0);

/// Points on the boundary of E. In 2-D they are at uniform angles
/// 2*pi*k/count, in angular order; otherwise along random directions drawn
/// from `rng`.
std::vector<Vec> ellipsoid_boundary_points(const Ellipsoid& e, int count, Rng* rng = nullptr);
/// Angles used for the 2-D parametrization.
std::vector<double> boundary_angles(int count);

/// Uniform sample in E.
Vec sample_in_ellipsoid(const Ellipsoid& e, Rng& rng);
/// Sample of { x : inner_level <= x'Mx <= outer_level }, uniform in the
/// radial coordinate of the whitened space.
Vec sample_in_shell(const SymMatrix& M, double inner_level, double outer_level, Rng& rng);

/// A x + B sat(K x) + w.
Vec step(const Plant& plant, const Mat& K, const Vec& x, const Vec& w);
/// (A + B K) x + B phi(K x) + w; algebraically identical to step().
Vec step_deadzone_form(const Plant& plant, const Mat& K, const Vec& x, const Vec& w);

using Trajectory = std::vector<Vec>;

/// Applies step() `steps` times from x0. noise[k] is used at step k (zero
/// when the sequence is shorter). When `lambda` is given, every sample must
/// satisfy w'w <= lambda or NoiseBoundViolation is thrown.
Trajectory simulate(const Plant& plant, const Mat& K, const Vec& x0, std::span<const Vec> noise, int steps,
                    std::optional<double> lambda = std::nullopt);

struct AttractorEntry {
  bool entered = false;
  int first_index = -1;
  bool stayed = false;
  double max_level_after = 0.0;
};

/// First index k with x_k in the ellipsoid, and whether all later states
/// remain inside (tolerance `tol` on the level).
AttractorEntry attractor_entry(const Trajectory& traj, const Ellipsoid& attractor, double tol = 0.0);

double spectral_radius(const Mat& m);

/// Trajectory CSV: header "k,x1,...,xn,V" with V = x' P x.
void write_trajectory_csv(std::ostream& out, const Trajectory& traj, const SymMatrix& P);
/// Ellipse CSV: header "theta,x1,x2" (2-D only).
void write_ellipse_csv(std::ostream& out, const Ellipsoid& e, int count);

}  // namespace satlmi
