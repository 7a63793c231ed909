#include "satlmi/qmi.hpp"

#include "satlmi/errors.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>

namespace satlmi {

void QuadraticSet::validate() const {
  if (N2.rows() != n3() || N2.cols() != n2()) throw ShapeError("QuadraticSet: N2 must be n3 x n2");
  if (!is_pd(N3)) throw InputError("QuadraticSet: N3 must be positive definite");
}

void RelaxationInstance::validate() const {
  N.validate();
  if (M2.rows() != n1() || M2.cols() != n2()) throw ShapeError("RelaxationInstance: M2 must be n1 x n2");
  if (M3.dim() != n3()) throw ShapeError("RelaxationInstance: M3 must be n3 x n3");
}

SymMatrix RelaxationInstance::M_of(const Mat& A) const {
  if (A.rows() != n2() || A.cols() != n3()) throw ShapeError("M_of: A must be n2 x n3");
  BlockSpec spec = BlockSpec::symmetric({n1(), n3()});
  spec.set(0, 0, M1.mat()).set(0, 1, M2 * A).set(1, 1, M3.mat()).mirror_upper();
  return SymMatrix(assemble(spec));
}

SymMatrix sigma_form(const Mat& A, const QuadraticSet& N) {
  if (A.rows() != N.n2() || A.cols() != N.n3()) throw ShapeError("sigma_form: A must be n2 x n3");
  const Mat na = N.N2 * A;
  return SymMatrix(Mat(N.N1.mat() + na + na.transpose() + A.transpose() * N.N3.mat() * A));
}

CenterRadius sigma_center_radius(const QuadraticSet& N) {
  N.validate();
  Eigen::LLT<Mat> llt(N.N3.mat());
  if (llt.info() != Eigen::Success) throw SingularBlock("sigma_center_radius: N3 is singular");
  CenterRadius out;
  out.center = -llt.solve(Mat(N.N2.transpose()));
  out.Q = SymMatrix(Mat(N.N2 * llt.solve(Mat(N.N2.transpose())) - N.N1.mat()));
  const double scale = 1.0 + out.Q.mat().cwiseAbs().maxCoeff();
  out.empty = min_eig(out.Q) < -1e-12 * scale;
  return out;
}

bool in_sigma(const Mat& A, const QuadraticSet& N, double tol) { return max_eig(sigma_form(A, N)) <= tol; }

namespace {

// A = center + N3^{-1/2} Delta Q^{1/2}, with N3^{-1/2} realized as L^{-T}.
struct SigmaParam {
  Mat center;
  Mat left;        // L^{-T}, n2 x n2
  Mat q_half;      // n3 x n3
  Mat range;       // orthonormal basis of range(Q), n3 x r
  Eigen::Index n2 = 0;
  Eigen::Index n3 = 0;

  explicit SigmaParam(const QuadraticSet& N) {
    const CenterRadius cr = sigma_center_radius(N);
    if (cr.empty) throw EmptySet("Sigma_N is empty: Q has a negative eigenvalue");
    center = cr.center;
    n2 = N.n2();
    n3 = N.n3();
    Eigen::LLT<Mat> llt(N.N3.mat());
    left = llt.matrixU().solve(Mat::Identity(n2, n2));
    const SymEigen qe = sym_eig(cr.Q);
    const double qmax = std::max(qe.values.maxCoeff(), 0.0);
    Vec root = qe.values.cwiseMax(0.0).cwiseSqrt();
    q_half = qe.vectors * root.asDiagonal() * qe.vectors.transpose();
    std::vector<Eigen::Index> cols;
    for (Eigen::Index i = 0; i < qe.values.size(); ++i)
      if (qe.values(i) > 1e-12 * (1.0 + qmax)) cols.push_back(i);
    range.resize(n3, static_cast<Eigen::Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) range.col(static_cast<Eigen::Index>(k)) = qe.vectors.col(cols[k]);
  }

  bool singleton() const { return range.cols() == 0; }

  Mat map(const Mat& delta) const { return center + left * delta * q_half; }

  Mat interior_delta(Rng& rng) const {
    const Mat g = rng.normal_mat(n2, n3);
    Eigen::JacobiSVD<Mat> svd(g);
    const double s = svd.singularValues()(0);
    return rng.uniform() * g / s;
  }

  Mat boundary_delta(Rng& rng) const {
    // Top right-singular vector v1 inside range(Q), top singular value 1.
    const Vec v1 = range * rng.unit_vec(range.cols());
    Mat basis(n3, n3);
    basis.col(0) = v1;
    if (n3 > 1) basis.rightCols(n3 - 1) = rng.normal_mat(n3, n3 - 1);
    Eigen::HouseholderQR<Mat> qr(basis);
    Mat V = qr.householderQ();
    if (V.col(0).dot(v1) < 0) V.col(0) = -V.col(0);
    const Mat U = rng.orthogonal(n2);
    const Eigen::Index k = std::min(n2, n3);
    Mat delta = Mat::Zero(n2, n3);
    for (Eigen::Index i = 0; i < k; ++i) {
      const double s = i == 0 ? 1.0 : rng.uniform();
      delta += s * U.col(i) * V.col(i).transpose();
    }
    return delta;
  }
};

Mat clip_contraction(const Mat& delta) {
  Eigen::JacobiSVD<Mat> svd(delta, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Vec s = svd.singularValues().cwiseMin(1.0);
  return svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
}

}  // namespace

std::vector<Mat> sample_sigma(const QuadraticSet& N, int count, SampleMode mode, Rng& rng) {
  const SigmaParam param(N);
  std::vector<Mat> out;
  out.reserve(static_cast<std::size_t>(std::max(count, 0)));
  for (int k = 0; k < count; ++k) {
    if (param.singleton()) {
      out.push_back(param.center);
      continue;
    }
    out.push_back(param.map(mode == SampleMode::Boundary ? param.boundary_delta(rng) : param.interior_delta(rng)));
  }
  return out;
}

SymMatrix relaxed_lmi(const RelaxationInstance& inst, double eta) {
  inst.validate();
  const Eigen::Index n1 = inst.n1(), n2 = inst.n2(), n3 = inst.n3();
  BlockSpec spec = BlockSpec::symmetric({n1, n3, n2});
  spec.set(0, 0, inst.M1.mat())
      .set(0, 2, inst.M2)
      .set(1, 1, inst.M3.mat() + eta * inst.N.N1.mat())
      .set(1, 2, eta * inst.N.N2)
      .set(2, 2, eta * inst.N.N3.mat())
      .mirror_upper();
  return SymMatrix(assemble(spec));
}

EtaSearch search_eta(const RelaxationInstance& inst, double margin, int evaluations) {
  inst.validate();
  constexpr double lo = -9.0, hi = 6.0, grid_step = 0.25;
  EtaSearch out;
  out.best_min_eig = -std::numeric_limits<double>::infinity();
  double best_s = lo;
  auto f = [&](double s) {
    const double v = min_eig(relaxed_lmi(inst, std::pow(10.0, s)));
    ++out.evaluations;
    if (v > out.best_min_eig) {
      out.best_min_eig = v;
      best_s = s;
    }
    return v;
  };
  const int grid_points = static_cast<int>(std::lround((hi - lo) / grid_step)) + 1;
  for (int i = 0; i < grid_points && out.evaluations < evaluations; ++i) f(lo + grid_step * i);

  // Golden-section refinement on the bracket around the best grid point.
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = std::max(lo, best_s - grid_step), b = std::min(hi, best_s + grid_step);
  double c = b - phi * (b - a), d = a + phi * (b - a);
  double fc = out.evaluations < evaluations ? f(c) : 0.0;
  double fd = out.evaluations < evaluations ? f(d) : 0.0;
  while (out.evaluations < evaluations) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + phi * (b - a);
      fd = f(d);
    }
  }
  out.eta = std::pow(10.0, best_s);
  out.feasible = out.best_min_eig > margin;
  return out;
}

EquivalenceReport check_equivalence(const RelaxationInstance& inst, int samples, Rng& rng,
                                    std::optional<double> eta_hint) {
  inst.validate();
  constexpr double margin = 1e-9;
  constexpr std::size_t max_witnesses = 64;
  EquivalenceReport rep;

  if (eta_hint && *eta_hint > 0) {
    const double v = min_eig(relaxed_lmi(inst, *eta_hint));
    if (v > margin) {
      rep.ii_feasible = true;
      rep.eta_star = *eta_hint;
      rep.relaxed_min_eig = v;
    }
  }
  if (!rep.ii_feasible) {
    const EtaSearch es = search_eta(inst, margin);
    rep.ii_feasible = es.feasible;
    rep.relaxed_min_eig = es.best_min_eig;
    if (es.feasible) rep.eta_star = es.eta;
  }

  const SigmaParam param(inst.N);
  rep.worst_min_eig = std::numeric_limits<double>::infinity();
  auto probe = [&](const Mat& A) {
    const double v = min_eig(inst.M_of(A));
    ++rep.samples;
    if (v < rep.worst_min_eig) {
      rep.worst_min_eig = v;
      rep.worst_A = A;
    }
    if (!(v > 0.0) && rep.i_violations.size() < max_witnesses) rep.i_violations.push_back(A);
    return v;
  };

  probe(param.center);
  if (param.singleton()) return rep;

  struct Seed {
    double value;
    Mat delta;
  };
  std::vector<Seed> boundary;
  const int half = std::max(samples / 2, 1);
  for (int k = 0; k < samples - half; ++k) probe(param.map(param.interior_delta(rng)));
  for (int k = 0; k < half; ++k) {
    Mat delta = param.boundary_delta(rng);
    boundary.push_back({probe(param.map(delta)), std::move(delta)});
  }

  // Local descent on lambda_min(M(A)) from the worst boundary samples,
  // staying inside the contraction ball.
  std::sort(boundary.begin(), boundary.end(), [](const Seed& x, const Seed& y) { return x.value < y.value; });
  const std::size_t starts = std::min<std::size_t>(boundary.size(), 4);
  for (std::size_t s = 0; s < starts; ++s) {
    Mat delta = boundary[s].delta;
    double value = boundary[s].value;
    double radius = 0.25;
    for (int it = 0; it < 60 && radius > 1e-4; ++it) {
      Mat cand = clip_contraction(delta + radius * rng.normal_mat(param.n2, param.n3));
      const double v = probe(param.map(cand));
      if (v < value) {
        value = v;
        delta = std::move(cand);
      } else {
        radius *= 0.8;
      }
    }
  }
  return rep;
}

std::pair<SymMatrix, SymMatrix> slemma_embedding(const RelaxationInstance& inst) {
  inst.validate();
  const Eigen::Index n1 = inst.n1(), n2 = inst.n2(), n3 = inst.n3();
  BlockSpec ms = BlockSpec::symmetric({n1, n3, n2});
  ms.set(0, 0, inst.M1.mat()).set(0, 2, inst.M2).set(1, 1, inst.M3.mat()).mirror_upper();
  BlockSpec ns = BlockSpec::symmetric({n1, n3, n2});
  ns.set(1, 1, -inst.N.N1.mat()).set(1, 2, -inst.N.N2).set(2, 2, -inst.N.N3.mat()).mirror_upper();
  return {SymMatrix(assemble(ms)), SymMatrix(assemble(ns))};
}

namespace {

SymMatrix random_pd(Rng& rng, Eigen::Index n, double floor) {
  const Mat g = rng.normal_mat(n, n);
  return SymMatrix(Mat(g * g.transpose() / static_cast<double>(n) + floor * Mat::Identity(n, n)));
}

}  // namespace

RelaxationInstance random_instance(Rng& rng, Eigen::Index n1, Eigen::Index n2, Eigen::Index n3, double coupling) {
  if (n1 < 1 || n2 < 1 || n3 < 1) throw ShapeError("random_instance: dimensions must be positive");
  RelaxationInstance inst;
  inst.M1 = random_pd(rng, n1, 0.2);
  inst.M3 = random_pd(rng, n3, 0.2);
  inst.M2 = coupling * rng.normal_mat(n1, n2);
  const SymMatrix N3 = random_pd(rng, n2, 0.5);
  const Mat center = rng.normal_mat(n2, n3);
  const Eigen::Index rank = rng.uniform() < 0.25 ? std::max<Eigen::Index>(n3 - 1, 0) : n3;
  const Mat r = 0.5 * rng.normal_mat(n3, rank);
  inst.N.N3 = N3;
  inst.N.N2 = -center.transpose() * N3.mat();
  inst.N.N1 = SymMatrix(Mat(center.transpose() * N3.mat() * center - r * r.transpose()));
  return inst;
}

RelaxationInstance violating_instance(Rng& rng, Eigen::Index n1, Eigen::Index n2, Eigen::Index n3, Mat* witness,
                                      double overshoot) {
  for (;;) {
    RelaxationInstance inst = random_instance(rng, n1, n2, n3, 1.0);
    const Mat a0 = sample_sigma(inst.N, 1, SampleMode::Boundary, rng).front();
    const Mat b = inst.M2 * a0;
    // M(a0) > 0 iff M3 - c^2 b' M1^{-1} b > 0 for M2 scaled by c.
    const Mat l3 = psd_sqrt(inst.M3).inverse();
    const SymMatrix k(Mat(l3 * b.transpose() * Eigen::LLT<Mat>(inst.M1.mat()).solve(b) * l3));
    const double top = max_eig(k);
    if (!(top > 1e-8)) continue;
    inst.M2 *= overshoot / std::sqrt(top);
    if (witness) *witness = a0;
    return inst;
  }
}

RelaxationInstance read_instance(std::istream& in) {
  const auto m = read_matrices(in, 6);
  RelaxationInstance inst;
  inst.M1 = SymMatrix(m[0]);
  inst.M2 = m[1];
  inst.M3 = SymMatrix(m[2]);
  inst.N.N1 = SymMatrix(m[3]);
  inst.N.N2 = m[4];
  inst.N.N3 = SymMatrix(m[5]);
  inst.validate();
  return inst;
}

void write_instance(std::ostream& out, const RelaxationInstance& inst) {
  out << "# M1\n";
  write_matrix(out, inst.M1.mat());
  out << "# M2\n";
  write_matrix(out, inst.M2);
  out << "# M3\n";
  write_matrix(out, inst.M3.mat());
  out << "# N1\n";
  write_matrix(out, inst.N.N1.mat());
  out << "# N2\n";
  write_matrix(out, inst.N.N2);
  out << "# N3\n";
  write_matrix(out, inst.N.N3.mat());
}

}  // namespace satlmi
