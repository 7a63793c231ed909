#include "satlmi/sdp.hpp"

#include "satlmi/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace satlmi {

// ---------------------------------------------------------------------------
// VarSpace

namespace {

int kind_rank(VarSpace::Kind k) { return static_cast<int>(k); }

}  // namespace

VarSpace& VarSpace::add(const std::string& name, Kind kind, Eigen::Index rows, Eigen::Index cols,
                        int size) {
  if (name.empty()) throw ShapeError("VarSpace: empty variable name");
  if (contains(name)) throw ShapeError("VarSpace: duplicate variable '" + name + "'");
  if (rows < 1 || cols < 1) throw ShapeError("VarSpace: variable '" + name + "' has empty shape");
  entries_.push_back({name, kind, rows, cols, 0, size});
  relayout();
  return *this;
}

void VarSpace::relayout() {
  std::stable_sort(entries_.begin(), entries_.end(),
                   [](const Entry& a, const Entry& b) { return kind_rank(a.kind) < kind_rank(b.kind); });
  int offset = 0;
  for (auto& e : entries_) {
    e.offset = offset;
    offset += e.size;
  }
  size_ = offset;
}

VarSpace& VarSpace::add_scalar(const std::string& name) { return add(name, Kind::Scalar, 1, 1, 1); }

VarSpace& VarSpace::add_sym(const std::string& name, Eigen::Index n) {
  return add(name, Kind::Sym, n, n, static_cast<int>(n * (n + 1) / 2));
}

VarSpace& VarSpace::add_diag(const std::string& name, Eigen::Index n) {
  return add(name, Kind::Diag, n, n, static_cast<int>(n));
}

VarSpace& VarSpace::add_rect(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
  return add(name, Kind::Rect, rows, cols, static_cast<int>(rows * cols));
}

bool VarSpace::contains(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.name == name; });
}

const VarSpace::Entry& VarSpace::entry(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return e;
  throw ShapeError("VarSpace: unknown variable '" + name + "'");
}

int VarSpace::scalar_index(const std::string& name) const {
  const Entry& e = entry(name);
  if (e.kind != Kind::Scalar) throw ShapeError("VarSpace: '" + name + "' is not a scalar");
  return e.offset;
}

AffineMat VarSpace::var(const std::string& name) const {
  const Entry& e = entry(name);
  AffineMat out(e.rows, e.cols);
  int k = e.offset;
  switch (e.kind) {
    case Kind::Scalar:
      out.add_term(k, Mat::Ones(1, 1));
      break;
    case Kind::Sym:
      for (Eigen::Index i = 0; i < e.rows; ++i)
        for (Eigen::Index j = i; j < e.cols; ++j) {
          Mat c = Mat::Zero(e.rows, e.cols);
          c(i, j) = 1.0;
          c(j, i) = 1.0;
          out.add_term(k++, c);
        }
      break;
    case Kind::Diag:
      for (Eigen::Index i = 0; i < e.rows; ++i) {
        Mat c = Mat::Zero(e.rows, e.cols);
        c(i, i) = 1.0;
        out.add_term(k++, c);
      }
      break;
    case Kind::Rect:
      for (Eigen::Index i = 0; i < e.rows; ++i)
        for (Eigen::Index j = 0; j < e.cols; ++j) {
          Mat c = Mat::Zero(e.rows, e.cols);
          c(i, j) = 1.0;
          out.add_term(k++, c);
        }
      break;
  }
  return out;
}

Vec VarSpace::pack(const std::map<std::string, Mat>& values) const {
  Vec y = Vec::Zero(size_);
  for (const auto& e : entries_) {
    auto it = values.find(e.name);
    if (it == values.end()) throw ShapeError("VarSpace::pack: missing value for '" + e.name + "'");
    const Mat& v = it->second;
    if (v.rows() != e.rows || v.cols() != e.cols)
      throw ShapeError("VarSpace::pack: '" + e.name + "' has the wrong shape");
    int k = e.offset;
    switch (e.kind) {
      case Kind::Scalar:
        y(k) = v(0, 0);
        break;
      case Kind::Sym:
        for (Eigen::Index i = 0; i < e.rows; ++i)
          for (Eigen::Index j = i; j < e.cols; ++j) y(k++) = 0.5 * (v(i, j) + v(j, i));
        break;
      case Kind::Diag:
        for (Eigen::Index i = 0; i < e.rows; ++i) y(k++) = v(i, i);
        break;
      case Kind::Rect:
        for (Eigen::Index i = 0; i < e.rows; ++i)
          for (Eigen::Index j = 0; j < e.cols; ++j) y(k++) = v(i, j);
        break;
    }
  }
  return y;
}

Mat VarSpace::value(const std::string& name, const Vec& y) const {
  if (y.size() != size_) throw ShapeError("VarSpace: packed vector has the wrong length");
  return var(name).eval(y);
}

std::map<std::string, Mat> VarSpace::unpack(const Vec& y) const {
  std::map<std::string, Mat> out;
  for (const auto& e : entries_) out.emplace(e.name, value(e.name, y));
  return out;
}

std::string VarSpace::coordinate_label(int k) const {
  for (const auto& e : entries_) {
    if (k < e.offset || k >= e.offset + e.size) continue;
    int local = k - e.offset;
    std::ostringstream s;
    s << e.name;
    switch (e.kind) {
      case Kind::Scalar:
        break;
      case Kind::Sym: {
        Eigen::Index i = 0;
        while (local >= e.rows - i) {
          local -= static_cast<int>(e.rows - i);
          ++i;
        }
        s << '[' << i << ',' << i + local << ']';
        break;
      }
      case Kind::Diag:
        s << '[' << local << ',' << local << ']';
        break;
      case Kind::Rect:
        s << '[' << local / e.cols << ',' << local % e.cols << ']';
        break;
    }
    return s.str();
  }
  throw ShapeError("VarSpace: coordinate out of range");
}

// ---------------------------------------------------------------------------
// AffineMat

AffineMat::AffineMat(Eigen::Index rows, Eigen::Index cols) : constant_(Mat::Zero(rows, cols)) {}

AffineMat::AffineMat(Mat constant) : constant_(std::move(constant)) {}

AffineMat& AffineMat::add_term(int coord, const Mat& coeff) {
  if (coeff.rows() != rows() || coeff.cols() != cols()) throw ShapeError("AffineMat: coefficient shape");
  auto it = terms_.find(coord);
  if (it == terms_.end())
    terms_.emplace(coord, coeff);
  else
    it->second += coeff;
  return *this;
}

Mat AffineMat::eval(const Vec& y) const {
  Mat out = constant_;
  for (const auto& [k, c] : terms_) {
    if (k >= y.size()) throw ShapeError("AffineMat::eval: coordinate out of range");
    out += y(k) * c;
  }
  return out;
}

AffineMat AffineMat::transpose() const {
  AffineMat out(Mat(constant_.transpose()));
  for (const auto& [k, c] : terms_) out.terms_.emplace(k, c.transpose());
  return out;
}

AffineMat AffineMat::operator+(const AffineMat& o) const {
  if (rows() != o.rows() || cols() != o.cols()) throw ShapeError("AffineMat +: shape mismatch");
  AffineMat out(Mat(constant_ + o.constant_));
  out.terms_ = terms_;
  for (const auto& [k, c] : o.terms_) out.add_term(k, c);
  return out;
}

AffineMat AffineMat::operator-() const { return *this * -1.0; }

AffineMat AffineMat::operator-(const AffineMat& o) const { return *this + (-o); }

AffineMat AffineMat::operator*(double s) const {
  AffineMat out(Mat(s * constant_));
  for (const auto& [k, c] : terms_) out.terms_.emplace(k, s * c);
  return out;
}

AffineMat AffineMat::operator*(const Mat& right) const {
  if (cols() != right.rows()) throw ShapeError("AffineMat * Mat: shape mismatch");
  AffineMat out(Mat(constant_ * right));
  for (const auto& [k, c] : terms_) out.terms_.emplace(k, c * right);
  return out;
}

AffineMat operator*(const Mat& left, const AffineMat& a) {
  if (left.cols() != a.rows()) throw ShapeError("Mat * AffineMat: shape mismatch");
  AffineMat out(Mat(left * a.constant_));
  for (const auto& [k, c] : a.terms_) out.terms_.emplace(k, left * c);
  return out;
}

AffineMat scaled(const Mat& m, const AffineMat& s) {
  if (s.rows() != 1 || s.cols() != 1) throw ShapeError("scaled: expression is not 1x1");
  AffineMat out(Mat(s.constant()(0, 0) * m));
  for (const auto& [k, c] : s.terms()) out.add_term(k, c(0, 0) * m);
  return out;
}

// ---------------------------------------------------------------------------
// LmiConstraint / AffineBlocks

namespace {

SymMatrix checked_sym(const Mat& m, const std::string& what) {
  const double scale = 1.0 + m.cwiseAbs().maxCoeff();
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw ShapeError(what + ": matrix is not symmetric");
  return SymMatrix(m);
}

}  // namespace

SymMatrix LmiConstraint::eval(const Vec& y) const {
  Mat out = F0.mat();
  for (const auto& [k, f] : Fi) {
    if (k >= y.size()) throw ShapeError("LmiConstraint::eval: coordinate out of range");
    out += y(k) * f.mat();
  }
  return SymMatrix(out);
}

LmiConstraint LmiConstraint::from_affine(std::string name, const AffineMat& a) {
  if (a.rows() != a.cols()) throw ShapeError("LmiConstraint '" + name + "': expression is not square");
  LmiConstraint c;
  c.block_dim = a.rows();
  c.F0 = checked_sym(a.constant(), "LmiConstraint '" + name + "' constant");
  for (const auto& [k, t] : a.terms()) {
    if (t.cwiseAbs().maxCoeff() == 0.0) continue;
    c.Fi.emplace(k, checked_sym(t, "LmiConstraint '" + name + "' coefficient"));
  }
  c.name = std::move(name);
  return c;
}

AffineBlocks::AffineBlocks(std::vector<Eigen::Index> sizes) : sizes_(std::move(sizes)) {
  if (sizes_.empty()) throw ShapeError("AffineBlocks: empty partition");
}

AffineBlocks& AffineBlocks::set(std::size_t i, std::size_t j, const AffineMat& block) {
  if (i > j) throw ShapeError("AffineBlocks: only upper-triangular cells may be set");
  if (j >= sizes_.size()) throw ShapeError("AffineBlocks: cell out of range");
  if (block.rows() != sizes_[i] || block.cols() != sizes_[j]) {
    std::ostringstream msg;
    msg << "AffineBlocks: block (" << i << "," << j << ") is " << block.rows() << "x" << block.cols()
        << ", expected " << sizes_[i] << "x" << sizes_[j];
    throw ShapeError(msg.str());
  }
  blocks_.insert_or_assign({i, j}, block);
  return *this;
}

AffineMat AffineBlocks::assemble() const {
  // Each coordinate's coefficient is placed through the same BlockSpec as
  // the constant term, so all terms share one layout.
  auto place = [&](auto pick) {
    BlockSpec spec = BlockSpec::symmetric(sizes_);
    for (const auto& [ij, b] : blocks_) {
      Mat m = pick(b);
      if (m.size() == 0) continue;
      spec.set(ij.first, ij.second, m);
      if (ij.first != ij.second) spec.set(ij.second, ij.first, Mat(m.transpose()));
    }
    return satlmi::assemble(spec);
  };
  AffineMat out(place([](const AffineMat& b) { return b.constant(); }));
  std::vector<int> coords;
  for (const auto& [ij, b] : blocks_)
    for (const auto& [k, c] : b.terms()) coords.push_back(k);
  std::sort(coords.begin(), coords.end());
  coords.erase(std::unique(coords.begin(), coords.end()), coords.end());
  for (int k : coords) {
    out.add_term(k, place([k](const AffineMat& b) {
      auto it = b.terms().find(k);
      return it == b.terms().end() ? Mat(Mat::Zero(b.rows(), b.cols())) : it->second;
    }));
  }
  return out;
}

LmiConstraint AffineBlocks::constraint(std::string name) const {
  return LmiConstraint::from_affine(std::move(name), assemble());
}

void LmiProblem::validate() const {
  const int m = vars.size();
  if (objective.size() != m) throw ShapeError("LmiProblem: objective length does not match variables");
  if (!objective.allFinite()) throw ShapeError("LmiProblem: objective is not finite");
  for (const auto& c : constraints) {
    if (c.F0.dim() != c.block_dim) throw ShapeError("LmiProblem: constraint '" + c.name + "' F0 dim");
    for (const auto& [k, f] : c.Fi) {
      if (k < 0 || k >= m) throw ShapeError("LmiProblem: constraint '" + c.name + "' addresses a missing coordinate");
      if (f.dim() != c.block_dim) throw ShapeError("LmiProblem: constraint '" + c.name + "' coefficient dim");
    }
  }
  for (const auto& [k, lb] : lower_bounds) {
    if (k < 0 || k >= m) throw ShapeError("LmiProblem: lower bound on a missing coordinate");
    if (!std::isfinite(lb)) throw ShapeError("LmiProblem: lower bound is not finite");
  }
}

std::string to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "Optimal";
    case SolveStatus::Infeasible: return "Infeasible";
    case SolveStatus::Unbounded: return "Unbounded";
    case SolveStatus::MaxIterations: return "MaxIterations";
    case SolveStatus::NumericalError: return "NumericalError";
  }
  return "Unknown";
}

FeasibilityCheck check_feasible(const LmiProblem& problem, const Vec& y, double margin) {
  if (y.size() != problem.vars.size()) throw ShapeError("check_feasible: packed vector has the wrong length");
  FeasibilityCheck out;
  out.worst = std::numeric_limits<double>::infinity();
  for (const auto& c : problem.constraints) out.worst = std::min(out.worst, min_eig(c.eval(y)));
  bool bounds_ok = true;
  for (const auto& [k, lb] : problem.lower_bounds)
    if (y(k) < lb - 1e-12 * (1.0 + std::abs(lb))) bounds_ok = false;
  out.ok = bounds_ok && out.worst >= margin;
  return out;
}

nlohmann::json dump_problem(const LmiProblem& problem) {
  auto mat_json = [](const Mat& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
      rows.push_back(row);
    }
    return rows;
  };
  nlohmann::json j;
  j["sense"] = "maximize";
  auto& vars = j["variables"] = nlohmann::json::array();
  for (const auto& e : problem.vars.entries()) {
    static const char* kinds[] = {"scalar", "sym", "diag", "rect"};
    vars.push_back({{"name", e.name}, {"kind", kinds[kind_rank(e.kind)]}, {"rows", e.rows},
                    {"cols", e.cols}, {"offset", e.offset}, {"size", e.size}});
  }
  j["objective"] = std::vector<double>(problem.objective.data(),
                                       problem.objective.data() + problem.objective.size());
  auto& blocks = j["blocks"] = nlohmann::json::array();
  for (const auto& c : problem.constraints) {
    nlohmann::json b;
    b["name"] = c.name;
    b["dim"] = c.block_dim;
    b["F0"] = mat_json(c.F0.mat());
    auto& fi = b["Fi"] = nlohmann::json::object();
    for (const auto& [k, f] : c.Fi) fi[std::to_string(k)] = mat_json(f.mat());
    blocks.push_back(std::move(b));
  }
  auto& lbs = j["lower_bounds"] = nlohmann::json::object();
  for (const auto& [k, lb] : problem.lower_bounds) lbs[std::to_string(k)] = lb;
  return j;
}

// ---------------------------------------------------------------------------
// Primal-dual interior point method.
//
// Internal standard form (block diagonal, dense blocks):
//   dual:    maximize b'y  s.t.  Z_k = C_k - sum_i y_i A_ik  >= 0
//   primal:  minimize sum_k <C_k, X_k>  s.t.  sum_k <A_ik, X_k> = b_i,  X_k >= 0
// The user's problem is the dual. Search direction: HKM, with Mehrotra
// predictor-corrector. Start: X_k = xi_k I, Z_k = zeta_k I, y = 0, with the
// scalings chosen so that both start points are on the scale of the data.

namespace {

struct StdBlock {
  Mat C;
  std::vector<std::pair<int, Mat>> A;
};

struct StdProblem {
  int m = 0;
  std::vector<StdBlock> blocks;
  Vec b;
};

struct IpmResult {
  SolveStatus status = SolveStatus::NumericalError;
  Vec y;
  std::vector<Mat> X;
  double pobj = 0.0;
  double dobj = 0.0;
  double gap = 0.0;
  double pinf = 0.0;
  double dinf = 0.0;
  int iterations = 0;
  std::string message;
};

double frob_dot(const Mat& a, const Mat& b) { return a.cwiseProduct(b).sum(); }

// Largest step alpha in (0, 1] with S + alpha*dS >= 0 (scaled by gamma).
// Returns -1 when S itself is not positive definite.
double max_step(const Mat& S, const Mat& dS, double gamma) {
  if (S.rows() == 1) {
    if (S(0, 0) <= 0) return -1.0;
    if (dS(0, 0) >= 0) return 1.0;
    return std::min(1.0, gamma * S(0, 0) / -dS(0, 0));
  }
  Eigen::LLT<Mat> llt(S);
  if (llt.info() != Eigen::Success) return -1.0;
  Mat L = llt.matrixL();
  Mat t = L.triangularView<Eigen::Lower>().solve(dS);
  t = L.triangularView<Eigen::Lower>().solve(Mat(t.transpose()));
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (t + t.transpose()), Eigen::EigenvaluesOnly);
  const double lmin = es.eigenvalues()(0);
  if (lmin >= 0) return 1.0;
  return std::min(1.0, gamma * -1.0 / lmin);
}

bool spd_inverse(const Mat& S, Mat& inv) {
  Eigen::LLT<Mat> llt(S);
  if (llt.info() != Eigen::Success) return false;
  inv = llt.solve(Mat::Identity(S.rows(), S.cols()));
  inv = 0.5 * (inv + inv.transpose());
  return true;
}

IpmResult run_ipm(const StdProblem& p, const SolveOptions& opts) {
  const int m = p.m;
  const std::size_t nb = p.blocks.size();
  IpmResult res;

  double total_dim = 0;
  double normC = 0;
  for (const auto& blk : p.blocks) {
    total_dim += static_cast<double>(blk.C.rows());
    normC = std::max(normC, blk.C.norm());
  }
  const double normb = p.b.norm();

  std::vector<Mat> X(nb), Z(nb);
  for (std::size_t k = 0; k < nb; ++k) {
    const auto& blk = p.blocks[k];
    const double n = static_cast<double>(blk.C.rows());
    double xi = std::max(1.0, std::sqrt(n));
    double zeta = std::max(1.0, std::sqrt(n));
    for (const auto& [i, A] : blk.A) {
      const double na = A.norm();
      xi = std::max(xi, n * (1.0 + std::abs(p.b(i))) / (1.0 + na));
      zeta = std::max(zeta, na);
    }
    zeta = std::max(zeta, blk.C.norm());
    zeta = 10.0 * zeta / std::sqrt(n);
    X[k] = xi * Mat::Identity(blk.C.rows(), blk.C.rows());
    Z[k] = zeta * Mat::Identity(blk.C.rows(), blk.C.rows());
  }
  Vec y = Vec::Zero(m);

  std::vector<Mat> Zinv(nb), Rd(nb), dX(nb), dZ(nb), dXp(nb), dZp(nb);
  int stalled = 0;

  for (int iter = 0;; ++iter) {
    // Residuals and objectives.
    Vec Ax = Vec::Zero(m);
    double pobj = 0, xz = 0, rd_norm = 0;
    for (std::size_t k = 0; k < nb; ++k) {
      const auto& blk = p.blocks[k];
      Rd[k] = blk.C - Z[k];
      for (const auto& [i, A] : blk.A) {
        Ax(i) += frob_dot(A, X[k]);
        Rd[k] -= y(i) * A;
      }
      pobj += frob_dot(blk.C, X[k]);
      xz += frob_dot(X[k], Z[k]);
      rd_norm = std::max(rd_norm, Rd[k].norm());
    }
    const Vec Rp = p.b - Ax;
    const double dobj = p.b.dot(y);
    res.pobj = pobj;
    res.dobj = dobj;
    res.gap = xz / (1.0 + std::abs(pobj) + std::abs(dobj));
    res.pinf = Rp.norm() / (1.0 + normb);
    res.dinf = rd_norm / (1.0 + normC);
    res.iterations = iter;
    res.y = y;
    res.X = X;

    if (!std::isfinite(pobj) || !std::isfinite(dobj) || !y.allFinite()) {
      res.status = SolveStatus::NumericalError;
      res.message = "non-finite iterate";
      return res;
    }
    const double relgap = std::max(res.gap, std::abs(pobj - dobj) / (1.0 + std::abs(pobj) + std::abs(dobj)));
    // On breakdown near the optimum the last iterate is kept at reduced
    // accuracy; solve() still replays its feasibility exactly.
    auto breakdown = [&](const char* why) {
      const bool close = relgap <= opts.loose_gap_tol && res.pinf <= opts.loose_feas_tol &&
                         res.dinf <= opts.loose_feas_tol;
      res.status = close ? SolveStatus::Optimal : SolveStatus::NumericalError;
      res.message = close ? std::string("reduced accuracy: ") + why : std::string(why);
      return res;
    };
    if (relgap <= opts.gap_tol && res.pinf <= opts.feas_tol && res.dinf <= opts.feas_tol) {
      res.status = SolveStatus::Optimal;
      return res;
    }
    if (iter >= opts.max_iter) {
      res.status = SolveStatus::MaxIterations;
      res.message = "iteration cap reached";
      return res;
    }

    for (std::size_t k = 0; k < nb; ++k) {
      if (!spd_inverse(Z[k], Zinv[k])) {
        return breakdown("dual slack lost definiteness");
      }
    }

    // Schur complement matrix M_ij = sum_k <A_ik, X_k A_jk Z_k^{-1}>.
    Mat M = Mat::Zero(m, m);
    std::vector<std::vector<Mat>> H(nb);
    for (std::size_t k = 0; k < nb; ++k) {
      const auto& blk = p.blocks[k];
      H[k].reserve(blk.A.size());
      for (const auto& [j, Aj] : blk.A) H[k].push_back(X[k] * Aj * Zinv[k]);
      for (std::size_t a = 0; a < blk.A.size(); ++a)
        for (std::size_t c = 0; c < blk.A.size(); ++c)
          M(blk.A[a].first, blk.A[c].first) += frob_dot(blk.A[a].second, H[k][c]);
    }
    M = 0.5 * (M + M.transpose());
    Eigen::LLT<Mat> chol(M);
    if (chol.info() != Eigen::Success) {
      const double reg = 1e-14 * (1.0 + M.diagonal().cwiseAbs().maxCoeff());
      M.diagonal().array() += reg;
      chol.compute(M);
      if (chol.info() != Eigen::Success) {
        return breakdown("Schur complement matrix is not positive definite");
      }
    }

    // Solve for a direction given the complementarity right-hand side
    // Rc_k (the target for dX Z + X dZ).
    auto direction = [&](const std::vector<Mat>& Rc, Vec& dy) {
      Vec rhs = Rp;
      std::vector<Mat> RcZi(nb), XRdZi(nb);
      for (std::size_t k = 0; k < nb; ++k) {
        RcZi[k] = Rc[k] * Zinv[k];
        XRdZi[k] = X[k] * Rd[k] * Zinv[k];
        for (const auto& [i, A] : p.blocks[k].A) rhs(i) += -frob_dot(A, RcZi[k]) + frob_dot(A, XRdZi[k]);
      }
      dy = chol.solve(rhs);
      for (std::size_t k = 0; k < nb; ++k) {
        dZ[k] = Rd[k];
        for (const auto& [i, A] : p.blocks[k].A) dZ[k] -= dy(i) * A;
        Mat d = (Rc[k] - X[k] * dZ[k]) * Zinv[k];
        dX[k] = 0.5 * (d + d.transpose());
      }
    };
    auto steps = [&](double gamma, double& ap, double& ad) {
      ap = 1.0;
      ad = 1.0;
      for (std::size_t k = 0; k < nb; ++k) {
        const double sp = max_step(X[k], dX[k], gamma);
        const double sd = max_step(Z[k], dZ[k], gamma);
        if (sp < 0 || sd < 0) return false;
        ap = std::min(ap, sp);
        ad = std::min(ad, sd);
      }
      return true;
    };

    const double mu = xz / total_dim;
    std::vector<Mat> Rc(nb);
    Vec dy;

    // Predictor (affine scaling).
    for (std::size_t k = 0; k < nb; ++k) Rc[k] = -X[k] * Z[k];
    direction(Rc, dy);
    double ap = 0, ad = 0;
    if (!steps(1.0, ap, ad)) {
      return breakdown("iterate lost definiteness");
    }
    double xz_aff = 0;
    for (std::size_t k = 0; k < nb; ++k) {
      xz_aff += frob_dot(X[k] + ap * dX[k], Z[k] + ad * dZ[k]);
      dXp[k] = dX[k];
      dZp[k] = dZ[k];
    }
    double sigma = std::clamp(std::pow(std::max(xz_aff, 0.0) / xz, 3.0), 0.0, 1.0);

    // Corrector.
    for (std::size_t k = 0; k < nb; ++k) {
      Rc[k] = sigma * mu * Mat::Identity(X[k].rows(), X[k].cols()) - X[k] * Z[k] - dXp[k] * dZp[k];
    }
    direction(Rc, dy);
    const double gamma = 0.9 + 0.09 * std::min(ap, ad);
    if (!steps(gamma, ap, ad)) {
      return breakdown("iterate lost definiteness");
    }

    for (std::size_t k = 0; k < nb; ++k) {
      X[k] += ap * dX[k];
      Z[k] += ad * dZ[k];
      X[k] = 0.5 * (X[k] + X[k].transpose());
      Z[k] = 0.5 * (Z[k] + Z[k].transpose());
    }
    y += ad * dy;

    stalled = (std::max(ap, ad) < 1e-10) ? stalled + 1 : 0;
    if (stalled >= 5) {
      return breakdown("step lengths collapsed");
    }
  }
}

Mat one(double v) { return Mat::Constant(1, 1, v); }

// Appends the bound blocks shared by both phases: lower bounds (optionally
// coupled to the phase-one variable t) and the box.
void add_bounds(const LmiProblem& problem, const SolveOptions& opts, int t_index, StdProblem& sp) {
  const int m = problem.vars.size();
  for (const auto& [i, lb] : problem.lower_bounds) {
    StdBlock blk{one(-lb), {{i, one(-1.0)}}};
    if (t_index >= 0) blk.A.push_back({t_index, one(1.0)});
    sp.blocks.push_back(std::move(blk));
  }
  for (int i = 0; i < m; ++i) {
    sp.blocks.push_back({one(opts.box_radius), {{i, one(1.0)}}});
    if (!problem.lower_bounds.count(i)) sp.blocks.push_back({one(opts.box_radius), {{i, one(-1.0)}}});
  }
}

StdProblem to_standard(const LmiProblem& problem, const SolveOptions& opts, bool phase_one) {
  const int m = problem.vars.size();
  StdProblem sp;
  sp.m = phase_one ? m + 1 : m;
  const int t_index = phase_one ? m : -1;
  for (const auto& c : problem.constraints) {
    StdBlock blk;
    blk.C = c.F0.mat() - opts.margin * Mat::Identity(c.block_dim, c.block_dim);
    for (const auto& [i, f] : c.Fi) blk.A.push_back({i, -f.mat()});
    if (phase_one) blk.A.push_back({t_index, Mat::Identity(c.block_dim, c.block_dim)});
    sp.blocks.push_back(std::move(blk));
  }
  add_bounds(problem, opts, t_index, sp);
  if (phase_one) {
    sp.blocks.push_back({one(1.0), {{t_index, one(1.0)}}});
    sp.b = Vec::Zero(m + 1);
    sp.b(m) = 1.0;
  } else {
    sp.b = problem.objective;
  }
  return sp;
}

std::vector<double> block_min_eigs(const LmiProblem& problem, const Vec& y) {
  std::vector<double> out;
  out.reserve(problem.constraints.size());
  for (const auto& c : problem.constraints) out.push_back(min_eig(c.eval(y)));
  return out;
}

}  // namespace

SolveReport solve(const LmiProblem& problem, const SolveOptions& opts) {
  problem.validate();
  SolveReport rep;
  const int m = problem.vars.size();
  rep.y = Vec::Zero(m);

  // Phase one: maximize t s.t. F_j(y) - t I >= margin I, y_i - lb_i >= t,
  // t <= 1, |y| <= box. Strictly feasible on both sides by construction.
  const StdProblem p1 = to_standard(problem, opts, true);
  const IpmResult r1 = run_ipm(p1, opts);
  rep.iterations = r1.iterations;
  if (r1.status == SolveStatus::NumericalError || r1.status == SolveStatus::MaxIterations) {
    rep.status = r1.status;
    rep.message = "phase one: " + r1.message;
    return rep;
  }
  const Vec y1 = r1.y.head(m);
  const double t_lower = r1.y(m);
  const double t_upper = r1.pobj;
  rep.diagnostics["phase1_t"] = t_lower;
  rep.diagnostics["phase1_bound"] = t_upper;
  if (t_upper < 0.0 || t_lower < -opts.feas_tol) {
    // X from phase one is a Farkas-type certificate: it annihilates every
    // coefficient (up to the box multipliers) while <F0 - margin I, X> < 0.
    double cert = 0.0, resid = 0.0;
    const std::size_t nc = problem.constraints.size();
    Vec ax = Vec::Zero(m);
    double trace = 0.0;
    for (std::size_t k = 0; k < nc; ++k) {
      cert += frob_dot(p1.blocks[k].C, r1.X[k]);
      trace += r1.X[k].trace();
      for (const auto& [i, A] : p1.blocks[k].A)
        if (i < m) ax(i) += frob_dot(A, r1.X[k]);
    }
    resid = ax.norm();
    rep.status = SolveStatus::Infeasible;
    rep.y = y1;
    rep.diagnostics["farkas_value"] = cert;
    rep.diagnostics["farkas_residual"] = resid;
    rep.diagnostics["farkas_trace"] = trace;
    rep.min_block_eigs = block_min_eigs(problem, y1);
    rep.message = "no point satisfies the constraints at the requested margin";
    return rep;
  }

  // Phase two: the actual objective.
  const StdProblem p2 = to_standard(problem, opts, false);
  const IpmResult r2 = run_ipm(p2, opts);
  rep.iterations += r2.iterations;
  rep.diagnostics["gap"] = r2.gap;
  rep.diagnostics["primal_infeasibility"] = r2.pinf;
  rep.diagnostics["dual_infeasibility"] = r2.dinf;
  rep.diagnostics["primal_objective"] = -r2.pobj;
  rep.y = r2.y;
  rep.status = r2.status;
  rep.message = r2.message;
  if (r2.status != SolveStatus::Optimal) {
    rep.objective = problem.objective.dot(rep.y);
    rep.min_block_eigs = block_min_eigs(problem, rep.y);
    return rep;
  }

  // The convex combination with the phase-one point stays feasible, so a
  // marginal violation from round-off can be repaired at negligible cost.
  FeasibilityCheck chk = check_feasible(problem, rep.y, opts.margin - opts.feas_tol);
  if (!chk.ok && t_lower > 0.0) {
    for (double theta = 1e-8; theta <= 1.0; theta *= 10.0) {
      Vec cand = (1.0 - theta) * r2.y + theta * y1;
      if (check_feasible(problem, cand, opts.margin - opts.feas_tol).ok) {
        rep.y = cand;
        rep.diagnostics["polish_theta"] = theta;
        chk.ok = true;
        break;
      }
    }
  }
  rep.objective = problem.objective.dot(rep.y);
  rep.min_block_eigs = block_min_eigs(problem, rep.y);
  if (!chk.ok) {
    rep.status = SolveStatus::NumericalError;
    rep.message = "solution fails the feasibility replay";
    return rep;
  }
  if (rep.y.cwiseAbs().maxCoeff() >= 0.999 * opts.box_radius) {
    rep.status = SolveStatus::Unbounded;
    rep.message = "solution reaches the variable box; objective appears unbounded";
  }
  return rep;
}

}  // namespace satlmi
