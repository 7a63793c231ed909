#pragma once

#include "satlmi/linalg.hpp"

#include <map>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace satlmi {

class AffineMat;

/// Decision variables of an LMI problem. Packing order is fixed as scalars,
/// symmetric blocks (upper triangle, row-major), diagonal blocks, then
/// rectangular blocks (row-major); within each kind, declaration order.
class VarSpace {
 public:
  enum class Kind { Scalar, Sym, Diag, Rect };

  struct Entry {
    std::string name;
    Kind kind;
    Eigen::Index rows;
    Eigen::Index cols;
    int offset;  // first packed coordinate
    int size;    // number of packed coordinates
  };

  VarSpace& add_scalar(const std::string& name);
  VarSpace& add_sym(const std::string& name, Eigen::Index n);
  VarSpace& add_diag(const std::string& name, Eigen::Index n);
  VarSpace& add_rect(const std::string& name, Eigen::Index rows, Eigen::Index cols);

  int size() const { return size_; }
  bool contains(const std::string& name) const;
  const Entry& entry(const std::string& name) const;
  /// Entries in packing order.
  const std::vector<Entry>& entries() const { return entries_; }

  /// Packed coordinate of a scalar variable.
  int scalar_index(const std::string& name) const;
  /// The variable as an affine function of the packed vector.
  AffineMat var(const std::string& name) const;

  Vec pack(const std::map<std::string, Mat>& values) const;
  std::map<std::string, Mat> unpack(const Vec& y) const;
  /// Value of one variable at y.
  Mat value(const std::string& name, const Vec& y) const;

  /// Human-readable label of packed coordinate k, e.g. "W[0,1]".
  std::string coordinate_label(int k) const;

 private:
  VarSpace& add(const std::string& name, Kind kind, Eigen::Index rows, Eigen::Index cols, int size);
  void relayout();

  std::vector<Entry> entries_;
  int size_ = 0;
};

/// Matrix-valued affine function  C + sum_k y_k * T_k  of the packed vector.
class AffineMat {
 public:
  AffineMat(Eigen::Index rows, Eigen::Index cols);
  explicit AffineMat(Mat constant);

  Eigen::Index rows() const { return constant_.rows(); }
  Eigen::Index cols() const { return constant_.cols(); }
  const Mat& constant() const { return constant_; }
  const std::map<int, Mat>& terms() const { return terms_; }

  AffineMat& add_term(int coord, const Mat& coeff);
  Mat eval(const Vec& y) const;
  AffineMat transpose() const;

  AffineMat operator+(const AffineMat& o) const;
  AffineMat operator-(const AffineMat& o) const;
  AffineMat operator-() const;
  AffineMat operator*(double s) const;
  friend AffineMat operator*(double s, const AffineMat& a) { return a * s; }
  AffineMat operator*(const Mat& right) const;
  friend AffineMat operator*(const Mat& left, const AffineMat& a);

 private:
  Mat constant_;
  std::map<int, Mat> terms_;
};

/// m * s for a 1x1 affine expression s (a scalar variable times a constant
/// matrix).
AffineMat scaled(const Mat& m, const AffineMat& s);

/// F0 + sum_i y_i F_i  >=  margin * I.
struct LmiConstraint {
  std::string name;
  Eigen::Index block_dim = 0;
  SymMatrix F0;
  std::map<int, SymMatrix> Fi;

  SymMatrix eval(const Vec& y) const;

  /// Builds a constraint from a square affine expression whose constant and
  /// coefficients are symmetric (to 1e-12 relative); throws ShapeError
  /// otherwise.
  static LmiConstraint from_affine(std::string name, const AffineMat& a);
};

/// Symmetric block grid of affine expressions. Only the upper triangle
/// (i <= j) is set; the lower triangle is the transpose.
class AffineBlocks {
 public:
  explicit AffineBlocks(std::vector<Eigen::Index> sizes);
  AffineBlocks& set(std::size_t i, std::size_t j, const AffineMat& block);
  AffineMat assemble() const;
  LmiConstraint constraint(std::string name) const;

 private:
  std::vector<Eigen::Index> sizes_;
  std::map<std::pair<std::size_t, std::size_t>, AffineMat> blocks_;
};

/// Maximize objective^T y subject to every constraint and the lower bounds.
struct LmiProblem {
  VarSpace vars;
  std::vector<LmiConstraint> constraints;
  Vec objective;
  std::map<int, double> lower_bounds;

  /// Throws ShapeError if a constraint addresses a missing coordinate or the
  /// objective has the wrong length.
  void validate() const;
};

struct SolveOptions {
  double feas_tol = 1e-8;
  double gap_tol = 1e-7;
  int max_iter = 200;
  double margin = 1e-7;
  /// Every coordinate is confined to [-box_radius, box_radius]; a solution
  /// pressed against the box is reported as Unbounded.
  double box_radius = 1e6;
  /// Accepted on numerical breakdown instead of failing.
  double loose_gap_tol = 1e-5;
  double loose_feas_tol = 1e-5;
};

enum class SolveStatus { Optimal, Infeasible, Unbounded, MaxIterations, NumericalError };

std::string to_string(SolveStatus s);

struct SolveReport {
  SolveStatus status = SolveStatus::NumericalError;
  Vec y;
  double objective = 0.0;
  std::vector<double> min_block_eigs;
  int iterations = 0;
  /// Solver internals: phase-one margin, duality gap, residuals and, for
  /// infeasible problems, the Farkas certificate value and residual.
  std::map<std::string, double> diagnostics;
  std::string message;
};

SolveReport solve(const LmiProblem& problem, const SolveOptions& opts = {});

struct FeasibilityCheck {
  bool ok = false;
  double worst = 0.0;  // min over constraints of lambda_min(F(y))
};

/// Solver-free verifier: recomputes every block from y and its eigenvalues.
FeasibilityCheck check_feasible(const LmiProblem& problem, const Vec& y, double margin);

/// Text dump of the problem for cross-checks against external solvers.
nlohmann::json dump_problem(const LmiProblem& problem);

}  // namespace satlmi
