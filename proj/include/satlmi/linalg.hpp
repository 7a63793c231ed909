#pragma once

#include <Eigen/Dense>

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace satlmi {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

/// Throws NumericalError if any entry of `m` is NaN or infinite.
void require_finite(const Mat& m, const std::string& what);

/// Dense real symmetric matrix. Construction symmetrizes its argument as
/// (M + M^T) / 2, so entries(i,j) == entries(j,i) holds exactly.
class SymMatrix {
 public:
  SymMatrix() = default;
  explicit SymMatrix(const Mat& m);

  static SymMatrix identity(Eigen::Index n);
  static SymMatrix zeros(Eigen::Index n);
  static SymMatrix diagonal(const Vec& d);

  Eigen::Index dim() const { return m_.rows(); }
  const Mat& mat() const { return m_; }
  double operator()(Eigen::Index i, Eigen::Index j) const { return m_(i, j); }

  SymMatrix operator+(const SymMatrix& o) const;
  SymMatrix operator-(const SymMatrix& o) const;
  SymMatrix operator*(double s) const;
  friend SymMatrix operator*(double s, const SymMatrix& m) { return m * s; }

  bool operator==(const SymMatrix& o) const { return m_ == o.m_; }

 private:
  Mat m_;
};

struct SymEigen {
  Vec values;   // ascending
  Mat vectors;  // orthonormal columns, vectors.col(k) pairs with values(k)
};

/// Symmetric eigendecomposition with ascending eigenvalues.
SymEigen sym_eig(const SymMatrix& m);

double min_eig(const SymMatrix& m);
double max_eig(const SymMatrix& m);

/// True iff lambda_min(m) > margin, decided by attempting a Cholesky
/// factorization of m - margin*I. Never throws.
bool is_pd(const SymMatrix& m, double margin = 0.0);

/// M11 - M12 * M22^{-1} * M21 where M11 is the leading `split` x `split`
/// block. Throws SingularBlock when M22 cannot be factored.
SymMatrix schur_complement(const SymMatrix& m, Eigen::Index split);

/// Symmetric square root of a PSD matrix (negative eigenvalues clipped).
Mat psd_sqrt(const SymMatrix& m);

/// Grid of blocks assembled into one dense matrix. Empty cells are zero;
/// a cell may instead reference the transpose of another cell.
class BlockSpec {
 public:
  BlockSpec(std::vector<Eigen::Index> row_sizes, std::vector<Eigen::Index> col_sizes);

  /// Symmetric grid: row and column partitions coincide.
  static BlockSpec symmetric(std::vector<Eigen::Index> sizes);

  BlockSpec& set(std::size_t i, std::size_t j, Mat block);
  BlockSpec& set_transpose_of(std::size_t i, std::size_t j, std::size_t src_i, std::size_t src_j);
  /// For a symmetric grid, fills every empty lower cell with the transpose
  /// of its upper mirror.
  BlockSpec& mirror_upper();

  Eigen::Index rows() const;
  Eigen::Index cols() const;
  const std::vector<Eigen::Index>& row_sizes() const { return row_sizes_; }
  const std::vector<Eigen::Index>& col_sizes() const { return col_sizes_; }

 private:
  friend Mat assemble(const BlockSpec& spec);

  struct Cell {
    std::optional<Mat> value;
    std::optional<std::pair<std::size_t, std::size_t>> transpose_of;
  };
  Cell& cell(std::size_t i, std::size_t j);
  const Cell& cell(std::size_t i, std::size_t j) const;

  std::vector<Eigen::Index> row_sizes_;
  std::vector<Eigen::Index> col_sizes_;
  std::vector<Cell> cells_;
};

/// Places every block of `spec`. Throws ShapeError on dimension mismatch.
Mat assemble(const BlockSpec& spec);

// Matrix text format: a header line "rows cols" followed by the entries in
// row-major order, whitespace separated. Lines starting with '#' are skipped.
/// Shortest decimal text that reads back to the same double.
std::string format_real(double v);

Mat read_matrix(std::istream& in);
void write_matrix(std::ostream& out, const Mat& m);
std::vector<Mat> read_matrices(std::istream& in, std::size_t count);
Mat load_matrix(const std::string& path);
void save_matrix(const std::string& path, const Mat& m);

}  // namespace satlmi
