#include "satlmi/linalg.hpp"

#include "satlmi/errors.hpp"

#include <charconv>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

namespace satlmi {

void require_finite(const Mat& m, const std::string& what) {
  if (!m.allFinite()) throw NumericalError(what + ": non-finite entry");
}

SymMatrix::SymMatrix(const Mat& m) {
  if (m.rows() != m.cols()) {
    throw ShapeError("SymMatrix: matrix is " + std::to_string(m.rows()) + "x" +
                     std::to_string(m.cols()) + ", expected square");
  }
  require_finite(m, "SymMatrix");
  m_ = 0.5 * (m + m.transpose());
}

SymMatrix SymMatrix::identity(Eigen::Index n) { return SymMatrix(Mat::Identity(n, n)); }

SymMatrix SymMatrix::zeros(Eigen::Index n) { return SymMatrix(Mat::Zero(n, n)); }

SymMatrix SymMatrix::diagonal(const Vec& d) { return SymMatrix(Mat(d.asDiagonal())); }

SymMatrix SymMatrix::operator+(const SymMatrix& o) const {
  if (dim() != o.dim()) throw ShapeError("SymMatrix +: dimension mismatch");
  return SymMatrix(Mat(m_ + o.m_));
}

SymMatrix SymMatrix::operator-(const SymMatrix& o) const {
  if (dim() != o.dim()) throw ShapeError("SymMatrix -: dimension mismatch");
  return SymMatrix(Mat(m_ - o.m_));
}

SymMatrix SymMatrix::operator*(double s) const { return SymMatrix(Mat(s * m_)); }

SymEigen sym_eig(const SymMatrix& m) {
  if (m.dim() == 0) return {};
  Eigen::SelfAdjointEigenSolver<Mat> es(m.mat());
  if (es.info() != Eigen::Success) throw NumericalError("sym_eig: eigensolver did not converge");
  return {es.eigenvalues(), es.eigenvectors()};
}

double min_eig(const SymMatrix& m) {
  Eigen::SelfAdjointEigenSolver<Mat> es(m.mat(), Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw NumericalError("min_eig: eigensolver did not converge");
  return es.eigenvalues()(0);
}

double max_eig(const SymMatrix& m) {
  Eigen::SelfAdjointEigenSolver<Mat> es(m.mat(), Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw NumericalError("max_eig: eigensolver did not converge");
  return es.eigenvalues()(m.dim() - 1);
}

bool is_pd(const SymMatrix& m, double margin) {
  if (m.dim() == 0 || !m.mat().allFinite()) return false;
  Mat shifted = m.mat();
  shifted.diagonal().array() -= margin;
  Eigen::LLT<Mat> llt(shifted);
  return llt.info() == Eigen::Success;
}

SymMatrix schur_complement(const SymMatrix& m, Eigen::Index split) {
  const Eigen::Index n = m.dim();
  if (split < 0 || split > n) throw ShapeError("schur_complement: split out of range");
  const Eigen::Index t = n - split;
  if (t == 0) return m;
  const Mat& a = m.mat();
  Eigen::FullPivLU<Mat> lu(a.bottomRightCorner(t, t));
  if (!lu.isInvertible()) throw SingularBlock("schur_complement: trailing block is singular");
  Mat s = a.topLeftCorner(split, split) -
          a.topRightCorner(split, t) * lu.solve(a.bottomLeftCorner(t, split));
  return SymMatrix(s);
}

Mat psd_sqrt(const SymMatrix& m) {
  SymEigen e = sym_eig(m);
  Vec root = e.values.cwiseMax(0.0).cwiseSqrt();
  return e.vectors * root.asDiagonal() * e.vectors.transpose();
}

// ---------------------------------------------------------------------------
// BlockSpec

BlockSpec::BlockSpec(std::vector<Eigen::Index> row_sizes, std::vector<Eigen::Index> col_sizes)
    : row_sizes_(std::move(row_sizes)), col_sizes_(std::move(col_sizes)) {
  if (row_sizes_.empty() || col_sizes_.empty()) throw ShapeError("BlockSpec: empty partition");
  for (auto s : row_sizes_)
    if (s < 0) throw ShapeError("BlockSpec: negative block size");
  for (auto s : col_sizes_)
    if (s < 0) throw ShapeError("BlockSpec: negative block size");
  cells_.resize(row_sizes_.size() * col_sizes_.size());
}

BlockSpec BlockSpec::symmetric(std::vector<Eigen::Index> sizes) { return BlockSpec(sizes, sizes); }

BlockSpec::Cell& BlockSpec::cell(std::size_t i, std::size_t j) {
  if (i >= row_sizes_.size() || j >= col_sizes_.size()) throw ShapeError("BlockSpec: cell out of range");
  return cells_[i * col_sizes_.size() + j];
}

const BlockSpec::Cell& BlockSpec::cell(std::size_t i, std::size_t j) const {
  if (i >= row_sizes_.size() || j >= col_sizes_.size()) throw ShapeError("BlockSpec: cell out of range");
  return cells_[i * col_sizes_.size() + j];
}

BlockSpec& BlockSpec::set(std::size_t i, std::size_t j, Mat block) {
  Cell& c = cell(i, j);
  if (block.rows() != row_sizes_[i] || block.cols() != col_sizes_[j]) {
    std::ostringstream msg;
    msg << "BlockSpec: block (" << i << "," << j << ") is " << block.rows() << "x" << block.cols()
        << ", expected " << row_sizes_[i] << "x" << col_sizes_[j];
    throw ShapeError(msg.str());
  }
  c.value = std::move(block);
  c.transpose_of.reset();
  return *this;
}

BlockSpec& BlockSpec::set_transpose_of(std::size_t i, std::size_t j, std::size_t src_i, std::size_t src_j) {
  Cell& c = cell(i, j);
  cell(src_i, src_j);  // range check
  if (row_sizes_[i] != col_sizes_[src_j] || col_sizes_[j] != row_sizes_[src_i])
    throw ShapeError("BlockSpec: transpose reference has incompatible shape");
  c.value.reset();
  c.transpose_of = std::make_pair(src_i, src_j);
  return *this;
}

BlockSpec& BlockSpec::mirror_upper() {
  if (row_sizes_ != col_sizes_) throw ShapeError("BlockSpec: mirror_upper needs a symmetric grid");
  for (std::size_t i = 0; i < row_sizes_.size(); ++i)
    for (std::size_t j = 0; j < i; ++j) {
      const Cell& c = cell(i, j);
      if (!c.value && !c.transpose_of) set_transpose_of(i, j, j, i);
    }
  return *this;
}

Eigen::Index BlockSpec::rows() const {
  Eigen::Index r = 0;
  for (auto s : row_sizes_) r += s;
  return r;
}

Eigen::Index BlockSpec::cols() const {
  Eigen::Index c = 0;
  for (auto s : col_sizes_) c += s;
  return c;
}

Mat assemble(const BlockSpec& spec) {
  Mat out = Mat::Zero(spec.rows(), spec.cols());
  Eigen::Index r0 = 0;
  for (std::size_t i = 0; i < spec.row_sizes_.size(); ++i) {
    Eigen::Index c0 = 0;
    for (std::size_t j = 0; j < spec.col_sizes_.size(); ++j) {
      const auto& c = spec.cell(i, j);
      const Eigen::Index h = spec.row_sizes_[i], w = spec.col_sizes_[j];
      if (c.value) {
        out.block(r0, c0, h, w) = *c.value;
      } else if (c.transpose_of) {
        const auto& src = spec.cell(c.transpose_of->first, c.transpose_of->second);
        if (src.transpose_of) throw ShapeError("BlockSpec: chained transpose reference");
        if (src.value) out.block(r0, c0, h, w) = src.value->transpose();
      }
      c0 += w;
    }
    r0 += spec.row_sizes_[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Matrix text format

namespace {

bool next_token(std::istream& in, std::string& tok) {
  while (in >> tok) {
    if (tok[0] == '#') {
      std::string rest;
      std::getline(in, rest);
      continue;
    }
    return true;
  }
  return false;
}

double parse_double(const std::string& tok) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(tok, &used);
  } catch (const std::exception&) {
    throw InputError("matrix text: cannot parse '" + tok + "' as a number");
  }
  if (used != tok.size()) throw InputError("matrix text: trailing characters in '" + tok + "'");
  return v;
}

long parse_count(const std::string& tok) {
  double v = parse_double(tok);
  if (v < 1 || v != static_cast<double>(static_cast<long>(v)))
    throw InputError("matrix text: invalid dimension '" + tok + "'");
  return static_cast<long>(v);
}

}  // namespace

Mat read_matrix(std::istream& in) {
  std::string tok;
  if (!next_token(in, tok)) throw InputError("matrix text: missing header");
  const long rows = parse_count(tok);
  if (!next_token(in, tok)) throw InputError("matrix text: missing column count");
  const long cols = parse_count(tok);
  Mat m(rows, cols);
  for (long i = 0; i < rows; ++i)
    for (long j = 0; j < cols; ++j) {
      if (!next_token(in, tok)) throw InputError("matrix text: too few entries");
      m(i, j) = parse_double(tok);
    }
  if (!m.allFinite()) throw InputError("matrix text: non-finite entry");
  return m;
}

std::string format_real(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void write_matrix(std::ostream& out, const Mat& m) {
  out << m.rows() << ' ' << m.cols() << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out << ' ';
      out << format_real(m(i, j));
    }
    out << '\n';
  }
}

std::vector<Mat> read_matrices(std::istream& in, std::size_t count) {
  std::vector<Mat> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) out.push_back(read_matrix(in));
  return out;
}

Mat load_matrix(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  return read_matrix(in);
}

void save_matrix(const std::string& path, const Mat& m) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path);
  write_matrix(out, m);
}

}  // namespace satlmi
