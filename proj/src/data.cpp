#include "satlmi/data.hpp"

#include "satlmi/errors.hpp"

#include <cmath>
#include <fstream>

namespace satlmi {

Mat DataCollection::stacked() const {
  Mat s(nx() + nu(), p());
  s << X, U;
  return s;
}

void DataCollection::validate() const {
  if (X.cols() < 1) throw InputError("data: p must be at least 1");
  if (Xplus.cols() != X.cols() || U.cols() != X.cols())
    throw ShapeError("data: Xplus, X and U must have the same number of columns");
  if (Xplus.rows() != X.rows()) throw ShapeError("data: Xplus and X must have the same number of rows");
  if (U.rows() < 1) throw ShapeError("data: U must have at least one row");
  require_finite(Xplus, "data Xplus");
  require_finite(X, "data X");
  require_finite(U, "data U");
}

GeneratedData generate_data(const Plant& plant, const NoiseModel& noise, int p, std::uint64_t seed,
                            const std::optional<Vec>& u_range) {
  plant.validate();
  noise.validate(plant.nx());
  if (p < 1) throw InputError("generate_data: p must be at least 1");
  const Vec range = u_range.value_or(plant.u_bar);
  if (range.size() != plant.nu()) throw ShapeError("generate_data: u_range must have nu entries");

  const Rng root(seed);
  Rng xs = root.split("x"), us = root.split("u"), ws = root.split("w");
  const double radius = std::sqrt(noise.lambda * std::max(min_eig(noise.delta_omega), 0.0));

  GeneratedData out;
  DataCollection& d = out.data;
  d.X.resize(plant.nx(), p);
  d.U.resize(plant.nu(), p);
  out.omega = Mat::Zero(plant.nx(), p);
  for (int k = 0; k < p; ++k) {
    for (Eigen::Index i = 0; i < plant.nx(); ++i) d.X(i, k) = xs.uniform(-1.0, 1.0);
    Vec u(plant.nu());
    for (Eigen::Index i = 0; i < plant.nu(); ++i) u(i) = us.uniform(-range(i), range(i));
    d.U.col(k) = sat(u, plant.u_bar);
    if (radius > 0.0) out.omega.col(k) = ws.in_ball(plant.nx(), radius);
  }
  d.Xplus = plant.A * d.X + plant.B * d.U + out.omega;
  return out;
}

Informativity informativity(const DataCollection& data) {
  data.validate();
  const Mat s = data.stacked();
  const SymEigen e = sym_eig(SymMatrix(Mat(s * s.transpose())));
  const double lo = e.values(0), hi = e.values(e.values.size() - 1);
  Informativity out;
  out.informative = hi > 0.0 && lo > 1e-10 * hi;
  out.min_singular = std::sqrt(std::max(lo, 0.0));
  return out;
}

double noise_bound_excess(const Mat& omega, const NoiseModel& noise) {
  noise.validate(omega.rows());
  const double p = static_cast<double>(omega.cols());
  return max_eig(SymMatrix(Mat(omega * omega.transpose() - p * noise.lambda * noise.delta_omega.mat())));
}

QuadraticSet consistency_set(const DataCollection& data, const NoiseModel& noise) {
  data.validate();
  noise.validate(data.nx());
  const Mat s = data.stacked();
  const double p = static_cast<double>(data.p());
  QuadraticSet q;
  q.N1 = SymMatrix(Mat(data.Xplus * data.Xplus.transpose() - p * noise.lambda * noise.delta_omega.mat()));
  q.N2 = -data.Xplus * s.transpose();
  q.N3 = SymMatrix(Mat(s * s.transpose()));
  return q;
}

Mat stacked_AB(const Plant& plant) {
  Mat ab(plant.nx() + plant.nu(), plant.nx());
  ab << plant.A.transpose(), plant.B.transpose();
  return ab;
}

bool consistent_residual(const DataCollection& data, const NoiseModel& noise, const Mat& A, const Mat& B,
                         double tol) {
  data.validate();
  if (A.rows() != data.nx() || A.cols() != data.nx() || B.rows() != data.nx() || B.cols() != data.nu())
    throw ShapeError("consistent_residual: A, B do not match the data");
  const Mat omega = data.Xplus - A * data.X - B * data.U;
  return noise_bound_excess(omega, noise) <= tol;
}

Plant read_plant(std::istream& in) {
  const auto m = read_matrices(in, 3);
  Plant plant;
  plant.A = m[0];
  plant.B = m[1];
  if (m[2].cols() != 1 && m[2].rows() == 1) {
    plant.u_bar = m[2].row(0).transpose();
  } else if (m[2].cols() == 1) {
    plant.u_bar = m[2].col(0);
  } else {
    throw InputError("plant file: u_bar must be a vector");
  }
  plant.validate();
  return plant;
}

void write_plant(std::ostream& out, const Plant& plant) {
  out << "# A\n";
  write_matrix(out, plant.A);
  out << "# B\n";
  write_matrix(out, plant.B);
  out << "# u_bar\n";
  write_matrix(out, plant.u_bar);
}

Plant load_plant(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  return read_plant(in);
}

void save_plant(const std::string& path, const Plant& plant) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path);
  write_plant(out, plant);
}

DataCollection read_data(std::istream& in) {
  const auto m = read_matrices(in, 3);
  DataCollection d{m[0], m[1], m[2]};
  d.validate();
  return d;
}

void write_data(std::ostream& out, const DataCollection& data) {
  out << "# Xplus\n";
  write_matrix(out, data.Xplus);
  out << "# X\n";
  write_matrix(out, data.X);
  out << "# U\n";
  write_matrix(out, data.U);
}

DataCollection load_data(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  return read_data(in);
}

void save_data(const std::string& path, const DataCollection& data) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path);
  write_data(out, data);
}

}  // namespace satlmi
