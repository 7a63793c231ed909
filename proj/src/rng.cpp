#include "satlmi/rng.hpp"

#include <cmath>
#include <numbers>

namespace satlmi {

Rng::Rng(std::uint64_t seed) : seed_(seed), engine_(splitmix64(seed)) {}

std::uint64_t Rng::splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t Rng::hash(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

Rng Rng::split(std::uint64_t stream) const {
  return Rng(splitmix64(seed_ ^ splitmix64(stream + 0x9e3779b97f4a7c15ULL)));
}

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Vec Rng::normal_vec(Eigen::Index n) {
  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = normal();
  return v;
}

Mat Rng::normal_mat(Eigen::Index rows, Eigen::Index cols) {
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = normal();
  return m;
}

Vec Rng::unit_vec(Eigen::Index n) {
  for (;;) {
    Vec v = normal_vec(n);
    const double nv = v.norm();
    if (nv > 1e-12) return v / nv;
  }
}

Vec Rng::on_sphere(Eigen::Index n, double radius) { return radius * unit_vec(n); }

Vec Rng::in_ball(Eigen::Index n, double radius) {
  const double r = radius * std::pow(uniform(), 1.0 / static_cast<double>(n));
  return r * unit_vec(n);
}

Mat Rng::orthogonal(Eigen::Index n) {
  Eigen::HouseholderQR<Mat> qr(normal_mat(n, n));
  Mat q = qr.householderQ();
  Mat r = qr.matrixQR();
  for (Eigen::Index i = 0; i < n; ++i)
    if (r(i, i) < 0) q.col(i) = -q.col(i);
  return q;
}

}  // namespace satlmi
