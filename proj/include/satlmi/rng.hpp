#pragma once

#include "satlmi/linalg.hpp"

#include <cstdint>
#include <random>
#include <string_view>

namespace satlmi {

/// Seedable, portable random stream.
///
/// Version 1 of the stream definition, pinned so that outputs are identical
/// across platforms and standard libraries:
///   engine   std::mt19937_64 (output sequence fixed by the C++ standard),
///            seeded with splitmix64(seed)
///   uniform  (next() >> 11) * 2^-53, in [0, 1)
///   normal   Box-Muller on two uniforms, cosine branch only
///   split    child seed = splitmix64(seed ^ splitmix64(stream + 0x9e37...))
/// std::*_distribution is deliberately not used; its algorithms are
/// implementation-defined.
class Rng {
 public:
  static constexpr int kVersion = 1;

  explicit Rng(std::uint64_t seed);

  static std::uint64_t splitmix64(std::uint64_t x);
  /// FNV-1a, for deriving stream ids from names.
  static std::uint64_t hash(std::string_view s);

  /// Independent child stream.
  Rng split(std::uint64_t stream) const;
  Rng split(std::string_view name) const { return split(hash(name)); }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next() { return engine_(); }

  double uniform();
  double uniform(double lo, double hi);
  double normal();

  Vec normal_vec(Eigen::Index n);
  Mat normal_mat(Eigen::Index rows, Eigen::Index cols);
  /// Uniform on the unit sphere.
  Vec unit_vec(Eigen::Index n);
  /// Uniform on the sphere of the given radius.
  Vec on_sphere(Eigen::Index n, double radius);
  /// Uniform in the ball of the given radius.
  Vec in_ball(Eigen::Index n, double radius);
  /// Haar-distributed orthogonal matrix.
  Mat orthogonal(Eigen::Index n);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace satlmi
