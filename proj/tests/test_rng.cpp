#include <doctest.h>

#include "satlmi/rng.hpp"

#include <random>

using namespace satlmi;

TEST_SUITE("rng") {
  TEST_CASE("splitmix64 matches the reference sequence") {
    // First outputs of the reference generator started from state 0.
    CHECK(Rng::splitmix64(0) == 0xe220a8397b1dcdafULL);
    CHECK(Rng::splitmix64(0x9e3779b97f4a7c15ULL) == 0x6e789e6aa1b965f4ULL);
  }

  TEST_CASE("engine is mt19937_64 seeded through splitmix64") {
    Rng r(42);
    std::mt19937_64 ref(Rng::splitmix64(42));
    for (int i = 0; i < 1000; ++i) CHECK(r.next() == ref());
  }

  TEST_CASE("same seed gives the same stream") {
    Rng a(7), b(7), c(8);
    bool differs = false;
    for (int i = 0; i < 100; ++i) {
      const double x = a.normal();
      CHECK(x == b.normal());
      if (x != c.normal()) differs = true;
    }
    CHECK(differs);
  }

  TEST_CASE("split streams are reproducible and distinct") {
    const Rng root(1);
    Rng x1 = root.split("x"), x2 = root.split("x"), u = root.split("u");
    CHECK(x1.seed() == x2.seed());
    CHECK(x1.seed() != u.seed());
    CHECK(x1.next() == x2.next());
    CHECK(Rng(1).split(3).seed() != Rng(2).split(3).seed());

    // Crude independence: sample correlation of paired uniforms.
    Rng a = root.split("a"), b = root.split("b");
    double sab = 0, sa = 0, sb = 0, saa = 0, sbb = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
      const double p = a.uniform(), q = b.uniform();
      sab += p * q;
      sa += p;
      sb += q;
      saa += p * p;
      sbb += q * q;
    }
    const double cov = sab / n - (sa / n) * (sb / n);
    const double corr = cov / std::sqrt((saa / n - sa * sa / n / n) * (sbb / n - sb * sb / n / n));
    CHECK(std::abs(corr) < 0.05);
  }

  TEST_CASE("uniform stays in range with the right mean") {
    Rng r(3);
    double sum = 0;
    for (int i = 0; i < 10000; ++i) {
      const double u = r.uniform(-2.0, 5.0);
      CHECK(u >= -2.0);
      CHECK(u < 5.0);
      sum += u;
    }
    CHECK(sum / 10000 == doctest::Approx(1.5).epsilon(0.05));
  }

  TEST_CASE("normal has unit variance") {
    Rng r(4);
    double s = 0, s2 = 0;
    const int n = 50000;
    for (int i = 0; i < n; ++i) {
      const double z = r.normal();
      s += z;
      s2 += z * z;
    }
    CHECK(std::abs(s / n) < 0.03);
    CHECK(s2 / n == doctest::Approx(1.0).epsilon(0.03));
  }

  TEST_CASE("sphere and ball radii") {
    Rng r(5);
    int inner = 0;
    for (int i = 0; i < 2000; ++i) {
      CHECK(r.on_sphere(3, 2.5).norm() == doctest::Approx(2.5));
      const double b = r.in_ball(2, 2.0).norm();
      CHECK(b <= 2.0);
      if (b <= std::sqrt(2.0)) ++inner;
    }
    // Uniform in a disc: half the mass lies inside radius R / sqrt(2).
    CHECK(inner / 2000.0 == doctest::Approx(0.5).epsilon(0.08));
  }

  TEST_CASE("orthogonal matrices are orthogonal") {
    Rng r(6);
    for (Eigen::Index n = 1; n <= 5; ++n) {
      const Mat q = r.orthogonal(n);
      CHECK((q.transpose() * q - Mat::Identity(n, n)).norm() <= 1e-12);
    }
  }
}
