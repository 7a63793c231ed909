#pragma once

#include "satlmi/linalg.hpp"
#include "satlmi/rng.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace satlmi {

/// Sigma_N = { A in R^{n2 x n3} : N1 + N2 A + A' N2' + A' N3 A <= 0 }.
struct QuadraticSet {
  SymMatrix N1;  // n3 x n3
  Mat N2;        // n3 x n2
  SymMatrix N3;  // n2 x n2, positive definite

  Eigen::Index n2() const { return N3.dim(); }
  Eigen::Index n3() const { return N1.dim(); }
  void validate() const;
};

/// M(A) = [[M1, M2 A], [*, M3]] required positive definite over Sigma_N.
struct RelaxationInstance {
  SymMatrix M1;  // n1 x n1
  Mat M2;        // n1 x n2
  SymMatrix M3;  // n3 x n3
  QuadraticSet N;

  Eigen::Index n1() const { return M1.dim(); }
  Eigen::Index n2() const { return N.n2(); }
  Eigen::Index n3() const { return N.n3(); }
  void validate() const;

  SymMatrix M_of(const Mat& A) const;
};

/// The quadratic form N1 + N2 A + A' N2' + A' N3 A.
SymMatrix sigma_form(const Mat& A, const QuadraticSet& N);

struct CenterRadius {
  Mat center;   // -N3^{-1} N2'
  SymMatrix Q;  // N2 N3^{-1} N2' - N1
  bool empty = false;
};

/// Square completion: A in Sigma_N  <=>  (A - center)' N3 (A - center) <= Q.
/// `empty` is set when Q has an eigenvalue below -1e-12 * (1 + |Q|).
CenterRadius sigma_center_radius(const QuadraticSet& N);

bool in_sigma(const Mat& A, const QuadraticSet& N, double tol = 0.0);

enum class SampleMode { Interior, Boundary };

/// Members of Sigma_N written as center + N3^{-1/2} Delta Q^{1/2} with a
/// contraction Delta. Boundary samples have top singular value exactly one
/// along a direction in range(Q). Throws EmptySet when Sigma_N is empty.
std::vector<Mat> sample_sigma(const QuadraticSet& N, int count, SampleMode mode, Rng& rng);

/// [[M1, 0, M2], [*, M3 + eta N1, eta N2], [*, *, eta N3]].
SymMatrix relaxed_lmi(const RelaxationInstance& inst, double eta);

struct EtaSearch {
  bool feasible = false;
  double eta = 0.0;
  double best_min_eig = 0.0;
  int evaluations = 0;
};

/// Maximizes lambda_min(relaxed_lmi(eta)) over log10(eta) in [-9, 6]: a
/// coarse log grid followed by golden-section refinement around the best
/// grid point, 200 evaluations in total. Feasible iff the maximum exceeds
/// `margin`.
EtaSearch search_eta(const RelaxationInstance& inst, double margin = 1e-9, int evaluations = 200);

struct EquivalenceReport {
  bool ii_feasible = false;
  std::optional<double> eta_star;
  double relaxed_min_eig = 0.0;
  /// Sampled members of Sigma_N with M(A) not positive definite.
  std::vector<Mat> i_violations;
  /// Smallest lambda_min(M(A)) over everything sampled, and where.
  double worst_min_eig = 0.0;
  Mat worst_A;
  int samples = 0;
};

/// Decides statement (ii) by the eta search (or at `eta_hint` if given and
/// feasible), then probes statement (i) with interior and boundary samples
/// of Sigma_N, the center, and a local descent on lambda_min(M(A)) started
/// from the worst boundary samples.
EquivalenceReport check_equivalence(const RelaxationInstance& inst, int samples, Rng& rng,
                                    std::optional<double> eta_hint = std::nullopt);

/// The S-lemma pair (Ms, Ns) with Ms - eta Ns == relaxed_lmi(inst, eta).
std::pair<SymMatrix, SymMatrix> slemma_embedding(const RelaxationInstance& inst);

/// Random instance with a nonempty Sigma_N built from a random center and a
/// PSD radius (rank-deficient with probability 1/4); M2 is scaled by
/// `coupling`.
RelaxationInstance random_instance(Rng& rng, Eigen::Index n1, Eigen::Index n2, Eigen::Index n3,
                                   double coupling = 0.5);
/// Random instance whose M(A) fails at a known boundary member `witness` of
/// Sigma_N: M2 is scaled to `overshoot` times the critical value there.
RelaxationInstance violating_instance(Rng& rng, Eigen::Index n1, Eigen::Index n2, Eigen::Index n3,
                                      Mat* witness = nullptr, double overshoot = 1.5);

/// Fixture format: M1, M2, M3, N1, N2, N3 in the matrix text format.
RelaxationInstance read_instance(std::istream& in);
void write_instance(std::ostream& out, const RelaxationInstance& inst);

}  // namespace satlmi
