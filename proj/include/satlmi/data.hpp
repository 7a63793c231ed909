#pragma once

#include "satlmi/linalg.hpp"
#include "satlmi/qmi.hpp"
#include "satlmi/saturated_sys.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

namespace satlmi {

/// Measured transitions x+_k = A x_k + B u_k + w_k stacked column-wise.
struct DataCollection {
  Mat Xplus;  // nx x p
  Mat X;      // nx x p
  Mat U;      // nu x p

  Eigen::Index p() const { return X.cols(); }
  Eigen::Index nx() const { return X.rows(); }
  Eigen::Index nu() const { return U.rows(); }
  /// [X; U]
  Mat stacked() const;
  void validate() const;
};

struct GeneratedData {
  DataCollection data;
  Mat omega;  // the noise realization, for oracle checks only
};

/// x components uniform on [-1, 1], u components uniform on
/// [-u_range_i, u_range_i] (u_range defaults to u_bar) and passed through
/// sat(), noise columns uniform in the ball of radius
/// sqrt(lambda * lambda_min(delta_omega)).
GeneratedData generate_data(const Plant& plant, const NoiseModel& noise, int p, std::uint64_t seed,
                            const std::optional<Vec>& u_range = std::nullopt);

struct Informativity {
  bool informative = false;
  double min_singular = 0.0;
};

/// Nonsingularity of [X; U][X; U]': lambda_min > 1e-10 * lambda_max.
Informativity informativity(const DataCollection& data);

/// lambda_max(omega omega' - p lambda delta_omega); <= 0 means the
/// realization lies in the noise set.
double noise_bound_excess(const Mat& omega, const NoiseModel& noise);

/// The set of [A'; B'] consistent with the data, as a quadratic matrix set:
/// N1 = X+ X+' - p lambda delta, N2 = -X+ [X; U]', N3 = [X; U][X; U]'.
QuadraticSet consistency_set(const DataCollection& data, const NoiseModel& noise);

/// [A'; B'] for a plant.
Mat stacked_AB(const Plant& plant);

/// Residual form: omega = X+ - A X - B U satisfies the noise bound.
bool consistent_residual(const DataCollection& data, const NoiseModel& noise, const Mat& A, const Mat& B,
                         double tol = 0.0);

/// Plant file: A, B and u_bar (a column) in the matrix text format.
Plant read_plant(std::istream& in);
void write_plant(std::ostream& out, const Plant& plant);
Plant load_plant(const std::string& path);
void save_plant(const std::string& path, const Plant& plant);

/// Data file: Xplus, X, U in the matrix text format.
DataCollection read_data(std::istream& in);
void write_data(std::ostream& out, const DataCollection& data);
DataCollection load_data(const std::string& path);
void save_data(const std::string& path, const DataCollection& data);

}  // namespace satlmi
