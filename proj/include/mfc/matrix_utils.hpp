#pragma once

#include <Eigen/Core>

namespace mfc {

/// Diagonal similarity scaling (radix-2 Osborne/Parlett-Reinsch balancing).
/// Returns d such that diag(d)^-1 * A * diag(d) has comparable row and column
/// norms. The plant and reduced models mix m^3/s with Pa, so their raw matrices
/// span some thirty orders of magnitude.
Eigen::VectorXd balancing_scale(const Eigen::MatrixXd& a);

/// exp(A) evaluated on the balanced matrix and scaled back.
Eigen::MatrixXd balanced_expm(const Eigen::MatrixXd& a);

/// Largest eigenvalue magnitude, computed on the balanced matrix.
double spectral_radius(const Eigen::MatrixXd& a);

/// Symmetric part, (A + A^T) / 2.
inline Eigen::MatrixXd symmetrized(const Eigen::MatrixXd& a) { return 0.5 * (a + a.transpose()); }

}  // namespace mfc
