#pragma once

// Dense convex quadratic programming for MPC-sized problems:
//
//   minimize   1/2 z^T E z + f^T z
//   subject to M z <= gamma
//
// Solved with the Goldfarb-Idnani dual active-set method. The unconstrained
// minimizer is the starting point; violated constraints are added one at a
// time while dual feasibility is maintained, and the factorization of the
// active set is updated with Givens rotations. Rows with gamma = +inf are
// ignored.

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace mfc {

enum class QpStatus { kOptimal, kInfeasible, kMaxIter };

const char* to_string(QpStatus status);

struct QpProblem {
  Eigen::MatrixXd hessian;      // E, d x d, symmetric PSD
  Eigen::VectorXd gradient;     // f, d
  Eigen::MatrixXd constraints;  // M, c x d
  Eigen::VectorXd bounds;       // gamma, c

  int variables() const { return static_cast<int>(gradient.size()); }
  int rows() const { return static_cast<int>(bounds.size()); }

  /// Throws std::invalid_argument on shape mismatch, non-finite data, an
  /// asymmetric Hessian (1e-12 relative) or one with an eigenvalue below
  /// -1e-10 relative to its largest.
  void validate() const;

  double objective(const Eigen::VectorXd& z) const;
};

struct QpOptions {
  /// Relative primal feasibility tolerance of the returned point.
  double feasibility_tol = 1e-8;
  /// 0 selects 50 * (d + c).
  int max_iterations = 0;
};

struct QpSolution {
  Eigen::VectorXd z;
  std::vector<int> active_set;
  Eigen::VectorXd multipliers;  // one per constraint row, zero when inactive
  QpStatus status = QpStatus::kMaxIter;
  double kkt_residual = 0.0;
  double objective = 0.0;
  int iterations = 0;
  /// Multiple of the identity added to E when its Cholesky factorization failed.
  double regularization = 0.0;
  /// Worst violation max(M z - gamma) over finite rows.
  double max_violation = 0.0;
  /// For kInfeasible: y >= 0 with M^T y = 0 and gamma^T y < 0.
  Eigen::VectorXd farkas_certificate;
};

QpSolution solve_qp(const QpProblem& problem, const std::optional<Eigen::VectorXd>& warm_start = std::nullopt,
                    const QpOptions& options = {});

/// Plain-text dump used to capture failing solves.
std::string to_text(const QpProblem& problem);
QpProblem parse_qp(const std::string& text);

}  // namespace mfc
