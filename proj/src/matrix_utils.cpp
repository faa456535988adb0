#include "mfc/matrix_utils.hpp"

#include <cmath>

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/MatrixFunctions>

namespace mfc {

Eigen::VectorXd balancing_scale(const Eigen::MatrixXd& a) {
  const Eigen::Index n = a.rows();
  Eigen::VectorXd d = Eigen::VectorXd::Ones(n);
  Eigen::MatrixXd b = a;
  constexpr double radix = 2.0;
  bool converged = false;
  for (int sweep = 0; sweep < 200 && !converged; ++sweep) {
    converged = true;
    for (Eigen::Index i = 0; i < n; ++i) {
      double c = 0.0;
      double r = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (j == i) continue;
        c += std::abs(b(j, i));
        r += std::abs(b(i, j));
      }
      if (c == 0.0 || r == 0.0) continue;
      double g = r / radix;
      double f = 1.0;
      const double s = c + r;
      while (c < g) {
        f *= radix;
        c *= radix * radix;
      }
      g = r * radix;
      while (c >= g) {
        f /= radix;
        c /= radix * radix;
      }
      if ((c + r) / f < 0.95 * s) {
        converged = false;
        d(i) *= f;
        b.row(i) /= f;
        b.col(i) *= f;
      }
    }
  }
  return d;
}

Eigen::MatrixXd balanced_expm(const Eigen::MatrixXd& a) {
  const Eigen::VectorXd d = balancing_scale(a);
  const Eigen::MatrixXd scaled = d.cwiseInverse().asDiagonal() * a * d.asDiagonal();
  const Eigen::MatrixXd e = scaled.exp();
  return d.asDiagonal() * e * d.cwiseInverse().asDiagonal();
}

double spectral_radius(const Eigen::MatrixXd& a) {
  const Eigen::VectorXd d = balancing_scale(a);
  const Eigen::MatrixXd scaled = d.cwiseInverse().asDiagonal() * a * d.asDiagonal();
  Eigen::EigenSolver<Eigen::MatrixXd> solver(scaled, false);
  return solver.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace mfc
