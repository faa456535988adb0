#pragma once

#include <stdexcept>

#include <Eigen/Core>

#include "mfc/linmodel.hpp"

namespace mfc {

struct KfConfig {
  Eigen::MatrixXd process_noise;       // Q_KF, n x n
  Eigen::MatrixXd measurement_noise;   // R_KF, p x p
  Eigen::VectorXd initial_estimate;    // n
  Eigen::MatrixXd initial_covariance;  // n x n

  /// Reduced-model filter with process noise default_q_kf(beta), R = 1e-20 I,
  /// zero initial estimate and default_initial_covariance().
  static KfConfig for_reduced_model(double beta);

  void validate(int states, int outputs) const;
};

struct KfState {
  Eigen::VectorXd estimate;    // a posteriori x_hat
  Eigen::MatrixXd covariance;  // a posteriori P_hat
  Eigen::MatrixXd gain;        // K of the last update
  Eigen::VectorXd innovation;  // y - H x' of the last update
  Eigen::MatrixXd innovation_covariance;  // H P' H^T + R of the last update

  static KfState initial(const KfConfig& cfg);
  /// Normalized innovation squared of the last update.
  double nis() const;
};

class SingularityError : public std::runtime_error {
 public:
  SingularityError(const std::string& what, double condition_estimate)
      : std::runtime_error(what), condition_estimate_(condition_estimate) {}
  double condition_estimate() const { return condition_estimate_; }

 private:
  double condition_estimate_;
};

/// One predict/update cycle: x' = F x_hat + G u_prev, P' = F P F^T + Q,
/// K = P' H^T (H P' H^T + R)^-1, x_hat = x' + K (y - H x'),
/// P_hat = P' - K H P'. The covariance update is evaluated in Joseph form and
/// symmetrized.
KfState kf_step(const KfState& state, const Eigen::VectorXd& u_prev, const Eigen::VectorXd& y,
                const DiscreteModel& model, const KfConfig& cfg);

/// Block-diagonal process noise: flows beta * diag(1, 1, 1, 9) * 1e-18,
/// pressures and their derivatives beta * 1e8.
Eigen::MatrixXd default_q_kf(double beta);

/// Hand-adjusted process noise used on the bench.
Eigen::MatrixXd lab_q_kf();

/// Independent flow sensors with variance 1e-20 (m^3/s)^2.
Eigen::MatrixXd default_r_kf();

/// Identity scaled to the magnitudes of default_q_kf(1).
Eigen::MatrixXd default_initial_covariance();

/// Smallest eigenvalue of the covariance after scaling by its diagonal; the
/// estimate mixes quantities twenty orders of magnitude apart.
double scaled_min_eigenvalue(const Eigen::MatrixXd& covariance);

}  // namespace mfc
