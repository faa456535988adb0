#pragma once

// Receding-horizon controller on the incremental model x = [dx_m; y].
// Each period it predicts Y = Psi x + Phi dU over N steps, minimizes
// |Y - Y_d|^2 + alpha |dU|^2 subject to bounds on U, dU and Y, and applies
// only the first increment.

#include <optional>

#include <Eigen/Core>

#include "mfc/linmodel.hpp"
#include "mfc/qp.hpp"

namespace mfc {

struct MpcConfig {
  int horizon = 10;
  double sample_period = 0.1;
  double alpha = 1e-7;
  Vec3 u_min = Vec3::Zero();                // Pa
  Vec3 u_max = Vec3::Constant(150000.0);    // Pa
  Vec3 du_max_rate = Vec3::Constant(1e5);   // Pa/s
  Vec3 y_min = Vec3::Zero();                // m^3/s, -inf disables
  Vec3 y_max = Vec3::Constant(INFINITY);    // m^3/s, +inf disables
  /// Output constraints relaxed by one slack variable penalized with soft_weight.
  bool soft_output_constraints = false;
  double soft_weight = 1e6;
  /// Outputs enter the cost in m^3/s times this factor (1e9: ul/s), so that
  /// alpha weighs pressure increments in Pa against flow errors in ul/s.
  double output_scale = 1e9;

  Vec3 du_max() const { return du_max_rate * sample_period; }
  void validate() const;
};

struct PredictionMatrices {
  Eigen::MatrixXd psi;  // Np x n
  Eigen::MatrixXd phi;  // Np x Nm
};

PredictionMatrices build_prediction(const ExtendedModel& ext, int horizon);

struct QuadraticCost {
  Eigen::MatrixXd hessian;
  Eigen::VectorXd gradient;
};

/// E = 2 (s^2 Phi^T Phi + alpha I), f = 2 s^2 Phi^T (Psi x - Y_d) with s the
/// output scale.
QuadraticCost build_cost(const PredictionMatrices& pred, const Eigen::VectorXd& x, const Eigen::VectorXd& y_ref,
                         const MpcConfig& cfg);

struct LinearConstraints {
  Eigen::MatrixXd m;
  Eigen::VectorXd gamma;
};

/// M dU <= gamma with row blocks (-C2, C2, -I, I, -Phi, Phi): lower and upper
/// input bounds, increment bounds, lower and upper output bounds.
LinearConstraints build_constraints(const Vec3& u_prev, const PredictionMatrices& pred, const Eigen::VectorXd& x,
                                    const MpcConfig& cfg);

/// Current reference repeated over the horizon.
Eigen::VectorXd hold_reference(const Vec3& ref, int horizon);

struct MpcStepResult {
  Vec3 u = Vec3::Zero();
  Vec3 du = Vec3::Zero();
  QpStatus status = QpStatus::kOptimal;
  bool fallback = false;  // QP failed, previous action held
  double kkt_residual = 0.0;
  int active_set_size = 0;
  int iterations = 0;
  double slack = 0.0;
  Eigen::VectorXd du_sequence;  // full optimal dU over the horizon
};

class MpcController {
 public:
  MpcController(const ExtendedModel& ext, const MpcConfig& cfg, const Vec3& u_initial = Vec3::Zero());

  /// Builds x = [x_hat - x_hat_prev; y], solves the QP and applies the first
  /// increment after clamping it to the hard input bounds.
  MpcStepResult step(const Eigen::VectorXd& x_hat, const Eigen::VectorXd& x_hat_prev, const Vec3& y_measured,
                     const Eigen::VectorXd& y_ref);

  const Vec3& u_prev() const { return u_prev_; }
  const MpcConfig& config() const { return cfg_; }
  const PredictionMatrices& prediction() const { return pred_; }
  /// Last QP handed to the solver, kept for dumping failed solves.
  const QpProblem& last_problem() const { return last_problem_; }

 private:
  ExtendedModel ext_;
  MpcConfig cfg_;
  PredictionMatrices pred_;
  Vec3 u_prev_;
  std::optional<Eigen::VectorXd> warm_;
  QpProblem last_problem_;
};

}  // namespace mfc
