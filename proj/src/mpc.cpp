#include "mfc/mpc.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mfc {

void MpcConfig::validate() const {
  if (horizon < 1) throw std::invalid_argument("horizon must be at least 1");
  if (!(sample_period > 0.0) || !std::isfinite(sample_period)) throw std::invalid_argument("sample period must be positive");
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw std::invalid_argument("alpha must be positive");
  if (!(output_scale > 0.0) || !(soft_weight > 0.0)) throw std::invalid_argument("weights must be positive");
  for (int i = 0; i < 3; ++i) {
    if (!std::isfinite(u_min(i)) || !std::isfinite(u_max(i)) || u_min(i) > u_max(i)) {
      throw std::invalid_argument("input bounds must be finite with u_min <= u_max");
    }
    if (!(du_max_rate(i) >= 0.0)) throw std::invalid_argument("rate bound must be non-negative");
    if (std::isnan(y_min(i)) || std::isnan(y_max(i)) || y_min(i) > y_max(i)) {
      throw std::invalid_argument("output bounds must satisfy y_min <= y_max");
    }
  }
}

PredictionMatrices build_prediction(const ExtendedModel& ext, int horizon) {
  if (horizon < 1) throw std::invalid_argument("horizon must be at least 1");
  const int n = ext.states();
  const int m = ext.inputs();
  const int p = ext.outputs();
  PredictionMatrices pred;
  pred.psi.resize(p * horizon, n);
  pred.phi = Eigen::MatrixXd::Zero(p * horizon, m * horizon);

  // markov[k] = H F^k G
  std::vector<Eigen::MatrixXd> markov;
  Eigen::MatrixXd hf = ext.h;  // H F^k
  for (int k = 0; k < horizon; ++k) {
    markov.push_back(hf * ext.g);
    hf = hf * ext.f;
    pred.psi.middleRows(p * k, p) = hf;
  }
  for (int i = 0; i < horizon; ++i) {
    for (int j = 0; j <= i; ++j) pred.phi.block(p * i, m * j, p, m) = markov[i - j];
  }
  return pred;
}

QuadraticCost build_cost(const PredictionMatrices& pred, const Eigen::VectorXd& x, const Eigen::VectorXd& y_ref,
                         const MpcConfig& cfg) {
  if (y_ref.size() != pred.psi.rows() || x.size() != pred.psi.cols()) {
    throw std::invalid_argument("build_cost: inconsistent shapes");
  }
  const double s2 = cfg.output_scale * cfg.output_scale;
  const Eigen::Index d = pred.phi.cols();
  QuadraticCost cost;
  cost.hessian = 2.0 * (s2 * pred.phi.transpose() * pred.phi + cfg.alpha * Eigen::MatrixXd::Identity(d, d));
  cost.hessian = 0.5 * (cost.hessian + cost.hessian.transpose()).eval();
  cost.gradient = 2.0 * s2 * pred.phi.transpose() * (pred.psi * x - y_ref);
  return cost;
}

LinearConstraints build_constraints(const Vec3& u_prev, const PredictionMatrices& pred, const Eigen::VectorXd& x,
                                    const MpcConfig& cfg) {
  const int m = 3;
  const int p = static_cast<int>(pred.psi.rows()) / cfg.horizon;
  const int n_u = m * cfg.horizon;
  const int n_y = p * cfg.horizon;

  Eigen::MatrixXd c2 = Eigen::MatrixXd::Zero(n_u, n_u);
  for (int i = 0; i < cfg.horizon; ++i)
    for (int j = 0; j <= i; ++j) c2.block(m * i, m * j, m, m).setIdentity();

  const Eigen::VectorXd c1u = u_prev.replicate(cfg.horizon, 1);
  const Eigen::VectorXd free_y = pred.psi * x;
  const Eigen::VectorXd du_max = cfg.du_max().replicate(cfg.horizon, 1);
  const Eigen::VectorXd y_min = cfg.y_min.head(p).replicate(cfg.horizon, 1);
  const Eigen::VectorXd y_max = cfg.y_max.head(p).replicate(cfg.horizon, 1);

  LinearConstraints out;
  out.m.resize(4 * n_u + 2 * n_y, n_u);
  out.gamma.resize(4 * n_u + 2 * n_y);
  out.m << -c2, c2, -Eigen::MatrixXd::Identity(n_u, n_u), Eigen::MatrixXd::Identity(n_u, n_u), -pred.phi, pred.phi;
  out.gamma << -cfg.u_min.replicate(cfg.horizon, 1) + c1u, cfg.u_max.replicate(cfg.horizon, 1) - c1u, du_max, du_max,
      -y_min + free_y, y_max - free_y;
  return out;
}

Eigen::VectorXd hold_reference(const Vec3& ref, int horizon) { return ref.replicate(horizon, 1); }

MpcController::MpcController(const ExtendedModel& ext, const MpcConfig& cfg, const Vec3& u_initial)
    : ext_(ext), cfg_(cfg), pred_(build_prediction(ext, cfg.horizon)), u_prev_(u_initial) {
  cfg_.validate();
  if (ext.inputs() != 3 || ext.outputs() != 3) throw std::invalid_argument("controller expects three lines");
  u_prev_ = u_prev_.cwiseMax(cfg_.u_min).cwiseMin(cfg_.u_max);
}

MpcStepResult MpcController::step(const Eigen::VectorXd& x_hat, const Eigen::VectorXd& x_hat_prev,
                                  const Vec3& y_measured, const Eigen::VectorXd& y_ref) {
  const int n_m = static_cast<int>(x_hat.size());
  if (x_hat_prev.size() != n_m || n_m + 3 != ext_.states()) throw std::invalid_argument("mpc step: estimate size");
  if (!y_ref.allFinite() || !y_measured.allFinite()) throw std::invalid_argument("mpc step: non-finite reference");

  Eigen::VectorXd x(ext_.states());
  x << x_hat - x_hat_prev, y_measured;

  const QuadraticCost cost = build_cost(pred_, x, y_ref, cfg_);
  const LinearConstraints cons = build_constraints(u_prev_, pred_, x, cfg_);
  const int n_u = static_cast<int>(cost.gradient.size());
  const int n_rows = static_cast<int>(cons.gamma.size());
  const int first_output_row = 4 * n_u;

  QpProblem& qp = last_problem_;
  if (!cfg_.soft_output_constraints) {
    qp.hessian = cost.hessian;
    qp.gradient = cost.gradient;
    qp.constraints = cons.m;
    qp.bounds = cons.gamma;
  } else {
    // One extra variable eps >= 0 (in scaled output units) loosens every
    // output row; its weight makes it a last resort.
    qp.hessian = Eigen::MatrixXd::Zero(n_u + 1, n_u + 1);
    qp.hessian.topLeftCorner(n_u, n_u) = cost.hessian;
    qp.hessian(n_u, n_u) = 2.0 * cfg_.soft_weight;
    qp.gradient = Eigen::VectorXd::Zero(n_u + 1);
    qp.gradient.head(n_u) = cost.gradient;
    qp.constraints = Eigen::MatrixXd::Zero(n_rows + 1, n_u + 1);
    qp.constraints.topLeftCorner(n_rows, n_u) = cons.m;
    qp.constraints.col(n_u).segment(first_output_row, n_rows - first_output_row).setConstant(-1.0 / cfg_.output_scale);
    qp.constraints(n_rows, n_u) = -1.0;
    qp.bounds.resize(n_rows + 1);
    qp.bounds << cons.gamma, 0.0;
  }

  std::optional<Eigen::VectorXd> warm;
  if (warm_ && warm_->size() == qp.gradient.size()) warm = warm_;
  const QpSolution sol = solve_qp(qp, warm);

  MpcStepResult res;
  res.status = sol.status;
  res.kkt_residual = sol.kkt_residual;
  res.active_set_size = static_cast<int>(sol.active_set.size());
  res.iterations = sol.iterations;
  if (sol.status != QpStatus::kOptimal) {
    res.fallback = true;
    res.u = u_prev_;
    res.du.setZero();
    res.du_sequence = Eigen::VectorXd::Zero(n_u);
    warm_.reset();
    return res;
  }

  res.du_sequence = sol.z.head(n_u);
  if (cfg_.soft_output_constraints) res.slack = sol.z(n_u);

  const Vec3 du_max = cfg_.du_max();
  const Vec3 du = res.du_sequence.head<3>().cwiseMax(-du_max).cwiseMin(du_max);
  res.u = (u_prev_ + du).cwiseMax(cfg_.u_min).cwiseMin(cfg_.u_max);
  res.du = res.u - u_prev_;
  u_prev_ = res.u;

  // Shifted plan as next warm start.
  Eigen::VectorXd next = Eigen::VectorXd::Zero(sol.z.size());
  next.head(n_u - 3) = sol.z.segment(3, n_u - 3);
  if (cfg_.soft_output_constraints) next(n_u) = sol.z(n_u);
  warm_ = next;
  return res;
}

}  // namespace mfc
