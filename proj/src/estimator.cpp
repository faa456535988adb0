#include "mfc/estimator.hpp"

#include <cmath>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "mfc/matrix_utils.hpp"

namespace mfc {

namespace {

Eigen::MatrixXd block_diagonal(double flow_scale, const Eigen::Vector4d& flows, double pressure_scale,
                               const Eigen::VectorXd& pressures) {
  Eigen::VectorXd d(reduced::kStates);
  d.head<4>() = flow_scale * flows;
  d.tail(9) = pressure_scale * pressures;
  return d.asDiagonal();
}

void require_square(const Eigen::MatrixXd& m, Eigen::Index n, const char* what) {
  if (m.rows() != n || m.cols() != n) throw std::invalid_argument(std::string(what) + " has wrong shape");
  if (!m.allFinite()) throw std::invalid_argument(std::string(what) + " is not finite");
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1e-300, m.cwiseAbs().maxCoeff())) {
    throw std::invalid_argument(std::string(what) + " is not symmetric");
  }
}

}  // namespace

KfConfig KfConfig::for_reduced_model(double beta) {
  return KfConfig{default_q_kf(beta), default_r_kf(), Eigen::VectorXd::Zero(reduced::kStates),
                  default_initial_covariance()};
}

void KfConfig::validate(int n, int p) const {
  require_square(process_noise, n, "process noise covariance");
  require_square(measurement_noise, p, "measurement noise covariance");
  require_square(initial_covariance, n, "initial covariance");
  if (initial_estimate.size() != n || !initial_estimate.allFinite()) {
    throw std::invalid_argument("initial estimate has wrong size or is not finite");
  }
  if (scaled_min_eigenvalue(process_noise) < -1e-12 || scaled_min_eigenvalue(measurement_noise) < -1e-12 ||
      scaled_min_eigenvalue(initial_covariance) < -1e-12) {
    throw std::invalid_argument("covariance matrices must be positive semidefinite");
  }
}

KfState KfState::initial(const KfConfig& cfg) {
  KfState s;
  s.estimate = cfg.initial_estimate;
  s.covariance = cfg.initial_covariance;
  s.gain = Eigen::MatrixXd::Zero(cfg.initial_estimate.size(), cfg.measurement_noise.rows());
  s.innovation = Eigen::VectorXd::Zero(cfg.measurement_noise.rows());
  s.innovation_covariance = cfg.measurement_noise;
  return s;
}

double KfState::nis() const {
  return innovation.dot(innovation_covariance.ldlt().solve(innovation));
}

KfState kf_step(const KfState& state, const Eigen::VectorXd& u_prev, const Eigen::VectorXd& y,
                const DiscreteModel& model, const KfConfig& cfg) {
  const Eigen::Index n = model.f.rows();
  if (state.estimate.size() != n || state.covariance.rows() != n || u_prev.size() != model.g.cols() ||
      y.size() != model.h.rows()) {
    throw std::invalid_argument("kf_step: inconsistent shapes");
  }
  if (!u_prev.allFinite() || !y.allFinite()) throw std::invalid_argument("kf_step: non-finite input");

  const Eigen::MatrixXd& f = model.f;
  const Eigen::MatrixXd& h = model.h;

  const Eigen::VectorXd x_prior = f * state.estimate + model.g * u_prev;
  const Eigen::MatrixXd p_prior = symmetrized(f * state.covariance * f.transpose() + cfg.process_noise);

  const Eigen::MatrixXd s = symmetrized(h * p_prior * h.transpose() + cfg.measurement_noise);
  const Eigen::LDLT<Eigen::MatrixXd> s_ldlt(s);
  const double rcond = s_ldlt.info() == Eigen::Success ? s_ldlt.rcond() : 0.0;
  if (!(rcond > 1e-14) || !s_ldlt.isPositive()) {
    throw SingularityError("innovation covariance is singular", rcond > 0.0 ? 1.0 / rcond : INFINITY);
  }

  KfState next;
  // K = P' H^T S^-1, solved through the symmetric factor of S
  next.gain = s_ldlt.solve(h * p_prior).transpose();
  next.innovation = y - h * x_prior;
  next.innovation_covariance = s;
  next.estimate = x_prior + next.gain * next.innovation;

  const Eigen::MatrixXd i_kh = Eigen::MatrixXd::Identity(n, n) - next.gain * h;
  next.covariance = symmetrized(i_kh * p_prior * i_kh.transpose() +
                                next.gain * cfg.measurement_noise * next.gain.transpose());
  return next;
}

Eigen::MatrixXd default_q_kf(double beta) {
  if (!(beta > 0.0)) throw std::invalid_argument("beta must be positive");
  return block_diagonal(beta * 1e-18, Eigen::Vector4d(1, 1, 1, 9), beta * 1e8, Eigen::VectorXd::Ones(9));
}

Eigen::MatrixXd lab_q_kf() {
  Eigen::VectorXd pressures(9);
  pressures << 10, 10, 10, 10, 1, 1, 1, 1, 1;
  return block_diagonal(1e-20, Eigen::Vector4d(50, 1, 10, 100), 1e5, pressures);
}

Eigen::MatrixXd default_r_kf() { return 1e-20 * Eigen::MatrixXd::Identity(3, 3); }

Eigen::MatrixXd default_initial_covariance() {
  return block_diagonal(1e-18, Eigen::Vector4d::Ones(), 1e8, Eigen::VectorXd::Ones(9));
}

double scaled_min_eigenvalue(const Eigen::MatrixXd& covariance) {
  Eigen::VectorXd d = covariance.diagonal().cwiseAbs();
  for (Eigen::Index i = 0; i < d.size(); ++i) d(i) = d(i) > 0.0 ? 1.0 / std::sqrt(d(i)) : 1.0;
  const Eigen::MatrixXd scaled = d.asDiagonal() * covariance * d.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(symmetrized(scaled), Eigen::EigenvaluesOnly);
  return solver.eigenvalues().minCoeff();
}

}  // namespace mfc
