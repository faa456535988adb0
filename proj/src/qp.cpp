#include "mfc/qp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

namespace mfc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Keeps J = L^-T Q and the upper-triangular R of the QR factorization of
// L^-1 N, where N holds the (negated, normalized) normals of the active
// constraints. The first q columns of J span the active normals in the metric
// of E; the remaining columns span their complement.
class ActiveFactor {
 public:
  explicit ActiveFactor(Eigen::MatrixXd j)
      : j_(std::move(j)), r_(Eigen::MatrixXd::Zero(j_.cols(), j_.cols())) {}

  int size() const { return q_; }
  const Eigen::MatrixXd& j() const { return j_; }

  Eigen::VectorXd project(const Eigen::VectorXd& normal) const { return j_.transpose() * normal; }

  // Primal step direction and dual step for a prospective normal.
  void directions(const Eigen::VectorXd& normal, Eigen::VectorXd& primal, Eigen::VectorXd& dual,
                  double& complement_sq, double& total_sq) const {
    const Eigen::VectorXd d = project(normal);
    const Eigen::Index n = d.size();
    primal = j_.rightCols(n - q_) * d.tail(n - q_);
    dual = r_.topLeftCorner(q_, q_).triangularView<Eigen::Upper>().solve(d.head(q_));
    complement_sq = d.tail(n - q_).squaredNorm();
    total_sq = d.squaredNorm();
  }

  bool add(const Eigen::VectorXd& normal) {
    Eigen::VectorXd d = project(normal);
    const Eigen::Index n = d.size();
    const double scale = d.norm();
    for (Eigen::Index k = n - 1; k > q_; --k) {
      const double h = std::hypot(d(k - 1), d(k));
      if (h == 0.0) continue;
      const double c = d(k - 1) / h;
      const double s = d(k) / h;
      d(k - 1) = h;
      d(k) = 0.0;
      const Eigen::VectorXd left = j_.col(k - 1);
      j_.col(k - 1) = c * left + s * j_.col(k);
      j_.col(k) = -s * left + c * j_.col(k);
    }
    if (!(std::abs(d(q_)) > 1e-12 * scale)) return false;
    r_.col(q_).head(q_ + 1) = d.head(q_ + 1);
    ++q_;
    return true;
  }

  void remove(int l) {
    for (int k = l; k + 1 < q_; ++k) r_.col(k) = r_.col(k + 1);
    r_.col(q_ - 1).setZero();
    for (int k = l; k + 1 < q_; ++k) {
      const double h = std::hypot(r_(k, k), r_(k + 1, k));
      if (h == 0.0) continue;
      const double c = r_(k, k) / h;
      const double s = r_(k + 1, k) / h;
      for (int col = k; col + 1 < q_; ++col) {
        const double top = r_(k, col);
        const double bottom = r_(k + 1, col);
        r_(k, col) = c * top + s * bottom;
        r_(k + 1, col) = -s * top + c * bottom;
      }
      r_(k + 1, k) = 0.0;
      const Eigen::VectorXd left = j_.col(k);
      j_.col(k) = c * left + s * j_.col(k + 1);
      j_.col(k + 1) = -s * left + c * j_.col(k + 1);
    }
    --q_;
  }

 private:
  Eigen::MatrixXd j_;
  Eigen::MatrixXd r_;
  int q_ = 0;
};

template <typename T>
void erase_at(std::vector<T>& v, int index) {
  v.erase(v.begin() + index);
}

Eigen::VectorXd erase_at(const Eigen::VectorXd& v, int index) {
  Eigen::VectorXd out(v.size() - 1);
  out << v.head(index), v.tail(v.size() - index - 1);
  return out;
}

double finite_inf_norm(const Eigen::VectorXd& v) {
  double m = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::isfinite(v(i))) m = std::max(m, std::abs(v(i)));
  }
  return m;
}

void finalize(const QpProblem& pb, QpSolution& sol) {
  sol.objective = pb.objective(sol.z);
  sol.max_violation = 0.0;
  for (int i = 0; i < pb.rows(); ++i) {
    if (!std::isfinite(pb.bounds(i))) continue;
    sol.max_violation = std::max(sol.max_violation, pb.constraints.row(i).dot(sol.z) - pb.bounds(i));
  }
  const Eigen::VectorXd ez = pb.hessian * sol.z;
  Eigen::VectorXd stationarity = ez + pb.gradient;
  double scale = 1.0 + pb.gradient.cwiseAbs().maxCoeff() + ez.cwiseAbs().maxCoeff();
  if (pb.rows() > 0) {
    const Eigen::VectorXd mt_lambda = pb.constraints.transpose() * sol.multipliers;
    stationarity += mt_lambda;
    scale += mt_lambda.cwiseAbs().maxCoeff();
  }
  double complementarity = 0.0;
  for (int i = 0; i < pb.rows(); ++i) {
    if (sol.multipliers(i) == 0.0) continue;
    const double slack = pb.bounds(i) - pb.constraints.row(i).dot(sol.z);
    complementarity = std::max(complementarity, std::abs(sol.multipliers(i) * slack));
  }
  const double objective_scale = 1.0 + std::abs(sol.objective) + std::abs(pb.gradient.dot(sol.z));
  sol.kkt_residual = std::max(stationarity.cwiseAbs().maxCoeff() / scale, complementarity / objective_scale);
}

}  // namespace

const char* to_string(QpStatus status) {
  switch (status) {
    case QpStatus::kOptimal: return "optimal";
    case QpStatus::kInfeasible: return "infeasible";
    case QpStatus::kMaxIter: return "max_iter";
  }
  return "unknown";
}

void QpProblem::validate() const {
  const Eigen::Index d = gradient.size();
  if (d == 0) throw std::invalid_argument("QP has no variables");
  if (hessian.rows() != d || hessian.cols() != d) throw std::invalid_argument("QP Hessian shape mismatch");
  if (constraints.rows() != bounds.size() || (bounds.size() > 0 && constraints.cols() != d)) {
    throw std::invalid_argument("QP constraint shape mismatch");
  }
  if (!hessian.allFinite() || !gradient.allFinite() || !constraints.allFinite()) {
    throw std::invalid_argument("QP data is not finite");
  }
  if (bounds.hasNaN()) throw std::invalid_argument("QP bounds contain NaN");
  const double emax = std::max(hessian.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
  if ((hessian - hessian.transpose()).cwiseAbs().maxCoeff() > 1e-12 * emax) {
    throw std::invalid_argument("QP Hessian is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(hessian, Eigen::EigenvaluesOnly);
  const Eigen::VectorXd ev = eig.eigenvalues();
  if (ev.minCoeff() < -1e-10 * std::max(ev.cwiseAbs().maxCoeff(), 1e-300)) {
    throw std::invalid_argument("QP Hessian is not positive semidefinite");
  }
}

double QpProblem::objective(const Eigen::VectorXd& z) const {
  return 0.5 * z.dot(hessian * z) + gradient.dot(z);
}

QpSolution solve_qp(const QpProblem& pb, const std::optional<Eigen::VectorXd>& warm_start,
                    const QpOptions& options) {
  pb.validate();
  const int d = pb.variables();
  const int c = pb.rows();
  if (warm_start && warm_start->size() != d) throw std::invalid_argument("warm start has wrong size");

  QpSolution sol;
  sol.multipliers = Eigen::VectorXd::Zero(c);

  // Unit-norm rows make "most violated" comparable across rows of mixed units.
  Eigen::VectorXd norms(c);
  Eigen::MatrixXd a(c, d);
  Eigen::VectorXd b(c);
  std::vector<int> candidates;
  for (int i = 0; i < c; ++i) {
    norms(i) = pb.constraints.row(i).norm();
    if (pb.bounds(i) == kInf) continue;
    if (norms(i) == 0.0 || pb.bounds(i) == -kInf) {
      if (pb.bounds(i) >= 0.0) continue;
      sol.status = QpStatus::kInfeasible;
      sol.z = Eigen::VectorXd::Zero(d);
      sol.farkas_certificate = Eigen::VectorXd::Zero(c);
      if (norms(i) == 0.0) sol.farkas_certificate(i) = 1.0;
      finalize(pb, sol);
      return sol;
    }
    a.row(i) = pb.constraints.row(i) / norms(i);
    b(i) = pb.bounds(i) / norms(i);
    candidates.push_back(i);
  }

  Eigen::MatrixXd e = 0.5 * (pb.hessian + pb.hessian.transpose());
  Eigen::LLT<Eigen::MatrixXd> llt(e);
  if (llt.info() != Eigen::Success) {
    const double trace = e.trace();
    sol.regularization = 1e-10 * (trace > 0.0 ? trace / d : 1.0);
    e.diagonal().array() += sol.regularization;
    llt.compute(e);
    if (llt.info() != Eigen::Success) throw std::invalid_argument("QP Hessian is not positive definite");
  }
  const Eigen::MatrixXd l_upper = llt.matrixU();
  ActiveFactor factor(l_upper.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(d, d)));

  Eigen::VectorXd z = -llt.solve(pb.gradient);

  std::vector<bool> preferred(c, false);
  if (warm_start) {
    for (int i : candidates) {
      preferred[i] = std::abs(a.row(i).dot(*warm_start) - b(i)) <= 1e-8 * (1.0 + std::abs(b(i)));
    }
  }

  std::vector<int> active;
  std::vector<bool> is_active(c, false);
  Eigen::VectorXd u(0);
  const int max_iterations = options.max_iterations > 0 ? options.max_iterations : 50 * (d + c);
  auto slack = [&](int i) { return b(i) - a.row(i).dot(z); };

  while (true) {
    int p = -1;
    double worst = 0.0;
    bool worst_preferred = false;
    for (int i : candidates) {
      if (is_active[i]) continue;
      const double s = slack(i);
      if (s >= -1e-10 * (1.0 + std::abs(b(i)))) continue;
      const bool better = p < 0 || (preferred[i] && !worst_preferred) ||
                          (preferred[i] == worst_preferred && s < worst);
      if (better) {
        p = i;
        worst = s;
        worst_preferred = preferred[i];
      }
    }
    if (p < 0) {
      sol.status = QpStatus::kOptimal;
      break;
    }

    Eigen::VectorXd u_plus(u.size() + 1);
    u_plus << u, 0.0;
    const Eigen::VectorXd normal = -a.row(p).transpose();
    bool added = false;
    while (!added) {
      if (++sol.iterations > max_iterations) {
        sol.status = QpStatus::kMaxIter;
        break;
      }
      const int q = factor.size();
      Eigen::VectorXd primal, dual;
      double complement_sq = 0.0, total_sq = 0.0;
      factor.directions(normal, primal, dual, complement_sq, total_sq);

      double t_dual = kInf;
      int drop = -1;
      for (int k = 0; k < q; ++k) {
        if (dual(k) > 0.0 && u_plus(k) / dual(k) < t_dual) {
          t_dual = u_plus(k) / dual(k);
          drop = k;
        }
      }
      double t_primal = kInf;
      if (complement_sq > 1e-14 * total_sq) t_primal = -slack(p) / primal.dot(normal);

      if (t_dual == kInf && t_primal == kInf) {
        // normal_p lies in the cone of the active normals: no point satisfies
        // the active constraints and constraint p together.
        sol.status = QpStatus::kInfeasible;
        sol.farkas_certificate = Eigen::VectorXd::Zero(c);
        sol.farkas_certificate(p) = 1.0 / norms(p);
        for (int k = 0; k < q; ++k) sol.farkas_certificate(active[k]) = -dual(k) / norms(active[k]);
        break;
      }

      const double t = std::min(t_dual, t_primal);
      if (t_primal < kInf) z += t * primal;
      u_plus.head(q) -= t * dual;
      u_plus(q) += t;

      if (t_primal <= t_dual) {
        if (!factor.add(normal)) {
          sol.status = QpStatus::kMaxIter;
          break;
        }
        active.push_back(p);
        is_active[p] = true;
        u = u_plus;
        added = true;
      } else {
        is_active[active[drop]] = false;
        erase_at(active, drop);
        u_plus = erase_at(u_plus, drop);
        factor.remove(drop);
      }
    }
    if (!added) break;
  }

  sol.z = z;
  if (sol.status == QpStatus::kOptimal) {
    for (std::size_t k = 0; k < active.size(); ++k) {
      sol.multipliers(active[k]) = u(static_cast<Eigen::Index>(k)) / norms(active[k]);
    }
    sol.active_set = active;
    std::sort(sol.active_set.begin(), sol.active_set.end());
  }
  finalize(pb, sol);
  if (sol.status == QpStatus::kOptimal &&
      sol.max_violation > options.feasibility_tol * (1.0 + finite_inf_norm(pb.bounds))) {
    sol.status = QpStatus::kMaxIter;
  }
  return sol;
}

std::string to_text(const QpProblem& pb) {
  std::ostringstream out;
  char buf[32];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out << buf;
  };
  auto put_matrix = [&](const Eigen::MatrixXd& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index k = 0; k < m.cols(); ++k) {
        if (k) out << ' ';
        put(m(r, k));
      }
      out << '\n';
    }
  };
  out << "qp " << pb.variables() << ' ' << pb.rows() << '\n';
  out << "hessian\n";
  put_matrix(pb.hessian);
  out << "gradient\n";
  put_matrix(pb.gradient.transpose());
  out << "constraints\n";
  put_matrix(pb.constraints);
  out << "bounds\n";
  put_matrix(pb.bounds.transpose());
  return out.str();
}

QpProblem parse_qp(const std::string& text) {
  std::istringstream in(text);
  auto expect = [&](const char* word) {
    std::string token;
    if (!(in >> token) || token != word) throw std::invalid_argument(std::string("QP text: expected ") + word);
  };
  auto number = [&]() {
    std::string token;
    if (!(in >> token)) throw std::invalid_argument("QP text: truncated");
    std::size_t used = 0;
    const double v = std::stod(token, &used);
    if (used != token.size()) throw std::invalid_argument("QP text: bad number " + token);
    return v;
  };
  expect("qp");
  int d = 0, c = 0;
  if (!(in >> d >> c) || d <= 0 || c < 0) throw std::invalid_argument("QP text: bad dimensions");
  QpProblem pb;
  pb.hessian.resize(d, d);
  pb.gradient.resize(d);
  pb.constraints.resize(c, d);
  pb.bounds.resize(c);
  expect("hessian");
  for (int r = 0; r < d; ++r)
    for (int k = 0; k < d; ++k) pb.hessian(r, k) = number();
  expect("gradient");
  for (int k = 0; k < d; ++k) pb.gradient(k) = number();
  expect("constraints");
  for (int r = 0; r < c; ++r)
    for (int k = 0; k < d; ++k) pb.constraints(r, k) = number();
  expect("bounds");
  for (int r = 0; r < c; ++r) pb.bounds(r) = number();
  return pb;
}

}  // namespace mfc
