#include "mfc/linmodel.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/LU>

#include "mfc/matrix_utils.hpp"

namespace mfc {

using namespace reduced;

ContinuousModel build_continuous(const NetworkCoefficients& net, const RegulatorCoeffs& reg) {
  ContinuousModel m;
  m.a = Eigen::MatrixXd::Zero(kStates, kStates);
  m.b = Eigen::MatrixXd::Zero(kStates, kInputs);
  m.h = Eigen::MatrixXd::Zero(kOutputs, kStates);

  const int reg_col[3] = {kReg1, kReg2, kReg3};
  for (int i = 0; i < 3; ++i) {
    const double r = net.branch_resistance(i);
    const double l = net.branch_inertia(i);
    m.a(i, i) = -r / l;
    m.a(i, kPJunction) = -1.0 / l;
    m.a(i, reg_col[i]) = 1.0 / l;
    m.a(kPJunction, i) = 1.0 / net.chip_compressibility;
    m.h(i, i) = 1.0;
  }
  m.a(kQOut, kPJunction) = 1.0 / net.outlet_inertia;
  m.a(kQOut, kQOut) = -net.outlet_resistance / net.outlet_inertia;
  m.a(kPJunction, kQOut) = -1.0 / net.chip_compressibility;

  // u = P + k1 P' + k2 P'' + k3 P''' as a chain of integrators
  auto third_order = [&](int first, int input, const std::array<double, 3>& k) {
    m.a(first, first + 1) = 1.0;
    m.a(first + 1, first + 2) = 1.0;
    m.a(first + 2, first) = -1.0 / k[2];
    m.a(first + 2, first + 1) = -k[0] / k[2];
    m.a(first + 2, first + 2) = -k[1] / k[2];
    m.b(first + 2, input) = 1.0 / k[2];
  };
  third_order(kReg1, 0, reg.line1);
  m.a(kReg2, kReg2 + 1) = 1.0;
  m.a(kReg2 + 1, kReg2) = -1.0 / reg.line2[1];
  m.a(kReg2 + 1, kReg2 + 1) = -reg.line2[0] / reg.line2[1];
  m.b(kReg2 + 1, 1) = 1.0 / reg.line2[1];
  third_order(kReg3, 2, reg.line3);
  return m;
}

ContinuousModel build_continuous(const PhysParams& params) {
  params.validate();
  return build_continuous(NetworkCoefficients::from(params), params.regulators);
}

DiscreteModel discretize_zoh(const ContinuousModel& model, double sample_period) {
  if (!(sample_period > 0.0) || !std::isfinite(sample_period)) {
    throw std::invalid_argument("sample period must be positive");
  }
  if (!model.a.allFinite() || !model.b.allFinite()) {
    throw std::invalid_argument("continuous model has non-finite entries");
  }
  const Eigen::Index n = model.a.rows();
  const Eigen::Index m = model.b.cols();
  Eigen::MatrixXd aug = Eigen::MatrixXd::Zero(n + m, n + m);
  aug.topLeftCorner(n, n) = model.a * sample_period;
  aug.topRightCorner(n, m) = model.b * sample_period;
  const Eigen::MatrixXd phi = balanced_expm(aug);

  DiscreteModel d;
  d.f = phi.topLeftCorner(n, n);
  d.g = phi.topRightCorner(n, m);
  d.h = model.h;
  d.sample_period = sample_period;
  if (!d.f.allFinite() || !d.g.allFinite()) throw std::runtime_error("discretization produced non-finite entries");
  return d;
}

ExtendedModel build_extended(const DiscreteModel& d) {
  const Eigen::Index n = d.f.rows();
  const Eigen::Index m = d.g.cols();
  const Eigen::Index p = d.h.rows();
  ExtendedModel e;
  e.f = Eigen::MatrixXd::Zero(n + p, n + p);
  e.f.topLeftCorner(n, n) = d.f;
  e.f.bottomLeftCorner(p, n) = d.h * d.f;
  e.f.bottomRightCorner(p, p).setIdentity();
  e.g = Eigen::MatrixXd::Zero(n + p, m);
  e.g.topRows(n) = d.g;
  e.g.bottomRows(p) = d.h * d.g;
  e.h = Eigen::MatrixXd::Zero(p, n + p);
  e.h.rightCols(p).setIdentity();
  return e;
}

Eigen::MatrixXd dc_gain(const ContinuousModel& model) {
  const Eigen::VectorXd d = balancing_scale(model.a);
  const Eigen::MatrixXd scaled = d.cwiseInverse().asDiagonal() * model.a * d.asDiagonal();
  const Eigen::MatrixXd x = scaled.fullPivLu().solve(d.cwiseInverse().asDiagonal() * model.b);
  return -model.h * d.asDiagonal() * x;
}

}  // namespace mfc
