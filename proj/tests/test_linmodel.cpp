#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "mfc/linmodel.hpp"
#include "mfc/matrix_utils.hpp"

namespace {

using namespace mfc;
using Eigen::MatrixXd;
using Eigen::VectorXd;

// Typical magnitudes of the reduced states: flows, junction pressure and the
// regulator chains with their derivatives.
VectorXd reduced_scale() {
  VectorXd s(reduced::kStates);
  s << 1e-9, 1e-9, 1e-9, 1e-9, 1e4, 1e4, 1e5, 1e6, 1e4, 1e5, 1e4, 1e5, 1e6;
  return s;
}

// Relative difference of two state-space matrices expressed in scaled units.
double scaled_diff(const MatrixXd& a, const MatrixXd& b, const VectorXd& row_scale, const VectorXd& col_scale) {
  const MatrixXd sa = row_scale.cwiseInverse().asDiagonal() * a * col_scale.asDiagonal();
  const MatrixXd sb = row_scale.cwiseInverse().asDiagonal() * b * col_scale.asDiagonal();
  return (sa - sb).norm() / sb.norm();
}

MatrixXd network_dc_gain(const NetworkCoefficients& n) {
  double total = 1.0 / n.outlet_resistance;
  for (int i = 0; i < 3; ++i) total += 1.0 / n.branch_resistance(i);
  MatrixXd k(3, 3);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      const double gi = 1.0 / n.branch_resistance(i);
      const double gj = 1.0 / n.branch_resistance(j);
      k(i, j) = (i == j ? gi : 0.0) - gi * gj / total;
    }
  }
  return k;
}

class Reduced : public ::testing::Test {
 protected:
  Reduced()
      : params(PhysParams::defaults()),
        net(NetworkCoefficients::from(params)),
        cont(build_continuous(params)),
        disc(discretize_zoh(cont, 0.1)) {}

  PhysParams params;
  NetworkCoefficients net;
  ContinuousModel cont;
  DiscreteModel disc;
};

TEST_F(Reduced, Dimensions) {
  EXPECT_EQ(cont.a.rows(), 13);
  EXPECT_EQ(cont.a.cols(), 13);
  EXPECT_EQ(cont.b.rows(), 13);
  EXPECT_EQ(cont.b.cols(), 3);
  EXPECT_EQ(cont.h.rows(), 3);
  EXPECT_EQ(disc.states(), 13);
  EXPECT_EQ(disc.inputs(), 3);
  EXPECT_EQ(disc.outputs(), 3);
  const ExtendedModel ext = build_extended(disc);
  EXPECT_EQ(ext.states(), 16);
  EXPECT_EQ(ext.inputs(), 3);
  EXPECT_EQ(ext.outputs(), 3);
}

TEST_F(Reduced, FirstFlowRow) {
  const double r = net.chip_resistance[0] + net.line_resistance[0];
  const double l = net.chip_inertia[0] + net.line_inertia[0];
  EXPECT_DOUBLE_EQ(cont.a(0, 0), -r / l);
  EXPECT_DOUBLE_EQ(cont.a(0, reduced::kPJunction), -1.0 / l);
  EXPECT_DOUBLE_EQ(cont.a(0, reduced::kReg1), 1.0 / l);
  for (int j : {1, 2, 3, 6, 7, 8, 9, 10, 11, 12}) EXPECT_EQ(cont.a(0, j), 0.0) << j;
  EXPECT_EQ(cont.b.row(0).norm(), 0.0);
}

TEST_F(Reduced, JunctionRowIsNodeBalance) {
  const double c = net.chip_compressibility;
  for (int i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(cont.a(reduced::kPJunction, i), 1.0 / c);
  EXPECT_DOUBLE_EQ(cont.a(reduced::kPJunction, reduced::kQOut), -1.0 / c);
}

TEST_F(Reduced, ContinuousDcGainMatchesResistorNetwork) {
  const MatrixXd k = dc_gain(cont);
  const MatrixXd oracle = network_dc_gain(net);
  EXPECT_LT((k - oracle).norm() / oracle.norm(), 1e-10);
  EXPECT_LT((k - k.transpose()).norm() / k.norm(), 1e-10);
}

TEST_F(Reduced, DiscreteDcGainMatchesContinuous) {
  const MatrixXd eye = MatrixXd::Identity(13, 13);
  const VectorXd s = reduced_scale();
  const MatrixXd scaled = s.cwiseInverse().asDiagonal() * (eye - disc.f) * s.asDiagonal();
  const MatrixXd x = scaled.fullPivLu().solve(s.cwiseInverse().asDiagonal() * disc.g);
  const MatrixXd k = disc.h * s.asDiagonal() * x;
  const MatrixXd oracle = network_dc_gain(net);
  EXPECT_LT((k - oracle).norm() / oracle.norm(), 1e-8);
}

TEST(Zoh, ScalarSystem) {
  ContinuousModel m{MatrixXd::Constant(1, 1, -2.0), MatrixXd::Constant(1, 1, 3.0), MatrixXd::Ones(1, 1)};
  const DiscreteModel d = discretize_zoh(m, 0.25);
  EXPECT_NEAR(d.f(0, 0), std::exp(-0.5), 1e-15);
  EXPECT_NEAR(d.g(0, 0), 1.5 * (1.0 - std::exp(-0.5)), 1e-15);
}

TEST(Zoh, ZeroDynamicsGiveIntegrator) {
  ContinuousModel m{MatrixXd::Zero(2, 2), MatrixXd::Identity(2, 2) * 4.0, MatrixXd::Identity(2, 2)};
  const DiscreteModel d = discretize_zoh(m, 0.5);
  EXPECT_TRUE(d.f.isApprox(MatrixXd::Identity(2, 2), 1e-15));
  EXPECT_TRUE(d.g.isApprox(MatrixXd::Identity(2, 2) * 2.0, 1e-15));
}

TEST(Zoh, RejectsBadPeriod) {
  ContinuousModel m{MatrixXd::Zero(1, 1), MatrixXd::Ones(1, 1), MatrixXd::Ones(1, 1)};
  EXPECT_THROW(discretize_zoh(m, 0.0), std::invalid_argument);
  EXPECT_THROW(discretize_zoh(m, -1.0), std::invalid_argument);
  EXPECT_THROW(discretize_zoh(m, NAN), std::invalid_argument);
}

TEST_F(Reduced, ZohMatchesFineRungeKutta) {
  const VectorXd s = reduced_scale();
  const MatrixXd a = s.cwiseInverse().asDiagonal() * cont.a * s.asDiagonal();
  const MatrixXd b = s.cwiseInverse().asDiagonal() * cont.b;
  const double rho = spectral_radius(a);
  const int n = std::max(10000, static_cast<int>(std::ceil(0.1 * rho / 0.5)));
  const double dt = 0.1 / n;

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  VectorXd x0(13);
  for (int i = 0; i < 13; ++i) x0(i) = dist(rng);
  const Eigen::Vector3d u(2e4, 5e4, 3e4);

  VectorXd x = x0;
  auto rhs = [&](const VectorXd& v) -> VectorXd { return a * v + b * u; };
  for (int k = 0; k < n; ++k) {
    const VectorXd k1 = rhs(x);
    const VectorXd k2 = rhs(x + 0.5 * dt * k1);
    const VectorXd k3 = rhs(x + 0.5 * dt * k2);
    const VectorXd k4 = rhs(x + dt * k3);
    x += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  const VectorXd zoh = s.cwiseInverse().asDiagonal() * (disc.f * s.asDiagonal() * x0 + disc.g * u);
  EXPECT_LT((zoh - x).norm() / x.norm(), 1e-6);
}

TEST_F(Reduced, SemigroupProperty) {
  const DiscreteModel d2 = discretize_zoh(cont, 0.2);
  const VectorXd s = reduced_scale();
  const VectorXd unit = VectorXd::Ones(3);
  EXPECT_LT(scaled_diff(disc.f * disc.f, d2.f, s, s), 1e-10);
  EXPECT_LT(scaled_diff(disc.f * disc.g + disc.g, d2.g, s, unit), 1e-10);
}

TEST_F(Reduced, DiscreteModelIsStable) {
  const VectorXd s = reduced_scale();
  const MatrixXd f = s.cwiseInverse().asDiagonal() * disc.f * s.asDiagonal();
  EXPECT_LT(spectral_radius(f), 1.0);
}

TEST_F(Reduced, ExtendedBlockStructure) {
  const ExtendedModel e = build_extended(disc);
  EXPECT_EQ(e.f.topLeftCorner(13, 13), disc.f);
  EXPECT_EQ(e.f.topRightCorner(13, 3).norm(), 0.0);
  EXPECT_TRUE(e.f.bottomLeftCorner(3, 13).isApprox(disc.h * disc.f));
  EXPECT_EQ(e.f.bottomRightCorner(3, 3), MatrixXd::Identity(3, 3));
  EXPECT_TRUE(e.g.bottomRows(3).isApprox(disc.h * disc.g));
  EXPECT_EQ(e.h.leftCols(13).norm(), 0.0);
  EXPECT_EQ(e.h.rightCols(3), MatrixXd::Identity(3, 3));
}

TEST_F(Reduced, ExtendedHasIntegratorsAtOne) {
  const ExtendedModel e = build_extended(disc);
  VectorXd s(16);
  s << reduced_scale(), VectorXd::Constant(3, 1e-9);
  const MatrixXd f = s.cwiseInverse().asDiagonal() * e.f * s.asDiagonal();
  const Eigen::EigenSolver<MatrixXd> es(f);
  int at_one = 0;
  for (int i = 0; i < 16; ++i) {
    if (std::abs(es.eigenvalues()(i) - std::complex<double>(1.0, 0.0)) < 1e-9) ++at_one;
  }
  EXPECT_EQ(at_one, 3);
}

TEST_F(Reduced, ExtendedModelReproducesIncrementalSimulation) {
  const ExtendedModel e = build_extended(disc);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> dist(0.0, 5e4);
  VectorXd x_prev = VectorXd::Zero(13);
  VectorXd u_prev = VectorXd::Zero(3);
  VectorXd x = disc.g * u_prev;
  VectorXd ext(16);
  ext << x - x_prev, disc.h * x;
  for (int k = 0; k < 30; ++k) {
    VectorXd u(3);
    u << dist(rng), dist(rng), dist(rng);
    const VectorXd x_next = disc.f * x + disc.g * u;
    ext = e.f * ext + e.g * (u - u_prev);
    EXPECT_LT((e.h * ext - disc.h * x_next).norm(), 1e-9 * (disc.h * x_next).norm()) << k;
    x_prev = x;
    x = x_next;
    u_prev = u;
  }
}

TEST(Balancing, ScaledMatrixHasComparableNorms) {
  MatrixXd a(2, 2);
  a << -1.0, 1e12, 1e-12, -2.0;
  const VectorXd d = balancing_scale(a);
  const MatrixXd b = d.cwiseInverse().asDiagonal() * a * d.asDiagonal();
  EXPECT_LT(std::abs(b(0, 1)) / std::abs(b(1, 0)), 4.0);
  const MatrixXd e = balanced_expm(a);
  EXPECT_TRUE(e.allFinite());
}

}  // namespace
