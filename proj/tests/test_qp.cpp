#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include <Eigen/Dense>

#include "mfc/qp.hpp"
#include "qp_oracle.hpp"

namespace {

using mfc::QpProblem;
using mfc::QpStatus;
using mfc::solve_qp;

using mfc::testing::enumerate_kkt;
using mfc::testing::random_problem;

TEST(QpSolver, UnconstrainedStationaryPoint) {
  QpProblem pb;
  pb.hessian = 2.0 * Eigen::MatrixXd::Identity(2, 2);
  pb.gradient = Eigen::Vector2d(-2, -4);
  pb.constraints.resize(0, 2);
  pb.bounds.resize(0);
  const auto sol = solve_qp(pb);
  ASSERT_EQ(sol.status, QpStatus::kOptimal);
  EXPECT_NEAR(sol.z(0), 1.0, 1e-14);
  EXPECT_NEAR(sol.z(1), 2.0, 1e-14);
}

TEST(QpSolver, SingleActiveBound) {
  QpProblem pb;
  pb.hessian = Eigen::MatrixXd::Identity(1, 1);
  pb.gradient = Eigen::VectorXd::Constant(1, -2.0);
  pb.constraints = Eigen::MatrixXd::Ones(1, 1);
  pb.bounds = Eigen::VectorXd::Ones(1);
  const auto sol = solve_qp(pb);
  ASSERT_EQ(sol.status, QpStatus::kOptimal);
  EXPECT_NEAR(sol.z(0), 1.0, 1e-14);
  EXPECT_NEAR(sol.multipliers(0), 1.0, 1e-12);
  EXPECT_EQ(sol.active_set, std::vector<int>{0});
}

TEST(QpSolver, MatchesKktEnumeration) {
  std::mt19937_64 rng(20240611);
  std::uniform_int_distribution<int> dim(1, 6), rows(0, 8);
  for (int trial = 0; trial < 200; ++trial) {
    const auto pb = random_problem(rng, dim(rng), rows(rng));
    const auto oracle = enumerate_kkt(pb);
    ASSERT_TRUE(oracle.found);
    const auto sol = solve_qp(pb);
    ASSERT_EQ(sol.status, QpStatus::kOptimal) << mfc::to_text(pb);
    EXPECT_LT((sol.z - oracle.z).cwiseAbs().maxCoeff(), 1e-6) << mfc::to_text(pb);
    EXPECT_NEAR(sol.objective, oracle.objective, 1e-6 * (1.0 + std::abs(oracle.objective)));
    EXPECT_LT(sol.kkt_residual, 1e-6);
    if (pb.rows() > 0) EXPECT_GE(sol.multipliers.minCoeff(), -1e-8);
  }
}

TEST(QpSolver, ObjectiveBelowRandomFeasibleProbes) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> n01;
  for (int trial = 0; trial < 50; ++trial) {
    const auto pb = random_problem(rng, 4, 6);
    const auto sol = solve_qp(pb);
    ASSERT_EQ(sol.status, QpStatus::kOptimal);
    for (int probe = 0; probe < 200; ++probe) {
      Eigen::VectorXd z(4);
      for (int i = 0; i < 4; ++i) z(i) = sol.z(i) + n01(rng);
      if (((pb.constraints * z - pb.bounds).array() > 0.0).any()) continue;
      EXPECT_LE(sol.objective, pb.objective(z) + 1e-8);
    }
  }
}

TEST(QpSolver, WarmStartDoesNotChangeOptimum) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const auto pb = random_problem(rng, 5, 8);
    const auto cold = solve_qp(pb);
    const auto warm = solve_qp(pb, cold.z);
    ASSERT_EQ(warm.status, QpStatus::kOptimal);
    EXPECT_LT((cold.z - warm.z).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LE(warm.iterations, cold.iterations);
  }
}

TEST(QpSolver, ScalingInvariance) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    auto pb = random_problem(rng, 5, 7);
    const auto base = solve_qp(pb);
    pb.hessian *= 1e-7;
    pb.gradient *= 1e-7;
    const auto scaled = solve_qp(pb);
    EXPECT_LT((base.z - scaled.z).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(QpSolver, InfeasibleReturnsFarkasCertificate) {
  QpProblem pb;
  pb.hessian = Eigen::MatrixXd::Identity(2, 2);
  pb.gradient = Eigen::Vector2d::Zero();
  pb.constraints.resize(3, 2);
  pb.constraints << 1, 0, -1, 0, 0, 1;
  pb.bounds = Eigen::Vector3d(-1, -1, 5);  // z0 <= -1 and z0 >= 1
  const auto sol = solve_qp(pb);
  ASSERT_EQ(sol.status, QpStatus::kInfeasible);
  const Eigen::VectorXd& y = sol.farkas_certificate;
  ASSERT_EQ(y.size(), 3);
  EXPECT_GE(y.minCoeff(), 0.0);
  EXPECT_LT((pb.constraints.transpose() * y).norm(), 1e-12);
  EXPECT_LT(pb.bounds.dot(y), 0.0);
}

TEST(QpSolver, InfeasibleRandomSystemsCertified) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    auto pb = random_problem(rng, 3, 6);
    // Append the negated sum of two rows with a bound that cuts off their sum.
    const Eigen::RowVectorXd sum = pb.constraints.row(0) + pb.constraints.row(1);
    pb.constraints.conservativeResize(7, Eigen::NoChange);
    pb.constraints.row(6) = -sum;
    pb.bounds.conservativeResize(7);
    pb.bounds(6) = -(pb.bounds(0) + pb.bounds(1)) - 1.0;
    const auto sol = solve_qp(pb);
    ASSERT_EQ(sol.status, QpStatus::kInfeasible);
    const Eigen::VectorXd& y = sol.farkas_certificate;
    EXPECT_GE(y.minCoeff(), -1e-12);
    EXPECT_LT((pb.constraints.transpose() * y).norm(), 1e-8 * y.norm());
    EXPECT_LT(pb.bounds.dot(y), 0.0);
  }
}

TEST(QpSolver, InfiniteBoundsIgnored) {
  QpProblem pb;
  pb.hessian = Eigen::MatrixXd::Identity(1, 1);
  pb.gradient = Eigen::VectorXd::Constant(1, -2.0);
  pb.constraints = Eigen::MatrixXd::Ones(1, 1);
  pb.bounds = Eigen::VectorXd::Constant(1, std::numeric_limits<double>::infinity());
  const auto sol = solve_qp(pb);
  ASSERT_EQ(sol.status, QpStatus::kOptimal);
  EXPECT_NEAR(sol.z(0), 2.0, 1e-14);
}

TEST(QpSolver, SingularHessianIsRegularized) {
  QpProblem pb;
  pb.hessian = Eigen::MatrixXd::Zero(2, 2);
  pb.hessian(0, 0) = 1.0;
  pb.gradient = Eigen::Vector2d(-1, 0);
  pb.constraints = Eigen::MatrixXd::Identity(2, 2);
  pb.bounds = Eigen::Vector2d(5, 5);
  const auto sol = solve_qp(pb);
  ASSERT_EQ(sol.status, QpStatus::kOptimal);
  EXPECT_GT(sol.regularization, 0.0);
  EXPECT_NEAR(sol.z(0), 1.0, 1e-8);
}

TEST(QpSolver, RejectsAsymmetricOrIndefiniteHessian) {
  QpProblem pb;
  pb.hessian = Eigen::MatrixXd::Identity(2, 2);
  pb.hessian(0, 1) = 0.5;
  pb.gradient = Eigen::Vector2d::Zero();
  pb.constraints.resize(0, 2);
  pb.bounds.resize(0);
  EXPECT_THROW(solve_qp(pb), std::invalid_argument);
  pb.hessian = Eigen::Vector2d(1, -1).asDiagonal();
  EXPECT_THROW(solve_qp(pb), std::invalid_argument);
}

TEST(QpSolver, DeterministicAcrossCalls) {
  std::mt19937_64 rng(19);
  const auto pb = random_problem(rng, 6, 8);
  const auto a = solve_qp(pb);
  const auto b = solve_qp(pb);
  EXPECT_EQ(a.z, b.z);
  EXPECT_EQ(a.active_set, b.active_set);
}

TEST(QpText, RoundTrip) {
  std::mt19937_64 rng(23);
  auto pb = random_problem(rng, 3, 4);
  pb.bounds(2) = std::numeric_limits<double>::infinity();
  const auto back = mfc::parse_qp(mfc::to_text(pb));
  EXPECT_EQ(back.hessian, pb.hessian);
  EXPECT_EQ(back.gradient, pb.gradient);
  EXPECT_EQ(back.constraints, pb.constraints);
  EXPECT_EQ(back.bounds, pb.bounds);
  EXPECT_THROW(mfc::parse_qp("qp 2 1\nhessian 1 0"), std::invalid_argument);
}

}  // namespace
