#pragma once

// Reduced 13-state linear model used by the observer and the controller:
// each line is lumped with its chip channel, reservoir pressure is taken equal
// to the regulated pressure, and pressures are relative (P_atm = 0).

#include <Eigen/Core>

#include "mfc/plant.hpp"

namespace mfc {

/// State order: Q1, Q2, Q3, Q_out, P_M, P1, P1', P1'', P2, P2', P3, P3', P3''.
namespace reduced {
inline constexpr int kStates = 13;
inline constexpr int kInputs = 3;
inline constexpr int kOutputs = 3;
inline constexpr int kQOut = 3;
inline constexpr int kPJunction = 4;
inline constexpr int kReg1 = 5;
inline constexpr int kReg2 = 8;
inline constexpr int kReg3 = 10;
}  // namespace reduced

struct ContinuousModel {
  Eigen::MatrixXd a;  // 13x13
  Eigen::MatrixXd b;  // 13x3
  Eigen::MatrixXd h;  // 3x13
};

struct DiscreteModel {
  Eigen::MatrixXd f;  // 13x13
  Eigen::MatrixXd g;  // 13x3
  Eigen::MatrixXd h;  // 3x13
  double sample_period = 0.0;

  int states() const { return static_cast<int>(f.rows()); }
  int inputs() const { return static_cast<int>(g.cols()); }
  int outputs() const { return static_cast<int>(h.rows()); }
};

/// Incremental model x = [dx_m; y] driven by input increments du.
struct ExtendedModel {
  Eigen::MatrixXd f;
  Eigen::MatrixXd g;
  Eigen::MatrixXd h;

  int states() const { return static_cast<int>(f.rows()); }
  int inputs() const { return static_cast<int>(g.cols()); }
  int outputs() const { return static_cast<int>(h.rows()); }
};

ContinuousModel build_continuous(const NetworkCoefficients& net, const RegulatorCoeffs& regulators);
ContinuousModel build_continuous(const PhysParams& params);

/// Zero-order-hold discretization via the exponential of [[A, B], [0, 0]] T.
DiscreteModel discretize_zoh(const ContinuousModel& model, double sample_period);

ExtendedModel build_extended(const DiscreteModel& model);

/// Steady-state output map -H A^-1 B.
Eigen::MatrixXd dc_gain(const ContinuousModel& model);

}  // namespace mfc
