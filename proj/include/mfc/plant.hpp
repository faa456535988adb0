#pragma once

// Full nonlinear model of the three-inlet chip: pressure regulators, air
// ducts and reservoirs, fluid lines with flow meters, chip channels and the
// outlet. This is the "real system" the controllers are tested against.

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

#include "mfc/physchem.hpp"

namespace mfc {

using Vec3 = Eigen::Vector3d;

/// True when every root of c[0] s^n + c[1] s^(n-1) + ... + c[n] has a strictly
/// negative real part (Routh array test).
bool is_hurwitz(std::span<const double> coeffs_highest_first);

/// Regulator models u = P + k1 P' + k2 P'' (+ k3 P''').
struct RegulatorCoeffs {
  std::array<double, 3> line1;  // a1, a2, a3
  std::array<double, 2> line2;  // b1, b2
  std::array<double, 3> line3;  // c1, c2, c3

  /// Line 2 critically damped second order settling (2%) in 0.3 s; lines 1
  /// and 3 a triple real pole settling in 0.5 s.
  static RegulatorCoeffs nominal();
  /// Nominal, except line 1 carries a lightly damped complex pair.
  static RegulatorCoeffs oscillatory_line1();

  bool is_hurwitz() const;
};

/// Coefficients of (1 + s/p)^order whose unit step settles to within 2% after
/// `settling_time`.
std::array<double, 3> repeated_pole_coeffs(int order, double settling_time);

struct FlowMeter {
  double resistance;         // Pa*s/m^3
  double inertia;            // Pa*s^2/m^3
  double volume;             // m^3
  double lag_time_constant;  // s
};

struct PhysParams {
  Fluid fluid;
  std::array<RectChannel, 3> chip_in_channels;
  std::array<double, 3> chip_in_volumes;
  RectChannel chip_out_channel;
  double chip_out_volume;
  std::array<CircChannel, 3> lines;
  std::array<double, 3> line_volumes;
  std::array<FlowMeter, 3> flowmeters;
  AirPath air;
  RegulatorCoeffs regulators;
  double atmospheric_pressure = 0.0;                  // Pa, relative
  double ambient_absolute_pressure = 101325.0;        // Pa, added before the air-flow law

  /// Desk-scale geometry (see README) giving ~1-10 ul/s at 10-100 kPa.
  static PhysParams defaults();

  void validate() const;
};

/// Lumped R, I, C values derived from PhysParams. Flow-meter R and I are
/// folded into the line values.
struct NetworkCoefficients {
  std::array<double, 3> chip_resistance;
  std::array<double, 3> chip_inertia;
  std::array<double, 3> line_resistance;
  std::array<double, 3> line_inertia;
  std::array<double, 3> line_compressibility;
  double outlet_resistance;
  double outlet_inertia;
  double chip_compressibility;

  static NetworkCoefficients from(const PhysParams& params);

  double branch_resistance(int line) const { return chip_resistance[line] + line_resistance[line]; }
  double branch_inertia(int line) const { return chip_inertia[line] + line_inertia[line]; }
};

/// Flows and junction pressure of the purely resistive network at steady state.
struct NetworkSteadyState {
  Vec3 flows;
  double outlet_flow;
  double junction_pressure;
};

NetworkSteadyState resistor_network_steady_state(const NetworkCoefficients& net, const Vec3& inlet_pressures);

struct PlantState {
  static constexpr int kSize = 25;
  using Vector = Eigen::Matrix<double, kSize, 1>;

  std::array<double, 3> q_chip{};
  double q_out = 0.0;
  double p_junction = 0.0;
  std::array<double, 3> q_line{};
  std::array<double, 3> p_chip{};
  std::array<double, 3> p_res{};
  std::array<double, 3> reg1{};  // P1, P1', P1''
  std::array<double, 2> reg2{};  // P2, P2'
  std::array<double, 3> reg3{};  // P3, P3', P3''
  std::array<double, 3> q_meas{};

  Vector to_vector() const;
  static PlantState from_vector(const Vector& v);

  Vec3 regulator_pressures() const { return {reg1[0], reg2[0], reg3[0]}; }
  Vec3 chip_flows() const { return {q_chip[0], q_chip[1], q_chip[2]}; }

  /// Whitespace-separated, round-trips exactly through parse().
  std::string to_text() const;
  static PlantState parse(const std::string& text);

  bool operator==(const PlantState&) const = default;
};

class IntegrationFault : public std::runtime_error {
 public:
  IntegrationFault(const std::string& what, PlantState snapshot)
      : std::runtime_error(what), snapshot_(snapshot) {}
  const PlantState& snapshot() const { return snapshot_; }

 private:
  PlantState snapshot_;
};

struct Measurement {
  Vec3 flows = Vec3::Zero();
  double timestamp = 0.0;
};

class Plant {
 public:
  explicit Plant(const PhysParams& params);
  Plant(const PhysParams& params, const NetworkCoefficients& network);

  const PhysParams& params() const { return params_; }
  const NetworkCoefficients& network() const { return net_; }

  /// Right-hand side of the ODE for regulator setpoints `u` (Pa, relative).
  PlantState::Vector derivatives(const PlantState::Vector& x, const Vec3& u) const;
  PlantState derivatives(const PlantState& state, const Vec3& u) const;

  /// One classical fourth-order Runge-Kutta step of length dt.
  PlantState step(const PlantState& state, const Vec3& u, double dt) const;

  /// Holds `u` for `duration` seconds using equal RK4 substeps no longer
  /// than max_substep().
  PlantState advance(const PlantState& state, const Vec3& u, double duration) const;

  /// min(1 ms, stability bound of RK4 on the fastest liquid mode).
  double max_substep() const { return max_substep_; }

  /// Steady state for constant setpoints.
  PlantState steady_state(const Vec3& u) const;

  /// Freezes reservoir pressures; the remaining dynamics are then linear.
  void set_air_path_frozen(bool frozen) { air_frozen_ = frozen; }
  bool air_path_frozen() const { return air_frozen_; }

 private:
  double compute_max_substep() const;

  PhysParams params_;
  NetworkCoefficients net_;
  double critical_ratio_;
  bool air_frozen_ = false;
  double max_substep_;
};

/// Lagged flow readings plus zero-mean Gaussian noise drawn from `rng`.
Measurement measure(const PlantState& state, double noise_std, std::mt19937_64& rng, double timestamp = 0.0);
Measurement measure(const PlantState& state, double noise_std, std::uint64_t rng_seed, double timestamp = 0.0);

}  // namespace mfc
