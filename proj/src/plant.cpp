#include "mfc/plant.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>
#include <vector>

#include "mfc/matrix_utils.hpp"

namespace mfc {

namespace {

// Offsets into PlantState::Vector, in the order of the state table plus the
// sensor lag states.
constexpr int kQChip = 0;
constexpr int kQOut = 3;
constexpr int kPJunction = 4;
constexpr int kQLine = 5;
constexpr int kPChip = 8;
constexpr int kPRes = 11;
constexpr int kReg1 = 14;
constexpr int kReg2 = 17;
constexpr int kReg3 = 19;
constexpr int kQMeas = 22;

// RK4 is stable on the imaginary axis up to |h lambda| = 2.83; the liquid
// network's fastest mode is a lightly damped oscillation.
constexpr double kRk4StabilityMargin = 2.0;
constexpr double kMaxSubstep = 1e-3;

double settle_residual(int order, double x) {
  // e^-x * sum_{k<order} x^k / k!  (distance of the step response from 1)
  double term = 1.0;
  double sum = 0.0;
  for (int k = 0; k < order; ++k) {
    sum += term;
    term *= x / (k + 1);
  }
  return std::exp(-x) * sum;
}

}  // namespace

bool is_hurwitz(std::span<const double> coeffs) {
  const std::size_t n = coeffs.size();
  if (n == 0) return false;
  if (n == 1) return coeffs[0] != 0.0;
  const double sign = coeffs[0] > 0 ? 1.0 : -1.0;
  std::vector<double> upper, lower;
  for (std::size_t i = 0; i < n; i += 2) upper.push_back(sign * coeffs[i]);
  for (std::size_t i = 1; i < n; i += 2) lower.push_back(sign * coeffs[i]);
  for (std::size_t row = 0; row + 1 < n; ++row) {
    if (!(upper.front() > 0.0) || lower.empty() || !(lower.front() > 0.0)) return false;
    std::vector<double> next;
    for (std::size_t j = 0; j + 1 < upper.size(); ++j) {
      const double b = j + 1 < lower.size() ? lower[j + 1] : 0.0;
      next.push_back((lower.front() * upper[j + 1] - upper.front() * b) / lower.front());
    }
    upper = std::move(lower);
    lower = std::move(next);
    if (lower.empty()) return upper.front() > 0.0 && row + 2 == n;
  }
  return upper.front() > 0.0;
}

std::array<double, 3> repeated_pole_coeffs(int order, double settling_time) {
  if (order < 1 || order > 3) throw std::invalid_argument("regulator order must be 1..3");
  if (!(settling_time > 0.0)) throw std::invalid_argument("settling time must be positive");
  double lo = 1e-3;
  double hi = 100.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (settle_residual(order, mid) > 0.02 ? lo : hi) = mid;
  }
  const double pole = 0.5 * (lo + hi) / settling_time;
  std::array<double, 3> c{0.0, 0.0, 0.0};
  double binom = 1.0;
  for (int k = 1; k <= order; ++k) {
    binom = binom * (order - k + 1) / k;
    c[k - 1] = binom / std::pow(pole, k);
  }
  return c;
}

RegulatorCoeffs RegulatorCoeffs::nominal() {
  const auto third = repeated_pole_coeffs(3, 0.5);
  const auto second = repeated_pole_coeffs(2, 0.3);
  return RegulatorCoeffs{third, {second[0], second[1]}, third};
}

RegulatorCoeffs RegulatorCoeffs::oscillatory_line1() {
  RegulatorCoeffs r = nominal();
  // (1 + s/p)(1 + 2 zeta s/w + s^2/w^2): a 1.5 Hz mode with 10% damping
  const double p = 15.0;
  const double w = 2.0 * std::numbers::pi * 1.5;
  const double zeta = 0.1;
  r.line1 = {1.0 / p + 2.0 * zeta / w, 2.0 * zeta / (w * p) + 1.0 / (w * w), 1.0 / (p * w * w)};
  return r;
}

bool RegulatorCoeffs::is_hurwitz() const {
  const std::array<double, 4> p1{line1[2], line1[1], line1[0], 1.0};
  const std::array<double, 3> p2{line2[1], line2[0], 1.0};
  const std::array<double, 4> p3{line3[2], line3[1], line3[0], 1.0};
  return mfc::is_hurwitz(p1) && mfc::is_hurwitz(p2) && mfc::is_hurwitz(p3);
}

PhysParams PhysParams::defaults() {
  const Fluid fluid = Fluid::water_glycerin();
  const RectChannel inlet(0.020, 100e-6, 100e-6);
  const RectChannel outlet(0.030, 200e-6, 200e-6);
  const CircChannel line(0.5, 0.25e-3);
  const CircChannel meter_equivalent(0.050, 0.2e-3);
  const FlowMeter meter{circular_resistance(fluid.dynamic_viscosity, meter_equivalent),
                        line_inertia(fluid.density, meter_equivalent.length(), meter_equivalent.cross_area()),
                        5e-9, 0.05};
  return PhysParams{
      .fluid = fluid,
      .chip_in_channels = {inlet, inlet, inlet},
      .chip_in_volumes = {inlet.volume(), inlet.volume(), inlet.volume()},
      .chip_out_channel = outlet,
      .chip_out_volume = outlet.volume(),
      .lines = {line, line, line},
      .line_volumes = {line.volume(), line.volume(), line.volume()},
      .flowmeters = {meter, meter, meter},
      .air = AirPath{},
      .regulators = RegulatorCoeffs::nominal(),
  };
}

void PhysParams::validate() const {
  fluid.validate();
  air.validate();
  auto positive = [](double v, const char* what) {
    if (!(v > 0.0) || !std::isfinite(v)) throw std::domain_error(std::string(what) + " must be positive");
  };
  for (int i = 0; i < 3; ++i) {
    positive(chip_in_volumes[i], "chip inlet volume");
    positive(line_volumes[i], "line volume");
    positive(flowmeters[i].resistance, "flow meter resistance");
    positive(flowmeters[i].inertia, "flow meter inertia");
    positive(flowmeters[i].volume, "flow meter volume");
    if (!(flowmeters[i].lag_time_constant >= 0.0)) throw std::domain_error("flow meter lag must be >= 0");
  }
  positive(chip_out_volume, "chip outlet volume");
  positive(ambient_absolute_pressure, "ambient pressure");
  if (!regulators.is_hurwitz()) throw std::domain_error("regulator model is not stable");
}

NetworkCoefficients NetworkCoefficients::from(const PhysParams& p) {
  NetworkCoefficients n{};
  const double mu = p.fluid.dynamic_viscosity;
  const double rho = p.fluid.density;
  double chip_volume = p.chip_out_volume;
  for (int i = 0; i < 3; ++i) {
    const auto& ch = p.chip_in_channels[i];
    n.chip_resistance[i] = rectangular_resistance(mu, ch);
    n.chip_inertia[i] = mfc::line_inertia(rho, ch.length(), ch.cross_area());
    const auto& ln = p.lines[i];
    n.line_resistance[i] = circular_resistance(mu, ln) + p.flowmeters[i].resistance;
    n.line_inertia[i] = mfc::line_inertia(rho, ln.length(), ln.cross_area()) + p.flowmeters[i].inertia;
    n.line_compressibility[i] = compressibility(p.line_volumes[i] + p.flowmeters[i].volume, p.fluid.bulk_modulus);
    chip_volume += p.chip_in_volumes[i];
  }
  n.outlet_resistance = rectangular_resistance(mu, p.chip_out_channel);
  n.outlet_inertia = mfc::line_inertia(rho, p.chip_out_channel.length(), p.chip_out_channel.cross_area());
  n.chip_compressibility = compressibility(chip_volume, p.fluid.bulk_modulus);
  return n;
}

NetworkSteadyState resistor_network_steady_state(const NetworkCoefficients& net, const Vec3& u) {
  double conductance = 1.0 / net.outlet_resistance;
  double injected = 0.0;
  for (int i = 0; i < 3; ++i) {
    conductance += 1.0 / net.branch_resistance(i);
    injected += u[i] / net.branch_resistance(i);
  }
  NetworkSteadyState s;
  s.junction_pressure = injected / conductance;
  for (int i = 0; i < 3; ++i) s.flows[i] = (u[i] - s.junction_pressure) / net.branch_resistance(i);
  s.outlet_flow = s.junction_pressure / net.outlet_resistance;
  return s;
}

PlantState::Vector PlantState::to_vector() const {
  Vector v;
  for (int i = 0; i < 3; ++i) {
    v[kQChip + i] = q_chip[i];
    v[kQLine + i] = q_line[i];
    v[kPChip + i] = p_chip[i];
    v[kPRes + i] = p_res[i];
    v[kReg1 + i] = reg1[i];
    v[kReg3 + i] = reg3[i];
    v[kQMeas + i] = q_meas[i];
  }
  v[kQOut] = q_out;
  v[kPJunction] = p_junction;
  v[kReg2] = reg2[0];
  v[kReg2 + 1] = reg2[1];
  return v;
}

PlantState PlantState::from_vector(const Vector& v) {
  PlantState s;
  for (int i = 0; i < 3; ++i) {
    s.q_chip[i] = v[kQChip + i];
    s.q_line[i] = v[kQLine + i];
    s.p_chip[i] = v[kPChip + i];
    s.p_res[i] = v[kPRes + i];
    s.reg1[i] = v[kReg1 + i];
    s.reg3[i] = v[kReg3 + i];
    s.q_meas[i] = v[kQMeas + i];
  }
  s.q_out = v[kQOut];
  s.p_junction = v[kPJunction];
  s.reg2 = {v[kReg2], v[kReg2 + 1]};
  return s;
}

std::string PlantState::to_text() const {
  const Vector v = to_vector();
  std::string out;
  char buf[32];
  for (int i = 0; i < kSize; ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", v[i]);
    if (i) out += ' ';
    out += buf;
  }
  return out;
}

PlantState PlantState::parse(const std::string& text) {
  std::istringstream in(text);
  Vector v;
  for (int i = 0; i < kSize; ++i) {
    std::string token;
    if (!(in >> token)) throw std::invalid_argument("plant state text has fewer than 25 values");
    std::size_t used = 0;
    v[i] = std::stod(token, &used);
    if (used != token.size()) throw std::invalid_argument("malformed plant state value: " + token);
  }
  std::string extra;
  if (in >> extra) throw std::invalid_argument("plant state text has more than 25 values");
  return from_vector(v);
}

Plant::Plant(const PhysParams& params) : Plant(params, NetworkCoefficients::from(params)) {}

Plant::Plant(const PhysParams& params, const NetworkCoefficients& network)
    : params_(params),
      net_(network),
      critical_ratio_(critical_pressure_ratio(params.air.adiabatic_index)),
      max_substep_(kMaxSubstep) {
  params_.validate();
  max_substep_ = compute_max_substep();
}

PlantState::Vector Plant::derivatives(const PlantState::Vector& x, const Vec3& u) const {
  PlantState::Vector dx;
  const auto& n = net_;
  const double pj = x[kPJunction];
  double inflow = 0.0;
  for (int i = 0; i < 3; ++i) {
    const double q_chip = x[kQChip + i];
    const double q_line = x[kQLine + i];
    const double p_chip = x[kPChip + i];
    dx[kQChip + i] = (p_chip - pj - n.chip_resistance[i] * q_chip) / n.chip_inertia[i];
    dx[kQLine + i] = (x[kPRes + i] - p_chip - n.line_resistance[i] * q_line) / n.line_inertia[i];
    dx[kPChip + i] = (q_line - q_chip) / n.line_compressibility[i];
    inflow += q_chip;
  }
  dx[kQOut] = (pj - params_.atmospheric_pressure - n.outlet_resistance * x[kQOut]) / n.outlet_inertia;
  dx[kPJunction] = (inflow - x[kQOut]) / n.chip_compressibility;

  const Vec3 p_reg{x[kReg1], x[kReg2], x[kReg3]};
  const AirPath& air = params_.air;
  for (int i = 0; i < 3; ++i) {
    if (air_frozen_) {
      dx[kPRes + i] = 0.0;
      continue;
    }
    const double up = p_reg[i] + params_.ambient_absolute_pressure;
    const double down = x[kPRes + i] + params_.ambient_absolute_pressure;
    if (!(up > 0.0) || !(down > 0.0)) {
      throw IntegrationFault("absolute pressure in air path is not positive", PlantState::from_vector(x));
    }
    dx[kPRes + i] = isentropic_mass_flow(air, up, down) * air.gas_constant * air.temperature /
                    air.reservoir_gas_volume;
  }

  const auto& a = params_.regulators.line1;
  const auto& b = params_.regulators.line2;
  const auto& c = params_.regulators.line3;
  dx[kReg1] = x[kReg1 + 1];
  dx[kReg1 + 1] = x[kReg1 + 2];
  dx[kReg1 + 2] = (u[0] - x[kReg1] - a[0] * x[kReg1 + 1] - a[1] * x[kReg1 + 2]) / a[2];
  dx[kReg2] = x[kReg2 + 1];
  dx[kReg2 + 1] = (u[1] - x[kReg2] - b[0] * x[kReg2 + 1]) / b[1];
  dx[kReg3] = x[kReg3 + 1];
  dx[kReg3 + 1] = x[kReg3 + 2];
  dx[kReg3 + 2] = (u[2] - x[kReg3] - c[0] * x[kReg3 + 1] - c[1] * x[kReg3 + 2]) / c[2];

  for (int i = 0; i < 3; ++i) {
    const double tau = params_.flowmeters[i].lag_time_constant;
    dx[kQMeas + i] = tau > 0.0 ? (x[kQLine + i] - x[kQMeas + i]) / tau : 0.0;
  }

  if (!dx.allFinite()) {
    throw IntegrationFault("non-finite plant derivative", PlantState::from_vector(x));
  }
  return dx;
}

PlantState Plant::derivatives(const PlantState& state, const Vec3& u) const {
  return PlantState::from_vector(derivatives(state.to_vector(), u));
}

PlantState Plant::step(const PlantState& state, const Vec3& u, double dt) const {
  if (!(dt >= 0.0)) throw std::invalid_argument("integration step must be non-negative");
  if (!u.allFinite()) throw IntegrationFault("non-finite regulator setpoint", state);
  const PlantState::Vector x = state.to_vector();
  if (!x.allFinite()) throw IntegrationFault("non-finite plant state", state);
  const PlantState::Vector k1 = derivatives(x, u);
  const PlantState::Vector k2 = derivatives(x + 0.5 * dt * k1, u);
  const PlantState::Vector k3 = derivatives(x + 0.5 * dt * k2, u);
  const PlantState::Vector k4 = derivatives(x + dt * k3, u);
  PlantState next = PlantState::from_vector(x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
  for (int i = 0; i < 3; ++i) {
    if (params_.flowmeters[i].lag_time_constant == 0.0) next.q_meas[i] = next.q_line[i];
  }
  return next;
}

PlantState Plant::advance(const PlantState& state, const Vec3& u, double duration) const {
  if (!(duration > 0.0)) throw std::invalid_argument("advance duration must be positive");
  const int substeps = static_cast<int>(std::ceil(duration / max_substep_ - 1e-9));
  const double h = duration / substeps;
  PlantState s = state;
  for (int i = 0; i < substeps; ++i) s = step(s, u, h);
  return s;
}

PlantState Plant::steady_state(const Vec3& u) const {
  const NetworkSteadyState ss = resistor_network_steady_state(net_, u);
  PlantState s;
  for (int i = 0; i < 3; ++i) {
    s.q_chip[i] = ss.flows[i];
    s.q_line[i] = ss.flows[i];
    s.q_meas[i] = ss.flows[i];
    s.p_chip[i] = u[i] - net_.line_resistance[i] * ss.flows[i];
    s.p_res[i] = u[i];
  }
  s.q_out = ss.outlet_flow;
  s.p_junction = ss.junction_pressure;
  s.reg1 = {u[0], 0.0, 0.0};
  s.reg2 = {u[1], 0.0};
  s.reg3 = {u[2], 0.0, 0.0};
  return s;
}

double Plant::compute_max_substep() const {
  Plant frozen = *this;
  frozen.air_frozen_ = true;
  const PlantState::Vector zero = PlantState::Vector::Zero();
  const Vec3 no_input = Vec3::Zero();
  const PlantState::Vector f0 = frozen.derivatives(zero, no_input);
  Eigen::MatrixXd jac(PlantState::kSize, PlantState::kSize);
  for (int i = 0; i < PlantState::kSize; ++i) {
    PlantState::Vector e = zero;
    e[i] = 1.0;
    jac.col(i) = frozen.derivatives(e, no_input) - f0;
  }
  const double rho = spectral_radius(jac);
  return std::min(kMaxSubstep, kRk4StabilityMargin / rho);
}

Measurement measure(const PlantState& state, double noise_std, std::mt19937_64& rng, double timestamp) {
  if (!(noise_std >= 0.0)) throw std::invalid_argument("noise standard deviation must be >= 0");
  Measurement m;
  m.timestamp = timestamp;
  if (noise_std > 0.0) {
    std::normal_distribution<double> noise(0.0, noise_std);
    for (int i = 0; i < 3; ++i) m.flows[i] = state.q_meas[i] + noise(rng);
  } else {
    for (int i = 0; i < 3; ++i) m.flows[i] = state.q_meas[i];
  }
  return m;
}

Measurement measure(const PlantState& state, double noise_std, std::uint64_t rng_seed, double timestamp) {
  std::mt19937_64 rng(rng_seed);
  return measure(state, noise_std, rng, timestamp);
}

}  // namespace mfc
