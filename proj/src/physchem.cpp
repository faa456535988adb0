#include "mfc/physchem.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace mfc {

namespace {

void require_positive(double value, const char* what) {
  if (!(value > 0.0) || !std::isfinite(value)) {
    throw std::domain_error(std::string(what) + " must be positive and finite");
  }
}

void require_non_negative(double value, const char* what) {
  if (!(value >= 0.0) || !std::isfinite(value)) {
    throw std::domain_error(std::string(what) + " must be non-negative and finite");
  }
}

// sum_{j>=0} (2j+1)^-5 = (1 - 2^-5) zeta(5)
constexpr double kOddZeta5 = 31.0 / 32.0 * 1.0369277551433699263;

}  // namespace

Fluid Fluid::water_glycerin() { return Fluid{1062.0, 2.1e-3, 2.6e9}; }

void Fluid::validate() const {
  require_positive(density, "fluid density");
  require_positive(dynamic_viscosity, "fluid viscosity");
  require_positive(bulk_modulus, "fluid bulk modulus");
}

RectChannel::RectChannel(double length, double height, double width)
    : length_(length), height_(std::min(height, width)), width_(std::max(height, width)) {
  require_positive(length, "channel length");
  require_positive(height, "channel height");
  require_positive(width, "channel width");
}

CircChannel::CircChannel(double length, double radius) : length_(length), radius_(radius) {
  require_positive(length, "line length");
  require_positive(radius, "line radius");
}

double CircChannel::cross_area() const { return std::numbers::pi * radius_ * radius_; }

void AirPath::validate() const {
  require_positive(duct_area, "duct area");
  require_positive(reservoir_gas_volume, "reservoir gas volume");
  require_positive(gas_constant, "gas constant");
  require_positive(temperature, "temperature");
  if (!(adiabatic_index > 1.0)) throw std::domain_error("adiabatic index must exceed 1");
}

double line_inertia(double fluid_density, double length, double cross_area) {
  require_non_negative(fluid_density, "fluid density");
  require_non_negative(length, "line length");
  require_positive(cross_area, "cross-sectional area");
  return fluid_density * length / cross_area;
}

double circular_resistance(double viscosity, const CircChannel& channel) {
  require_non_negative(viscosity, "viscosity");
  const double r = channel.radius();
  return viscosity * 8.0 * channel.length() / (std::numbers::pi * r * r * r * r);
}

double rectangular_resistance(double viscosity, const RectChannel& channel, int max_terms) {
  require_non_negative(viscosity, "viscosity");
  const double h = channel.height();
  const double w = channel.width();
  const double pi = std::numbers::pi;

  // sum tanh(k pi w / 2h) / k^5 over odd k, written as the closed-form sum of
  // k^-5 minus a correction whose terms decay like exp(-k pi w / h).
  double correction = 0.0;
  for (int j = 0; j < max_terms; ++j) {
    const double k = 2.0 * j + 1.0;
    const double one_minus_tanh = 2.0 / (std::exp(k * pi * w / h) + 1.0);
    const double term = one_minus_tanh / std::pow(k, 5);
    correction += term;
    if (term < 1e-14 * kOddZeta5) break;
  }
  const double series = kOddZeta5 - correction;
  const double shape = 1.0 - 192.0 * h / (std::pow(pi, 5) * w) * series;
  return 12.0 * viscosity * channel.length() / (h * h * h * w) / shape;
}

double compressibility(double total_volume, double bulk_modulus) {
  require_non_negative(total_volume, "chamber volume");
  require_positive(bulk_modulus, "bulk modulus");
  return total_volume / bulk_modulus;
}

double critical_pressure_ratio(double adiabatic_index) {
  const double g = adiabatic_index;
  return std::pow(2.0 / (g + 1.0), g / (g - 1.0));
}

double isentropic_mass_flow(const AirPath& path, double upstream_p, double downstream_p) {
  require_positive(upstream_p, "absolute upstream pressure");
  require_positive(downstream_p, "absolute downstream pressure");
  if (downstream_p > upstream_p) return -isentropic_mass_flow(path, downstream_p, upstream_p);

  const double g = path.adiabatic_index;
  double ratio = downstream_p / upstream_p;
  // The critical ratio is below e^-1/2 for every g > 1.
  if (ratio < 0.61) ratio = std::max(ratio, critical_pressure_ratio(g));
  // r^(2/g) - r^((g+1)/g) = a (a - r) with a = r^(1/g)
  const double a = std::pow(ratio, 1.0 / g);
  const double bracket = 2.0 * g / (g - 1.0) * a * (a - ratio);
  const double rt = path.gas_constant * path.temperature;
  return path.duct_area * upstream_p / std::sqrt(rt) * std::sqrt(std::max(bracket, 0.0));
}

}  // namespace mfc
