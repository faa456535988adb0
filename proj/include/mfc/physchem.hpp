#pragma once

// Lumped hydraulic quantities of microfluidic channels: resistance, inertance,
// compressibility, and the isentropic air mass flow feeding the reservoirs.

#include <algorithm>
#include <stdexcept>

namespace mfc {

struct Fluid {
  double density;            // kg/m^3
  double dynamic_viscosity;  // Pa*s
  double bulk_modulus;       // Pa

  /// 74/26 water-glycerin mixture at room temperature.
  static Fluid water_glycerin();

  void validate() const;
};

/// Rectangular channel. The constructor orders the sides so that height <= width.
class RectChannel {
 public:
  RectChannel(double length, double height, double width);

  double length() const { return length_; }
  double height() const { return height_; }
  double width() const { return width_; }
  double cross_area() const { return height_ * width_; }
  double volume() const { return length_ * cross_area(); }

 private:
  double length_;
  double height_;
  double width_;
};

class CircChannel {
 public:
  CircChannel(double length, double radius);

  double length() const { return length_; }
  double radius() const { return radius_; }
  double cross_area() const;
  double volume() const { return length_ * cross_area(); }

 private:
  double length_;
  double radius_;
};

struct AirPath {
  double duct_area = 1e-6;               // m^2
  double reservoir_gas_volume = 1e-5;    // m^3
  double gas_constant = 287.14;          // J/(kg*K)
  double temperature = 293.15;           // K
  double adiabatic_index = 1.4;

  void validate() const;
};

/// I = rho * l / A.
double line_inertia(double fluid_density, double length, double cross_area);

/// Poiseuille resistance of a circular line, 8 mu l / (pi r^4).
double circular_resistance(double viscosity, const CircChannel& channel);

inline constexpr int kRectSeriesMaxTerms = 200;

/// Resistance of a rectangular channel from the Fourier-series solution of
/// Poiseuille flow. `max_terms` caps the (exponentially convergent) series
/// correction; the default reaches double precision for any aspect ratio.
double rectangular_resistance(double viscosity, const RectChannel& channel,
                              int max_terms = kRectSeriesMaxTerms);

/// C = V_tot / E.
double compressibility(double total_volume, double bulk_modulus);

/// Pressure ratio below which flow through the duct is choked.
double critical_pressure_ratio(double adiabatic_index);

/// Isentropic mass flow (kg/s) from `upstream_p` to `downstream_p`, both
/// absolute. Choked below the critical ratio, antisymmetric under a swap.
double isentropic_mass_flow(const AirPath& path, double upstream_p, double downstream_p);

}  // namespace mfc
