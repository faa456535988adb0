#pragma once

// Three independent discrete PI loops with a clamped integrator, one per line.

#include <array>

#include "mfc/plant.hpp"

namespace mfc {

struct PiConfig {
  double kp = 0.0;  // Pa/(m^3/s)
  double ki = 0.0;  // Pa/m^3
  double u_min = 0.0;
  double u_max = 150000.0;

  void validate() const;
};

struct PiState {
  double integral = 0.0;  // m^3, integral of the flow error
  double u = 0.0;         // Pa, last applied
};

struct PiOutput {
  double u;
  PiState state;
};

/// u = clamp(kp e + ki I); afterwards I += e T and I is clamped so that
/// ki I stays inside [u_min, u_max].
PiOutput pi_step(const PiState& state, double error, double sample_period, const PiConfig& cfg);

/// Lines 1 and 3: kp 5e11, ki 2.5e12. Line 2: kp 8.5e10, ki 1.5e12.
std::array<PiConfig, 3> default_pi_gains();

class PiController {
 public:
  explicit PiController(const std::array<PiConfig, 3>& cfg);

  Vec3 step(const Vec3& error, double sample_period);
  const std::array<PiState, 3>& states() const { return states_; }

 private:
  std::array<PiConfig, 3> cfg_;
  std::array<PiState, 3> states_{};
};

}  // namespace mfc
