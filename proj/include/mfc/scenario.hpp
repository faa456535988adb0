#pragma once

// Closed-loop experiment descriptions. Flows at this boundary (references,
// output bounds, noise) are in ul/s; pressures in Pa.

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "mfc/plant.hpp"

namespace mfc {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ProfileKind { kStep, kRamp, kTriangle };
enum class ControllerKind { kMpc, kPi };
enum class RegulatorPreset { kNominal, kOscillatoryLine1 };
enum class KfTuning { kDefault, kLab };

/// Piecewise reference. Step: levels[i] from breakpoints[i] on, zero before the
/// first breakpoint. Ramp and triangle: linear between (breakpoint, level)
/// pairs, held outside them; a triangle must alternate slope signs.
struct ReferenceProfile {
  ProfileKind kind = ProfileKind::kStep;
  std::vector<double> breakpoints;  // s
  std::vector<double> levels;       // ul/s

  double at(double t) const;  // ul/s
  void validate() const;
};

struct Scenario {
  std::string name = "custom";
  double duration = 10.0;
  double sample_period = 0.1;
  ControllerKind controller = ControllerKind::kMpc;
  std::array<ReferenceProfile, 3> references;

  Vec3 u_min = Vec3::Zero();
  Vec3 u_max = Vec3::Constant(150000.0);
  Vec3 du_max_rate = Vec3::Constant(100000.0);
  Vec3 y_min = Vec3::Zero();               // ul/s
  Vec3 y_max = Vec3::Constant(INFINITY);   // ul/s

  double noise_std = 0.0;  // ul/s
  std::uint64_t rng_seed = 1;

  Vec3 resistance_scale = Vec3::Ones();  // plant branch resistances
  double outlet_resistance_scale = 1.0;
  RegulatorPreset regulator_preset = RegulatorPreset::kNominal;

  int horizon = 10;
  double alpha = 1e-7;
  double beta = 1e-4;
  KfTuning kf_tuning = KfTuning::kDefault;
  bool soft_output_constraints = false;
  double pi_gain_scale = 1.0;

  PhysParams params = PhysParams::defaults();

  int steps() const;
  Vec3 reference(double t) const;  // ul/s
  void validate() const;
};

/// Throws ConfigError on malformed JSON, unknown keys or invalid values.
Scenario scenario_from_json(const std::string& text);
std::string scenario_to_json(const Scenario& scenario);

const std::vector<std::string>& builtin_scenario_names();
/// Throws ConfigError for unknown names.
Scenario builtin_scenario(const std::string& name);
/// A built-in name or a path to a JSON file.
Scenario load_scenario(const std::string& name_or_path);

const char* to_string(ControllerKind kind);

}  // namespace mfc
