#include "mfc/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>

namespace mfc {

using nlohmann::json;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

const char* to_string(ProfileKind kind) {
  switch (kind) {
    case ProfileKind::kStep: return "step";
    case ProfileKind::kRamp: return "ramp";
    case ProfileKind::kTriangle: return "triangle";
  }
  return "step";
}

const char* to_string(RegulatorPreset preset) {
  return preset == RegulatorPreset::kNominal ? "nominal" : "oscillatory_line1";
}

const char* to_string(KfTuning tuning) { return tuning == KfTuning::kDefault ? "default" : "lab"; }

void reject_unknown(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be an object");
  const std::set<std::string> keys(allowed.begin(), allowed.end());
  for (const auto& item : obj.items()) {
    if (!keys.count(item.key())) throw ConfigError("unknown key '" + item.key() + "' in " + where);
  }
}

double number(const json& v, const std::string& what) {
  if (!v.is_number()) throw ConfigError(what + " must be a number");
  return v.get<double>();
}

// null stands for an absent bound
double bound(const json& v, double missing, const std::string& what) {
  return v.is_null() ? missing : number(v, what);
}

// A scalar applies to all three lines.
Vec3 per_line(const json& v, double missing, const std::string& what) {
  if (v.is_array()) {
    if (v.size() != 3) throw ConfigError(what + " needs three entries");
    return {bound(v[0], missing, what), bound(v[1], missing, what), bound(v[2], missing, what)};
  }
  return Vec3::Constant(bound(v, missing, what));
}

json per_line_json(const Vec3& v) {
  json out = json::array();
  for (int i = 0; i < 3; ++i) out.push_back(std::isfinite(v(i)) ? json(v(i)) : json(nullptr));
  return out;
}

std::vector<double> numbers(const json& v, const std::string& what) {
  if (!v.is_array()) throw ConfigError(what + " must be an array");
  std::vector<double> out;
  for (const auto& e : v) out.push_back(number(e, what));
  return out;
}

ReferenceProfile profile_from_json(const json& j) {
  reject_unknown(j, {"kind", "breakpoints", "levels"}, "reference");
  ReferenceProfile p;
  const std::string kind = j.value("kind", "step");
  if (kind == "step") p.kind = ProfileKind::kStep;
  else if (kind == "ramp") p.kind = ProfileKind::kRamp;
  else if (kind == "triangle") p.kind = ProfileKind::kTriangle;
  else throw ConfigError("unknown reference kind '" + kind + "'");
  if (j.contains("breakpoints")) p.breakpoints = numbers(j["breakpoints"], "breakpoints");
  if (j.contains("levels")) p.levels = numbers(j["levels"], "levels");
  return p;
}

ReferenceProfile steps(std::vector<double> breakpoints, std::vector<double> levels) {
  return {ProfileKind::kStep, std::move(breakpoints), std::move(levels)};
}

}  // namespace

const char* to_string(ControllerKind kind) { return kind == ControllerKind::kMpc ? "mpc" : "pi"; }

double ReferenceProfile::at(double t) const {
  if (breakpoints.empty()) return 0.0;
  if (kind == ProfileKind::kStep) {
    const auto it = std::upper_bound(breakpoints.begin(), breakpoints.end(), t);
    if (it == breakpoints.begin()) return 0.0;
    return levels[static_cast<std::size_t>(it - breakpoints.begin()) - 1];
  }
  if (t <= breakpoints.front()) return levels.front();
  if (t >= breakpoints.back()) return levels.back();
  const auto it = std::upper_bound(breakpoints.begin(), breakpoints.end(), t);
  const std::size_t i = static_cast<std::size_t>(it - breakpoints.begin());
  const double w = (t - breakpoints[i - 1]) / (breakpoints[i] - breakpoints[i - 1]);
  return levels[i - 1] + w * (levels[i] - levels[i - 1]);
}

void ReferenceProfile::validate() const {
  if (breakpoints.size() != levels.size()) throw ConfigError("reference needs one level per breakpoint");
  for (std::size_t i = 0; i < breakpoints.size(); ++i) {
    if (!std::isfinite(breakpoints[i]) || !std::isfinite(levels[i])) throw ConfigError("reference values must be finite");
    if (i > 0 && !(breakpoints[i] > breakpoints[i - 1])) throw ConfigError("breakpoints must be strictly increasing");
  }
  if (kind != ProfileKind::kStep && breakpoints.size() < 2) throw ConfigError("ramp and triangle need two breakpoints");
  if (kind == ProfileKind::kTriangle) {
    for (std::size_t i = 1; i < levels.size(); ++i) {
      const double slope = levels[i] - levels[i - 1];
      if (slope == 0.0) throw ConfigError("triangle segments must not be flat");
      if (i > 1 && (slope > 0.0) == (levels[i - 1] - levels[i - 2] > 0.0)) {
        throw ConfigError("triangle slopes must alternate");
      }
    }
  }
}

int Scenario::steps() const { return static_cast<int>(std::llround(duration / sample_period)); }

Vec3 Scenario::reference(double t) const {
  return {references[0].at(t), references[1].at(t), references[2].at(t)};
}

void Scenario::validate() const {
  if (!(duration > 0.0) || !std::isfinite(duration)) throw ConfigError("duration must be positive");
  if (!(sample_period > 0.0) || !std::isfinite(sample_period)) throw ConfigError("sample_period must be positive");
  if (std::abs(steps() * sample_period - duration) > 1e-9 * duration) {
    throw ConfigError("duration must be a whole number of sample periods");
  }
  for (const auto& r : references) r.validate();
  for (int i = 0; i < 3; ++i) {
    if (!std::isfinite(u_min(i)) || !std::isfinite(u_max(i)) || u_min(i) > u_max(i)) {
      throw ConfigError("input bounds must be finite with u_min <= u_max");
    }
    if (!(du_max_rate(i) >= 0.0) || !std::isfinite(du_max_rate(i))) throw ConfigError("du_max_rate must be >= 0");
    if (std::isnan(y_min(i)) || std::isnan(y_max(i)) || y_min(i) > y_max(i)) throw ConfigError("y_min must not exceed y_max");
    if (!(resistance_scale(i) > 0.0)) throw ConfigError("resistance multipliers must be positive");
  }
  if (!(outlet_resistance_scale > 0.0)) throw ConfigError("outlet resistance multiplier must be positive");
  if (!(noise_std >= 0.0) || !std::isfinite(noise_std)) throw ConfigError("noise_std must be >= 0");
  if (horizon < 1 || horizon > 100) throw ConfigError("horizon must be in [1, 100]");
  if (!(alpha > 0.0) || !(beta > 0.0)) throw ConfigError("alpha and beta must be positive");
  if (!(pi_gain_scale >= 0.0)) throw ConfigError("pi_gain_scale must be >= 0");
  try {
    params.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("params: ") + e.what());
  }
}

Scenario scenario_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid JSON: ") + e.what());
  }
  Scenario s;
  try {
    reject_unknown(j, {"name", "duration", "sample_period", "controller", "references", "constraints", "noise_std",
                       "rng_seed", "plant_perturbations", "regulator_preset", "horizon", "alpha", "beta",
                       "kf_tuning", "soft_output_constraints", "pi_gain_scale", "params"},
                   "scenario");
    if (j.contains("name")) s.name = j["name"].get<std::string>();
    if (j.contains("duration")) s.duration = number(j["duration"], "duration");
    if (j.contains("sample_period")) s.sample_period = number(j["sample_period"], "sample_period");
    if (j.contains("controller")) {
      const std::string c = j["controller"].get<std::string>();
      if (c == "mpc") s.controller = ControllerKind::kMpc;
      else if (c == "pi") s.controller = ControllerKind::kPi;
      else throw ConfigError("controller must be 'mpc' or 'pi'");
    }
    if (j.contains("references")) {
      const json& refs = j["references"];
      if (!refs.is_array() || refs.size() != 3) throw ConfigError("references needs three profiles");
      for (int i = 0; i < 3; ++i) s.references[i] = profile_from_json(refs[i]);
    }
    if (j.contains("constraints")) {
      const json& c = j["constraints"];
      reject_unknown(c, {"u_min", "u_max", "du_max_rate", "y_min", "y_max"}, "constraints");
      if (c.contains("u_min")) s.u_min = per_line(c["u_min"], kInf, "u_min");
      if (c.contains("u_max")) s.u_max = per_line(c["u_max"], kInf, "u_max");
      if (c.contains("du_max_rate")) s.du_max_rate = per_line(c["du_max_rate"], kInf, "du_max_rate");
      if (c.contains("y_min")) s.y_min = per_line(c["y_min"], -kInf, "y_min");
      if (c.contains("y_max")) s.y_max = per_line(c["y_max"], kInf, "y_max");
    }
    if (j.contains("noise_std")) s.noise_std = number(j["noise_std"], "noise_std");
    if (j.contains("rng_seed")) {
      if (!j["rng_seed"].is_number_unsigned()) throw ConfigError("rng_seed must be a non-negative integer");
      s.rng_seed = j["rng_seed"].get<std::uint64_t>();
    }
    if (j.contains("plant_perturbations")) {
      const json& p = j["plant_perturbations"];
      reject_unknown(p, {"resistance", "outlet_resistance"}, "plant_perturbations");
      if (p.contains("resistance")) s.resistance_scale = per_line(p["resistance"], kInf, "resistance");
      if (p.contains("outlet_resistance")) s.outlet_resistance_scale = number(p["outlet_resistance"], "outlet_resistance");
    }
    if (j.contains("regulator_preset")) {
      const std::string r = j["regulator_preset"].get<std::string>();
      if (r == "nominal") s.regulator_preset = RegulatorPreset::kNominal;
      else if (r == "oscillatory_line1") s.regulator_preset = RegulatorPreset::kOscillatoryLine1;
      else throw ConfigError("unknown regulator_preset '" + r + "'");
    }
    if (j.contains("horizon")) {
      if (!j["horizon"].is_number_integer()) throw ConfigError("horizon must be an integer");
      s.horizon = j["horizon"].get<int>();
    }
    if (j.contains("alpha")) s.alpha = number(j["alpha"], "alpha");
    if (j.contains("beta")) s.beta = number(j["beta"], "beta");
    if (j.contains("kf_tuning")) {
      const std::string k = j["kf_tuning"].get<std::string>();
      if (k == "default") s.kf_tuning = KfTuning::kDefault;
      else if (k == "lab") s.kf_tuning = KfTuning::kLab;
      else throw ConfigError("kf_tuning must be 'default' or 'lab'");
    }
    if (j.contains("soft_output_constraints")) s.soft_output_constraints = j["soft_output_constraints"].get<bool>();
    if (j.contains("pi_gain_scale")) s.pi_gain_scale = number(j["pi_gain_scale"], "pi_gain_scale");
    if (j.contains("params")) {
      const json& p = j["params"];
      reject_unknown(p, {"fluid_density", "fluid_viscosity", "bulk_modulus", "sensor_lag", "reservoir_gas_volume",
                         "duct_area", "ambient_absolute_pressure"},
                     "params");
      if (p.contains("fluid_density")) s.params.fluid.density = number(p["fluid_density"], "fluid_density");
      if (p.contains("fluid_viscosity")) s.params.fluid.dynamic_viscosity = number(p["fluid_viscosity"], "fluid_viscosity");
      if (p.contains("bulk_modulus")) s.params.fluid.bulk_modulus = number(p["bulk_modulus"], "bulk_modulus");
      if (p.contains("sensor_lag")) {
        const double lag = number(p["sensor_lag"], "sensor_lag");
        for (auto& m : s.params.flowmeters) m.lag_time_constant = lag;
      }
      if (p.contains("reservoir_gas_volume")) s.params.air.reservoir_gas_volume = number(p["reservoir_gas_volume"], "reservoir_gas_volume");
      if (p.contains("duct_area")) s.params.air.duct_area = number(p["duct_area"], "duct_area");
      if (p.contains("ambient_absolute_pressure")) {
        s.params.ambient_absolute_pressure = number(p["ambient_absolute_pressure"], "ambient_absolute_pressure");
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value type: ") + e.what());
  }
  s.validate();
  return s;
}

std::string scenario_to_json(const Scenario& s) {
  json refs = json::array();
  for (const auto& r : s.references) {
    refs.push_back({{"kind", to_string(r.kind)}, {"breakpoints", r.breakpoints}, {"levels", r.levels}});
  }
  json j = {
      {"name", s.name},
      {"duration", s.duration},
      {"sample_period", s.sample_period},
      {"controller", to_string(s.controller)},
      {"references", refs},
      {"constraints",
       {{"u_min", per_line_json(s.u_min)},
        {"u_max", per_line_json(s.u_max)},
        {"du_max_rate", per_line_json(s.du_max_rate)},
        {"y_min", per_line_json(s.y_min)},
        {"y_max", per_line_json(s.y_max)}}},
      {"noise_std", s.noise_std},
      {"rng_seed", s.rng_seed},
      {"plant_perturbations",
       {{"resistance", per_line_json(s.resistance_scale)}, {"outlet_resistance", s.outlet_resistance_scale}}},
      {"regulator_preset", to_string(s.regulator_preset)},
      {"horizon", s.horizon},
      {"alpha", s.alpha},
      {"beta", s.beta},
      {"kf_tuning", to_string(s.kf_tuning)},
      {"soft_output_constraints", s.soft_output_constraints},
      {"pi_gain_scale", s.pi_gain_scale},
      {"params",
       {{"fluid_density", s.params.fluid.density},
        {"fluid_viscosity", s.params.fluid.dynamic_viscosity},
        {"bulk_modulus", s.params.fluid.bulk_modulus},
        {"sensor_lag", s.params.flowmeters[0].lag_time_constant},
        {"reservoir_gas_volume", s.params.air.reservoir_gas_volume},
        {"duct_area", s.params.air.duct_area},
        {"ambient_absolute_pressure", s.params.ambient_absolute_pressure}}},
  };
  return j.dump(2);
}

const std::vector<std::string>& builtin_scenario_names() {
  static const std::vector<std::string> names = {"steps-distinct", "steps-equal",   "triangle-capped",
                                                 "pressure-cap-9500", "rate-cap-2000", "flow-bounds",
                                                 "mismatch-20pct"};
  return names;
}

Scenario builtin_scenario(const std::string& name) {
  Scenario s;
  s.name = name;
  // Fastest PI response without overshoot on the default geometry.
  s.pi_gain_scale = 12.0;
  if (name == "steps-distinct" || name == "mismatch-20pct") {
    s.duration = 60.0;
    s.references = {steps({1, 20, 40}, {1.0, 1.5, 0.5}), steps({1, 25, 45}, {2.0, 3.0, 1.5}),
                    steps({1, 30, 50}, {3.0, 2.0, 2.5})};
    if (name == "mismatch-20pct") s.resistance_scale = Vec3(1.2, 0.8, 1.2);
  } else if (name == "steps-equal") {
    s.duration = 60.0;
    s.noise_std = 0.1;
    const ReferenceProfile r = steps({1, 20, 40}, {2.0, 4.0, 1.0});
    s.references = {r, r, r};
  } else if (name == "triangle-capped") {
    s.duration = 60.0;
    s.noise_std = 0.1;
    s.u_max = Vec3::Constant(60000.0);
    const ReferenceProfile r{ProfileKind::kTriangle, {0, 25, 50, 60}, {0.5, 5.0, 0.5, 1.4}};
    s.references = {r, r, r};
  } else if (name == "pressure-cap-9500") {
    // Reachable under the cap first; the second step asks for more than it allows.
    s.duration = 30.0;
    s.u_max = Vec3::Constant(9500.0);
    s.references = {steps({1, 15}, {0.4, 0.6}), steps({1, 15}, {0.5, 0.6}), steps({1}, {0.6})};
  } else if (name == "rate-cap-2000") {
    // A step that the rate bound slows down, then a ramp gentle enough to be unaffected.
    s.duration = 60.0;
    s.du_max_rate = Vec3::Constant(2000.0);
    const ProfileKind ramp = ProfileKind::kRamp;
    s.references = {ReferenceProfile{ramp, {1, 1.1, 25, 45}, {0.0, 0.5, 0.5, 1.0}},
                    ReferenceProfile{ramp, {1, 1.1, 25, 45}, {0.0, 1.0, 1.0, 1.5}},
                    ReferenceProfile{ramp, {1, 1.1, 25, 45}, {0.0, 1.5, 1.5, 2.0}}};
  } else if (name == "flow-bounds") {
    // Lines 1 and 3 are asked for more than their flow bound permits.
    s.duration = 20.0;
    s.y_max = Vec3(0.8, 2.5, 2.5);
    s.references = {steps({1}, {1.0}), steps({1}, {2.0}), steps({1}, {3.0})};
  } else {
    throw ConfigError("unknown built-in scenario '" + name + "'");
  }
  s.validate();
  return s;
}

Scenario load_scenario(const std::string& name_or_path) {
  const auto& names = builtin_scenario_names();
  if (std::find(names.begin(), names.end(), name_or_path) != names.end()) return builtin_scenario(name_or_path);
  std::ifstream in(name_or_path);
  if (!in) throw ConfigError("no built-in scenario or readable file named '" + name_or_path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return scenario_from_json(buf.str());
}

}  // namespace mfc
