#include "mfc/baseline.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mfc {

void PiConfig::validate() const {
  if (!(kp >= 0.0) || !(ki >= 0.0) || !std::isfinite(kp) || !std::isfinite(ki)) {
    throw std::invalid_argument("PI gains must be finite and non-negative");
  }
  if (!std::isfinite(u_min) || !std::isfinite(u_max) || u_min > u_max) {
    throw std::invalid_argument("PI output bounds must satisfy u_min <= u_max");
  }
}

PiOutput pi_step(const PiState& state, double error, double sample_period, const PiConfig& cfg) {
  if (!(sample_period > 0.0)) throw std::invalid_argument("sample period must be positive");
  PiOutput out;
  out.u = std::clamp(cfg.kp * error + cfg.ki * state.integral, cfg.u_min, cfg.u_max);
  out.state.u = out.u;
  out.state.integral = state.integral + error * sample_period;
  if (cfg.ki > 0.0) out.state.integral = std::clamp(out.state.integral, cfg.u_min / cfg.ki, cfg.u_max / cfg.ki);
  return out;
}

std::array<PiConfig, 3> default_pi_gains() {
  PiConfig outer{5e11, 2.5e12};
  PiConfig middle{8.5e10, 1.5e12};
  return {outer, middle, outer};
}

PiController::PiController(const std::array<PiConfig, 3>& cfg) : cfg_(cfg) {
  for (const auto& c : cfg_) c.validate();
}

Vec3 PiController::step(const Vec3& error, double sample_period) {
  Vec3 u;
  for (int i = 0; i < 3; ++i) {
    const PiOutput out = pi_step(states_[i], error(i), sample_period, cfg_[i]);
    states_[i] = out.state;
    u(i) = out.u;
  }
  return u;
}

}  // namespace mfc
