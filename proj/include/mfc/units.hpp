#pragma once

// Internal computations are SI (m^3/s, Pa, s). Configuration files, traces and
// reports use microlitres per second for flows.

namespace mfc::units {

inline constexpr double kMicrolitrePerSecond = 1e-9;  // m^3/s

constexpr double to_ul_per_s(double m3_per_s) { return m3_per_s / kMicrolitrePerSecond; }
constexpr double from_ul_per_s(double ul_per_s) { return ul_per_s * kMicrolitrePerSecond; }

inline constexpr double kStandardAtmosphere = 101325.0;  // Pa

}  // namespace mfc::units
