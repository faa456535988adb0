#pragma once

// Closed-loop runner: plant -> sensor -> Kalman filter -> controller -> plant,
// once per sample period, plus the metrics, comparisons and sweeps built on it.

#include <ostream>
#include <string>
#include <vector>

#include "mfc/estimator.hpp"
#include "mfc/qp.hpp"
#include "mfc/scenario.hpp"

namespace mfc {

inline constexpr const char* kVersion = "1.0.0";

/// One control period. Flows in m^3/s, pressures in Pa.
struct TraceRecord {
  double time = 0.0;
  Vec3 reference = Vec3::Zero();
  Vec3 true_flow = Vec3::Zero();
  Vec3 measured = Vec3::Zero();
  Vec3 estimated = Vec3::Zero();
  double estimated_junction_pressure = 0.0;
  Vec3 u = Vec3::Zero();
  Vec3 du = Vec3::Zero();
  std::string status;  // QP status, "fallback" or "pi"

  double kkt_residual = 0.0;
  int active_set_size = 0;
  int qp_iterations = 0;
};

struct Trace {
  Scenario scenario;
  std::vector<TraceRecord> records;
  bool aborted = false;
  std::string abort_reason;
  std::string failed_qp;  // text dump of the QP that ended the run
  double wall_seconds = 0.0;
  double max_step_seconds = 0.0;
};

/// Deterministic for a given scenario; an integration fault or ten
/// consecutive failed solves end the run early with aborted = true.
Trace run_scenario(const Scenario& scenario);

/// Columns: time, ref1-3, true_q1-3, meas1-3, est1-3, est_pm, u1-3, du1-3,
/// status. Flows in ul/s, 9 significant digits.
void write_trace_csv(const Trace& trace, std::ostream& out);
void write_solver_csv(const Trace& trace, std::ostream& out);
std::string trace_metadata_json(const Trace& trace);

struct MetricsReport {
  Vec3 rmse = Vec3::Zero();            // ul/s, measured - reference
  Vec3 response_time = Vec3::Zero();   // s to 95% of a step, worst step; NaN without steps
  Vec3 overshoot = Vec3::Zero();       // % of step size, worst step
  Vec3 settling_time = Vec3::Zero();   // s to stay within 1% of the new level, worst step
  int input_violations = 0;
  int rate_violations = 0;

  int violations() const { return input_violations + rate_violations; }
};

/// Per-line RMSE of measured minus reference flow in ul/s.
Vec3 rmse(const Trace& trace);
/// Step metrics use the true chip flows.
MetricsReport compute_metrics(const Trace& trace);

struct ComparisonRow {
  std::string scenario;
  ControllerKind controller;
  MetricsReport metrics;
  bool aborted = false;
};

/// Runs every scenario under both controllers with identical seeds.
std::vector<ComparisonRow> compare(const std::vector<Scenario>& scenarios);
std::string comparison_table(const std::vector<ComparisonRow>& rows);

enum class SweepAxis { kHorizon, kAlpha, kBeta };
SweepAxis parse_sweep_axis(const std::string& name);

struct SweepPoint {
  double value = 0.0;
  MetricsReport metrics;
  Trace trace;
};

std::vector<SweepPoint> sweep(const Scenario& base, SweepAxis axis, const std::vector<double>& values);

/// Observer quality for one beta. Noise: variance of the flow-estimate error
/// with the filter model equal to the plant and sensor noise 1e-10 m^3/s.
/// Mismatch: RMS flow-estimate error against the full nonlinear plant driven
/// by pressure steps without noise, and its mean over the final 2 s.
struct BetaStudy {
  double beta = 0.0;
  double estimate_noise_variance = 0.0;  // (m^3/s)^2
  double mismatch_rms = 0.0;             // m^3/s
  double steady_state_bias = 0.0;        // m^3/s
};

BetaStudy beta_study(double beta, std::uint64_t seed, const PhysParams& params = PhysParams::defaults());

struct ModelValidation {
  std::vector<double> setpoints;          // Pa, applied to all lines
  std::vector<double> steady_state_diff;  // %, full plant vs reduced model
  std::vector<double> transient_diff;     // % of final flow, worst over the first 2 s
  double dc_gain_vs_network = 0.0;        // relative
  double zoh_vs_integration = 0.0;        // relative, one period
  double semigroup_error = 0.0;
};

ModelValidation validate_model(const PhysParams& params = PhysParams::defaults(), double sample_period = 0.1);
std::string to_text(const ModelValidation& report);

void write_matrix_csv(const Eigen::MatrixXd& m, std::ostream& out);

}  // namespace mfc
