#include "mfc/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <future>
#include <limits>
#include <optional>
#include <sstream>

#include <Eigen/LU>
#include <json.hpp>

#include "mfc/baseline.hpp"
#include "mfc/matrix_utils.hpp"
#include "mfc/mpc.hpp"
#include "mfc/units.hpp"

namespace mfc {

namespace {

constexpr int kMaxConsecutiveFailures = 10;

PhysParams plant_params(const Scenario& sc) {
  PhysParams p = sc.params;
  p.regulators = sc.regulator_preset == RegulatorPreset::kNominal ? RegulatorCoeffs::nominal()
                                                                  : RegulatorCoeffs::oscillatory_line1();
  return p;
}

NetworkCoefficients perturbed_network(const Scenario& sc, const PhysParams& p) {
  NetworkCoefficients net = NetworkCoefficients::from(p);
  for (int i = 0; i < 3; ++i) {
    net.chip_resistance[i] *= sc.resistance_scale(i);
    net.line_resistance[i] *= sc.resistance_scale(i);
  }
  net.outlet_resistance *= sc.outlet_resistance_scale;
  return net;
}

MpcConfig mpc_config(const Scenario& sc) {
  MpcConfig cfg;
  cfg.horizon = sc.horizon;
  cfg.sample_period = sc.sample_period;
  cfg.alpha = sc.alpha;
  cfg.u_min = sc.u_min;
  cfg.u_max = sc.u_max;
  cfg.du_max_rate = sc.du_max_rate;
  cfg.y_min = units::kMicrolitrePerSecond * sc.y_min;
  cfg.y_max = units::kMicrolitrePerSecond * sc.y_max;
  cfg.soft_output_constraints = sc.soft_output_constraints;
  return cfg;
}

std::array<PiConfig, 3> pi_config(const Scenario& sc) {
  auto gains = default_pi_gains();
  for (int i = 0; i < 3; ++i) {
    gains[i].kp *= sc.pi_gain_scale;
    gains[i].ki *= sc.pi_gain_scale;
    gains[i].u_min = sc.u_min(i);
    gains[i].u_max = sc.u_max(i);
  }
  return gains;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

void put(std::ostream& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  out << buf;
}

void put3(std::ostream& out, const Vec3& v, double scale) {
  for (int i = 0; i < 3; ++i) {
    out << ',';
    put(out, v(i) * scale);
  }
}

struct StepEvent {
  std::size_t index;
  double from;
  double to;
};

std::vector<StepEvent> step_events(const Trace& trace, int line) {
  std::vector<StepEvent> events;
  if (trace.scenario.references[line].kind != ProfileKind::kStep) return events;
  double previous = 0.0;
  for (std::size_t k = 0; k < trace.records.size(); ++k) {
    const double r = trace.records[k].reference(line);
    if (std::abs(r - previous) > 1e-15) events.push_back({k, previous, r});
    previous = r;
  }
  return events;
}

// Block norms keep the comparison meaningful across flows
// (1e-9) and pressures (1e4) in the reduced state.
double blockwise_relative_error(const Eigen::VectorXd& approx, const Eigen::VectorXd& exact) {
  const std::vector<std::vector<int>> blocks = {{0, 1, 2, 3}, {4, 5, 8, 10}, {6, 9, 11}, {7, 12}};
  double worst = 0.0;
  for (const auto& b : blocks) {
    double diff = 0.0, norm = 0.0;
    for (int i : b) {
      diff += std::pow(approx(i) - exact(i), 2);
      norm += std::pow(exact(i), 2);
    }
    if (norm > 0.0) worst = std::max(worst, std::sqrt(diff / norm));
  }
  return worst;
}

double balanced_relative_difference(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const Eigen::VectorXd& d,
                                    bool square) {
  const Eigen::MatrixXd left = d.cwiseInverse().asDiagonal() * a;
  const Eigen::MatrixXd right = d.cwiseInverse().asDiagonal() * b;
  Eigen::MatrixXd sa = left, sb = right;
  if (square) {
    sa = left * d.asDiagonal();
    sb = right * d.asDiagonal();
  }
  return (sa - sb).cwiseAbs().maxCoeff() / std::max(sb.cwiseAbs().maxCoeff(), 1e-300);
}

}  // namespace

Trace run_scenario(const Scenario& sc) {
  sc.validate();
  const auto start = std::chrono::steady_clock::now();
  Trace trace;
  trace.scenario = sc;

  const PhysParams pp = plant_params(sc);
  const Plant plant(pp, perturbed_network(sc, pp));

  // The controller and observer always use the nominal reduced model.
  PhysParams model_params = sc.params;
  model_params.regulators = RegulatorCoeffs::nominal();
  const DiscreteModel model = discretize_zoh(build_continuous(model_params), sc.sample_period);
  KfConfig kf_cfg = KfConfig::for_reduced_model(sc.beta);
  if (sc.kf_tuning == KfTuning::kLab) kf_cfg.process_noise = lab_q_kf();
  KfState kf = KfState::initial(kf_cfg);

  std::optional<MpcController> mpc;
  std::optional<PiController> pi;
  if (sc.controller == ControllerKind::kMpc) {
    mpc.emplace(build_extended(model), mpc_config(sc));
  } else {
    pi.emplace(pi_config(sc));
  }

  std::mt19937_64 rng(sc.rng_seed);
  const double noise = units::kMicrolitrePerSecond * sc.noise_std;
  const double scale = units::kMicrolitrePerSecond;
  const int steps = sc.steps();
  const double t_step = sc.sample_period;

  PlantState x{};
  Vec3 u = Vec3::Zero();
  Eigen::VectorXd x_hat_prev = kf.estimate;
  int consecutive_failures = 0;
  trace.records.reserve(static_cast<std::size_t>(steps));

  for (int k = 0; k < steps; ++k) {
    const double t = k * t_step;
    const auto step_start = std::chrono::steady_clock::now();
    TraceRecord rec;
    rec.time = t;
    rec.reference = scale * sc.reference(t);
    rec.true_flow = x.chip_flows();

    const Measurement y = measure(x, noise, rng, t);
    rec.measured = y.flows;
    try {
      kf = kf_step(kf, u, y.flows, model, kf_cfg);
    } catch (const SingularityError& e) {
      trace.aborted = true;
      trace.abort_reason = std::string("observer: ") + e.what();
      break;
    }
    rec.estimated = kf.estimate.head<3>();
    rec.estimated_junction_pressure = kf.estimate(reduced::kPJunction);

    Vec3 u_next;
    if (mpc) {
      const int n = sc.horizon;
      Eigen::VectorXd y_ref(3 * n);
      for (int i = 0; i < n; ++i) y_ref.segment<3>(3 * i) = scale * sc.reference(t + (i + 1) * t_step);
      const Eigen::VectorXd& prev = k == 0 ? kf.estimate : x_hat_prev;
      const MpcStepResult res = mpc->step(kf.estimate, prev, y.flows, y_ref);
      u_next = res.u;
      rec.status = res.fallback ? "fallback" : to_string(res.status);
      rec.kkt_residual = res.kkt_residual;
      rec.active_set_size = res.active_set_size;
      rec.qp_iterations = res.iterations;
      consecutive_failures = res.fallback ? consecutive_failures + 1 : 0;
    } else {
      u_next = pi->step(rec.reference - y.flows, t_step);
      rec.status = "pi";
    }
    rec.u = u_next;
    rec.du = u_next - u;
    trace.max_step_seconds = std::max(trace.max_step_seconds, seconds_since(step_start));
    trace.records.push_back(rec);
    x_hat_prev = kf.estimate;

    if (consecutive_failures >= kMaxConsecutiveFailures) {
      trace.aborted = true;
      trace.abort_reason = "QP failed on consecutive steps";
      trace.failed_qp = to_text(mpc->last_problem());
      break;
    }
    try {
      x = plant.advance(x, u_next, t_step);
    } catch (const IntegrationFault& e) {
      trace.aborted = true;
      trace.abort_reason = std::string("plant: ") + e.what() + " state: " + e.snapshot().to_text();
      break;
    }
    u = u_next;
  }
  trace.wall_seconds = seconds_since(start);
  return trace;
}

void write_trace_csv(const Trace& trace, std::ostream& out) {
  out << "time,ref1,ref2,ref3,true_q1,true_q2,true_q3,meas1,meas2,meas3,est1,est2,est3,est_pm,u1,u2,u3,du1,du2,du3,"
         "status\n";
  const double ul = 1.0 / units::kMicrolitrePerSecond;
  for (const auto& r : trace.records) {
    put(out, r.time);
    put3(out, r.reference, ul);
    put3(out, r.true_flow, ul);
    put3(out, r.measured, ul);
    put3(out, r.estimated, ul);
    out << ',';
    put(out, r.estimated_junction_pressure);
    put3(out, r.u, 1.0);
    put3(out, r.du, 1.0);
    out << ',' << r.status << '\n';
  }
}

void write_solver_csv(const Trace& trace, std::ostream& out) {
  out << "time,status,kkt_residual,active_set_size,iterations\n";
  for (const auto& r : trace.records) {
    put(out, r.time);
    out << ',' << r.status << ',';
    put(out, r.kkt_residual);
    out << ',' << r.active_set_size << ',' << r.qp_iterations << '\n';
  }
}

std::string trace_metadata_json(const Trace& trace) {
  nlohmann::json j;
  j["version"] = kVersion;
  j["scenario"] = nlohmann::json::parse(scenario_to_json(trace.scenario));
  j["records"] = trace.records.size();
  j["aborted"] = trace.aborted;
  if (trace.aborted) j["abort_reason"] = trace.abort_reason;
  j["wall_seconds"] = trace.wall_seconds;
  j["max_step_seconds"] = trace.max_step_seconds;
  return j.dump(2);
}

Vec3 rmse(const Trace& trace) {
  if (trace.records.empty()) throw std::invalid_argument("rmse of an empty trace");
  Vec3 sum = Vec3::Zero();
  for (const auto& r : trace.records) sum += (r.measured - r.reference).cwiseAbs2();
  return (sum / static_cast<double>(trace.records.size())).cwiseSqrt() / units::kMicrolitrePerSecond;
}

MetricsReport compute_metrics(const Trace& trace) {
  MetricsReport m;
  m.rmse = rmse(trace);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const double inf = std::numeric_limits<double>::infinity();
  const double t_step = trace.scenario.sample_period;
  // An event's window closes when any line's reference next changes, moved
  // earlier by the MPC preview since the controller reacts that far ahead.
  std::vector<std::size_t> changes;
  for (int line = 0; line < 3; ++line)
    for (const auto& ev : step_events(trace, line)) changes.push_back(ev.index);
  std::sort(changes.begin(), changes.end());
  const std::size_t preview =
      trace.scenario.controller == ControllerKind::kMpc ? static_cast<std::size_t>(trace.scenario.horizon) : 0;
  auto window_end = [&](std::size_t index) {
    const auto next = std::upper_bound(changes.begin(), changes.end(), index);
    if (next == changes.end()) return trace.records.size();
    return std::max(index + 1, *next > preview ? *next - preview : std::size_t{0});
  };

  for (int line = 0; line < 3; ++line) {
    const auto events = step_events(trace, line);
    if (events.empty()) {
      m.response_time(line) = m.overshoot(line) = m.settling_time(line) = nan;
      continue;
    }
    double response = 0.0, overshoot = 0.0, settling = 0.0;
    for (std::size_t e = 0; e < events.size(); ++e) {
      const auto& ev = events[e];
      const std::size_t end = window_end(ev.index);
      const double size = ev.to - ev.from;
      const double t0 = trace.records[ev.index].time;
      double reached = inf;
      double worst = 0.0;
      std::optional<std::size_t> last_outside;
      for (std::size_t k = ev.index; k < end; ++k) {
        const double q = trace.records[k].true_flow(line);
        const double progress = (q - ev.from) / size;
        if (reached == inf && progress >= 0.95) reached = trace.records[k].time - t0;
        worst = std::max(worst, progress - 1.0);
        if (std::abs(q - ev.to) > 0.01 * std::abs(ev.to)) last_outside = k;
      }
      double settle = 0.0;
      if (last_outside) settle = *last_outside + 1 < end ? trace.records[*last_outside].time + t_step - t0 : inf;
      response = std::max(response, reached);
      overshoot = std::max(overshoot, 100.0 * worst);
      settling = std::max(settling, settle);
    }
    m.response_time(line) = response;
    m.overshoot(line) = overshoot;
    m.settling_time(line) = settling;
  }

  const Scenario& sc = trace.scenario;
  const Vec3 du_max = sc.du_max_rate * t_step;
  for (const auto& r : trace.records) {
    for (int i = 0; i < 3; ++i) {
      const double tol_lo = 1e-6 * std::max(1.0, std::abs(sc.u_min(i)));
      const double tol_hi = 1e-6 * std::max(1.0, std::abs(sc.u_max(i)));
      if (r.u(i) < sc.u_min(i) - tol_lo || r.u(i) > sc.u_max(i) + tol_hi) ++m.input_violations;
      if (std::abs(r.du(i)) > du_max(i) * (1.0 + 1e-9) + 1e-9) ++m.rate_violations;
    }
  }
  return m;
}

std::vector<ComparisonRow> compare(const std::vector<Scenario>& scenarios) {
  std::vector<std::future<ComparisonRow>> jobs;
  for (const auto& base : scenarios) {
    for (ControllerKind kind : {ControllerKind::kMpc, ControllerKind::kPi}) {
      Scenario sc = base;
      sc.controller = kind;
      jobs.push_back(std::async(std::launch::async, [sc] {
        const Trace t = run_scenario(sc);
        return ComparisonRow{sc.name, sc.controller, compute_metrics(t), t.aborted};
      }));
    }
  }
  std::vector<ComparisonRow> rows;
  for (auto& j : jobs) rows.push_back(j.get());
  return rows;
}

std::string comparison_table(const std::vector<ComparisonRow>& rows) {
  std::ostringstream out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-20s %-4s %10s %10s %10s %11s\n", "scenario", "ctrl", "rmse_q1", "rmse_q2",
                "rmse_q3", "violations");
  out << buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-20s %-4s %10.4f %10.4f %10.4f %11d%s\n", r.scenario.c_str(),
                  to_string(r.controller), r.metrics.rmse(0), r.metrics.rmse(1), r.metrics.rmse(2),
                  r.metrics.violations(), r.aborted ? "  aborted" : "");
    out << buf;
  }
  return out.str();
}

SweepAxis parse_sweep_axis(const std::string& name) {
  if (name == "N" || name == "horizon") return SweepAxis::kHorizon;
  if (name == "alpha") return SweepAxis::kAlpha;
  if (name == "beta") return SweepAxis::kBeta;
  throw ConfigError("sweep axis must be N, alpha or beta");
}

std::vector<SweepPoint> sweep(const Scenario& base, SweepAxis axis, const std::vector<double>& values) {
  std::vector<std::future<SweepPoint>> jobs;
  for (double v : values) {
    Scenario sc = base;
    switch (axis) {
      case SweepAxis::kHorizon:
        if (v != std::floor(v)) throw ConfigError("horizon values must be integers");
        sc.horizon = static_cast<int>(v);
        break;
      case SweepAxis::kAlpha: sc.alpha = v; break;
      case SweepAxis::kBeta: sc.beta = v; break;
    }
    sc.validate();
    jobs.push_back(std::async(std::launch::async, [sc, v] {
      SweepPoint p;
      p.value = v;
      p.trace = run_scenario(sc);
      p.metrics = compute_metrics(p.trace);
      return p;
    }));
  }
  std::vector<SweepPoint> points;
  for (auto& j : jobs) points.push_back(j.get());
  return points;
}

BetaStudy beta_study(double beta, std::uint64_t seed, const PhysParams& params) {
  BetaStudy out;
  out.beta = beta;
  const double t_step = 0.1;
  const DiscreteModel model = discretize_zoh(build_continuous(params), t_step);
  const KfConfig cfg = KfConfig::for_reduced_model(beta);

  {
    // Matched: the plant is the filter's own model, started at the steady
    // state for 10 kPa on every line.
    const Vec3 u = Vec3::Constant(10000.0);
    const Eigen::MatrixXd i_minus_f = Eigen::MatrixXd::Identity(model.states(), model.states()) - model.f;
    Eigen::VectorXd x = i_minus_f.fullPivLu().solve(model.g * u);
    KfState kf = KfState::initial(cfg);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 1e-10);
    const int steps = 4000;
    double sum = 0.0, sum_sq = 0.0;
    int count = 0;
    for (int k = 0; k < steps; ++k) {
      Vec3 y = model.h * x;
      for (int i = 0; i < 3; ++i) y(i) += noise(rng);
      kf = kf_step(kf, u, y, model, cfg);
      if (k >= steps / 2) {
        const Vec3 err = kf.estimate.head<3>() - model.h * x;
        sum += err.sum();
        sum_sq += err.squaredNorm();
        count += 3;
      }
      x = model.f * x + model.g * u;
    }
    const double mean = sum / count;
    out.estimate_noise_variance = sum_sq / count - mean * mean;
  }
  {
    // Mismatch: full nonlinear plant, no noise, pressure staircase.
    const Plant plant(params);
    PlantState x{};
    KfState kf = KfState::initial(cfg);
    Vec3 u = Vec3::Zero();
    const int steps = 100;
    double sum_sq = 0.0, bias = 0.0;
    int bias_count = 0;
    for (int k = 0; k < steps; ++k) {
      const double t = k * t_step;
      const Vec3 y(x.q_meas[0], x.q_meas[1], x.q_meas[2]);
      kf = kf_step(kf, u, y, model, cfg);
      const Vec3 err = kf.estimate.head<3>() - x.chip_flows();
      sum_sq += err.squaredNorm();
      if (t >= 8.0) {
        bias += err.cwiseAbs().sum();
        bias_count += 3;
      }
      Vec3 u_next = Vec3::Constant(20000.0);
      if (t >= 3.0) u_next = Vec3(40000.0, 30000.0, 20000.0);
      if (t >= 6.0) u_next = Vec3(10000.0, 50000.0, 30000.0);
      x = plant.advance(x, u_next, t_step);
      u = u_next;
    }
    out.mismatch_rms = std::sqrt(sum_sq / (3.0 * steps));
    out.steady_state_bias = bias / bias_count;
  }
  return out;
}

ModelValidation validate_model(const PhysParams& params, double sample_period) {
  ModelValidation report;
  const Plant plant(params);
  const ContinuousModel cm = build_continuous(params);
  const DiscreteModel dm = discretize_zoh(cm, sample_period);
  const Eigen::MatrixXd dc = dc_gain(cm);

  for (double setpoint : {10000.0, 150000.0}) {
    const Vec3 u = Vec3::Constant(setpoint);
    const Vec3 reduced_ss = dc * u;
    PlantState x{};
    Eigen::VectorXd xr = Eigen::VectorXd::Zero(dm.states());
    double transient = 0.0;
    const int transient_steps = static_cast<int>(std::llround(2.0 / sample_period));
    for (int k = 0; k < transient_steps; ++k) {
      x = plant.advance(x, u, sample_period);
      xr = dm.f * xr + dm.g * u;
      transient = std::max(transient, ((dm.h * xr) - x.chip_flows()).cwiseAbs().maxCoeff());
    }
    x = plant.advance(x, u, 20.0);
    const Vec3 full_ss = x.chip_flows();
    report.setpoints.push_back(setpoint);
    report.steady_state_diff.push_back(100.0 * ((full_ss - reduced_ss).cwiseQuotient(reduced_ss)).cwiseAbs().maxCoeff());
    report.transient_diff.push_back(100.0 * transient / reduced_ss.cwiseAbs().maxCoeff());
  }

  {
    const Vec3 u(10000.0, 20000.0, 30000.0);
    const Vec3 network = resistor_network_steady_state(NetworkCoefficients::from(params), u).flows;
    report.dc_gain_vs_network = (dc * u - network).norm() / network.norm();
  }
  {
    // One period from rest under constant input, against RK4 with dt = 1e-5.
    const Vec3 u(10000.0, 20000.0, 30000.0);
    const int substeps = static_cast<int>(std::llround(sample_period / 1e-5));
    const double h = sample_period / substeps;
    Eigen::VectorXd x = Eigen::VectorXd::Zero(dm.states());
    const Eigen::VectorXd bu = cm.b * u;
    auto rhs = [&](const Eigen::VectorXd& s) { return Eigen::VectorXd(cm.a * s + bu); };
    for (int i = 0; i < substeps; ++i) {
      const Eigen::VectorXd k1 = rhs(x);
      const Eigen::VectorXd k2 = rhs(x + 0.5 * h * k1);
      const Eigen::VectorXd k3 = rhs(x + 0.5 * h * k2);
      const Eigen::VectorXd k4 = rhs(x + h * k3);
      x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    report.zoh_vs_integration = blockwise_relative_error(dm.g * u, x);
  }
  {
    const DiscreteModel twice = discretize_zoh(cm, 2.0 * sample_period);
    const Eigen::VectorXd d = balancing_scale(cm.a);
    report.semigroup_error = std::max(balanced_relative_difference(twice.f, dm.f * dm.f, d, true),
                                      balanced_relative_difference(twice.g, dm.f * dm.g + dm.g, d, false));
  }
  return report;
}

std::string to_text(const ModelValidation& r) {
  std::ostringstream out;
  char buf[200];
  out << "full vs reduced model, equal setpoints on all lines\n";
  for (std::size_t i = 0; i < r.setpoints.size(); ++i) {
    std::snprintf(buf, sizeof buf, "  %8.0f Pa: steady-state difference %.4g %%, worst transient difference %.4g %%\n",
                  r.setpoints[i], r.steady_state_diff[i], r.transient_diff[i]);
    out << buf;
  }
  std::snprintf(buf, sizeof buf, "reduced DC gain vs resistor network: %.3g relative\n", r.dc_gain_vs_network);
  out << buf;
  std::snprintf(buf, sizeof buf, "ZOH step vs RK4 (dt = 1e-5 s): %.3g relative\n", r.zoh_vs_integration);
  out << buf;
  std::snprintf(buf, sizeof buf, "ZOH semigroup F(2T) vs F(T)^2: %.3g relative\n", r.semigroup_error);
  out << buf;
  return out.str();
}

void write_matrix_csv(const Eigen::MatrixXd& m, std::ostream& out) {
  char buf[32];
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) out << ',';
      std::snprintf(buf, sizeof buf, "%.17g", m(r, c));
      out << buf;
    }
    out << '\n';
  }
}

}  // namespace mfc
