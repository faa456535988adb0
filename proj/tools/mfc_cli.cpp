#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mfc/harness.hpp"
#include "mfc/linmodel.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kConfigError = 2;
constexpr int kRuntimeFault = 3;

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string format = "csv";
};

mfc::Scenario prepare(const std::string& name, const Globals& g) {
  mfc::Scenario sc = mfc::load_scenario(name);
  if (g.seed) sc.rng_seed = *g.seed;
  return sc;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

void print_metrics(const std::string& label, const mfc::MetricsReport& m) {
  std::printf("%s\n", label.c_str());
  std::printf("  rmse [ul/s]        %9.4f %9.4f %9.4f\n", m.rmse(0), m.rmse(1), m.rmse(2));
  std::printf("  response time [s]  %9.3g %9.3g %9.3g\n", m.response_time(0), m.response_time(1), m.response_time(2));
  std::printf("  overshoot [%%]      %9.3g %9.3g %9.3g\n", m.overshoot(0), m.overshoot(1), m.overshoot(2));
  std::printf("  settling 1%% [s]    %9.3g %9.3g %9.3g\n", m.settling_time(0), m.settling_time(1), m.settling_time(2));
  std::printf("  violations         %d input, %d rate\n", m.input_violations, m.rate_violations);
}

void save_trace(const mfc::Trace& trace, const fs::path& dir, const std::string& stem) {
  fs::create_directories(dir);
  std::ofstream csv(dir / (stem + ".csv"));
  mfc::write_trace_csv(trace, csv);
  std::ofstream solver(dir / (stem + "_solver.csv"));
  mfc::write_solver_csv(trace, solver);
  write_file(dir / (stem + "_meta.json"), mfc::trace_metadata_json(trace));
  if (!trace.failed_qp.empty()) write_file(dir / (stem + "_failed_qp.txt"), trace.failed_qp);
}

int cmd_run(const std::string& scenario, const std::string& controller, const std::string& out, const Globals& g) {
  mfc::Scenario sc = prepare(scenario, g);
  if (controller == "mpc") sc.controller = mfc::ControllerKind::kMpc;
  else if (controller == "pi") sc.controller = mfc::ControllerKind::kPi;
  const mfc::Trace trace = mfc::run_scenario(sc);
  if (!out.empty()) save_trace(trace, out, "trace");
  print_metrics(sc.name + " (" + mfc::to_string(sc.controller) + ")", mfc::compute_metrics(trace));
  std::printf("  wall clock         %.3f s (worst step %.2f ms)\n", trace.wall_seconds, 1e3 * trace.max_step_seconds);
  if (trace.aborted) {
    std::fprintf(stderr, "run aborted: %s\n", trace.abort_reason.c_str());
    return kRuntimeFault;
  }
  return 0;
}

int cmd_sweep(const std::string& scenario, const std::string& axis_name, const std::vector<double>& values,
              const std::string& out, const Globals& g) {
  const mfc::Scenario base = prepare(scenario, g);
  const mfc::SweepAxis axis = mfc::parse_sweep_axis(axis_name);
  const auto points = mfc::sweep(base, axis, values);
  int status = 0;
  std::printf("%-10s %9s %9s %9s %10s %10s %10s\n", axis_name.c_str(), "rmse_q1", "rmse_q2", "rmse_q3", "resp_q1",
              "overshoot1", "settle_q1");
  for (const auto& p : points) {
    const auto& m = p.metrics;
    std::printf("%-10g %9.4f %9.4f %9.4f %10.3g %10.3g %10.3g%s\n", p.value, m.rmse(0), m.rmse(1), m.rmse(2),
                m.response_time(0), m.overshoot(0), m.settling_time(0), p.trace.aborted ? "  aborted" : "");
    if (!out.empty()) save_trace(p.trace, out, axis_name + "_" + std::to_string(&p - points.data()));
    if (p.trace.aborted) status = kRuntimeFault;
  }
  if (axis == mfc::SweepAxis::kBeta) {
    std::printf("\nobserver study      %14s %14s %14s\n", "noise var", "mismatch rms", "ss bias");
    for (double beta : values) {
      const auto s = mfc::beta_study(beta, base.rng_seed, base.params);
      std::printf("beta %-14g %14.4g %14.4g %14.4g\n", beta, s.estimate_noise_variance, s.mismatch_rms,
                  s.steady_state_bias);
    }
  }
  return status;
}

int cmd_compare(const std::vector<std::string>& names, const Globals& g) {
  std::vector<mfc::Scenario> scenarios;
  for (const auto& n : names) scenarios.push_back(prepare(n, g));
  const auto rows = mfc::compare(scenarios);
  std::cout << mfc::comparison_table(rows);
  for (const auto& r : rows)
    if (r.aborted) return kRuntimeFault;
  return 0;
}

int cmd_validate(const std::string& out) {
  const mfc::PhysParams params = mfc::PhysParams::defaults();
  const auto report = mfc::validate_model(params);
  std::cout << mfc::to_text(report);
  if (!out.empty()) {
    fs::create_directories(out);
    const mfc::ContinuousModel cm = mfc::build_continuous(params);
    const mfc::DiscreteModel dm = mfc::discretize_zoh(cm, 0.1);
    const std::vector<std::pair<const char*, const Eigen::MatrixXd*>> mats = {
        {"A_m", &cm.a}, {"B_m", &cm.b}, {"H_m", &cm.h}, {"F_m", &dm.f}, {"G_m", &dm.g}};
    for (const auto& [name, m] : mats) {
      std::ofstream f(fs::path(out) / (std::string(name) + ".csv"));
      mfc::write_matrix_csv(*m, f);
    }
    write_file(fs::path(out) / "report.txt", mfc::to_text(report));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Closed-loop flow control simulator for a three-inlet microfluidic chip"};
  app.require_subcommand(1);
  Globals g;
  std::uint64_t seed = 0;
  app.add_option("--seed", seed, "Override the scenario RNG seed");
  app.add_option("--format", g.format, "Trace format")->check(CLI::IsMember({"csv"}));

  std::string scenario = "steps-distinct", controller, out;
  auto* run = app.add_subcommand("run", "Run one scenario");
  run->add_option("--scenario", scenario, "Built-in name or JSON file")->required();
  run->add_option("--controller", controller, "Override the controller")->check(CLI::IsMember({"mpc", "pi"}));
  run->add_option("--out", out, "Directory for trace files");

  std::string axis;
  std::vector<double> values;
  auto* sw = app.add_subcommand("sweep", "Sweep a tuning parameter");
  sw->add_option("--scenario", scenario, "Base scenario");
  sw->add_option("--axis", axis, "N, alpha or beta")->required()->check(CLI::IsMember({"N", "alpha", "beta"}));
  sw->add_option("--values", values, "Values to try")->required();
  sw->add_option("--out", out, "Directory for traces");

  std::vector<std::string> names = {"steps-distinct", "steps-equal", "triangle-capped"};
  auto* cmp = app.add_subcommand("compare", "MPC vs PI on several scenarios");
  cmp->add_option("--scenarios", names, "Scenarios to compare");

  auto* val = app.add_subcommand("validate-model", "Audit the reduced model");
  val->add_option("--out", out, "Directory for matrices and report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }
  if (app.count("--seed")) g.seed = seed;

  try {
    if (*run) return cmd_run(scenario, controller, out, g);
    if (*sw) return cmd_sweep(scenario, axis, values, out, g);
    if (*cmp) return cmd_compare(names, g);
    if (*val) return cmd_validate(out);
  } catch (const mfc::ConfigError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return kConfigError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "runtime fault: %s\n", e.what());
    return kRuntimeFault;
  }
  return 0;
}
