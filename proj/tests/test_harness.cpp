#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "mfc/harness.hpp"

namespace {

using namespace mfc;

constexpr double kUl = 1e-9;  // m^3/s per ul/s

Trace synthetic_trace(const std::vector<double>& measured, const std::vector<double>& reference) {
  Trace t;
  t.scenario.controller = ControllerKind::kPi;
  for (std::size_t k = 0; k < measured.size(); ++k) {
    TraceRecord r;
    r.time = 0.1 * static_cast<double>(k);
    r.measured = Vec3::Constant(measured[k] * kUl);
    r.true_flow = r.measured;
    r.reference = Vec3::Constant(reference[k] * kUl);
    t.records.push_back(r);
  }
  return t;
}

Scenario short_scenario(double duration, double noise) {
  Scenario s = builtin_scenario("steps-equal");
  s.duration = duration;
  s.noise_std = noise;
  return s;
}

TEST(Metrics, RmseOfConstantError) {
  const Trace t = synthetic_trace({1.0, 1.0, 1.0}, {0.0, 0.0, 0.0});
  EXPECT_NEAR(rmse(t)(0), 1.0, 1e-12);
}

TEST(Metrics, RmseOfMixedErrors) {
  const Trace t = synthetic_trace({3.0, -4.0}, {0.0, 0.0});
  EXPECT_NEAR(rmse(t)(1), std::sqrt(12.5), 1e-12);
}

TEST(Metrics, RmseOfEmptyTraceThrows) { EXPECT_THROW(rmse(Trace{}), std::invalid_argument); }

TEST(Metrics, StepResponseFigures) {
  std::vector<double> ref(30, 0.0), q(30, 0.0);
  for (int k = 10; k < 30; ++k) {
    ref[k] = 1.0;
    q[k] = 1.0;
  }
  q[10] = 0.5;
  q[11] = 1.1;
  q[12] = 0.98;
  const MetricsReport m = compute_metrics(synthetic_trace(q, ref));
  EXPECT_NEAR(m.response_time(0), 0.1, 1e-12);
  EXPECT_NEAR(m.overshoot(0), 10.0, 1e-9);
  EXPECT_NEAR(m.settling_time(0), 0.3, 1e-12);
}

TEST(Metrics, NeverSettlingIsInfinite) {
  std::vector<double> ref(20, 1.0), q(20, 1.0);
  q.back() = 1.5;
  const MetricsReport m = compute_metrics(synthetic_trace(q, ref));
  EXPECT_TRUE(std::isinf(m.settling_time(0)));
}

TEST(Metrics, CountsBoundViolations) {
  Trace t = synthetic_trace({0.0, 0.0}, {0.0, 0.0});
  t.scenario.u_max = Vec3::Constant(100.0);
  t.scenario.du_max_rate = Vec3::Constant(10.0);
  t.records[1].u = Vec3(101.0, 50.0, 50.0);
  t.records[1].du = Vec3(0.5, 2.0, 0.0);
  const MetricsReport m = compute_metrics(t);
  EXPECT_EQ(m.input_violations, 1);
  EXPECT_EQ(m.rate_violations, 1);
}

TEST(Runner, ZeroReferenceStaysAtRest) {
  Scenario s;
  s.duration = 2.0;
  const Trace t = run_scenario(s);
  ASSERT_EQ(t.records.size(), 20u);
  EXPECT_FALSE(t.aborted);
  for (const auto& r : t.records) {
    EXPECT_EQ(r.u, Vec3::Zero());
    EXPECT_EQ(r.true_flow, Vec3::Zero());
  }
}

TEST(Runner, CsvIsByteIdenticalAcrossRuns) {
  const Scenario s = short_scenario(4.0, 0.1);
  std::ostringstream a, b;
  write_trace_csv(run_scenario(s), a);
  write_trace_csv(run_scenario(s), b);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_EQ(a.str().substr(0, a.str().find('\n')),
            "time,ref1,ref2,ref3,true_q1,true_q2,true_q3,meas1,meas2,meas3,est1,est2,est3,est_pm,u1,u2,u3,du1,du2,"
            "du3,status");
}

TEST(Runner, SeedChangesNoise) {
  Scenario s = short_scenario(1.0, 0.1);
  const Trace a = run_scenario(s);
  s.rng_seed += 1;
  const Trace b = run_scenario(s);
  EXPECT_NE(a.records[0].measured, b.records[0].measured);
}

TEST(Runner, ControllersSeeTheSameInitialNoise) {
  Scenario s = short_scenario(0.5, 0.1);
  const Trace mpc = run_scenario(s);
  s.controller = ControllerKind::kPi;
  const Trace pi = run_scenario(s);
  EXPECT_EQ(mpc.records[0].measured, pi.records[0].measured);
  EXPECT_EQ(pi.records[0].status, "pi");
}

TEST(Runner, MetadataNamesScenario) {
  const Trace t = run_scenario(short_scenario(0.3, 0.0));
  const std::string meta = trace_metadata_json(t);
  EXPECT_NE(meta.find("steps-equal"), std::string::npos);
  EXPECT_NE(meta.find(kVersion), std::string::npos);
}

TEST(Compare, TwoRowsPerScenario) {
  const std::vector<ComparisonRow> rows = compare({short_scenario(1.0, 0.1)});
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].controller, ControllerKind::kMpc);
  EXPECT_EQ(rows[1].controller, ControllerKind::kPi);
  const std::string table = comparison_table(rows);
  EXPECT_NE(table.find("steps-equal"), std::string::npos);
}

TEST(Sweep, AxisNames) {
  EXPECT_EQ(parse_sweep_axis("N"), SweepAxis::kHorizon);
  EXPECT_EQ(parse_sweep_axis("horizon"), SweepAxis::kHorizon);
  EXPECT_EQ(parse_sweep_axis("alpha"), SweepAxis::kAlpha);
  EXPECT_EQ(parse_sweep_axis("beta"), SweepAxis::kBeta);
  EXPECT_THROW(parse_sweep_axis("gamma"), ConfigError);
}

TEST(Sweep, AppliesValues) {
  const auto points = sweep(short_scenario(0.5, 0.0), SweepAxis::kHorizon, {1, 3});
  ASSERT_EQ(points.size(), 2u);
  EXPECT_EQ(points[0].trace.scenario.horizon, 1);
  EXPECT_EQ(points[1].trace.scenario.horizon, 3);
}

TEST(Profile, StepIsZeroBeforeFirstBreakpoint) {
  ReferenceProfile p{ProfileKind::kStep, {1.0, 2.0}, {3.0, 5.0}};
  EXPECT_EQ(p.at(0.5), 0.0);
  EXPECT_EQ(p.at(1.0), 3.0);
  EXPECT_EQ(p.at(1.99), 3.0);
  EXPECT_EQ(p.at(10.0), 5.0);
}

TEST(Profile, RampInterpolatesAndHolds) {
  ReferenceProfile p{ProfileKind::kRamp, {1.0, 3.0}, {0.0, 4.0}};
  EXPECT_EQ(p.at(0.0), 0.0);
  EXPECT_DOUBLE_EQ(p.at(2.0), 2.0);
  EXPECT_EQ(p.at(5.0), 4.0);
}

TEST(Profile, TriangleMustAlternate) {
  ReferenceProfile ok{ProfileKind::kTriangle, {0.0, 1.0, 2.0}, {0.0, 1.0, 0.0}};
  EXPECT_NO_THROW(ok.validate());
  ReferenceProfile bad{ProfileKind::kTriangle, {0.0, 1.0, 2.0}, {0.0, 1.0, 2.0}};
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Profile, BreakpointsMustIncrease) {
  ReferenceProfile p{ProfileKind::kStep, {2.0, 1.0}, {1.0, 2.0}};
  EXPECT_THROW(p.validate(), ConfigError);
}

TEST(ScenarioJson, RejectsUnknownKeys) {
  EXPECT_THROW(scenario_from_json(R"({"duraton": 5})"), ConfigError);
  EXPECT_THROW(scenario_from_json(R"({"constraints": {"umax": 5}})"), ConfigError);
  EXPECT_THROW(scenario_from_json(R"({"plant_perturbations": {"resistence": 1.1}})"), ConfigError);
  EXPECT_THROW(scenario_from_json(R"({"params": {"viscosity": 1e-3}})"), ConfigError);
  EXPECT_THROW(scenario_from_json("{not json"), ConfigError);
}

TEST(ScenarioJson, PerLineValuesAndNulls) {
  const Scenario s = scenario_from_json(
      R"({"duration": 5, "constraints": {"u_max": [1000, 2000, 3000], "y_max": [1.5, null, 2]},
          "references": [{"kind": "step", "breakpoints": [1], "levels": [1]},
                         {"kind": "ramp", "breakpoints": [0, 2], "levels": [0, 2]},
                         {"breakpoints": [], "levels": []}]})");
  EXPECT_EQ(s.u_max, Vec3(1000, 2000, 3000));
  EXPECT_EQ(s.y_max(0), 1.5);
  EXPECT_TRUE(std::isinf(s.y_max(1)));
  EXPECT_EQ(s.references[1].kind, ProfileKind::kRamp);
  EXPECT_EQ(s.steps(), 50);
}

TEST(ScenarioJson, RejectsInvalidValues) {
  EXPECT_THROW(scenario_from_json(R"({"duration": -1})"), ConfigError);
  EXPECT_THROW(scenario_from_json(R"({"horizon": 0})"), ConfigError);
  EXPECT_THROW(scenario_from_json(R"({"controller": "lqr"})"), ConfigError);
}

TEST(ScenarioJson, RoundTrip) {
  for (const auto& name : builtin_scenario_names()) {
    const Scenario a = builtin_scenario(name);
    const Scenario b = scenario_from_json(scenario_to_json(a));
    EXPECT_EQ(scenario_to_json(a), scenario_to_json(b)) << name;
  }
}

TEST(Builtins, AllLoadAndValidate) {
  EXPECT_GE(builtin_scenario_names().size(), 7u);
  for (const auto& name : builtin_scenario_names()) {
    const Scenario s = load_scenario(name);
    EXPECT_EQ(s.name, name);
    EXPECT_NO_THROW(s.validate());
  }
  EXPECT_THROW(load_scenario("no-such-scenario"), ConfigError);
}

}  // namespace
