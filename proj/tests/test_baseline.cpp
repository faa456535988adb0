#include <gtest/gtest.h>

#include "mfc/baseline.hpp"

namespace {

using namespace mfc;

TEST(Pi, ZeroErrorGivesZeroOutput) {
  const PiOutput out = pi_step(PiState{}, 0.0, 0.1, default_pi_gains()[0]);
  EXPECT_EQ(out.u, 0.0);
  EXPECT_EQ(out.state.integral, 0.0);
}

TEST(Pi, LineTwoConstantErrorRamp) {
  const PiConfig cfg = default_pi_gains()[1];
  const double e = 1e-9;
  PiState s;
  for (int k = 0; k < 5; ++k) {
    const PiOutput out = pi_step(s, e, 0.1, cfg);
    // kp e plus ki times the error accumulated over k earlier periods
    EXPECT_NEAR(out.u, 85.0 + 150.0 * k, 1e-9) << k;
    s = out.state;
  }
}

TEST(Pi, OutputIsClamped) {
  const PiConfig cfg = default_pi_gains()[0];
  EXPECT_EQ(pi_step(PiState{}, 1.0, 0.1, cfg).u, cfg.u_max);
  EXPECT_EQ(pi_step(PiState{}, -1.0, 0.1, cfg).u, cfg.u_min);
}

TEST(Pi, IntegratorDoesNotWindUp) {
  const PiConfig cfg = default_pi_gains()[0];
  PiState s;
  for (int k = 0; k < 1000; ++k) s = pi_step(s, 1e-6, 0.1, cfg).state;
  EXPECT_DOUBLE_EQ(cfg.ki * s.integral, cfg.u_max);
  // One period of negative error leaves saturation immediately.
  const PiOutput out = pi_step(s, -1e-8, 0.1, cfg);
  EXPECT_LT(out.u, cfg.u_max);
  EXPECT_NEAR(out.u, cfg.u_max - cfg.kp * 1e-8, 1e-6);
}

TEST(Pi, LinearInsideBounds) {
  PiConfig cfg = default_pi_gains()[2];
  cfg.u_min = -1e9;
  cfg.u_max = 1e9;
  const double errors[] = {1e-9, -2e-9, 0.5e-9, 3e-9};
  PiState a, b, sum;
  for (double e : errors) {
    const PiOutput oa = pi_step(a, e, 0.1, cfg);
    const PiOutput ob = pi_step(b, 2.0 * e, 0.1, cfg);
    const PiOutput os = pi_step(sum, 3.0 * e, 0.1, cfg);
    EXPECT_NEAR(os.u, oa.u + ob.u, 1e-9 * std::abs(os.u) + 1e-12);
    a = oa.state;
    b = ob.state;
    sum = os.state;
  }
}

TEST(Pi, DefaultGains) {
  const auto g = default_pi_gains();
  EXPECT_EQ(g[0].kp, 5e11);
  EXPECT_EQ(g[0].ki, 2.5e12);
  EXPECT_EQ(g[1].kp, 8.5e10);
  EXPECT_EQ(g[1].ki, 1.5e12);
  EXPECT_EQ(g[2].kp, 5e11);
  EXPECT_EQ(g[2].ki, 2.5e12);
}

TEST(Pi, ControllerRunsLinesIndependently) {
  PiController ctl(default_pi_gains());
  const Vec3 u = ctl.step(Vec3(1e-9, 0.0, -1e-9), 0.1);
  EXPECT_DOUBLE_EQ(u(0), 500.0);
  EXPECT_EQ(u(1), 0.0);
  EXPECT_EQ(u(2), 0.0);
  EXPECT_DOUBLE_EQ(ctl.states()[0].integral, 1e-10);
  EXPECT_EQ(ctl.states()[2].integral, 0.0);
}

TEST(Pi, RejectsBadConfig) {
  EXPECT_THROW((PiConfig{-1.0, 1.0}).validate(), std::invalid_argument);
  EXPECT_THROW((PiConfig{1.0, 1.0, 10.0, 5.0}).validate(), std::invalid_argument);
  EXPECT_THROW(pi_step(PiState{}, 0.0, 0.0, default_pi_gains()[0]), std::invalid_argument);
}

}  // namespace
