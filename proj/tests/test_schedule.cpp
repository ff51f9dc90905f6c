// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ddpmw2/schedule.hpp"

using namespace ddpmw2;

namespace {
ScheduleParams params(double T1, double a, int K0) {
  ScheduleParams p;
  p.T1 = T1;
  p.a = a;
  p.K0 = K0;
  return p;
}
}  // namespace

TEST(BuildSchedule, WorkedGrid) {
  // 40-digit evaluation of the two-phase grid formulas.
  const std::vector<double> want{0.0, 0.5, 1.0, 1.649664241976043, 1.8282120929957212, 1.8958797346140275};
  const Schedule s = build_schedule(params(1.0, 1.0, 2));
  ASSERT_EQ(s.times.size(), want.size());
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(s.times[i], want[i], 1e-13) << i;
  EXPECT_EQ(s.K(), 4);
  EXPECT_NEAR(s.delta(), 0.5 * std::exp(-2.0), 1e-15);
}

TEST(BuildSchedule, LastInteriorPointIsDeltaBeforeHorizon) {
  for (int K0 : {2, 7, 64, 1000}) {
    const Schedule s = build_schedule(params(1.3, 2.7, K0));
    const double T = s.horizon();
    EXPECT_NEAR(s.times[static_cast<std::size_t>(s.K())], T - s.params->delta_value(), 1e-12);
    EXPECT_DOUBLE_EQ(T, 1.3 + 0.5 * std::log(6.0 * 2.7));
  }
}

TEST(BuildSchedule, HMaxBoundFrozen) {
  const ScheduleParams p = params(2.0, 1.0, 100);
  EXPECT_NEAR(p.h_max_bound(), 0.08211988560590178, 1e-15);
  EXPECT_LE(build_schedule(p).h_max, p.h_max_bound());
}

TEST(BuildSchedule, Rejections) {
  EXPECT_THROW(build_schedule(params(1.0, 1.0, 1)), ValidationError);
  EXPECT_THROW(build_schedule(params(0.0, 1.0, 4)), ValidationError);
  EXPECT_THROW(build_schedule(params(1.0, 0.5, 4)), ValidationError);
  ScheduleParams p = params(1.0, 1.0, 4);
  p.delta = 0.5 * std::log(6.0);
  EXPECT_THROW(build_schedule(p), ValidationError);
  EXPECT_THROW(Schedule::from_times({0.0, 1.0, 1.0}), ValidationError);
  EXPECT_THROW(Schedule::from_times({0.1, 1.0, 2.0}), ValidationError);
}

TEST(BuildSchedule, ComplianceFlag) {
  const ScheduleParams p = params(3.0, 1.0, 16);
  EXPECT_FALSE(build_schedule(p).theorem_compliant());
  const int need = static_cast<int>(std::ceil(p.k0_lower_bound()));
  EXPECT_TRUE(build_schedule(params(3.0, 1.0, need)).theorem_compliant());
  ScheduleParams q = params(3.0, 1.0, need);
  q.delta = 0.01;
  EXPECT_FALSE(build_schedule(q).theorem_compliant());
  EXPECT_FALSE(Schedule::from_times({0.0, 1.0, 2.0}).theorem_compliant());
}

TEST(ScheduleProperty, GeometricPhaseClosedForm) {
  const Schedule s = build_schedule(params(1.5, 3.0, 40));
  const int K0 = s.K0;
  const double L = std::log(18.0);
  const double c = 1.0 - s.steps[static_cast<std::size_t>(K0 + 1)] / s.steps[static_cast<std::size_t>(K0)];
  EXPECT_NEAR(c, s.geometric_c, 1e-12);
  for (int j = 0; j < K0; ++j) {
    const double want = 0.5 * L * c * std::pow(1.0 - c, j);
    EXPECT_NEAR(s.steps[static_cast<std::size_t>(K0 + j)], want, 1e-10) << j;
    if (j + 1 < K0) EXPECT_LT(s.steps[static_cast<std::size_t>(K0 + j + 1)], s.steps[static_cast<std::size_t>(K0 + j)]);
  }
}

TEST(ScheduleProperty, DoublingK0HalvesHMax) {
  for (double T1 : {1.0, 3.0}) {
    for (double a : {1.0, 5.0}) {
      ScheduleParams p = params(T1, a, 0);
      p.K0 = std::max(64, static_cast<int>(std::ceil(p.k0_lower_bound())));
      const double h1 = build_schedule(p).h_max;
      p.K0 *= 2;
      const double h2 = build_schedule(p).h_max;
      EXPECT_NEAR(h2 / h1, 0.5, 0.025) << T1 << " " << a;
    }
  }
}

TEST(ScheduleProperty, HMaxObeysTheoremExpression) {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> uT(0.2, 6.0), ua(0.0, 5.0);
  std::uniform_int_distribution<int> extra(0, 300);
  for (int i = 0; i < 100; ++i) {
    ScheduleParams p = params(uT(gen), std::exp(ua(gen)), 0);
    p.K0 = std::max(2, static_cast<int>(std::ceil(p.k0_lower_bound()))) + extra(gen);
    const Schedule s = build_schedule(p);
    ASSERT_TRUE(s.theorem_compliant());
    EXPECT_LE(s.h_max, p.h_max_bound());
  }
}

TEST(ContractionRegime, StandardGaussianEveryStepHasUnitRate) {
  const Schedule s = build_schedule(params(1.0, 1.0, 2));
  const auto report = check_contraction_regime(s, PhiFunction::strongly_log_concave(1.0));
  ASSERT_EQ(static_cast<int>(report.size()), s.K() + 1);
  for (const auto& r : report) {
    EXPECT_NEAR(r.coeff.m_k, 1.0, 1e-9) << r.k;
    EXPECT_TRUE(r.m_at_least_third);
    EXPECT_LT(r.alpha, 1.0);
  }
}

TEST(ContractionRegime, ArithmeticPremisesOnWorkedGrid) {
  const Schedule s = build_schedule(params(1.0, 1.0, 2));
  const auto report = check_contraction_regime(s, PhiFunction::bounded_support(1.0));
  for (const auto& r : report) {
    if (r.phase != StepPhase::Arithmetic) continue;
    EXPECT_LE(r.h, 0.7);
    EXPECT_TRUE(r.alpha2_within);
    EXPECT_TRUE(r.m_at_least_third);
  }
}
