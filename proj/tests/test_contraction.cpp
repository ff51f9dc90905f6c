// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ddpmw2/contraction.hpp"

using namespace ddpmw2;

TEST(Contraction, StandardGaussianGivesOne) {
  const auto phi = PhiFunction::strongly_log_concave(1.0);
  for (double alpha : {1e-6, 0.1, 0.5, 0.9, 0.999}) EXPECT_NEAR(contraction_coeff(phi, alpha, 0.1).m_k, 1.0, 1e-9);
}

TEST(Contraction, BoundaryAlphaGivesAtLeastAThird) {
  for (double a : {1.0, 2.0, 10.0, 1e3}) {
    const double alpha = std::sqrt(1.0 / (6.0 * a));
    const auto c = contraction_coeff_from_value(a, alpha, 0.01);
    EXPECT_GE(c.m_k, 1.0 / 3.0 - 1e-12) << a;
  }
}

TEST(Contraction, ZeroStepIsIdentity) {
  const auto c = contraction_coeff(PhiFunction::bounded_support(1.0), 0.3, 0.0);
  EXPECT_EQ(c.one_step_factor, 1.0);
  EXPECT_TRUE(c.step_condition_ok);
}

TEST(Contraction, StepCondition) {
  const double alpha = 0.5, a2 = 0.25, b2 = 0.75;
  const auto phi = PhiFunction::strongly_log_concave(1.0);
  const double limit = 2.0 / ((1.0 + a2) / b2 + 1.0);
  EXPECT_TRUE(contraction_coeff(phi, alpha, 0.99 * limit).step_condition_ok);
  EXPECT_FALSE(contraction_coeff(phi, alpha, 1.01 * limit).step_condition_ok);
}

TEST(Contraction, RejectsAlphaOutsideUnitInterval) {
  const auto phi = PhiFunction::strongly_log_concave(1.0);
  EXPECT_THROW(contraction_coeff(phi, 1.0, 0.1), ValidationError);
  EXPECT_THROW(contraction_coeff(phi, 0.0, 0.1), ValidationError);
}

TEST(ContractionProperty, FactorBelowOneForPositiveRate) {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> ua(0.01, 0.99), uf(0.0, 1.0);
  int checked = 0;
  for (int i = 0; i < 1000; ++i) {
    const double alpha = ua(gen);
    const double phi_value = 2.0 * uf(gen);
    const double m = contraction_coeff_from_value(phi_value, alpha, 0.0).m_k;
    if (m <= 0.0) continue;
    const double h = uf(gen) / m;
    if (h <= 0.0) continue;
    const auto c = contraction_coeff_from_value(phi_value, alpha, h);
    EXPECT_LT(c.one_step_factor, 1.0);
    EXPECT_GE(c.one_step_factor, 0.0);
    ++checked;
  }
  EXPECT_GT(checked, 100);
}
