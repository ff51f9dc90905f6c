// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ddpmw2/tweedie.hpp"

using namespace ddpmw2;

namespace {
Vector scalar(double v) { return Vector::Constant(1, v); }
TargetSpec mixture() {
  Matrix means(2, 1);
  means << -2.0, 2.0;
  return TargetSpec::mixture(Vector::Constant(2, 0.5), means, 1.0);
}
}  // namespace

TEST(Tweedie, GaussianAnalyticIdentity) {
  const double s2 = 2.5, sigma = 0.7;
  const auto t = TargetSpec::isotropic_gaussian(1, s2);
  const auto r = verify_tweedie_hessian(t, 1.0, sigma, scalar(0.4), 1e-6, HessianMethod::Analytic);
  EXPECT_TRUE(r.pass());
  EXPECT_NEAR(r.lhs(0, 0), -1.0 / (s2 + sigma * sigma), 1e-15);
  EXPECT_NEAR(r.rhs(0, 0), -1.0 / (s2 + sigma * sigma), 1e-14);
}

TEST(Tweedie, GaussianFiniteDifference) {
  const auto t = TargetSpec::isotropic_gaussian(1, 2.5);
  EXPECT_TRUE(verify_tweedie_hessian(t, 1.0, 0.7, scalar(0.4), 1e-6).pass());
}

TEST(Tweedie, MixtureMatchesFrozenHessian) {
  const auto r = verify_tweedie_hessian(mixture(), 1.0, 1.0, scalar(0.5), 1e-4);
  EXPECT_TRUE(r.pass());
  // mpmath second derivative of log(0.5 N(y; -2, 2) + 0.5 N(y; 2, 2)) at 0.5.
  EXPECT_NEAR(r.rhs(0, 0), 0.28644773296592741, 1e-12);
  EXPECT_NEAR(r.lhs(0, 0), 0.28644773296592741, 1e-6);
}

TEST(Tweedie, StandardGaussianHessianIsMinusIdentity) {
  const auto t = TargetSpec::isotropic_gaussian(3, 1.0);
  for (double tt : {0.1, 0.7, 3.0}) {
    const NoiseLevel lv = NoiseLevel::at_time(tt);
    const Vector y = (Vector(3) << 0.3, -1.0, 2.0).finished();
    const auto r = verify_tweedie_hessian(t, lv.alpha, lv.beta, y, 1e-8, HessianMethod::Analytic);
    EXPECT_TRUE(r.pass());
    EXPECT_LT((r.rhs + Matrix::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(Tweedie, TinyBetaIsInconclusive) {
  const auto r = verify_tweedie_hessian(mixture(), 1.0, 1e-3, scalar(0.5), 1e-4);
  EXPECT_EQ(r.verdict, TweedieVerdict::Inconclusive);
}

TEST(Tweedie, RandomMixtureProbes) {
  std::mt19937_64 gen(17);
  std::uniform_real_distribution<double> ut(0.1, 2.0), uy(-3.0, 3.0);
  for (int i = 0; i < 50; ++i) {
    const NoiseLevel lv = NoiseLevel::at_time(ut(gen));
    const auto r = verify_tweedie_hessian(mixture(), lv.alpha, lv.beta, scalar(uy(gen)), 1e-4);
    EXPECT_TRUE(r.pass()) << r.max_abs_diff;
  }
}

TEST(Tweedie, RejectsTargetsWithoutClosedForm) {
  EXPECT_THROW(verify_tweedie_hessian(TargetSpec::uniform_box(scalar(1.0)), 1.0, 1.0, scalar(0.0), 1e-4),
               ValidationError);
}
