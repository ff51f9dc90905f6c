// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ddpmw2/theory.hpp"

using namespace ddpmw2;

namespace {
TheoryInputs thm1(double m, double b, double M, double T1, double h, double eb, double ev, int D) {
  TheoryInputs in;
  in.constants = {Theorem::Thm1, m, M, b};
  in.T1 = T1;
  in.h_max = h;
  in.eps_b = eb;
  in.eps_v = ev;
  in.D = D;
  return in;
}
}  // namespace

TEST(ThmBound, StronglyLogConcaveExample) {
  for (int D : {1, 4, 9}) {
    const TheoryBound b = thm_bound(thm1(1.0, 0.0, 0.0, 2.0, 0.1, 0.0, 0.0, D));
    EXPECT_EQ(b.a, 1.0);
    EXPECT_EQ(b.terms.prefactor, 1.0);
    // mpmath: 2 e^{-2} + 0.7 sqrt(6).
    EXPECT_NEAR(b.total_per_sqrt_d, 1.9853133864214501, 1e-14);
    EXPECT_NEAR(b.total, 1.9853133864214501 * std::sqrt(D), 1e-13);
  }
}

TEST(ThmBound, TermsReassemble) {
  const TheoryBound b = thm_bound(thm1(0.5, 0.3, 2.0, 1.5, 0.02, 0.1, 0.7, 3));
  const double sum = b.terms.init + b.terms.discr + b.terms.bias + b.terms.var;
  EXPECT_NEAR(b.total, b.terms.prefactor * sum * std::sqrt(3.0), 1e-14 * b.total);
  EXPECT_DOUBLE_EQ(b.a, 2.3);
  EXPECT_DOUBLE_EQ(b.terms.prefactor, std::exp(4.0 / 3.0 * 0.3 * 2.0));
  EXPECT_DOUBLE_EQ(b.terms.bias, 8.0 * std::sqrt(6.0 * 2.3) * 0.1);
  EXPECT_DOUBLE_EQ(b.terms.var, 4.0 * std::sqrt(6.0 * 2.3) * std::sqrt(0.02) * 0.7);
}

TEST(ThmBound, Thm2PrefactorIsE) {
  TheoryInputs in = thm1(1.0, 1.0, 0.0, 1.0, 0.1, 0.0, 0.0, 1);
  in.constants.theorem = Theorem::Thm2;
  const TheoryBound b = thm_bound(in);
  EXPECT_DOUBLE_EQ(b.terms.prefactor, std::exp(1.0));
  EXPECT_EQ(b.a, 1.0);
  in.constants.b = 4.0;
  EXPECT_EQ(thm_bound(in).a, 4.0);
}

TEST(ThmBound, VanishesInTheLimit) {
  const double tiny = thm_bound(thm1(1.0, 0.0, 0.0, 60.0, 1e-14, 0.0, 0.0, 2)).total;
  EXPECT_LT(tiny, 1e-12);
}

TEST(ThmBound, Rejections) {
  EXPECT_THROW(thm_bound(thm1(0.0, 0.0, 0.0, 1.0, 0.1, 0.0, 0.0, 1)), ValidationError);
  EXPECT_THROW(thm_bound(thm1(1.0, 0.0, 0.0, 1.0, 0.1, -0.1, 0.0, 1)), ValidationError);
  EXPECT_THROW(thm_bound(thm1(1.0, 0.0, 0.0, 1.0, 0.1, 0.0, -0.1, 1)), ValidationError);
  EXPECT_THROW(thm_bound(thm1(1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1)), ValidationError);
  EXPECT_THROW(parse_theorem("thm3"), ValidationError);
}

TEST(ThmBoundProperty, Monotone) {
  std::mt19937_64 gen(13);
  std::uniform_real_distribution<double> u(0.01, 2.0);
  for (int i = 0; i < 500; ++i) {
    const TheoryInputs in = thm1(u(gen), u(gen), u(gen), u(gen), 0.1 * u(gen), u(gen), u(gen), 3);
    const double base = thm_bound(in).total;
    const double bump = 1.0 + u(gen);
    TheoryInputs up = in;
    up.h_max *= bump;
    EXPECT_GE(thm_bound(up).total, base);
    up = in;
    up.eps_b *= bump;
    EXPECT_GE(thm_bound(up).total, base);
    up = in;
    up.eps_v *= bump;
    EXPECT_GE(thm_bound(up).total, base);
    up = in;
    up.constants.b *= bump;
    EXPECT_GE(thm_bound(up).total, base);
    up = in;
    up.T1 *= bump;
    EXPECT_LE(thm_bound(up).total, base);
  }
}

TEST(TheoryConstants, PerTarget) {
  const auto g = theory_constants(TargetSpec::gaussian(Vector::Zero(2), (Vector(2) << 0.5, 2.0).finished()));
  EXPECT_EQ(g.theorem, Theorem::Thm1);
  EXPECT_DOUBLE_EQ(g.m, 0.5);
  EXPECT_EQ(g.b, 0.0);
  const auto box = theory_constants(TargetSpec::uniform_box((Vector(2) << 3.0, 4.0).finished()));
  EXPECT_EQ(box.theorem, Theorem::Thm2);
  EXPECT_DOUBLE_EQ(box.b, 25.0);
  const auto conv = theory_constants(TargetSpec::convolution(TargetSpec::uniform_box(Vector::Ones(1)), 0.5));
  EXPECT_DOUBLE_EQ(conv.m, 4.0);
  EXPECT_DOUBLE_EQ(conv.M, 4.0);
  EXPECT_DOUBLE_EQ(conv.b, 1.0);
}

TEST(GaussianBackward, Frozen) {
  // mpmath evaluations of (s2 + 1)[1 - s2 (s2 + 1)/(s2 + e^{2T})^2] and derived W2 ratio.
  const auto g = gaussian_backward_moments(1.0, 1.0);
  EXPECT_NEAR(g.var_YT, 1.9431626535255558, 1e-14);
  EXPECT_NEAR(g.w2_per_sqrt_d, 0.02023987053900744, 1e-15);
  EXPECT_NEAR(g.ratio, 0.048863369955947408, 1e-15);
  EXPECT_NEAR(gaussian_backward_moments(1.0, 3.0 + 0.5 * std::log(6.0)).var_YT, 1.9999993178734625, 1e-15);
}

TEST(GaussianBackward, RatioApproachesOne) {
  EXPECT_NEAR(gaussian_backward_moments(1e4, 1.0).ratio, 0.97262696254507883, 1e-12);
  const double r6 = gaussian_backward_moments(1e6, 1.0).ratio;
  EXPECT_NEAR(r6, 0.99728541703510634, 1e-12);
  EXPECT_GE(r6, 0.99);
}

TEST(GaussianBackward, Limits) {
  for (double s2 : {0.01, 1.0, 100.0}) {
    const auto g = gaussian_backward_moments(s2, 40.0);
    EXPECT_NEAR(g.var_YT, s2 + 1.0, 1e-12 * (s2 + 1.0));
    EXPECT_LT(g.w2_per_sqrt_d, 1e-12);
    EXPECT_LT(g.ratio, 1e-12);
  }
}

TEST(GaussianBackwardProperty, Invariants) {
  std::mt19937_64 gen(4);
  std::uniform_real_distribution<double> u(-4.0, 4.0);
  for (int i = 0; i < 1000; ++i) {
    const auto g = gaussian_backward_moments(std::pow(10.0, u(gen)), std::pow(10.0, 0.3 * u(gen)));
    EXPECT_LE(g.var_YT, g.sigma2 + 1.0);
    EXPECT_GE(g.ratio, 0.0);
    EXPECT_LE(g.ratio, 1.0);
  }
}

// Refining the grid makes the chain variance converge. The final step has
// fixed size delta, so the limit sits O(delta) away from the continuous value.
TEST(GaussianChain, FineGridLimit) {
  const TargetSpec t = TargetSpec::isotropic_gaussian(1, 2.0);
  ScheduleParams p;
  p.T1 = 3.0;
  const double want = gaussian_backward_moments(1.0, 3.0 + 0.5 * std::log(6.0)).var_YT;
  std::vector<double> diff;
  for (int K0 : {16, 64, 256, 1024, 4096}) {
    p.K0 = K0;
    diff.push_back(gaussian_chain_moments(t, build_schedule(p)).var[0] - want);
  }
  for (std::size_t i = 2; i < diff.size(); ++i)
    EXPECT_LT(std::abs(diff[i] - diff[i - 1]), std::abs(diff[i - 1] - diff[i - 2])) << i;
  EXPECT_LT(std::abs(diff.back()), 4.0 * p.delta_value() * want);
}

TEST(GaussianChain, NoiseAddsVariance) {
  const TargetSpec t = TargetSpec::isotropic_gaussian(1, 2.0);
  ScheduleParams p;
  p.T1 = 3.0;
  p.K0 = 32;
  const Schedule s = build_schedule(p);
  EXPECT_GT(gaussian_chain_moments(t, s, 4.0).var[0], gaussian_chain_moments(t, s, 0.0).var[0]);
  EXPECT_THROW(gaussian_chain_moments(TargetSpec::uniform_box(Vector::Ones(1)), s), ValidationError);
}

TEST(Recursion, EqualityWithoutQuadraticTerm) {
  std::mt19937_64 gen(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + trial % 30;
    std::vector<double> A(n), B(n), C(n, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
      A[k] = -u(gen) * 0.5;
      B[k] = u(gen);
    }
    const double x0 = u(gen);
    const auto bound = unroll_recursion_bound(x0, A, B, C);
    const auto x = iterate_recursion(x0, A, B, C);
    for (std::size_t k = 0; k < n; ++k) EXPECT_NEAR(bound[k], x[k], 1e-12 * std::max(1.0, x[k]));
  }
}

TEST(RecursionProperty, BoundDominatesAndIsSupersolution) {
  std::mt19937_64 gen(10);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + trial % 30;
    std::vector<double> A(n), B(n), C(n);
    for (std::size_t k = 0; k < n; ++k) {
      A[k] = (u(gen) - 0.7) * 0.5;
      B[k] = u(gen);
      C[k] = u(gen);
    }
    const double x0 = u(gen);
    const auto bound = unroll_recursion_bound(x0, A, B, C);
    const auto x = iterate_recursion(x0, A, B, C);
    double prev = x0;
    for (std::size_t k = 0; k < n; ++k) {
      EXPECT_GE(bound[k], x[k] - 1e-12 * std::max(1.0, x[k]));
      const double lin = std::exp(A[k]) * prev + B[k];
      EXPECT_GE(bound[k] * bound[k], (lin * lin + C[k] * C[k]) * (1.0 - 1e-12));
      prev = bound[k];
    }
  }
}

TEST(DiscrBounds, StepExamples) {
  const Schedule s = Schedule::from_times({0.0, 0.1, 0.2, 0.3});
  DiscrRegimeSpec r;
  r.a_bar = 1.0;
  const auto e = discr_error_bounds(s, r, 1.0, 4);
  EXPECT_NEAR(e[0].B_bound, 0.01, 1e-15);
}

TEST(DiscrBounds, LastStepFrozen) {
  ScheduleParams p;
  p.T1 = 1.0;
  p.K0 = 2;
  const Schedule s = build_schedule(p);
  DiscrRegimeSpec r;
  r.a_bar = 1.0;
  const auto e = discr_error_bounds(s, r, 1.0, 1);
  EXPECT_EQ(e.back().regime, DiscrRegime::LastStep);
  // mpmath: 0.5 delta^2 + 4.5 sqrt(delta), delta = 0.5 e^{-2}.
  EXPECT_NEAR(e.back().V_bound, 1.1728746686625918, 1e-14);
}

TEST(DiscrBounds, InteriorRegimesAndLimits) {
  ScheduleParams p;
  p.T1 = 2.0;
  p.a = 2.0;
  p.K0 = 20;
  const Schedule s = build_schedule(p);
  DiscrRegimeSpec bounded{DiscrRegime::PhiBounded, 2.0, 1.0};
  const auto e = discr_error_bounds(s, bounded, 1.5, 3);
  for (const auto& x : e) {
    EXPECT_GE(x.B_bound, 0.0);
    EXPECT_GE(x.V_bound, 0.0);
  }
  const int k = 3;
  const double tau = s.horizon() - s.times[k + 1];
  const double a2 = std::exp(-2 * tau), b2 = 1 - a2, h = s.steps[k];
  const double want = 0.5 * std::sqrt(4.5) * h * h + 4.0 * std::sqrt(6.0) / 3.0 * std::pow(h, 1.5) *
                                                           std::max(2.0 * a2, b2) / (b2 * b2);
  EXPECT_NEAR(e[k].V_bound, want, 1e-14);
  // Refinement drives both bounds to zero.
  p.K0 = 20000;
  const auto fine = discr_error_bounds(build_schedule(p), DiscrRegimeSpec{DiscrRegime::PhiQuadratic, {}, 1.0}, 1.0, 1);
  EXPECT_LT(fine[5].B_bound, 1e-7);
  EXPECT_LT(fine[5].V_bound, 1e-4);
  EXPECT_THROW(discr_error_bounds(s, DiscrRegimeSpec{DiscrRegime::PhiQuadratic, {}, 0.5}, 1.0, 1), ValidationError);
  EXPECT_THROW(discr_error_bounds(s, DiscrRegimeSpec{DiscrRegime::PhiBounded, {}, 1.0}, 1.0, 1), ValidationError);
}
