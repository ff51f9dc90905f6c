// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "ddpmw2/sampler.hpp"
#include "ddpmw2/schedule.hpp"
#include "ddpmw2/theory.hpp"

using namespace ddpmw2;

namespace {
TargetPtr gaussian(int d, double var = 1.0) {
  return std::make_shared<const TargetSpec>(TargetSpec::isotropic_gaussian(d, var));
}

SamplerConfig config(TargetPtr target, double T1, int K0, std::size_t n, std::uint64_t seed) {
  ScheduleParams p;
  p.T1 = T1;
  p.K0 = K0;
  SamplerConfig c;
  c.schedule = build_schedule(p);
  c.oracle = std::make_shared<const ScoreOracle>(ScoreOracle::exact(std::move(target)));
  c.n_chains = n;
  c.seed = seed;
  return c;
}

double column_var(const Samples& xs, Eigen::Index j) {
  const double m = xs.col(j).mean();
  return (xs.col(j).array() - m).square().sum() / static_cast<double>(xs.rows() - 1);
}

bool bitwise_equal(const Samples& a, const Samples& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}
}  // namespace

TEST(DdpmStep, Arithmetic) {
  const Vector one = Vector::Constant(1, 1.0);
  EXPECT_NEAR(ddpm_step(one, 0.1, Vector::Constant(1, -0.5), Vector::Zero(1))[0], 1.0, 1e-15);
  const double h = 0.3, z = 1.7;
  EXPECT_NEAR(ddpm_step(Vector::Constant(1, z), h, Vector::Constant(1, -(1 + h) * z / (2 * h)), Vector::Zero(1))[0],
              0.0, 1e-15);
  const Vector out = ddpm_step((Vector(2) << 1, -1).finished(), 0.25, Vector::Zero(2), Vector::Constant(2, 2.0));
  // 40-digit evaluation of 1.25 + 2 sqrt(0.5) and -1.25 + 2 sqrt(0.5).
  EXPECT_NEAR(out[0], 2.664213562373095, 1e-15);
  EXPECT_NEAR(out[1], 0.16421356237309505, 1e-15);
  EXPECT_THROW(ddpm_step(one, 0.0, one, one), ValidationError);
}

TEST(ForwardMarginal, TimeZeroIsTarget) {
  const TargetSpec t = TargetSpec::uniform_box(Vector::Ones(2));
  EXPECT_TRUE(bitwise_equal(forward_marginal_sample(t, 0.0, 300, 5), sample_target(t, 300, 5)));
}

TEST(ForwardMarginal, LongTimeIsStandardGaussian) {
  const TargetSpec t = TargetSpec::uniform_box(Vector::Ones(2));
  const Samples xs = forward_marginal_sample(t, 20.0, 100000, 6);
  const Vector mean = xs.colwise().mean().transpose();
  const Matrix cov = (xs.rowwise() - mean.transpose()).transpose() * (xs.rowwise() - mean.transpose()) / 99999.0;
  EXPECT_LT((cov - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff(), 0.05);
}

TEST(ForwardMarginal, OuVarianceEvolution) {
  const double s2 = 4.0, t = 0.4;
  const Samples xs = forward_marginal_sample(TargetSpec::isotropic_gaussian(1, s2), t, 200000, 7);
  const double want = std::exp(-2 * t) * s2 + (1 - std::exp(-2 * t));
  EXPECT_NEAR(column_var(xs, 0), want, 4.0 * want * std::sqrt(2.0 / 200000));
}

TEST(RunDdpm, MinimalGridIsFinite) {
  const RunResult r = run_ddpm(config(gaussian(2), 1.0, 2, 50, 1));
  EXPECT_TRUE(r.outputs.allFinite());
  EXPECT_EQ(r.provenance.K, 4);
  EXPECT_EQ(r.mean_norm.size(), 6u);
}

TEST(RunDdpm, DeterministicAcrossRunsAndThreads) {
  SamplerConfig c = config(gaussian(3), 1.0, 8, 1500, 42);
  c.threads = 1;
  const RunResult a = run_ddpm(c);
  const RunResult b = run_ddpm(c);
  c.threads = 3;
  const RunResult d = run_ddpm(c);
  EXPECT_TRUE(bitwise_equal(a.outputs, b.outputs));
  EXPECT_TRUE(bitwise_equal(a.outputs, d.outputs));
  EXPECT_EQ(a.mean_norm, d.mean_norm);
  c.seed = 43;
  EXPECT_FALSE(bitwise_equal(a.outputs, run_ddpm(c).outputs));
}

TEST(RunDdpm, QueryCountAccounting) {
  const std::size_t n = 777;
  const RunResult r = run_ddpm(config(gaussian(2), 2.0, 16, n, 3));
  EXPECT_EQ(r.total_oracle_calls, n * 33u);
  for (auto calls : r.oracle_calls) EXPECT_EQ(calls, n);
}

TEST(RunDdpm, TrajectoryStride) {
  SamplerConfig c = config(gaussian(2), 1.0, 4, 10, 9);
  c.trajectory_stride = 4;
  const RunResult r = run_ddpm(c);
  EXPECT_EQ(r.trajectory_steps, (std::vector<int>{0, 4, 8, 9}));
  EXPECT_TRUE(bitwise_equal(r.trajectory.back(), r.outputs));
}

TEST(RunDdpm, NonFiniteStateAborts) {
  std::vector<double> times(201);
  for (std::size_t k = 0; k < times.size(); ++k) times[k] = 300.0 * static_cast<double>(k);
  SamplerConfig c = config(gaussian(1), 1.0, 2, 4, 1);
  c.schedule = Schedule::from_times(times);
  try {
    run_ddpm(c);
    FAIL() << "expected a numerical abort";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("chain"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("step"), std::string::npos);
  }
}

TEST(RunDdpm, RejectsMissingOracle) {
  SamplerConfig c = config(gaussian(1), 1.0, 2, 4, 1);
  c.oracle.reset();
  EXPECT_THROW(run_ddpm(c), ValidationError);
}

TEST(SamplerProperty, StationaryStandardGaussian) {
  const std::size_t n = 40000;
  SamplerConfig c = config(gaussian(2), 2.0, 128, n, 8);
  ASSERT_LE(c.schedule.h_max, 0.05);
  const RunResult r = run_ddpm(c);
  const double D = 2.0;
  for (Eigen::Index j = 0; j < 2; ++j) {
    EXPECT_NEAR(r.outputs.col(j).mean(), 0.0, 4.0 / std::sqrt(n * D));
    EXPECT_NEAR(column_var(r.outputs, j), 1.0, 0.02);
  }
}

TEST(SamplerProperty, MatchesExactChainRecursion) {
  const std::size_t n = 40000;
  const TargetSpec target = TargetSpec::gaussian((Vector(2) << 1.0, -0.5).finished(), (Vector(2) << 2.0, 0.5).finished());
  SamplerConfig c = config(std::make_shared<const TargetSpec>(target), 1.0, 6, n, 10);
  const RunResult r = run_ddpm(c);
  const DiagonalMoments m = gaussian_chain_moments(target, c.schedule, 0.0);
  for (Eigen::Index j = 0; j < 2; ++j) {
    EXPECT_NEAR(r.outputs.col(j).mean(), m.mean[j], 4.0 * std::sqrt(m.var[j] / n));
    EXPECT_NEAR(column_var(r.outputs, j), m.var[j], 4.0 * m.var[j] * std::sqrt(2.0 / n));
  }
}

TEST(SamplerProperty, ChainsIndependent) {
  const std::size_t n = 20000;
  const RunResult r = run_ddpm(config(gaussian(1), 1.0, 8, n, 12));
  const Eigen::Index half = static_cast<Eigen::Index>(n / 2);
  Eigen::ArrayXd a(half), b(half);
  for (Eigen::Index i = 0; i < half; ++i) {
    a[i] = r.outputs(2 * i, 0);
    b[i] = r.outputs(2 * i + 1, 0);
  }
  a -= a.mean();
  b -= b.mean();
  const double rho = (a * b).sum() / std::sqrt(a.square().sum() * b.square().sum());
  EXPECT_LE(std::abs(rho), 4.0 / std::sqrt(static_cast<double>(half)));
}

TEST(DefaultProbes, OnePerQueryTime) {
  const Schedule s = config(gaussian(2), 1.0, 3, 1, 1).schedule;
  const auto probes = default_probes(TargetSpec::isotropic_gaussian(2, 1.0), s, 2, 4);
  ASSERT_EQ(probes.size(), static_cast<std::size_t>(2 * (s.K() + 1)));
  EXPECT_DOUBLE_EQ(probes.front().t, s.horizon());
  EXPECT_DOUBLE_EQ(probes.back().t, s.delta());
}
