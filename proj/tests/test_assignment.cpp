// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <limits>
#include <numeric>
#include <random>

#include "ddpmw2/assignment.hpp"

using namespace ddpmw2;

namespace {
double brute_force(const std::vector<double>& cost, int n) {
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += cost[static_cast<std::size_t>(i * n + perm[static_cast<std::size_t>(i)])];
    best = std::min(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

double total(const std::vector<double>& cost, int n, const std::vector<int>& x) {
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += cost[static_cast<std::size_t>(i * n + x[static_cast<std::size_t>(i)])];
  return s;
}

void expect_permutation(const std::vector<int>& x, int n) {
  std::vector<int> sorted = x;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < n; ++i) ASSERT_EQ(sorted[static_cast<std::size_t>(i)], i);
}
}  // namespace

TEST(Assignment, SingleElement) {
  const std::vector<double> c{4.0};
  EXPECT_EQ(solve_assignment(c.data(), 1), (std::vector<int>{0}));
}

TEST(Assignment, MatchesBruteForceOnRandomCosts) {
  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 1 + trial % 7;
    std::vector<double> c(static_cast<std::size_t>(n * n));
    for (double& v : c) v = u(gen);
    const auto x = solve_assignment(c.data(), n);
    expect_permutation(x, n);
    EXPECT_NEAR(total(c, n, x), brute_force(c, n), 1e-12);
  }
}

TEST(Assignment, TiesAndIntegerCosts) {
  std::mt19937_64 gen(2);
  std::uniform_int_distribution<int> u(0, 2);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + trial % 6;
    std::vector<double> c(static_cast<std::size_t>(n * n));
    for (double& v : c) v = u(gen);
    const auto x = solve_assignment(c.data(), n);
    expect_permutation(x, n);
    EXPECT_EQ(total(c, n, x), brute_force(c, n));
  }
  const std::vector<double> zeros(25, 0.0);
  expect_permutation(solve_assignment(zeros.data(), 5), 5);
}

TEST(Assignment, LargeInstanceIsPermutationAndBeatsGreedy) {
  std::mt19937_64 gen(3);
  std::normal_distribution<double> g;
  const int n = 300;
  std::vector<double> c(static_cast<std::size_t>(n * n));
  for (double& v : c) v = std::abs(g(gen));
  const auto x = solve_assignment(c.data(), n);
  expect_permutation(x, n);
  // Identity is one feasible assignment.
  std::vector<int> id(static_cast<std::size_t>(n));
  std::iota(id.begin(), id.end(), 0);
  EXPECT_LE(total(c, n, x), total(c, n, id));
}
