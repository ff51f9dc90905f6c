// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include "ddpmw2/assignment.hpp"
#include "ddpmw2/error.hpp"
#include "ddpmw2/parallel.hpp"
#include "ddpmw2/rng.hpp"
#include "ddpmw2/special.hpp"
#include "ddpmw2/targets.hpp"

namespace ddpmw2 {

enum class W2Method { BuresGaussianFit, ExactAssignment, Sliced };

inline std::string_view to_string(W2Method m) {
  switch (m) {
    case W2Method::BuresGaussianFit: return "bures_gaussian_fit";
    case W2Method::ExactAssignment: return "exact_assignment";
    case W2Method::Sliced: return "sliced";
  }
  return "unknown";
}

inline W2Method parse_w2_method(std::string_view name) {
  for (auto m : {W2Method::BuresGaussianFit, W2Method::ExactAssignment, W2Method::Sliced})
    if (to_string(m) == name) return m;
  throw ValidationError("unknown W2 method '" + std::string(name) + "'");
}

struct EmpiricalW2Result {
  double value = 0.0;
  W2Method method = W2Method::ExactAssignment;
  std::size_t n = 0;
  std::size_t m = 0;
  std::uint64_t permutation_digest = 0;  // exact_assignment
  std::size_t n_slices = 0;              // sliced
  std::uint64_t seed = 0;                // sliced
  Vector mean_x, var_x, mean_y, var_y;   // bures_gaussian_fit
};

inline constexpr std::size_t kDefaultAssignmentCap = 2048;

/// W2 between diagonal Gaussians.
inline double w2_gaussian(const Vector& mu1, const Vector& var1, const Vector& mu2, const Vector& var2) {
  require(mu1.size() == var1.size() && mu2.size() == var2.size() && mu1.size() == mu2.size(),
          "w2_gaussian: dimension mismatch");
  require((var1.array() >= 0.0).all() && (var2.array() >= 0.0).all(), "w2_gaussian: negative variance");
  const double spread = (var1.array().sqrt() - var2.array().sqrt()).matrix().squaredNorm();
  return std::sqrt((mu1 - mu2).squaredNorm() + spread);
}

/// Squared-distance cost matrix, row-major n x n.
inline std::vector<double> squared_distance_costs(const Samples& xs, const Samples& ys) {
  const Eigen::Index n = xs.rows();
  std::vector<double> cost(static_cast<std::size_t>(n * ys.rows()));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < ys.rows(); ++j)
      cost[static_cast<std::size_t>(i * ys.rows() + j)] = (xs.row(i) - ys.row(j)).squaredNorm();
  return cost;
}

inline std::uint64_t permutation_digest(const std::vector<int>& perm) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (int p : perm) {
    auto u = static_cast<std::uint32_t>(p);
    for (int b = 0; b < 4; ++b) {
      h ^= (u >> (8 * b)) & 0xffu;
      h *= 0x100000001b3ull;
    }
  }
  return h;
}

/// Exact optimal assignment value for a prebuilt cost matrix: sqrt(mean matched cost).
inline double assignment_w2(const std::vector<double>& cost, int n, std::vector<int>* perm_out = nullptr) {
  std::vector<int> perm = solve_assignment(cost.data(), n);
  special::CompensatedSum total;
  for (int i = 0; i < n; ++i) total += cost[static_cast<std::size_t>(i) * n + perm[static_cast<std::size_t>(i)]];
  if (perm_out) *perm_out = std::move(perm);
  return std::sqrt(std::max(0.0, total.value()) / n);
}

inline EmpiricalW2Result w2_exact_empirical(const Samples& xs, const Samples& ys,
                                            std::size_t cap = kDefaultAssignmentCap) {
  require(xs.rows() == ys.rows(), "w2_exact_empirical: sample counts differ");
  require(xs.cols() == ys.cols(), "w2_exact_empirical: dimensions differ");
  require(xs.rows() >= 1, "w2_exact_empirical: empty samples");
  require(static_cast<std::size_t>(xs.rows()) <= cap,
          "w2_exact_empirical: n = " + std::to_string(xs.rows()) + " exceeds the cap of " + std::to_string(cap) +
              "; use the sliced estimator for larger samples");
  const int n = static_cast<int>(xs.rows());
  std::vector<int> perm;
  EmpiricalW2Result r;
  r.method = W2Method::ExactAssignment;
  r.n = r.m = static_cast<std::size_t>(n);
  r.value = assignment_w2(squared_distance_costs(xs, ys), n, &perm);
  r.permutation_digest = permutation_digest(perm);
  return r;
}

/// Exact W2^2 between two 1-D empirical measures given sorted supports.
inline double w2_squared_1d_sorted(const std::vector<double>& a, const std::vector<double>& b) {
  const auto n = a.size();
  const auto m = b.size();
  special::CompensatedSum acc;
  if (n == m) {
    for (std::size_t i = 0; i < n; ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
    return acc.value() / static_cast<double>(n);
  }
  // Merge the quantile breakpoints i/n and j/m; mass is matched in integer units of 1/(n m).
  std::size_t i = 0, j = 0;
  std::uint64_t left_a = m;  // remaining mass of a[i] in units of 1/(n m)
  std::uint64_t left_b = n;
  while (i < n && j < m) {
    const std::uint64_t take = std::min(left_a, left_b);
    const double diff = a[i] - b[j];
    acc += static_cast<double>(take) * diff * diff;
    left_a -= take;
    left_b -= take;
    if (left_a == 0) {
      ++i;
      left_a = m;
    }
    if (left_b == 0) {
      ++j;
      left_b = n;
    }
  }
  return acc.value() / (static_cast<double>(n) * static_cast<double>(m));
}

inline EmpiricalW2Result w2_sliced(const Samples& xs, const Samples& ys, std::size_t n_slices, std::uint64_t seed,
                                   unsigned threads = 1) {
  require(n_slices >= 1, "w2_sliced: need at least one slice");
  require(xs.cols() == ys.cols(), "w2_sliced: dimensions differ");
  require(xs.rows() >= 1 && ys.rows() >= 1, "w2_sliced: empty samples");
  const Eigen::Index dim = xs.cols();
  std::vector<double> per_slice(n_slices);
  parallel_chunks(n_slices, threads, [&](std::size_t s) {
    Vector dir(dim);
    if (dim == 1) {
      dir[0] = 1.0;
    } else {
      CounterRng rng(StreamId{seed, s, substreams::kSlices});
      do {
        for (Eigen::Index j = 0; j < dim; ++j) dir[j] = rng.normal();
      } while (dir.norm() == 0.0);
      dir.normalize();
    }
    std::vector<double> a(static_cast<std::size_t>(xs.rows())), b(static_cast<std::size_t>(ys.rows()));
    for (Eigen::Index i = 0; i < xs.rows(); ++i) a[static_cast<std::size_t>(i)] = xs.row(i).dot(dir);
    for (Eigen::Index i = 0; i < ys.rows(); ++i) b[static_cast<std::size_t>(i)] = ys.row(i).dot(dir);
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    per_slice[s] = w2_squared_1d_sorted(a, b);
  });
  special::CompensatedSum total;
  for (double v : per_slice) total += v;
  EmpiricalW2Result r;
  r.method = W2Method::Sliced;
  r.n = static_cast<std::size_t>(xs.rows());
  r.m = static_cast<std::size_t>(ys.rows());
  r.n_slices = n_slices;
  r.seed = seed;
  r.value = std::sqrt(total.value() / static_cast<double>(n_slices));
  return r;
}

inline void fit_diagonal_gaussian(const Samples& xs, Vector& mean, Vector& var) {
  require(xs.rows() >= 2, "gaussian fit: need at least two samples");
  mean = xs.colwise().mean().transpose();
  var = (xs.rowwise() - mean.transpose()).colwise().squaredNorm().transpose() / static_cast<double>(xs.rows() - 1);
}

inline EmpiricalW2Result w2_bures_fit(const Samples& xs, const Samples& ys) {
  require(xs.cols() == ys.cols(), "w2_bures_fit: dimensions differ");
  EmpiricalW2Result r;
  r.method = W2Method::BuresGaussianFit;
  r.n = static_cast<std::size_t>(xs.rows());
  r.m = static_cast<std::size_t>(ys.rows());
  fit_diagonal_gaussian(xs, r.mean_x, r.var_x);
  fit_diagonal_gaussian(ys, r.mean_y, r.var_y);
  r.value = w2_gaussian(r.mean_x, r.var_x, r.mean_y, r.var_y);
  return r;
}

/// W2 of a sample against a diagonal Gaussian given by its exact moments.
inline EmpiricalW2Result w2_bures_fit(const Samples& xs, const Vector& mean, const Vector& var) {
  require(xs.cols() == mean.size(), "w2_bures_fit: dimensions differ");
  EmpiricalW2Result r;
  r.method = W2Method::BuresGaussianFit;
  r.n = static_cast<std::size_t>(xs.rows());
  fit_diagonal_gaussian(xs, r.mean_x, r.var_x);
  r.mean_y = mean;
  r.var_y = var;
  r.value = w2_gaussian(r.mean_x, r.var_x, mean, var);
  return r;
}

struct W2Options {
  W2Method method = W2Method::ExactAssignment;
  std::size_t n_slices = 256;
  std::uint64_t seed = 0;
  std::size_t cap = kDefaultAssignmentCap;
  unsigned threads = 1;
};

inline EmpiricalW2Result w2_empirical(const Samples& xs, const Samples& ys, const W2Options& opt) {
  switch (opt.method) {
    case W2Method::ExactAssignment: return w2_exact_empirical(xs, ys, opt.cap);
    case W2Method::Sliced: return w2_sliced(xs, ys, opt.n_slices, opt.seed, opt.threads);
    case W2Method::BuresGaussianFit: return w2_bures_fit(xs, ys);
  }
  throw ValidationError("w2_empirical: unknown method");
}

struct BootstrapInterval {
  double lower = 0.0;
  double upper = 0.0;
  std::size_t resamples = 0;
  double level = 0.95;
};

/// Percentile interval from resampling the rows of xs with replacement.
/// For exact assignment the cost matrix is built once and row-gathered.
inline BootstrapInterval bootstrap_w2(const Samples& xs, const Samples& ys, const W2Options& opt,
                                      std::size_t resamples, std::uint64_t seed, double level = 0.95) {
  require(resamples >= 2, "bootstrap: need at least two resamples");
  require(level > 0.0 && level < 1.0, "bootstrap: level must lie in (0, 1)");
  const auto n = static_cast<std::size_t>(xs.rows());
  std::vector<double> values(resamples);
  std::vector<double> base_cost;
  if (opt.method == W2Method::ExactAssignment) {
    require(xs.rows() == ys.rows() && n <= opt.cap, "bootstrap: exact assignment needs equal counts under the cap");
    base_cost = squared_distance_costs(xs, ys);
  }
  parallel_chunks(resamples, opt.threads, [&](std::size_t b) {
    CounterRng rng(StreamId{seed, b, substreams::kBootstrap});
    std::vector<std::size_t> pick(n);
    for (auto& p : pick) p = static_cast<std::size_t>(rng.uniform_index(n));
    if (opt.method == W2Method::ExactAssignment) {
      std::vector<double> cost(n * n);
      for (std::size_t i = 0; i < n; ++i)
        std::copy_n(base_cost.begin() + static_cast<std::ptrdiff_t>(pick[i] * n), n,
                    cost.begin() + static_cast<std::ptrdiff_t>(i * n));
      values[b] = assignment_w2(cost, static_cast<int>(n));
    } else {
      Samples sub(static_cast<Eigen::Index>(n), xs.cols());
      for (std::size_t i = 0; i < n; ++i)
        sub.row(static_cast<Eigen::Index>(i)) = xs.row(static_cast<Eigen::Index>(pick[i]));
      W2Options inner = opt;
      inner.threads = 1;
      values[b] = w2_empirical(sub, ys, inner).value;
    }
  });
  std::sort(values.begin(), values.end());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(resamples - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, resamples - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
  };
  return {quantile(0.5 * (1.0 - level)), quantile(0.5 * (1.0 + level)), resamples, level};
}

// ---------------------------------------------------------------------------
// Mixture P_n = (1 - d) Exp(1) + d Unif[n, n + 2], d = n^(-1/2): close to
// Exp(1) in TV and KL, yet its moments diverge.

struct TvKlReport {
  double n = 0.0;
  double delta = 0.0;
  double tv_bound = 0.0;
  double kl_bound = 0.0;
  double mean_Pn = 0.0;
  double second_moment_Pn = 0.0;        // exact
  double second_moment_lower = 0.0;     // 2(1 - d) + d n^2
};

inline TvKlReport tvkl_counterexample(double n) {
  require(std::isfinite(n) && n >= 2.0, "tvkl_counterexample: n must be at least 2");
  TvKlReport r;
  r.n = n;
  r.delta = 1.0 / std::sqrt(n);
  r.tv_bound = r.delta;
  r.kl_bound = -std::log1p(-r.delta);
  r.mean_Pn = 1.0 + std::sqrt(n);
  r.second_moment_Pn = 2.0 * (1.0 - r.delta) + r.delta * (n * n + 2.0 * n + 4.0 / 3.0);
  r.second_moment_lower = 2.0 * (1.0 - r.delta) + r.delta * n * n;
  return r;
}

inline std::vector<double> sample_counterexample(double n, std::size_t count, std::uint64_t seed) {
  const double delta = tvkl_counterexample(n).delta;
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    CounterRng rng(StreamId{seed, i, substreams::kMisc});
    if (rng.uniform() < delta) {
      out[i] = n + 2.0 * rng.uniform();
    } else {
      out[i] = -std::log(rng.uniform_open());
    }
  }
  return out;
}

}  // namespace ddpmw2
