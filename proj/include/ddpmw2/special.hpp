// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>

namespace ddpmw2::special {

inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;  // log(sqrt(2*pi))

inline double log_normal_pdf(double x) { return -0.5 * x * x - kLogSqrt2Pi; }

inline double normal_pdf(double x) { return std::exp(log_normal_pdf(x)); }

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// Mills ratio Q(x)/pdf(x) for x >= 0 by backward evaluation of the
/// continued fraction 1/(x + 1/(x + 2/(x + 3/(x + ...)))).
inline double mills_ratio(double x) {
  double tail = x;
  for (int k = 60; k >= 1; --k) tail = x + k / tail;
  return 1.0 / tail;
}

/// log Q(x) = log P(N(0,1) > x), accurate far into both tails.
inline double log_normal_sf(double x) {
  if (x >= 8.0) return log_normal_pdf(x) + std::log(mills_ratio(x));
  if (x > -8.0) return std::log(0.5 * std::erfc(x / std::numbers::sqrt2));
  return std::log1p(-0.5 * std::erfc(-x / std::numbers::sqrt2));
}

/// log(Phi(hi) - Phi(lo)) for hi > lo without cancellation or underflow.
inline double log_normal_interval(double hi, double lo) {
  const double width = hi - lo;
  if (width < 0.05) {
    // Five-point Gauss-Legendre on a short interval, assembled in log space.
    static constexpr std::array<double, 5> nodes = {0.0, 0.53846931010568309104, -0.53846931010568309104,
                                                    0.90617984593866399280, -0.90617984593866399280};
    static constexpr std::array<double, 5> weights = {0.56888888888888888889, 0.47862867049936646804,
                                                      0.47862867049936646804, 0.23692688505618908751,
                                                      0.23692688505618908751};
    const double mid = 0.5 * (hi + lo);
    const double half = 0.5 * width;
    double ref = log_normal_pdf(mid);
    double acc = 0.0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const double x = mid + half * nodes[i];
      acc += weights[i] * std::exp(log_normal_pdf(x) - ref);
    }
    return ref + std::log(half * acc);
  }
  if (lo >= 0.0) {
    const double upper = log_normal_sf(lo);
    return upper + std::log1p(-std::exp(log_normal_sf(hi) - upper));
  }
  if (hi <= 0.0) {
    const double upper = log_normal_sf(-hi);
    return upper + std::log1p(-std::exp(log_normal_sf(-lo) - upper));
  }
  return std::log(0.5 * (std::erf(hi / std::numbers::sqrt2) - std::erf(lo / std::numbers::sqrt2)));
}

/// (pdf(hi) - pdf(lo)) / (Phi(hi) - Phi(lo)) given the log-denominator.
inline double normal_interval_pdf_ratio(double hi, double lo, double log_mass) {
  const double shift = (hi - lo) * (hi + lo) * 0.5;
  if (std::abs(hi) >= std::abs(lo)) return std::exp(log_normal_pdf(lo) - log_mass) * std::expm1(-shift);
  return -std::exp(log_normal_pdf(hi) - log_mass) * std::expm1(shift);
}

inline double log_sum_exp(std::span<const double> values) {
  if (values.empty()) return -std::numeric_limits<double>::infinity();
  const double top = *std::max_element(values.begin(), values.end());
  if (!std::isfinite(top)) return top;
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - top);
  return top + std::log(acc);
}

/// Kahan-Babuska (Neumaier) compensated accumulator.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  CompensatedSum& operator+=(double x) {
    add(x);
    return *this;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

}  // namespace ddpmw2::special
