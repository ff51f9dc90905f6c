// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ddpmw2/contraction.hpp"
#include "ddpmw2/error.hpp"
#include "ddpmw2/phi.hpp"

namespace ddpmw2 {

struct ScheduleParams {
  double T1 = 1.0;
  double a = 1.0;
  int K0 = 2;
  std::optional<double> delta;  // defaults to 0.5 exp(-2 T1)

  static double default_delta(double T1) { return 0.5 * std::exp(-2.0 * T1); }
  double delta_value() const { return delta.value_or(default_delta(T1)); }
  double log6a() const { return std::log(6.0 * a); }

  /// Smallest K0 meeting 7 T1 log(6a) + 4 log(6a) loglog(6a).
  double k0_lower_bound() const {
    const double L = log6a();
    return 7.0 * T1 * L + 4.0 * L * std::log(L);
  }

  /// log(6a) (loglog(6a) + 2 T1) / K0.
  double h_max_bound() const {
    const double L = log6a();
    return L * (std::log(L) + 2.0 * T1) / K0;
  }

  void validate() const {
    require(std::isfinite(T1) && T1 > 0.0, "schedule: T1 must be positive");
    require(std::isfinite(a) && a >= 1.0, "schedule: a must be at least 1");
    require(K0 > 1, "schedule: K0 must exceed 1");
    require(K0 <= 10'000'000, "schedule: K0 above 1e7 is not supported");
    const double d = delta_value();
    require(std::isfinite(d) && d > 0.0, "schedule: delta must be positive");
    require(2.0 * d < log6a(), "schedule: 2*delta must be below log(6a) (geometric ratio must be < 1)");
  }
};

enum class StepPhase { Arithmetic, Geometric, Final };

inline std::string_view to_string(StepPhase p) {
  switch (p) {
    case StepPhase::Arithmetic: return "arithmetic";
    case StepPhase::Geometric: return "geometric";
    case StepPhase::Final: return "final";
  }
  return "unknown";
}

/// Time grid t_0 = 0 < ... < t_{K+1} = T. Reverse-time query k uses T - t_k.
struct Schedule {
  std::vector<double> times;
  std::vector<double> steps;  // steps[k] = times[k+1] - times[k], k = 0..K
  double h_max = 0.0;
  int K0 = 0;  // 0 for explicit grids
  std::optional<ScheduleParams> params;
  double geometric_c = 0.0;  // 1 - (2 delta / log 6a)^(1/K0)

  int K() const { return static_cast<int>(times.size()) - 2; }
  double horizon() const { return times.back(); }
  double delta() const { return steps.back(); }

  StepPhase phase(int k) const {
    if (k == K()) return StepPhase::Final;
    if (K0 > 0 && k >= K0) return StepPhase::Geometric;
    return StepPhase::Arithmetic;
  }

  bool theorem_compliant() const {
    if (!params) return false;
    const double d = params->delta_value();
    const double d0 = ScheduleParams::default_delta(params->T1);
    return params->K0 >= params->k0_lower_bound() && std::abs(d - d0) <= 1e-15 * d0;
  }

  /// FNV-1a over the IEEE bits of the times.
  std::uint64_t hash() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (double t : times) {
      auto bits = std::bit_cast<std::uint64_t>(t);
      for (int i = 0; i < 8; ++i) {
        h ^= (bits >> (8 * i)) & 0xffu;
        h *= 0x100000001b3ull;
      }
    }
    return h;
  }

  static Schedule from_times(std::vector<double> times) {
    require(times.size() >= 3, "schedule: need at least three grid times");
    require(times.front() == 0.0, "schedule: grid must start at 0");
    Schedule s;
    s.steps.resize(times.size() - 1);
    for (std::size_t k = 0; k + 1 < times.size(); ++k) {
      require(std::isfinite(times[k + 1]) && times[k + 1] > times[k], "schedule: times must be strictly increasing");
      s.steps[k] = times[k + 1] - times[k];
    }
    s.h_max = *std::max_element(s.steps.begin(), s.steps.end());
    s.times = std::move(times);
    return s;
  }
};

/// Two-phase grid: K0 equal steps up to T1, then K0 geometrically shrinking
/// steps ending delta before T = T1 + log(6a)/2, then the last step of size delta.
inline Schedule build_schedule(const ScheduleParams& params) {
  params.validate();
  const int K0 = params.K0;
  const double L = params.log6a();
  const double d = params.delta_value();
  const double log_ratio = std::log(2.0 * d / L);
  std::vector<double> times(static_cast<std::size_t>(2 * K0 + 2));
  for (int k = 0; k <= K0; ++k) times[static_cast<std::size_t>(k)] = params.T1 * k / K0;
  for (int k = 1; k <= K0; ++k)
    times[static_cast<std::size_t>(K0 + k)] = params.T1 + 0.5 * L * -std::expm1(log_ratio * k / K0);
  times.back() = params.T1 + 0.5 * L;
  times[static_cast<std::size_t>(2 * K0)] = params.T1 + (0.5 * L - d);
  Schedule s = Schedule::from_times(std::move(times));
  // The final step of size delta enters the error through its own term, so
  // h_max covers the arithmetic and geometric steps only.
  s.h_max = *std::max_element(s.steps.begin(), s.steps.end() - 1);
  s.K0 = K0;
  s.params = params;
  s.geometric_c = -std::expm1(log_ratio / K0);
  return s;
}

struct ContractionStep {
  int k = 0;
  double alpha = 0.0;  // exp(-(T - t_k))
  double h = 0.0;
  StepPhase phase = StepPhase::Arithmetic;
  ContractionCoefficient coeff;
  bool alpha2_within = false;       // alpha^2 <= 1/(6a)
  bool m_at_least_third = false;    // m_k >= 1/3
};

/// Per-step contraction diagnostics for k = 0..K (the final grid point is excluded).
inline std::vector<ContractionStep> check_contraction_regime(const Schedule& schedule, const PhiFunction& phi) {
  const double T = schedule.horizon();
  const double a = schedule.params ? schedule.params->a : 1.0;
  std::vector<ContractionStep> out;
  out.reserve(schedule.steps.size());
  for (int k = 0; k <= schedule.K(); ++k) {
    ContractionStep step;
    step.k = k;
    step.alpha = std::exp(-(T - schedule.times[static_cast<std::size_t>(k)]));
    step.h = schedule.steps[static_cast<std::size_t>(k)];
    step.phase = schedule.phase(k);
    step.coeff = contraction_coeff(phi, step.alpha, step.h);
    step.alpha2_within = step.alpha * step.alpha <= 1.0 / (6.0 * a) * (1.0 + 1e-12);
    step.m_at_least_third = step.coeff.m_k >= 1.0 / 3.0;
    out.push_back(step);
  }
  return out;
}

}  // namespace ddpmw2
