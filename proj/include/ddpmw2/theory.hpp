// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ddpmw2/contraction.hpp"
#include "ddpmw2/error.hpp"
#include "ddpmw2/schedule.hpp"
#include "ddpmw2/targets.hpp"

namespace ddpmw2 {

// ---------------------------------------------------------------------------
// Main W2 bounds

enum class Theorem { Thm1, Thm2 };

inline std::string_view to_string(Theorem t) { return t == Theorem::Thm1 ? "thm1" : "thm2"; }

inline Theorem parse_theorem(std::string_view s) {
  if (s == "thm1") return Theorem::Thm1;
  if (s == "thm2") return Theorem::Thm2;
  throw ValidationError("unknown theorem '" + std::string(s) + "' (expected thm1 or thm2)");
}

/// Envelope constants a target satisfies. Thm1 uses (m, M, b) of the
/// strongly-log-concave composite; Thm2 uses (b, M) of the bounded composite.
struct TheoryConstants {
  Theorem theorem = Theorem::Thm1;
  double m = 1.0;
  double M = 0.0;
  double b = 0.0;
};

struct TheoryInputs {
  TheoryConstants constants;
  double T1 = 1.0;
  double h_max = 0.1;
  double eps_b = 0.0;
  double eps_v = 0.0;
  int D = 1;
  double m2bar = 1.0;  // multiplies the init and discretization terms by sqrt(m2bar)
};

struct TheoryTerms {
  double init = 0.0;
  double discr = 0.0;
  double bias = 0.0;
  double var = 0.0;
  double prefactor = 1.0;
};

struct TheoryBound {
  TheoryInputs inputs;
  double a = 1.0;
  TheoryTerms terms;
  double sum = 0.0;            // init + discr + bias + var
  double total_per_sqrt_d = 0.0;  // prefactor * sum
  double total = 0.0;          // prefactor * sum * sqrt(D)
};

/// a = max(1, 1/m + b) for Thm1 and max(b, 1) for Thm2.
inline double theorem_a(const TheoryConstants& c) {
  if (c.theorem == Theorem::Thm1) {
    require(c.m > 0.0 && std::isfinite(c.m), "thm1: m must be positive");
    return std::max(1.0, 1.0 / c.m + c.b);
  }
  return std::max(c.b, 1.0);
}

inline TheoryBound thm_bound(const TheoryInputs& in) {
  const auto& c = in.constants;
  require(c.b >= 0.0 && c.M >= 0.0 && std::isfinite(c.b) && std::isfinite(c.M), "thm_bound: b and M must be >= 0");
  require(in.eps_b >= 0.0 && in.eps_v >= 0.0, "thm_bound: eps must be non-negative");
  require(std::isfinite(in.eps_b) && std::isfinite(in.eps_v), "thm_bound: eps must be finite");
  require(in.h_max > 0.0 && std::isfinite(in.h_max), "thm_bound: h_max must be positive");
  require(in.T1 > 0.0 && std::isfinite(in.T1), "thm_bound: T1 must be positive");
  require(in.D >= 1, "thm_bound: D must be positive");
  require(in.m2bar >= 1.0, "thm_bound: m2bar must be at least 1");
  TheoryBound out;
  out.inputs = in;
  out.a = theorem_a(c);
  const double root6a = std::sqrt(6.0 * out.a);
  const double root_m2 = std::sqrt(in.m2bar);
  out.terms.init = 2.0 * std::exp(-in.T1) * root_m2;
  out.terms.discr = 7.0 * root6a * in.h_max * root_m2;
  out.terms.bias = 8.0 * root6a * in.eps_b;
  out.terms.var = 4.0 * root6a * std::sqrt(in.h_max) * in.eps_v;
  out.terms.prefactor =
      c.theorem == Theorem::Thm1 ? std::exp(4.0 / 3.0 * c.b * c.M) : std::exp(2.0 * c.b * c.M + 1.0);
  out.sum = out.terms.init + out.terms.discr + out.terms.bias + out.terms.var;
  out.total_per_sqrt_d = out.terms.prefactor * out.sum;
  out.total = out.total_per_sqrt_d * std::sqrt(static_cast<double>(in.D));
  return out;
}

/// Constants for each bundled target kind.
inline TheoryConstants theory_constants(const TargetSpec& target) {
  switch (target.kind()) {
    case TargetKind::Gaussian:
      return {Theorem::Thm1, 1.0 / target.gaussian_params().var.maxCoeff(), 0.0, 0.0};
    case TargetKind::GaussianMixture: {
      const auto& p = target.mixture_params();
      if (p.var == 0.0) {
        const double r = target.half_diameter();
        return {Theorem::Thm2, 0.0, 0.0, r * r};
      }
      double widest = 0.0;
      for (Eigen::Index i = 0; i < p.means.rows(); ++i)
        for (Eigen::Index j = i + 1; j < p.means.rows(); ++j)
          widest = std::max(widest, (p.means.row(i) - p.means.row(j)).norm());
      const double r = 0.5 * widest;
      return {Theorem::Thm1, 1.0 / p.var, 1.0 / p.var, r * r};
    }
    case TargetKind::UniformBox: {
      const double r = target.half_diameter();
      return {Theorem::Thm2, 0.0, 0.0, r * r};
    }
    case TargetKind::SubspaceEmbedded: return theory_constants(*target.subspace_params().inner);
    case TargetKind::Convolution: {
      const auto& p = target.convolution_params();
      const double r = p.inner->half_diameter();
      const double inv = 1.0 / (p.tau * p.tau);
      return {Theorem::Thm1, inv, inv, r * r};
    }
  }
  throw ValidationError("theory_constants: unsupported target");
}

// ---------------------------------------------------------------------------
// Gaussian target N(0, (1 + s2) I) run through the continuous backward
// process started from the standard Gaussian.

struct GaussianBackwardMoments {
  double sigma2 = 0.0;
  double T = 0.0;
  double var_YT = 0.0;
  double w2_per_sqrt_d = 0.0;  // W2(output law, target) / sqrt(D)
  double ratio = 0.0;          // W2(output, target) / W2(target, standard Gaussian)
};

inline GaussianBackwardMoments gaussian_backward_moments(double sigma2, double T) {
  require(std::isfinite(sigma2) && sigma2 > 0.0, "gaussian_backward_moments: sigma2 must be positive");
  require(std::isfinite(T) && T > 0.0, "gaussian_backward_moments: T must be positive");
  GaussianBackwardMoments g;
  g.sigma2 = sigma2;
  g.T = T;
  const double e2 = std::exp(-2.0 * T);
  const double denom = sigma2 * e2 + 1.0;
  // sigma2 (sigma2 + 1) / (sigma2 + e^{2T})^2 rewritten in e^{-2T}.
  const double q = sigma2 * (sigma2 + 1.0) * e2 * e2 / (denom * denom);
  const double target_var = sigma2 + 1.0;
  g.var_YT = target_var * (1.0 - q);
  const double sd_target = std::sqrt(target_var);
  g.w2_per_sqrt_d = target_var * q / (sd_target + std::sqrt(g.var_YT));
  const double gap = sigma2 / (sd_target + 1.0);  // sqrt(sigma2 + 1) - 1
  g.ratio = g.w2_per_sqrt_d / gap;
  return g;
}

struct DiagonalMoments {
  Vector mean;
  Vector var;
};

/// Exact per-coordinate mean and variance of the discrete reverse chain for a
/// diagonal Gaussian target, started from the standard Gaussian, with centered
/// additive oracle noise of per-coordinate variance noise_var.
inline DiagonalMoments gaussian_chain_moments(const TargetSpec& target, const Schedule& schedule,
                                              double noise_var = 0.0) {
  require(target.kind() == TargetKind::Gaussian, "gaussian_chain_moments: Gaussian target required");
  require(noise_var >= 0.0, "gaussian_chain_moments: noise variance must be non-negative");
  const auto& p = target.gaussian_params();
  const double T = schedule.horizon();
  DiagonalMoments m{Vector::Zero(target.dim()), Vector::Ones(target.dim())};
  for (int k = 0; k <= schedule.K(); ++k) {
    const double h = schedule.steps[static_cast<std::size_t>(k)];
    const NoiseLevel level = NoiseLevel::at_time(T - schedule.times[static_cast<std::size_t>(k)]);
    for (int j = 0; j < target.dim(); ++j) {
      const double s2t = level.alpha * level.alpha * p.var[j] + level.beta * level.beta;
      const double gain = 1.0 + h - 2.0 * h / s2t;
      m.mean[j] = gain * m.mean[j] + 2.0 * h * level.alpha * p.mean[j] / s2t;
      m.var[j] = gain * gain * m.var[j] + 2.0 * h + 4.0 * h * h * noise_var;
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Recursion unrolling: x_{k+1}^2 <= (e^{A_k} x_k + B_k)^2 + C_k^2

/// Closed-form upper bound for x_1..x_{n}.
inline std::vector<double> unroll_recursion_bound(double x0, const std::vector<double>& A,
                                                  const std::vector<double>& B, const std::vector<double>& C) {
  require(A.size() == B.size() && B.size() == C.size(), "recursion: sequence lengths differ");
  for (std::size_t k = 0; k < B.size(); ++k)
    require(B[k] >= 0.0 && C[k] >= 0.0, "recursion: B and C must be non-negative");
  std::vector<double> out(A.size());
  std::vector<double> cum(A.size());
  double acc = 0.0;
  for (std::size_t k = 0; k < A.size(); ++k) {
    acc += A[k];
    cum[k] = acc;
  }
  for (std::size_t k = 0; k < A.size(); ++k) {
    double lin = std::exp(cum[k]) * x0;
    double quad = 0.0;
    for (std::size_t j = 0; j <= k; ++j) {
      lin += std::exp(cum[k] - cum[j]) * B[j];
      quad += std::exp(2.0 * (cum[k] - cum[j])) * C[j] * C[j];
    }
    out[k] = lin + std::sqrt(quad);
  }
  return out;
}

/// The sequence meeting the recursion with equality.
inline std::vector<double> iterate_recursion(double x0, const std::vector<double>& A, const std::vector<double>& B,
                                             const std::vector<double>& C) {
  require(A.size() == B.size() && B.size() == C.size(), "recursion: sequence lengths differ");
  std::vector<double> out(A.size());
  double x = x0;
  for (std::size_t k = 0; k < A.size(); ++k) {
    const double lin = std::exp(A[k]) * x + B[k];
    x = std::sqrt(lin * lin + C[k] * C[k]);
    out[k] = x;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Per-step discretization error bounds

enum class DiscrRegime { PhiBounded, PhiQuadratic, LastStep };

inline std::string_view to_string(DiscrRegime r) {
  switch (r) {
    case DiscrRegime::PhiBounded: return "phi<=a";
    case DiscrRegime::PhiQuadratic: return "phi<=abar*sigma^2";
    case DiscrRegime::LastStep: return "last-step";
  }
  return "unknown";
}

struct DiscrRegimeSpec {
  DiscrRegime kind = DiscrRegime::PhiQuadratic;
  std::optional<double> a;      // for PhiBounded
  std::optional<double> a_bar;  // for PhiQuadratic, and always for the last step
};

struct DiscretizationErrorBound {
  int k = 0;
  double h = 0.0;
  double B_bound = 0.0;
  double V_bound = 0.0;
  DiscrRegime regime = DiscrRegime::PhiQuadratic;
};

inline std::vector<DiscretizationErrorBound> discr_error_bounds(const Schedule& schedule,
                                                                const DiscrRegimeSpec& regime, double m2bar,
                                                                int D) {
  require(m2bar >= 1.0, "discr_error_bounds: m2bar must be at least 1");
  require(D >= 1, "discr_error_bounds: D must be positive");
  require(regime.a_bar && *regime.a_bar >= 1.0, "discr_error_bounds: a_bar >= 1 is required (last step)");
  if (regime.kind == DiscrRegime::PhiBounded)
    require(regime.a && *regime.a > 0.0, "discr_error_bounds: phi<=a regime needs a > 0");
  require(regime.kind != DiscrRegime::LastStep, "discr_error_bounds: choose an interior regime");
  const double T = schedule.horizon();
  const int K = schedule.K();
  const double root_m2d = std::sqrt(m2bar * D);
  const double c43 = 4.0 * std::sqrt(2.0 * D) / 3.0;
  std::vector<DiscretizationErrorBound> out;
  out.reserve(static_cast<std::size_t>(K + 1));
  for (int k = 0; k <= K; ++k) {
    DiscretizationErrorBound e;
    e.k = k;
    e.h = schedule.steps[static_cast<std::size_t>(k)];
    e.B_bound = 0.5 * root_m2d * e.h * e.h;
    if (k == K) {
      e.regime = DiscrRegime::LastStep;
      e.V_bound = e.B_bound + 4.5 * *regime.a_bar * std::sqrt(D * e.h);
    } else {
      const double tau = T - schedule.times[static_cast<std::size_t>(k + 1)];
      require(tau > 0.0, "discr_error_bounds: beta vanishes before the last index");
      const double a2 = std::exp(-2.0 * tau);
      const double b2 = -std::expm1(-2.0 * tau);
      const double h32 = e.h * std::sqrt(e.h);
      e.regime = regime.kind;
      if (regime.kind == DiscrRegime::PhiBounded) {
        e.V_bound = e.B_bound + c43 * h32 * std::max(*regime.a * a2, b2) / (b2 * b2);
      } else {
        e.V_bound = e.B_bound + c43 * *regime.a_bar * h32 / b2;
      }
    }
    out.push_back(e);
  }
  return out;
}

}  // namespace ddpmw2
