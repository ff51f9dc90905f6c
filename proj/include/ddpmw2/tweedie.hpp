// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>

#include "ddpmw2/error.hpp"
#include "ddpmw2/targets.hpp"

namespace ddpmw2 {

enum class TweedieVerdict { Pass, Fail, Inconclusive };

inline std::string_view to_string(TweedieVerdict v) {
  switch (v) {
    case TweedieVerdict::Pass: return "pass";
    case TweedieVerdict::Fail: return "fail";
    case TweedieVerdict::Inconclusive: return "inconclusive";
  }
  return "unknown";
}

enum class HessianMethod { FiniteDifference, Analytic };

struct TweedieReport {
  Matrix lhs;  // Hessian of log density of Y = alpha X + beta xi
  Matrix rhs;  // (alpha^2 / beta^4) Var(X | Y = y) - I / beta^2
  double max_abs_diff = 0.0;
  double fd_step = 0.0;
  TweedieVerdict verdict = TweedieVerdict::Inconclusive;
  bool pass() const { return verdict == TweedieVerdict::Pass; }
};

/// Central-difference step used for the Hessian of the smoothed log density.
inline double tweedie_fd_step(const Vector& y) { return std::max(1e-4, 1e-4 * y.cwiseAbs().maxCoeff()); }

/// Hessian of log pi_Y by central differences of the exact score, symmetrized.
inline Matrix smoothed_log_hessian_fd(const TargetSpec& target, double alpha, double beta, const Vector& y,
                                      double step) {
  const int dim = target.dim();
  Matrix hess(dim, dim);
  Vector plus(dim), minus(dim), sp(dim), sm(dim);
  for (int j = 0; j < dim; ++j) {
    plus = y;
    minus = y;
    plus[j] += step;
    minus[j] -= step;
    smoothed_score(target, alpha, beta, view(plus), view(sp));
    smoothed_score(target, alpha, beta, view(minus), view(sm));
    hess.col(j) = (sp - sm) / (2.0 * step);
  }
  return 0.5 * (hess + hess.transpose());
}

/// Exact Hessian for Gaussian targets: diag(-1 / (alpha^2 s^2 + beta^2)).
inline Matrix smoothed_log_hessian_gaussian(const TargetSpec& target, double alpha, double beta) {
  require(target.kind() == TargetKind::Gaussian, "analytic Hessian is only available for Gaussian targets");
  const auto& p = target.gaussian_params();
  return (-1.0 / (alpha * alpha * p.var.array() + beta * beta)).matrix().asDiagonal();
}

inline TweedieReport verify_tweedie_hessian(const TargetSpec& target, double alpha, double beta, const Vector& y,
                                            double tol, HessianMethod method = HessianMethod::FiniteDifference) {
  require(std::isfinite(alpha) && alpha > 0.0 && std::isfinite(beta) && beta > 0.0,
          "verify_tweedie_hessian: alpha and beta must be positive");
  require(y.size() == target.dim() && y.allFinite(), "verify_tweedie_hessian: bad evaluation point");
  require(tol > 0.0, "verify_tweedie_hessian: tolerance must be positive");
  require(has_closed_form_conditional_variance(target),
          "verify_tweedie_hessian: target needs a closed-form conditional variance");

  const int dim = target.dim();
  TweedieReport report;
  const Vector y_over_alpha = y / alpha;
  const Matrix post = closed_form_conditional_variance(target, beta / alpha, y_over_alpha);
  const double b2 = beta * beta;
  report.rhs = (alpha * alpha / (b2 * b2)) * post - Matrix::Identity(dim, dim) / b2;

  if (method == HessianMethod::Analytic) {
    report.lhs = smoothed_log_hessian_gaussian(target, alpha, beta);
  } else {
    report.fd_step = tweedie_fd_step(y);
    if (report.fd_step > 1e-2 * beta) {
      report.lhs = Matrix::Constant(dim, dim, std::numeric_limits<double>::quiet_NaN());
      report.max_abs_diff = std::numeric_limits<double>::quiet_NaN();
      report.verdict = TweedieVerdict::Inconclusive;
      return report;
    }
    report.lhs = smoothed_log_hessian_fd(target, alpha, beta, y, report.fd_step);
  }
  report.max_abs_diff = (report.lhs - report.rhs).cwiseAbs().maxCoeff();
  report.verdict = report.max_abs_diff <= tol ? TweedieVerdict::Pass : TweedieVerdict::Fail;
  return report;
}

}  // namespace ddpmw2
