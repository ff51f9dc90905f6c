// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>

#include "ddpmw2/error.hpp"
#include "ddpmw2/phi.hpp"

namespace ddpmw2 {

struct ContractionCoefficient {
  double m_k = 0.0;
  bool step_condition_ok = false;  // h ((1 + alpha^2)/(1 - alpha^2) + m_k) <= 2
  double one_step_factor = 1.0;    // 1 - m_k h
};

/// One-step contraction of the coupled reverse iteration, given the value
/// phi(beta/alpha) of the posterior-covariance envelope.
inline ContractionCoefficient contraction_coeff_from_value(double phi_value, double alpha, double h) {
  require(std::isfinite(alpha) && alpha > 0.0 && alpha < 1.0, "contraction_coeff: alpha must lie in (0, 1)");
  require(std::isfinite(h) && h >= 0.0, "contraction_coeff: step must be non-negative");
  require(phi_value >= 0.0, "contraction_coeff: phi value must be non-negative");
  const double a2 = alpha * alpha;
  const double b2 = -std::expm1(2.0 * std::log(alpha));  // 1 - alpha^2 without cancellation
  ContractionCoefficient out;
  out.m_k = 1.0 + (2.0 * a2 / b2) * (1.0 - phi_value / b2);
  out.step_condition_ok = h * ((1.0 + a2) / b2 + out.m_k) <= 2.0;
  out.one_step_factor = 1.0 - out.m_k * h;
  return out;
}

inline ContractionCoefficient contraction_coeff(const PhiFunction& phi, double alpha, double h) {
  require(std::isfinite(alpha) && alpha > 0.0 && alpha < 1.0, "contraction_coeff: alpha must lie in (0, 1)");
  const double beta = std::sqrt(-std::expm1(2.0 * std::log(alpha)));
  return contraction_coeff_from_value(phi_eval(phi, beta / alpha), alpha, h);
}

}  // namespace ddpmw2
