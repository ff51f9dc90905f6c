// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "ddpmw2/error.hpp"
#include "ddpmw2/targets.hpp"

namespace ddpmw2 {

/// Families of posterior-covariance envelopes Var(X | X + sigma*xi = y) <= phi(sigma) I.
enum class PhiClass {
  BoundedSupport,          // (a)  R^2
  StronglyLogConcave,      // (b)  s^2 / (1 + m s^2)
  SemiLogConcaveBounded,   // (c)  R^2 ^ s^2 / (1 - M s^2)_+
  GaussianConvolution,     // (f)  tau^2 s^2/(tau^2+s^2) + s^4 phi0(sqrt(tau^2+s^2))/(tau^2+s^2)^2
  SlcPlusBounded,          // (g)  s^2/(1 + m s^2) + (M R s^2)^2 / (1 + M s^2)^2
  SlcComposite,            // s^2/(1 + m s^2) + b M^2 s^4 / (1 + M s^2)^2
  BoundedSemiLogConcave,   // b ^ s^2 / (1 - M s^2)_+
};

inline std::string_view to_string(PhiClass cls) {
  switch (cls) {
    case PhiClass::BoundedSupport: return "bounded_support";
    case PhiClass::StronglyLogConcave: return "strongly_log_concave";
    case PhiClass::SemiLogConcaveBounded: return "semi_log_concave_bounded";
    case PhiClass::GaussianConvolution: return "gaussian_convolution";
    case PhiClass::SlcPlusBounded: return "slc_plus_bounded";
    case PhiClass::SlcComposite: return "slc_composite";
    case PhiClass::BoundedSemiLogConcave: return "bounded_semi_log_concave";
  }
  return "unknown";
}

struct PhiFunction {
  PhiClass cls = PhiClass::BoundedSupport;
  std::optional<double> radius;  // half-diameter of the support
  std::optional<double> m;
  std::optional<double> M;
  std::optional<double> b;
  std::optional<double> tau;
  std::shared_ptr<const PhiFunction> inner;  // phi0 for GaussianConvolution

  static PhiFunction bounded_support(double radius) {
    require(radius > 0.0, "phi (a): radius must be positive");
    PhiFunction f;
    f.cls = PhiClass::BoundedSupport;
    f.radius = radius;
    return f;
  }
  static PhiFunction strongly_log_concave(double m) {
    require(m > 0.0, "phi (b): m must be positive");
    PhiFunction f;
    f.cls = PhiClass::StronglyLogConcave;
    f.m = m;
    return f;
  }
  static PhiFunction semi_log_concave_bounded(double radius, double M) {
    require(radius > 0.0 && M >= 0.0, "phi (c): need radius > 0 and M >= 0");
    PhiFunction f;
    f.cls = PhiClass::SemiLogConcaveBounded;
    f.radius = radius;
    f.M = M;
    return f;
  }
  static PhiFunction gaussian_convolution(double tau, PhiFunction inner) {
    require(tau > 0.0, "phi (f): tau must be positive");
    PhiFunction f;
    f.cls = PhiClass::GaussianConvolution;
    f.tau = tau;
    f.inner = std::make_shared<const PhiFunction>(std::move(inner));
    return f;
  }
  static PhiFunction slc_plus_bounded(double m, double M, double radius) {
    require(m > 0.0 && M >= m && radius >= 0.0, "phi (g): need M >= m > 0 and radius >= 0");
    PhiFunction f;
    f.cls = PhiClass::SlcPlusBounded;
    f.radius = radius;
    f.m = m;
    f.M = M;
    return f;
  }
  static PhiFunction slc_composite(double m, double M, double b) {
    require(m > 0.0 && M >= 0.0 && b >= 0.0, "phi composite: need m > 0 and M, b >= 0");
    PhiFunction f;
    f.cls = PhiClass::SlcComposite;
    f.m = m;
    f.M = M;
    f.b = b;
    return f;
  }
  static PhiFunction bounded_semi_log_concave(double b, double M) {
    require(b > 0.0 && M >= 0.0, "phi composite: need b > 0 and M >= 0");
    PhiFunction f;
    f.cls = PhiClass::BoundedSemiLogConcave;
    f.M = M;
    f.b = b;
    return f;
  }
};

namespace detail {
inline double need(const std::optional<double>& v, const char* name, PhiClass cls) {
  if (!v) throw ValidationError("phi " + std::string(to_string(cls)) + ": missing constant " + name);
  return *v;
}

/// s^2 / (1 - M s^2)_+ with the +inf convention once M s^2 >= 1.
inline double inflated_branch(double s2, double M) {
  const double denom = 1.0 - M * s2;
  return denom > 0.0 ? s2 / denom : std::numeric_limits<double>::infinity();
}
}  // namespace detail

inline double phi_eval(const PhiFunction& phi, double sigma) {
  require(std::isfinite(sigma) && sigma > 0.0, "phi_eval: sigma must be positive");
  const double s2 = sigma * sigma;
  switch (phi.cls) {
    case PhiClass::BoundedSupport: {
      const double r = detail::need(phi.radius, "radius", phi.cls);
      return r * r;
    }
    case PhiClass::StronglyLogConcave: {
      const double m = detail::need(phi.m, "m", phi.cls);
      return s2 / (1.0 + m * s2);
    }
    case PhiClass::SemiLogConcaveBounded: {
      const double r = detail::need(phi.radius, "radius", phi.cls);
      return std::min(r * r, detail::inflated_branch(s2, detail::need(phi.M, "M", phi.cls)));
    }
    case PhiClass::GaussianConvolution: {
      const double tau = detail::need(phi.tau, "tau", phi.cls);
      if (!phi.inner) throw ValidationError("phi gaussian_convolution: missing inner phi");
      const double t2 = tau * tau;
      const double total = t2 + s2;
      return t2 * s2 / total + s2 * s2 * phi_eval(*phi.inner, std::sqrt(total)) / (total * total);
    }
    case PhiClass::SlcPlusBounded: {
      const double m = detail::need(phi.m, "m", phi.cls);
      const double M = detail::need(phi.M, "M", phi.cls);
      const double r = detail::need(phi.radius, "radius", phi.cls);
      const double lift = M * r * s2 / (1.0 + M * s2);
      return s2 / (1.0 + m * s2) + lift * lift;
    }
    case PhiClass::SlcComposite: {
      const double m = detail::need(phi.m, "m", phi.cls);
      const double M = detail::need(phi.M, "M", phi.cls);
      const double b = detail::need(phi.b, "b", phi.cls);
      const double q = 1.0 + M * s2;
      return s2 / (1.0 + m * s2) + b * M * M * s2 * s2 / (q * q);
    }
    case PhiClass::BoundedSemiLogConcave: {
      const double b = detail::need(phi.b, "b", phi.cls);
      return std::min(b, detail::inflated_branch(s2, detail::need(phi.M, "M", phi.cls)));
    }
  }
  return 0.0;
}

/// The envelope each bundled target kind is known to satisfy.
inline PhiFunction default_phi(const TargetSpec& target) {
  switch (target.kind()) {
    case TargetKind::Gaussian:
      return PhiFunction::strongly_log_concave(1.0 / target.gaussian_params().var.maxCoeff());
    case TargetKind::GaussianMixture: {
      const auto& p = target.mixture_params();
      double widest = 0.0;
      for (Eigen::Index i = 0; i < p.means.rows(); ++i)
        for (Eigen::Index j = i + 1; j < p.means.rows(); ++j)
          widest = std::max(widest, (p.means.row(i) - p.means.row(j)).norm());
      require(widest > 0.0, "default_phi: mixture with a single distinct mean; use a Gaussian target");
      const PhiFunction atoms = PhiFunction::bounded_support(0.5 * widest);
      if (p.var == 0.0) return atoms;
      return PhiFunction::gaussian_convolution(std::sqrt(p.var), atoms);
    }
    case TargetKind::UniformBox: return PhiFunction::bounded_support(target.half_diameter());
    case TargetKind::SubspaceEmbedded: return default_phi(*target.subspace_params().inner);
    case TargetKind::Convolution: {
      const auto& p = target.convolution_params();
      return PhiFunction::gaussian_convolution(p.tau, default_phi(*p.inner));
    }
  }
  throw ValidationError("default_phi: unsupported target");
}

}  // namespace ddpmw2
