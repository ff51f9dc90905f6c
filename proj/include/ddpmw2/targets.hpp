// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "ddpmw2/error.hpp"
#include "ddpmw2/rng.hpp"
#include "ddpmw2/special.hpp"

namespace ddpmw2 {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
/// n x D sample matrix, one draw per row (row-major so rows are contiguous).
using Samples = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline std::span<const double> view(const Vector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }
inline std::span<double> view(Vector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

enum class TargetKind { Gaussian, GaussianMixture, UniformBox, SubspaceEmbedded, Convolution };

inline std::string_view to_string(TargetKind kind) {
  switch (kind) {
    case TargetKind::Gaussian: return "gaussian";
    case TargetKind::GaussianMixture: return "gaussian_mixture";
    case TargetKind::UniformBox: return "uniform_box";
    case TargetKind::SubspaceEmbedded: return "subspace_embedded";
    case TargetKind::Convolution: return "convolution";
  }
  return "unknown";
}

inline TargetKind parse_target_kind(std::string_view name) {
  for (auto kind : {TargetKind::Gaussian, TargetKind::GaussianMixture, TargetKind::UniformBox,
                    TargetKind::SubspaceEmbedded, TargetKind::Convolution}) {
    if (to_string(kind) == name) return kind;
  }
  throw ValidationError("unknown target kind '" + std::string(name) + "'");
}

class TargetSpec;
using TargetPtr = std::shared_ptr<const TargetSpec>;

struct GaussianParams {
  Vector mean;
  Vector var;  // diagonal covariance
};

struct MixtureParams {
  Vector weights;
  Matrix means;  // one component mean per row
  double var = 1.0;  // shared isotropic variance; 0 gives point masses
};

struct BoxParams {
  Vector half_width;
};

struct SubspaceParams {
  TargetPtr inner;
  Matrix basis;  // D x d, orthonormal columns
  Vector offset;
};

struct ConvolutionParams {
  TargetPtr inner;  // compactly supported
  double tau = 1.0;
};

/// Immutable analytic target distribution with closed-form smoothed score.
class TargetSpec {
 public:
  using Params = std::variant<GaussianParams, MixtureParams, BoxParams, SubspaceParams, ConvolutionParams>;

  static TargetSpec gaussian(Vector mean, Vector var) {
    require(mean.size() > 0, "gaussian: dimension must be positive");
    require(mean.size() == var.size(), "gaussian: mean and var sizes differ");
    require(mean.allFinite() && var.allFinite(), "gaussian: non-finite parameter");
    require((var.array() > 0.0).all(), "gaussian: variances must be positive");
    const int dim = static_cast<int>(mean.size());
    return TargetSpec(TargetKind::Gaussian, dim, GaussianParams{std::move(mean), std::move(var)});
  }

  static TargetSpec isotropic_gaussian(int dim, double var, double mean = 0.0) {
    require(dim > 0, "gaussian: dimension must be positive");
    return gaussian(Vector::Constant(dim, mean), Vector::Constant(dim, var));
  }

  static TargetSpec mixture(Vector weights, Matrix means, double var) {
    require(weights.size() > 0, "gaussian_mixture: need at least one component");
    require(means.rows() == weights.size(), "gaussian_mixture: one mean row per weight");
    require(means.cols() > 0, "gaussian_mixture: dimension must be positive");
    require(weights.allFinite() && means.allFinite() && std::isfinite(var),
            "gaussian_mixture: non-finite parameter");
    require((weights.array() > 0.0).all(), "gaussian_mixture: weights must be positive");
    require(std::abs(weights.sum() - 1.0) <= 1e-12, "gaussian_mixture: weights must sum to 1 within 1e-12");
    require(var >= 0.0, "gaussian_mixture: variance must be non-negative");
    const int dim = static_cast<int>(means.cols());
    return TargetSpec(TargetKind::GaussianMixture, dim, MixtureParams{std::move(weights), std::move(means), var});
  }

  static TargetSpec uniform_box(Vector half_width) {
    require(half_width.size() > 0, "uniform_box: dimension must be positive");
    require(half_width.allFinite() && (half_width.array() > 0.0).all(),
            "uniform_box: half widths must be positive and finite");
    const int dim = static_cast<int>(half_width.size());
    return TargetSpec(TargetKind::UniformBox, dim, BoxParams{std::move(half_width)});
  }

  static TargetSpec subspace(TargetSpec inner, Matrix basis, Vector offset) {
    require(basis.cols() == inner.dim(), "subspace_embedded: basis columns must equal inner dimension");
    require(basis.rows() > basis.cols(), "subspace_embedded: inner dimension must be below ambient dimension");
    require(offset.size() == basis.rows(), "subspace_embedded: offset must have ambient dimension");
    require(basis.allFinite() && offset.allFinite(), "subspace_embedded: non-finite parameter");
    const Matrix gram = basis.transpose() * basis;
    const double err = (gram - Matrix::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff();
    require(err <= 1e-10, "subspace_embedded: basis columns must be orthonormal within 1e-10");
    const int dim = static_cast<int>(basis.rows());
    return TargetSpec(TargetKind::SubspaceEmbedded, dim,
                      SubspaceParams{std::make_shared<const TargetSpec>(std::move(inner)), std::move(basis),
                                     std::move(offset)});
  }

  static TargetSpec convolution(TargetSpec inner, double tau) {
    require(std::isfinite(tau) && tau > 0.0, "convolution: tau must be positive");
    require(inner.compact_support(), "convolution: inner target must be compactly supported");
    const int dim = inner.dim();
    return TargetSpec(TargetKind::Convolution, dim,
                      ConvolutionParams{std::make_shared<const TargetSpec>(std::move(inner)), tau});
  }

  TargetKind kind() const { return kind_; }
  int dim() const { return dim_; }
  const Params& params() const { return params_; }

  const GaussianParams& gaussian_params() const { return std::get<GaussianParams>(params_); }
  const MixtureParams& mixture_params() const { return std::get<MixtureParams>(params_); }
  const BoxParams& box_params() const { return std::get<BoxParams>(params_); }
  const SubspaceParams& subspace_params() const { return std::get<SubspaceParams>(params_); }
  const ConvolutionParams& convolution_params() const { return std::get<ConvolutionParams>(params_); }

  bool compact_support() const {
    switch (kind_) {
      case TargetKind::UniformBox: return true;
      case TargetKind::GaussianMixture: return mixture_params().var == 0.0;
      case TargetKind::SubspaceEmbedded: return subspace_params().inner->compact_support();
      default: return false;
    }
  }

  /// Has a Lebesgue density smooth enough for a score at t = 0.
  bool smooth_density() const {
    switch (kind_) {
      case TargetKind::Gaussian: return true;
      case TargetKind::GaussianMixture: return mixture_params().var > 0.0;
      case TargetKind::Convolution: return true;
      default: return false;
    }
  }

  /// Radius R such that the support has diameter 2R (compact targets only).
  double half_diameter() const {
    switch (kind_) {
      case TargetKind::UniformBox: return box_params().half_width.norm();
      case TargetKind::GaussianMixture: {
        require(compact_support(), "half_diameter: mixture with positive variance is not compact");
        const auto& p = mixture_params();
        double widest = 0.0;
        for (Eigen::Index i = 0; i < p.means.rows(); ++i)
          for (Eigen::Index j = i + 1; j < p.means.rows(); ++j)
            widest = std::max(widest, (p.means.row(i) - p.means.row(j)).norm());
        return 0.5 * widest;
      }
      case TargetKind::SubspaceEmbedded: return subspace_params().inner->half_diameter();
      default: throw ValidationError("half_diameter: target is not compactly supported");
    }
  }

  Vector mean() const {
    switch (kind_) {
      case TargetKind::Gaussian: return gaussian_params().mean;
      case TargetKind::GaussianMixture: {
        const auto& p = mixture_params();
        return p.means.transpose() * p.weights;
      }
      case TargetKind::UniformBox: return Vector::Zero(dim_);
      case TargetKind::SubspaceEmbedded: {
        const auto& p = subspace_params();
        return p.basis * p.inner->mean() + p.offset;
      }
      case TargetKind::Convolution: return convolution_params().inner->mean();
    }
    return {};
  }

  /// E||X||^2 in closed form.
  double second_moment() const {
    switch (kind_) {
      case TargetKind::Gaussian: {
        const auto& p = gaussian_params();
        return p.mean.squaredNorm() + p.var.sum();
      }
      case TargetKind::GaussianMixture: {
        const auto& p = mixture_params();
        return p.means.rowwise().squaredNorm().dot(p.weights) + dim_ * p.var;
      }
      case TargetKind::UniformBox: return box_params().half_width.squaredNorm() / 3.0;
      case TargetKind::SubspaceEmbedded: {
        const auto& p = subspace_params();
        return p.inner->second_moment() + 2.0 * p.offset.dot(p.basis * p.inner->mean()) + p.offset.squaredNorm();
      }
      case TargetKind::Convolution: {
        const auto& p = convolution_params();
        return p.inner->second_moment() + dim_ * p.tau * p.tau;
      }
    }
    return 0.0;
  }

  /// The E||X||^2 <= D hypothesis of the main bounds. Reported, not enforced.
  bool second_moment_within_dim() const { return second_moment() <= static_cast<double>(dim_); }

  /// max(1, E||X||^2 / D).
  double normalized_second_moment() const { return std::max(1.0, second_moment() / dim_); }

 private:
  TargetSpec(TargetKind kind, int dim, Params params) : kind_(kind), dim_(dim), params_(std::move(params)) {}

  TargetKind kind_;
  int dim_;
  Params params_;
};

/// Noise levels of the smoothed marginal alpha*X + beta*xi.
struct NoiseLevel {
  double alpha = 1.0;
  double beta = 0.0;

  static NoiseLevel at_time(double t) {
    require(std::isfinite(t) && t >= 0.0, "time must be finite and non-negative");
    return {std::exp(-t), std::sqrt(-std::expm1(-2.0 * t))};
  }
};

namespace detail {

inline void check_levels(const TargetSpec& target, double alpha, double beta) {
  require(std::isfinite(alpha) && std::isfinite(beta) && alpha >= 0.0 && beta >= 0.0,
          "noise levels must be finite and non-negative");
  require(alpha > 0.0 || beta > 0.0, "alpha and beta cannot both vanish");
  if (beta == 0.0)
    require(target.smooth_density(), std::string(to_string(target.kind())) +
                                         ": score at t = 0 needs a smooth density");
}

inline void smoothed_score_impl(const TargetSpec& target, double alpha, double beta, const double* y, double* out) {
  const int dim = target.dim();
  switch (target.kind()) {
    case TargetKind::Gaussian: {
      const auto& p = target.gaussian_params();
      const double a2 = alpha * alpha;
      const double b2 = beta * beta;
      for (int j = 0; j < dim; ++j) out[j] = -(y[j] - alpha * p.mean[j]) / (a2 * p.var[j] + b2);
      return;
    }
    case TargetKind::GaussianMixture: {
      const auto& p = target.mixture_params();
      const double v = alpha * alpha * p.var + beta * beta;
      const auto k = static_cast<std::size_t>(p.weights.size());
      std::vector<double> logr(k);
      Eigen::Map<const Vector> yv(y, dim);
      for (std::size_t i = 0; i < k; ++i) {
        const double dist2 = (yv - alpha * p.means.row(static_cast<Eigen::Index>(i)).transpose()).squaredNorm();
        logr[i] = std::log(p.weights[static_cast<Eigen::Index>(i)]) - dist2 / (2.0 * v);
      }
      const double norm = special::log_sum_exp(logr);
      for (int j = 0; j < dim; ++j) out[j] = 0.0;
      for (std::size_t i = 0; i < k; ++i) {
        const double r = std::exp(logr[i] - norm);
        for (int j = 0; j < dim; ++j) out[j] += r * p.means(static_cast<Eigen::Index>(i), j);
      }
      for (int j = 0; j < dim; ++j) out[j] = -(y[j] - alpha * out[j]) / v;
      return;
    }
    case TargetKind::UniformBox: {
      const auto& p = target.box_params();
      for (int j = 0; j < dim; ++j) {
        const double hi = (y[j] + alpha * p.half_width[j]) / beta;
        const double lo = (y[j] - alpha * p.half_width[j]) / beta;
        const double log_mass = special::log_normal_interval(hi, lo);
        out[j] = special::normal_interval_pdf_ratio(hi, lo, log_mass) / beta;
      }
      return;
    }
    case TargetKind::SubspaceEmbedded: {
      const auto& p = target.subspace_params();
      Eigen::Map<const Vector> yv(y, dim);
      const Vector centered = yv - alpha * p.offset;
      const Vector r = p.basis.transpose() * centered;
      Vector inner_score(r.size());
      smoothed_score_impl(*p.inner, alpha, beta, r.data(), inner_score.data());
      Eigen::Map<Vector> o(out, dim);
      o = p.basis * inner_score - (centered - p.basis * r) / (beta * beta);
      return;
    }
    case TargetKind::Convolution: {
      const auto& p = target.convolution_params();
      smoothed_score_impl(*p.inner, alpha, std::hypot(alpha * p.tau, beta), y, out);
      return;
    }
  }
}

inline double smoothed_log_density_impl(const TargetSpec& target, double alpha, double beta, const Vector& y) {
  const int dim = target.dim();
  constexpr double log2pi = 2.0 * special::kLogSqrt2Pi;
  switch (target.kind()) {
    case TargetKind::Gaussian: {
      const auto& p = target.gaussian_params();
      double acc = 0.0;
      for (int j = 0; j < dim; ++j) {
        const double v = alpha * alpha * p.var[j] + beta * beta;
        const double r = y[j] - alpha * p.mean[j];
        acc += -0.5 * r * r / v - 0.5 * (log2pi + std::log(v));
      }
      return acc;
    }
    case TargetKind::GaussianMixture: {
      const auto& p = target.mixture_params();
      const double v = alpha * alpha * p.var + beta * beta;
      std::vector<double> terms(static_cast<std::size_t>(p.weights.size()));
      for (Eigen::Index i = 0; i < p.weights.size(); ++i) {
        const double dist2 = (y - alpha * p.means.row(i).transpose()).squaredNorm();
        terms[static_cast<std::size_t>(i)] = std::log(p.weights[i]) - dist2 / (2.0 * v);
      }
      return special::log_sum_exp(terms) - 0.5 * dim * (log2pi + std::log(v));
    }
    case TargetKind::UniformBox: {
      const auto& p = target.box_params();
      double acc = 0.0;
      for (int j = 0; j < dim; ++j) {
        const double hi = (y[j] + alpha * p.half_width[j]) / beta;
        const double lo = (y[j] - alpha * p.half_width[j]) / beta;
        acc += special::log_normal_interval(hi, lo) - std::log(2.0 * alpha * p.half_width[j]);
      }
      return acc;
    }
    case TargetKind::SubspaceEmbedded: {
      const auto& p = target.subspace_params();
      const Vector centered = y - alpha * p.offset;
      const Vector r = p.basis.transpose() * centered;
      const double ortho2 = (centered - p.basis * r).squaredNorm();
      const auto codim = static_cast<double>(dim - r.size());
      return smoothed_log_density_impl(*p.inner, alpha, beta, r) - 0.5 * ortho2 / (beta * beta) -
             0.5 * codim * (log2pi + 2.0 * std::log(beta));
    }
    case TargetKind::Convolution: {
      const auto& p = target.convolution_params();
      return smoothed_log_density_impl(*p.inner, alpha, std::hypot(alpha * p.tau, beta), y);
    }
  }
  return 0.0;
}

inline void sample_one(const TargetSpec& target, CounterRng& rng, double* out) {
  const int dim = target.dim();
  switch (target.kind()) {
    case TargetKind::Gaussian: {
      const auto& p = target.gaussian_params();
      for (int j = 0; j < dim; ++j) out[j] = p.mean[j] + std::sqrt(p.var[j]) * rng.normal();
      return;
    }
    case TargetKind::GaussianMixture: {
      const auto& p = target.mixture_params();
      const double u = rng.uniform();
      Eigen::Index comp = p.weights.size() - 1;
      double cumulative = 0.0;
      for (Eigen::Index i = 0; i < p.weights.size(); ++i) {
        cumulative += p.weights[i];
        if (u < cumulative) {
          comp = i;
          break;
        }
      }
      const double s = std::sqrt(p.var);
      for (int j = 0; j < dim; ++j) out[j] = p.means(comp, j) + (s > 0.0 ? s * rng.normal() : 0.0);
      return;
    }
    case TargetKind::UniformBox: {
      const auto& p = target.box_params();
      for (int j = 0; j < dim; ++j) out[j] = p.half_width[j] * (2.0 * rng.uniform() - 1.0);
      return;
    }
    case TargetKind::SubspaceEmbedded: {
      const auto& p = target.subspace_params();
      Vector inner(p.inner->dim());
      sample_one(*p.inner, rng, inner.data());
      Eigen::Map<Vector>(out, dim) = p.basis * inner + p.offset;
      return;
    }
    case TargetKind::Convolution: {
      const auto& p = target.convolution_params();
      sample_one(*p.inner, rng, out);
      for (int j = 0; j < dim; ++j) out[j] += p.tau * rng.normal();
      return;
    }
  }
}

}  // namespace detail

/// Score of alpha*X + beta*xi at y, written to out (must not alias y). No
/// allocation for Gaussian targets.
inline void smoothed_score(const TargetSpec& target, double alpha, double beta, std::span<const double> y,
                           std::span<double> out) {
  detail::check_levels(target, alpha, beta);
  require(y.size() == static_cast<std::size_t>(target.dim()) && out.size() == y.size(),
          "smoothed_score: dimension mismatch");
  detail::smoothed_score_impl(target, alpha, beta, y.data(), out.data());
}

/// s(t, x) = grad log pi(t, x) for the forward marginal at time t.
inline Vector exact_score(const TargetSpec& target, double t, const Vector& x) {
  require(x.size() == target.dim(), "exact_score: dimension mismatch");
  require(x.allFinite(), "exact_score: non-finite input");
  const NoiseLevel level = NoiseLevel::at_time(t);
  Vector out(x.size());
  smoothed_score(target, level.alpha, level.beta, view(x), view(out));
  return out;
}

/// log density of alpha*X + beta*xi at y.
inline double smoothed_log_density(const TargetSpec& target, double alpha, double beta, const Vector& y) {
  detail::check_levels(target, alpha, beta);
  require(y.size() == target.dim(), "smoothed_log_density: dimension mismatch");
  return detail::smoothed_log_density_impl(target, alpha, beta, y);
}

inline double log_density(const TargetSpec& target, double t, const Vector& x) {
  const NoiseLevel level = NoiseLevel::at_time(t);
  return smoothed_log_density(target, level.alpha, level.beta, x);
}

inline void sample_target_into(const TargetSpec& target, CounterRng& rng, std::span<double> out) {
  require(out.size() == static_cast<std::size_t>(target.dim()), "sample: dimension mismatch");
  detail::sample_one(target, rng, out.data());
}

/// n i.i.d. draws; draw i uses its own stream so any prefix is stable in n.
inline Samples sample_target(const TargetSpec& target, std::size_t n, std::uint64_t seed) {
  require(n >= 1, "sample_target: n must be at least 1");
  Samples out(static_cast<Eigen::Index>(n), target.dim());
  for (std::size_t i = 0; i < n; ++i) {
    CounterRng rng(StreamId{seed, i, substreams::kTarget});
    detail::sample_one(target, rng, out.row(static_cast<Eigen::Index>(i)).data());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Posterior covariance Var(X | X + sigma*xi = y)

inline bool has_closed_form_conditional_variance(const TargetSpec& target) {
  switch (target.kind()) {
    case TargetKind::Gaussian:
    case TargetKind::GaussianMixture: return true;
    case TargetKind::SubspaceEmbedded:
      return has_closed_form_conditional_variance(*target.subspace_params().inner);
    default: return false;
  }
}

inline Matrix closed_form_conditional_variance(const TargetSpec& target, double sigma, const Vector& y) {
  require(std::isfinite(sigma) && sigma > 0.0, "conditional_variance: sigma must be positive");
  require(y.size() == target.dim() && y.allFinite(), "conditional_variance: bad observation vector");
  const double s2 = sigma * sigma;
  switch (target.kind()) {
    case TargetKind::Gaussian: {
      const auto& p = target.gaussian_params();
      return (p.var.array() * s2 / (p.var.array() + s2)).matrix().asDiagonal();
    }
    case TargetKind::GaussianMixture: {
      const auto& p = target.mixture_params();
      const double denom = p.var + s2;
      const Eigen::Index k = p.weights.size();
      std::vector<double> logr(static_cast<std::size_t>(k));
      Matrix centers(k, target.dim());
      for (Eigen::Index i = 0; i < k; ++i) {
        logr[static_cast<std::size_t>(i)] =
            std::log(p.weights[i]) - (y - p.means.row(i).transpose()).squaredNorm() / (2.0 * denom);
        centers.row(i) = (p.var * y.transpose() + s2 * p.means.row(i)) / denom;
      }
      const double norm = special::log_sum_exp(logr);
      Vector r(k);
      for (Eigen::Index i = 0; i < k; ++i) r[i] = std::exp(logr[static_cast<std::size_t>(i)] - norm);
      const Vector center = centers.transpose() * r;
      Matrix cov = Matrix::Identity(target.dim(), target.dim()) * (p.var * s2 / denom);
      for (Eigen::Index i = 0; i < k; ++i) {
        const Vector dev = centers.row(i).transpose() - center;
        cov.noalias() += r[i] * dev * dev.transpose();
      }
      return cov;
    }
    case TargetKind::SubspaceEmbedded: {
      const auto& p = target.subspace_params();
      const Vector r = p.basis.transpose() * (y - p.offset);
      const Matrix inner = closed_form_conditional_variance(*p.inner, sigma, r);
      return p.basis * inner * p.basis.transpose();
    }
    default:
      throw ValidationError(std::string(to_string(target.kind())) +
                            ": no closed-form conditional variance; use the Monte Carlo estimator");
  }
}

struct McConditionalVariance {
  Matrix cov;
  double top_eigenvalue = 0.0;
  Vector top_eigenvector;
  double standard_error = 0.0;  // of top_eigenvalue along the fixed top direction
  double effective_sample_size = 0.0;
  std::size_t draws = 0;
};

/// Self-normalized importance sampling with prior draws as proposals. For
/// Gaussian convolutions the Gaussian layer is integrated analytically and
/// only the inner draws are weighted.
inline McConditionalVariance mc_conditional_variance(const TargetSpec& target, double sigma, const Vector& y,
                                                     std::size_t draws, std::uint64_t seed) {
  require(std::isfinite(sigma) && sigma > 0.0, "conditional_variance: sigma must be positive");
  require(y.size() == target.dim() && y.allFinite(), "conditional_variance: bad observation vector");
  require(draws >= 2, "conditional_variance: need at least two draws");
  const int dim = target.dim();
  const double s2 = sigma * sigma;

  const TargetSpec* proposal = &target;
  double lik_var = s2;
  double shrink = 1.0;  // posterior mean = shrink * draw + (1 - shrink) * y
  double within = 0.0;
  if (target.kind() == TargetKind::Convolution) {
    const auto& p = target.convolution_params();
    proposal = p.inner.get();
    const double tau2 = p.tau * p.tau;
    lik_var = tau2 + s2;
    shrink = s2 / lik_var;
    within = tau2 * s2 / lik_var;
  }

  Samples centers(static_cast<Eigen::Index>(draws), dim);
  std::vector<double> logw(draws);
  Vector tmp(dim);
  for (std::size_t i = 0; i < draws; ++i) {
    CounterRng rng(StreamId{seed, i, substreams::kTarget});
    detail::sample_one(*proposal, rng, tmp.data());
    logw[i] = -(y - tmp).squaredNorm() / (2.0 * lik_var);
    centers.row(static_cast<Eigen::Index>(i)) = (shrink * tmp + (1.0 - shrink) * y).transpose();
  }
  const double norm = special::log_sum_exp(logw);
  Vector w(static_cast<Eigen::Index>(draws));
  for (std::size_t i = 0; i < draws; ++i) w[static_cast<Eigen::Index>(i)] = std::exp(logw[i] - norm);

  const Vector center = centers.transpose() * w;
  Matrix between = Matrix::Zero(dim, dim);
  for (std::size_t i = 0; i < draws; ++i) {
    const Vector dev = centers.row(static_cast<Eigen::Index>(i)).transpose() - center;
    between.noalias() += w[static_cast<Eigen::Index>(i)] * dev * dev.transpose();
  }

  McConditionalVariance res;
  res.draws = draws;
  res.cov = between + within * Matrix::Identity(dim, dim);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(res.cov);
  res.top_eigenvalue = eig.eigenvalues()[dim - 1];
  res.top_eigenvector = eig.eigenvectors().col(dim - 1);
  const double lambda_between = res.top_eigenvector.dot(between * res.top_eigenvector);
  double psi2 = 0.0;
  for (std::size_t i = 0; i < draws; ++i) {
    const auto idx = static_cast<Eigen::Index>(i);
    const double proj = res.top_eigenvector.dot(centers.row(idx).transpose() - center);
    const double psi = w[idx] * (proj * proj - lambda_between);
    psi2 += psi * psi;
  }
  res.standard_error = std::sqrt(psi2);
  res.effective_sample_size = 1.0 / w.squaredNorm();
  return res;
}

struct ConditionalVarianceOptions {
  std::size_t mc_draws = 100000;
  std::uint64_t mc_seed = 0;
};

/// Closed form where available, Monte Carlo otherwise.
inline Matrix conditional_variance(const TargetSpec& target, double sigma, const Vector& y,
                                   const ConditionalVarianceOptions& options = {}) {
  if (has_closed_form_conditional_variance(target)) return closed_form_conditional_variance(target, sigma, y);
  return mc_conditional_variance(target, sigma, y, options.mc_draws, options.mc_seed).cov;
}

}  // namespace ddpmw2
