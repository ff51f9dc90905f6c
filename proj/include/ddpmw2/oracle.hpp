// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ddpmw2/error.hpp"
#include "ddpmw2/rng.hpp"
#include "ddpmw2/targets.hpp"

namespace ddpmw2 {

enum class NoiseFamily { Gaussian, Uniform, Laplace, StudentT };

inline std::string_view to_string(NoiseFamily f) {
  switch (f) {
    case NoiseFamily::Gaussian: return "gauss";
    case NoiseFamily::Uniform: return "uniform";
    case NoiseFamily::Laplace: return "laplace";
    case NoiseFamily::StudentT: return "student3";
  }
  return "unknown";
}

/// Centered per-coordinate noise with standard deviation `scale`.
struct NoiseSpec {
  NoiseFamily family = NoiseFamily::Gaussian;
  double scale = 0.0;
  double nu = 3.0;  // Student-t degrees of freedom, > 2

  void validate() const {
    require(std::isfinite(scale) && scale >= 0.0, "noise scale must be finite and non-negative");
    if (family == NoiseFamily::StudentT) require(nu > 2.0, "student-t noise needs nu > 2 for finite variance");
  }

  double draw(CounterRng& rng) const {
    switch (family) {
      case NoiseFamily::Gaussian: return scale * rng.normal();
      case NoiseFamily::Uniform: return scale * std::sqrt(3.0) * (2.0 * rng.uniform() - 1.0);
      case NoiseFamily::Laplace: return scale * std::sqrt(0.5) * rng.laplace();
      case NoiseFamily::StudentT: return scale * std::sqrt((nu - 2.0) / nu) * rng.student_t(nu);
    }
    return 0.0;
  }
};

enum class Perturbation { None, AdditiveNoise, CoordinateCompression };

/// Exact or randomized score s~(t, x). Stateless apart from the caller's RNG,
/// so concurrent queries are safe with per-caller streams.
class ScoreOracle {
 public:
  static ScoreOracle exact(TargetPtr target) { return ScoreOracle(std::move(target), Perturbation::None, {}); }

  static ScoreOracle additive(TargetPtr target, NoiseSpec noise) {
    noise.validate();
    return ScoreOracle(std::move(target), Perturbation::AdditiveNoise, noise);
  }

  static ScoreOracle compression(TargetPtr target) {
    return ScoreOracle(std::move(target), Perturbation::CoordinateCompression, {});
  }

  const TargetSpec& target() const { return *target_; }
  const TargetPtr& target_ptr() const { return target_; }
  int dim() const { return target_->dim(); }
  Perturbation perturbation() const { return perturbation_; }
  const NoiseSpec& noise() const { return noise_; }

  double declared_eps_b() const { return 0.0; }

  /// +inf for coordinate compression: its spread grows with ||s(t, x)||.
  double declared_eps_v() const {
    switch (perturbation_) {
      case Perturbation::None: return 0.0;
      case Perturbation::AdditiveNoise: return noise_.scale;
      case Perturbation::CoordinateCompression: return std::numeric_limits<double>::infinity();
    }
    return 0.0;
  }

  bool uniform_eps_v() const { return perturbation_ != Perturbation::CoordinateCompression; }

  std::string descriptor() const {
    switch (perturbation_) {
      case Perturbation::None: return "exact";
      case Perturbation::AdditiveNoise: {
        char buf[64];
        auto res = std::to_chars(buf, buf + sizeof(buf), noise_.scale);
        return std::string(to_string(noise_.family)) + ":" + std::string(buf, res.ptr);
      }
      case Perturbation::CoordinateCompression: return "compress";
    }
    return "unknown";
  }

  void query(double t, std::span<const double> x, CounterRng& rng, std::span<double> out) const {
    require(std::isfinite(t) && t > 0.0, "oracle query: time must be positive");
    const NoiseLevel level = NoiseLevel::at_time(t);
    smoothed_score(*target_, level.alpha, level.beta, x, out);
    perturb(rng, out);
  }

  Vector query(double t, const Vector& x, CounterRng& rng) const {
    require(x.size() == dim(), "oracle query: dimension mismatch");
    Vector out(x.size());
    query(t, view(x), rng, view(out));
    return out;
  }

  /// Applies the perturbation to an exact score already stored in `score`.
  void perturb(CounterRng& rng, std::span<double> score) const {
    switch (perturbation_) {
      case Perturbation::None: return;
      case Perturbation::AdditiveNoise:
        for (double& v : score) {
          const double z = noise_.draw(rng);
          if (!std::isfinite(z)) throw NumericalError("oracle: non-finite noise draw from " + descriptor());
          v += z;
        }
        return;
      case Perturbation::CoordinateCompression: {
        const auto i = static_cast<std::size_t>(rng.uniform_index(score.size()));
        const double kept = static_cast<double>(score.size()) * score[i];
        for (double& v : score) v = 0.0;
        score[i] = kept;
        return;
      }
    }
  }

 private:
  ScoreOracle(TargetPtr target, Perturbation p, NoiseSpec noise)
      : target_(std::move(target)), perturbation_(p), noise_(noise) {
    require(target_ != nullptr, "oracle: target is null");
  }

  TargetPtr target_;
  Perturbation perturbation_;
  NoiseSpec noise_;
};

/// Parses "exact", "gauss:s", "uniform:s", "laplace:s", "student3:s", "compress".
inline ScoreOracle parse_oracle(std::string_view spec, TargetPtr target) {
  if (spec == "exact") return ScoreOracle::exact(std::move(target));
  if (spec == "compress") return ScoreOracle::compression(std::move(target));
  const auto colon = spec.find(':');
  if (colon == std::string_view::npos) throw ValidationError("unknown oracle spec '" + std::string(spec) + "'");
  const std::string_view family = spec.substr(0, colon);
  const std::string_view value = spec.substr(colon + 1);
  double scale = 0.0;
  const auto res = std::from_chars(value.data(), value.data() + value.size(), scale);
  if (res.ec != std::errc{} || res.ptr != value.data() + value.size() || value.empty())
    throw ValidationError("oracle spec '" + std::string(spec) + "': bad noise scale");
  NoiseSpec noise{.scale = scale};
  if (family == "gauss") {
    noise.family = NoiseFamily::Gaussian;
  } else if (family == "uniform") {
    noise.family = NoiseFamily::Uniform;
  } else if (family == "laplace") {
    noise.family = NoiseFamily::Laplace;
  } else if (family == "student3") {
    noise.family = NoiseFamily::StudentT;
  } else {
    throw ValidationError("unknown oracle family '" + std::string(family) + "'");
  }
  return ScoreOracle::additive(std::move(target), noise);
}

// ---------------------------------------------------------------------------
// Empirical bias / spread certification

struct ProbePoint {
  double t = 1.0;
  Vector x;
};

struct ProbeCertificate {
  double t = 0.0;
  double eps_b_hat = 0.0;       // ||mean(query) - s|| / sqrt(D)
  double eps_v_hat = 0.0;       // sqrt(mean squared deviation from the query mean) / sqrt(D)
  double mean_sq_dev = 0.0;     // (1/(n-1)) sum ||q_r - mean||^2
  double score_norm = 0.0;      // ||s(t, x)||
  double exact_eps_b = 0.0;
  double exact_eps_v = 0.0;
};

struct CertificationReport {
  double eps_b_hat = 0.0;
  double eps_v_hat = 0.0;
  double exact_eps_b = 0.0;
  double exact_eps_v = 0.0;  // max over probes of the pointwise closed form
  bool uniform = true;       // false when the spread depends on ||s(t, x)||
  std::size_t n_reps = 0;
  std::vector<ProbeCertificate> points;
};

inline CertificationReport certify_assumption2(const ScoreOracle& oracle, const std::vector<ProbePoint>& probes,
                                               std::size_t n_reps, std::uint64_t seed) {
  require(n_reps >= 2, "certify: n_reps must be at least 2");
  require(!probes.empty(), "certify: need at least one probe point");
  const int dim = oracle.dim();
  const double sqrt_d = std::sqrt(static_cast<double>(dim));
  CertificationReport report;
  report.n_reps = n_reps;
  report.uniform = oracle.uniform_eps_v();
  Vector q(dim), sum(dim), mean(dim);
  std::vector<double> draws(n_reps * static_cast<std::size_t>(dim));
  for (std::size_t p = 0; p < probes.size(); ++p) {
    const ProbePoint& probe = probes[p];
    require(probe.x.size() == dim, "certify: probe dimension mismatch");
    const Vector exact = exact_score(oracle.target(), probe.t, probe.x);
    CounterRng rng(StreamId{seed, p, substreams::kCertify});
    sum.setZero();
    for (std::size_t r = 0; r < n_reps; ++r) {
      q = exact;
      oracle.perturb(rng, view(q));
      std::copy(q.data(), q.data() + dim, draws.begin() + static_cast<std::ptrdiff_t>(r * dim));
      sum += q;
    }
    mean = sum / static_cast<double>(n_reps);
    special::CompensatedSum ss;
    for (std::size_t r = 0; r < n_reps; ++r) {
      const Eigen::Map<const Vector> row(draws.data() + r * dim, dim);
      ss += (row - mean).squaredNorm();
    }
    ProbeCertificate cert;
    cert.t = probe.t;
    cert.score_norm = exact.norm();
    cert.eps_b_hat = (mean - exact).norm() / sqrt_d;
    cert.mean_sq_dev = ss.value() / static_cast<double>(n_reps - 1);
    cert.eps_v_hat = std::sqrt(cert.mean_sq_dev) / sqrt_d;
    switch (oracle.perturbation()) {
      case Perturbation::None: break;
      case Perturbation::AdditiveNoise: cert.exact_eps_v = oracle.noise().scale; break;
      case Perturbation::CoordinateCompression:
        cert.exact_eps_v = std::sqrt((dim - 1.0) / dim) * cert.score_norm;
        break;
    }
    report.eps_b_hat = std::max(report.eps_b_hat, cert.eps_b_hat);
    report.eps_v_hat = std::max(report.eps_v_hat, cert.eps_v_hat);
    report.exact_eps_v = std::max(report.exact_eps_v, cert.exact_eps_v);
    report.points.push_back(cert);
  }
  return report;
}

}  // namespace ddpmw2
