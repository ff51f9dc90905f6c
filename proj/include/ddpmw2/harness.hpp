// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ddpmw2/error.hpp"
#include "ddpmw2/json_io.hpp"
#include "ddpmw2/metrics.hpp"
#include "ddpmw2/oracle.hpp"
#include "ddpmw2/parallel.hpp"
#include "ddpmw2/rng.hpp"
#include "ddpmw2/sampler.hpp"
#include "ddpmw2/schedule.hpp"
#include "ddpmw2/targets.hpp"
#include "ddpmw2/theory.hpp"

namespace ddpmw2 {

inline constexpr int kConfigSchemaVersion = 1;
inline constexpr std::size_t kMaxSweepCells = 256;

enum class W2Reference { Samples, Analytic };

struct SweepAxes {
  std::vector<int> K0;
  std::vector<double> T1;
  std::vector<double> sigma_zeta;
  std::vector<std::string> noise_family;
};

struct ExperimentConfig {
  std::string name = "experiment";
  Json target_json;  // kept verbatim for the envelope
  std::shared_ptr<const TargetSpec> target;
  std::optional<ScheduleParams> schedule_params;  // a left unset picks the theorem's a
  bool schedule_a_given = false;
  std::vector<double> explicit_times;
  std::string oracle = "exact";
  std::size_t n_chains = 1000;
  std::size_t n_reference = 0;  // 0: same as n_chains
  W2Method w2_method = W2Method::ExactAssignment;
  std::size_t n_slices = 256;
  W2Reference reference = W2Reference::Samples;
  std::size_t bootstrap_resamples = 500;
  double bootstrap_level = 0.95;
  std::optional<bool> certify;  // unset: on for randomized oracles
  std::size_t probes_per_time = 4;
  std::size_t certify_reps = 1000;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  std::size_t record_trajectory = 0;  // stride; 0 disables
  SweepAxes sweep;

  std::size_t reference_count() const { return n_reference == 0 ? n_chains : n_reference; }
};

namespace detail {

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

inline std::size_t count_field(const Json& j, const char* key, std::size_t fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0)
    throw ValidationError(std::string("config.") + key + " must be a non-negative integer");
  return v.get<std::size_t>();
}

inline void only_keys(const Json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ValidationError(where + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key())) throw ValidationError(where + ": unknown field '" + it.key() + "'");
}

}  // namespace detail

inline ExperimentConfig config_from_json(const Json& j) {
  detail::only_keys(j,
                    {"schema_version", "name", "target", "schedule", "oracle", "n_chains", "n_reference", "w2",
                     "bootstrap", "certify", "seed", "threads", "record_trajectory", "sweep"},
                    "config");
  const auto& ver = detail::field(j, "schema_version", "config");
  if (!ver.is_number_integer() || ver.get<int>() != kConfigSchemaVersion)
    throw ValidationError("config: unsupported schema_version (expected " + std::to_string(kConfigSchemaVersion) + ")");
  ExperimentConfig c;
  if (j.contains("name")) c.name = j.at("name").get<std::string>();
  c.target_json = detail::field(j, "target", "config");
  c.target = std::make_shared<const TargetSpec>(target_from_json(c.target_json));

  const auto& sj = detail::field(j, "schedule", "config");
  if (sj.is_array() || (sj.is_object() && sj.contains("times"))) {
    c.explicit_times = sj.is_array() ? sj.get<std::vector<double>>() : sj.at("times").get<std::vector<double>>();
    Schedule::from_times(c.explicit_times);
  } else {
    detail::only_keys(sj, {"T1", "a", "K0", "delta"}, "config.schedule");
    ScheduleParams p;
    p.T1 = detail::number(detail::field(sj, "T1", "config.schedule"), "config.schedule.T1");
    const auto& k0 = detail::field(sj, "K0", "config.schedule");
    if (!k0.is_number_integer()) throw ValidationError("config.schedule.K0 must be an integer");
    p.K0 = k0.get<int>();
    c.schedule_a_given = sj.contains("a");
    p.a = c.schedule_a_given ? detail::number(sj.at("a"), "config.schedule.a") : theorem_a(theory_constants(*c.target));
    if (sj.contains("delta")) p.delta = detail::number(sj.at("delta"), "config.schedule.delta");
    p.validate();
    c.schedule_params = p;
  }

  if (j.contains("oracle")) c.oracle = j.at("oracle").get<std::string>();
  parse_oracle(c.oracle, c.target);
  c.n_chains = detail::count_field(j, "n_chains", c.n_chains);
  require(c.n_chains >= 1, "config.n_chains must be at least 1");
  c.n_reference = detail::count_field(j, "n_reference", 0);

  if (j.contains("w2")) {
    const auto& w = j.at("w2");
    detail::only_keys(w, {"method", "n_slices", "reference"}, "config.w2");
    if (w.contains("method")) c.w2_method = parse_w2_method(w.at("method").get<std::string>());
    c.n_slices = detail::count_field(w, "n_slices", c.n_slices);
    if (w.contains("reference")) {
      const auto r = w.at("reference").get<std::string>();
      if (r == "samples") {
        c.reference = W2Reference::Samples;
      } else if (r == "analytic") {
        c.reference = W2Reference::Analytic;
      } else {
        throw ValidationError("config.w2.reference must be 'samples' or 'analytic'");
      }
    }
  }
  if (c.reference == W2Reference::Analytic) {
    require(c.target->kind() == TargetKind::Gaussian, "config.w2.reference 'analytic' needs a Gaussian target");
    require(c.w2_method == W2Method::BuresGaussianFit, "config.w2.reference 'analytic' needs bures_gaussian_fit");
  }
  if (c.w2_method == W2Method::ExactAssignment && c.reference == W2Reference::Samples) {
    require(c.reference_count() == c.n_chains, "exact_assignment needs n_reference equal to n_chains");
    require(c.n_chains <= kDefaultAssignmentCap, "exact_assignment is capped at 2048 samples; use sliced");
  }

  if (j.contains("bootstrap")) {
    const auto& b = j.at("bootstrap");
    detail::only_keys(b, {"resamples", "level"}, "config.bootstrap");
    c.bootstrap_resamples = detail::count_field(b, "resamples", c.bootstrap_resamples);
    if (b.contains("level")) c.bootstrap_level = detail::number(b.at("level"), "config.bootstrap.level");
    require(c.bootstrap_resamples == 0 || c.bootstrap_resamples >= 2, "config.bootstrap.resamples must be 0 or >= 2");
    require(c.bootstrap_level > 0.0 && c.bootstrap_level < 1.0, "config.bootstrap.level must lie in (0, 1)");
  }
  if (j.contains("certify")) {
    const auto& cj = j.at("certify");
    detail::only_keys(cj, {"enabled", "probes_per_time", "n_reps"}, "config.certify");
    if (cj.contains("enabled")) c.certify = cj.at("enabled").get<bool>();
    c.probes_per_time = detail::count_field(cj, "probes_per_time", c.probes_per_time);
    c.certify_reps = detail::count_field(cj, "n_reps", c.certify_reps);
    require(c.probes_per_time >= 1, "config.certify.probes_per_time must be at least 1");
    require(c.certify_reps >= 2, "config.certify.n_reps must be at least 2");
  }
  if (j.contains("seed")) {
    const auto& sd = j.at("seed");
    if (!sd.is_number_integer() || (!sd.is_number_unsigned() && sd.get<std::int64_t>() < 0))
      throw ValidationError("config.seed must be a non-negative integer");
    c.seed = j.at("seed").get<std::uint64_t>();
  }
  c.threads = static_cast<unsigned>(detail::count_field(j, "threads", 0));
  c.record_trajectory = detail::count_field(j, "record_trajectory", 0);

  if (j.contains("sweep")) {
    const auto& s = j.at("sweep");
    detail::only_keys(s, {"K0", "T1", "sigma_zeta", "noise_family"}, "config.sweep");
    auto list = [&](const char* key) -> const Json& {
      const auto& v = s.at(key);
      if (!v.is_array() || v.empty()) throw ValidationError(std::string("config.sweep.") + key + " must be a non-empty list");
      return v;
    };
    if (s.contains("K0")) c.sweep.K0 = list("K0").get<std::vector<int>>();
    if (s.contains("T1")) c.sweep.T1 = list("T1").get<std::vector<double>>();
    if (s.contains("sigma_zeta")) c.sweep.sigma_zeta = list("sigma_zeta").get<std::vector<double>>();
    if (s.contains("noise_family")) c.sweep.noise_family = list("noise_family").get<std::vector<std::string>>();
    if ((!c.sweep.K0.empty() || !c.sweep.T1.empty()) && !c.schedule_params)
      throw ValidationError("config.sweep over K0/T1 needs a parametric schedule");
    if ((!c.sweep.sigma_zeta.empty() || !c.sweep.noise_family.empty()) && c.oracle == "compress")
      throw ValidationError("config.sweep over noise needs an additive or exact oracle");
  }
  return c;
}

inline ExperimentConfig load_config(const std::string& path) { return config_from_json(read_json_file(path)); }

/// Canonical digest: FNV-1a of the sorted-key dump of the config document.
inline std::string config_digest(const Json& config_json) { return detail::hex64(detail::fnv1a(config_json.dump())); }

// ---------------------------------------------------------------------------
// Cells

struct SeedChain {
  std::uint64_t master = 0;
  std::uint64_t cell = 0;  // shared by cells with the same (T1, K0), so noise axes reuse Z_0 and xi
  std::uint64_t sampler = 0;
  std::uint64_t reference = 0;
  std::uint64_t bootstrap = 0;
  std::uint64_t certify = 0;
  std::uint64_t slices = 0;

  static SeedChain from(std::uint64_t master, std::uint64_t grid_index) {
    SeedChain s;
    s.master = master;
    s.cell = derive_seed(master, grid_index);
    s.sampler = derive_seed(s.cell, 0);
    s.reference = derive_seed(s.cell, 1);
    s.bootstrap = derive_seed(s.cell, 2);
    s.certify = derive_seed(s.cell, 3);
    s.slices = derive_seed(s.cell, 4);
    return s;
  }
};

struct SweepCell {
  std::size_t index = 0;
  std::size_t grid_index = 0;
  std::optional<int> K0;
  std::optional<double> T1;
  double sigma_zeta = 0.0;
  std::string noise_family;
  std::string oracle;
  SeedChain seeds;

  std::string label() const {
    std::ostringstream os;
    os << "cell " << index;
    if (K0) os << " K0=" << *K0;
    if (T1) os << " T1=" << *T1;
    os << " oracle=" << oracle;
    return os.str();
  }
};

inline std::string noise_oracle_spec(const std::string& family, double sigma) {
  if (sigma == 0.0) return "exact";
  std::ostringstream os;
  os << family << ':' << std::setprecision(17) << sigma;
  return os.str();
}

inline std::vector<SweepCell> expand_sweep(const ExperimentConfig& c) {
  std::vector<std::optional<double>> t1s;
  std::vector<std::optional<int>> k0s;
  if (c.schedule_params) {
    for (double t : c.sweep.T1.empty() ? std::vector<double>{c.schedule_params->T1} : c.sweep.T1) t1s.push_back(t);
    for (int k : c.sweep.K0.empty() ? std::vector<int>{c.schedule_params->K0} : c.sweep.K0) k0s.push_back(k);
  } else {
    t1s.push_back(std::nullopt);
    k0s.push_back(std::nullopt);
  }
  const bool noise_sweep = !c.sweep.sigma_zeta.empty() || !c.sweep.noise_family.empty();
  std::string base_family = "gauss";
  double base_sigma = 0.0;
  if (noise_sweep) {
    const auto oracle = parse_oracle(c.oracle, c.target);
    if (oracle.perturbation() == Perturbation::AdditiveNoise) {
      base_family = std::string(to_string(oracle.noise().family));
      base_sigma = oracle.noise().scale;
    }
  }
  const auto sigmas = c.sweep.sigma_zeta.empty() ? std::vector<double>{base_sigma} : c.sweep.sigma_zeta;
  const auto families = c.sweep.noise_family.empty() ? std::vector<std::string>{base_family} : c.sweep.noise_family;

  const std::size_t total = t1s.size() * k0s.size() * (noise_sweep ? sigmas.size() * families.size() : 1);
  if (total > kMaxSweepCells)
    throw ValidationError("sweep has " + std::to_string(total) + " cells; the limit is " +
                          std::to_string(kMaxSweepCells));

  std::vector<SweepCell> cells;
  std::size_t grid = 0;
  for (const auto& t1 : t1s) {
    for (const auto& k0 : k0s) {
      const auto seeds = SeedChain::from(c.seed, grid);
      auto add = [&](double sigma, const std::string& family, std::string spec) {
        SweepCell cell;
        cell.index = cells.size();
        cell.grid_index = grid;
        cell.K0 = k0;
        cell.T1 = t1;
        cell.sigma_zeta = sigma;
        cell.noise_family = family;
        cell.oracle = std::move(spec);
        cell.seeds = seeds;
        parse_oracle(cell.oracle, c.target);
        cells.push_back(std::move(cell));
      };
      if (noise_sweep) {
        for (const auto& fam : families)
          for (double s : sigmas) add(s, fam, noise_oracle_spec(fam, s));
      } else {
        const auto oracle = parse_oracle(c.oracle, c.target);
        const bool additive = oracle.perturbation() == Perturbation::AdditiveNoise;
        add(additive ? oracle.noise().scale : 0.0, additive ? std::string(to_string(oracle.noise().family)) : "",
            c.oracle);
      }
      ++grid;
    }
  }
  return cells;
}

struct CellResult {
  SweepCell cell;
  int K = 0;
  double h_max = 0.0;
  double T = 0.0;
  bool theorem_compliant = false;
  std::uint64_t schedule_hash = 0;
  std::string oracle_descriptor;
  double w2 = 0.0;
  std::optional<BootstrapInterval> ci;
  bool certified = false;
  double eps_b_hat = 0.0;
  double eps_v_hat = 0.0;
  double eps_b_used = 0.0;
  double eps_v_used = 0.0;
  std::optional<TheoryBound> bound;
  bool bound_holds = false;  // upper CI (or the point value without bootstrap) <= bound total
  double m2bar = 1.0;
  std::uint64_t output_digest = 0;
  double wall_seconds = 0.0;
  std::vector<double> mean_norm;
};

inline std::uint64_t samples_digest(const Samples& xs) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (Eigen::Index i = 0; i < xs.size(); ++i) {
    const auto bits = std::bit_cast<std::uint64_t>(xs.data()[i]);
    for (int b = 0; b < 8; ++b) {
      h ^= (bits >> (8 * b)) & 0xffu;
      h *= 0x100000001b3ull;
    }
  }
  return h;
}

inline Schedule cell_schedule(const ExperimentConfig& c, const SweepCell& cell) {
  if (!c.schedule_params) return Schedule::from_times(c.explicit_times);
  ScheduleParams p = *c.schedule_params;
  if (cell.T1) p.T1 = *cell.T1;
  if (cell.K0) p.K0 = *cell.K0;
  return build_schedule(p);
}

/// Percentile bootstrap for the analytic-reference Bures estimator.
inline BootstrapInterval bootstrap_bures_analytic(const Samples& xs, const Vector& mean, const Vector& var,
                                                  std::size_t resamples, std::uint64_t seed, double level) {
  const auto n = static_cast<std::size_t>(xs.rows());
  std::vector<double> values(resamples);
  Samples sub(xs.rows(), xs.cols());
  for (std::size_t b = 0; b < resamples; ++b) {
    CounterRng rng(StreamId{seed, b, substreams::kBootstrap});
    for (std::size_t i = 0; i < n; ++i)
      sub.row(static_cast<Eigen::Index>(i)) = xs.row(static_cast<Eigen::Index>(rng.uniform_index(n)));
    values[b] = w2_bures_fit(sub, mean, var).value;
  }
  std::sort(values.begin(), values.end());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(resamples - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, resamples - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
  };
  return {quantile(0.5 * (1.0 - level)), quantile(0.5 * (1.0 + level)), resamples, level};
}

inline Json trajectory_to_json(const CellResult& r, const RunResult& run) {
  Json steps = Json::array();
  for (std::size_t s = 0; s < run.trajectory_steps.size(); ++s) {
    const Samples& z = run.trajectory[s];
    const Vector mean = z.colwise().mean().transpose();
    const Vector var = (z.rowwise() - mean.transpose()).colwise().squaredNorm().transpose() /
                       static_cast<double>(std::max<Eigen::Index>(1, z.rows() - 1));
    steps.push_back({{"k", run.trajectory_steps[s]}, {"mean", detail::vector_json(mean)},
                     {"var", detail::vector_json(var)}});
  }
  return Json{{"cell", r.cell.index}, {"schedule_hash", r.schedule_hash}, {"mean_norm", run.mean_norm},
              {"steps", std::move(steps)}};
}

/// Runs one cell: schedule, oracle, sampler, reference draw, W2, certification, bound.
inline CellResult run_cell(const ExperimentConfig& c, const SweepCell& cell, RunResult* run_out = nullptr) {
  const auto start = std::chrono::steady_clock::now();
  CellResult r;
  r.cell = cell;
  const Schedule schedule = cell_schedule(c, cell);
  r.K = schedule.K();
  r.h_max = schedule.h_max;
  r.T = schedule.horizon();
  r.theorem_compliant = schedule.theorem_compliant();
  r.schedule_hash = schedule.hash();
  auto oracle = std::make_shared<const ScoreOracle>(parse_oracle(cell.oracle, c.target));
  r.oracle_descriptor = oracle->descriptor();
  const unsigned threads = resolve_threads(c.threads);

  SamplerConfig sc;
  sc.schedule = schedule;
  sc.oracle = oracle;
  sc.n_chains = c.n_chains;
  sc.seed = cell.seeds.sampler;
  sc.trajectory_stride = c.record_trajectory;
  sc.threads = threads;
  RunResult run = run_ddpm(sc);
  r.output_digest = samples_digest(run.outputs);
  r.mean_norm = run.mean_norm;

  if (c.reference == W2Reference::Analytic) {
    const auto& gp = c.target->gaussian_params();
    r.w2 = w2_bures_fit(run.outputs, gp.mean, gp.var).value;
    if (c.bootstrap_resamples > 0)
      r.ci = bootstrap_bures_analytic(run.outputs, gp.mean, gp.var, c.bootstrap_resamples, cell.seeds.bootstrap,
                                      c.bootstrap_level);
  } else {
    const Samples ref = sample_target(*c.target, c.reference_count(), cell.seeds.reference);
    W2Options opt;
    opt.method = c.w2_method;
    opt.n_slices = c.n_slices;
    opt.seed = cell.seeds.slices;
    opt.threads = threads;
    r.w2 = w2_empirical(run.outputs, ref, opt).value;
    if (c.bootstrap_resamples > 0)
      r.ci = bootstrap_w2(run.outputs, ref, opt, c.bootstrap_resamples, cell.seeds.bootstrap, c.bootstrap_level);
  }

  const bool randomized = oracle->perturbation() != Perturbation::None;
  r.certified = c.certify.value_or(randomized);
  if (r.certified) {
    const auto probes = default_probes(*c.target, schedule, c.probes_per_time, cell.seeds.certify);
    const auto rep = certify_assumption2(*oracle, probes, c.certify_reps, derive_seed(cell.seeds.certify, 1));
    r.eps_b_hat = rep.eps_b_hat;
    r.eps_v_hat = rep.eps_v_hat;
    r.eps_b_used = rep.eps_b_hat;
    r.eps_v_used = rep.eps_v_hat;
  } else {
    r.eps_b_used = oracle->declared_eps_b();
    r.eps_v_used = oracle->declared_eps_v();
  }

  r.m2bar = c.target->normalized_second_moment();
  if (schedule.params && std::isfinite(r.eps_v_used)) {
    TheoryInputs in;
    in.constants = theory_constants(*c.target);
    in.T1 = schedule.params->T1;
    in.h_max = schedule.h_max;
    in.eps_b = r.eps_b_used;
    in.eps_v = r.eps_v_used;
    in.D = c.target->dim();
    in.m2bar = r.m2bar;
    r.bound = thm_bound(in);
    r.bound_holds = (r.ci ? r.ci->upper : r.w2) <= r.bound->total;
  }
  r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (run_out) *run_out = std::move(run);
  return r;
}

// ---------------------------------------------------------------------------
// Rate fits

enum class FloorMode { FinestCell, Explicit, None };
enum class RateAxis { HMax, SqrtHMax };

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  double floor = 0.0;
  std::size_t n_used = 0;
  std::vector<std::size_t> dropped;  // indices whose excess was not positive
};

/// Least squares of log y on log x.
inline RateFit fit_loglog(const std::vector<double>& x, const std::vector<double>& y) {
  require(x.size() == y.size(), "fit_rate: x and y sizes differ");
  RateFit f;
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0) || !std::isfinite(y[i])) {
      f.dropped.push_back(i);
      continue;
    }
    lx.push_back(std::log(x[i]));
    ly.push_back(std::log(y[i]));
  }
  f.n_used = lx.size();
  require(f.n_used >= 3, "fit_rate: fewer than 3 cells with positive excess");
  const double n = static_cast<double>(f.n_used);
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
    syy += (ly[i] - my) * (ly[i] - my);
  }
  require(sxx > 0.0, "fit_rate: x values do not vary");
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r2 = syy > 0.0 ? sxy * sxy / (sxx * syy) : 1.0;
  return f;
}

struct RateFitOptions {
  RateAxis axis = RateAxis::HMax;
  FloorMode floor = FloorMode::FinestCell;
  double floor_value = 0.0;  // FloorMode::Explicit
};

/// Excess error (W2 minus floor) against h_max or sqrt(h_max), log-log.
/// Cells must differ only in the grid resolution.
inline RateFit fit_rate(const std::vector<CellResult>& cells, const RateFitOptions& opt = {}) {
  require(cells.size() >= 3, "fit_rate: need at least 3 cells");
  for (const auto& c : cells) {
    require(c.cell.oracle == cells.front().cell.oracle && c.cell.T1 == cells.front().cell.T1,
            "fit_rate: cells must vary only in the grid resolution");
  }
  double floor = 0.0;
  if (opt.floor == FloorMode::FinestCell) {
    const auto finest = std::min_element(cells.begin(), cells.end(),
                                         [](const CellResult& a, const CellResult& b) { return a.h_max < b.h_max; });
    floor = finest->w2;
  } else if (opt.floor == FloorMode::Explicit) {
    floor = opt.floor_value;
  }
  std::vector<double> x, y;
  for (const auto& c : cells) {
    x.push_back(opt.axis == RateAxis::HMax ? c.h_max : std::sqrt(c.h_max));
    y.push_back(c.w2 - floor);
  }
  RateFit f = fit_loglog(x, y);
  f.floor = floor;
  return f;
}

// ---------------------------------------------------------------------------
// Records and output

struct ExperimentRecord {
  std::string name;
  std::string config_digest;
  Json config;
  std::vector<CellResult> cells;
  std::string status = "complete";
  std::string error;
  Json fits = Json::array();
};

inline const char* kCsvHeader =
    "cell,grid,T1,K0,K,T,h_max,theorem_compliant,oracle,sigma_zeta,noise_family,n_chains,n_reference,w2_method,"
    "w2,w2_ci_lower,w2_ci_upper,certified,eps_b_hat,eps_v_hat,eps_b_used,eps_v_used,theorem,a,m2bar,bound_init,"
    "bound_discr,bound_bias,bound_var,bound_prefactor,bound_total,bound_holds,master_seed,cell_seed,sampler_seed,"
    "reference_seed,bootstrap_seed,certify_seed,slice_seed,schedule_hash,output_digest,wall_seconds";

inline std::string csv_row(const ExperimentConfig& c, const CellResult& r) {
  std::ostringstream os;
  os << std::setprecision(17);
  auto opt_num = [&](auto v) {
    if (v) os << *v;
    os << ',';
  };
  os << r.cell.index << ',' << r.cell.grid_index << ',';
  opt_num(r.cell.T1);
  opt_num(r.cell.K0);
  os << r.K << ',' << r.T << ',' << r.h_max << ',' << (r.theorem_compliant ? 1 : 0) << ',' << r.cell.oracle << ','
     << r.cell.sigma_zeta << ',' << r.cell.noise_family << ',' << c.n_chains << ',' << c.reference_count() << ','
     << (c.reference == W2Reference::Analytic ? "bures_analytic" : std::string(to_string(c.w2_method))) << ','
     << r.w2 << ',';
  if (r.ci) {
    os << r.ci->lower << ',' << r.ci->upper << ',';
  } else {
    os << ",,";
  }
  os << (r.certified ? 1 : 0) << ',' << r.eps_b_hat << ',' << r.eps_v_hat << ',' << r.eps_b_used << ','
     << r.eps_v_used << ',';
  if (r.bound) {
    const auto& b = *r.bound;
    os << to_string(b.inputs.constants.theorem) << ',' << b.a << ',' << r.m2bar << ',' << b.terms.init << ','
       << b.terms.discr << ',' << b.terms.bias << ',' << b.terms.var << ',' << b.terms.prefactor << ',' << b.total
       << ',' << (r.bound_holds ? 1 : 0) << ',';
  } else {
    os << ",," << r.m2bar << ",,,,,,,,";
  }
  const auto& s = r.cell.seeds;
  os << s.master << ',' << s.cell << ',' << s.sampler << ',' << s.reference << ',' << s.bootstrap << ','
     << s.certify << ',' << s.slices << ',' << detail::hex64(r.schedule_hash) << ','
     << detail::hex64(r.output_digest) << ',' << r.wall_seconds;
  return os.str();
}

inline Json finite_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline Json cell_to_json(const CellResult& r) {
  Json j{{"cell", r.cell.index},
         {"grid", r.cell.grid_index},
         {"label", r.cell.label()},
         {"K", r.K},
         {"T", r.T},
         {"h_max", r.h_max},
         {"theorem_compliant", r.theorem_compliant},
         {"oracle", r.cell.oracle},
         {"oracle_descriptor", r.oracle_descriptor},
         {"sigma_zeta", r.cell.sigma_zeta},
         {"noise_family", r.cell.noise_family},
         {"w2", r.w2},
         {"certified", r.certified},
         {"eps_b_hat", r.eps_b_hat},
         {"eps_v_hat", r.eps_v_hat},
         {"eps_b_used", finite_or_null(r.eps_b_used)},
         {"eps_v_used", finite_or_null(r.eps_v_used)},
         {"m2bar", r.m2bar},
         {"mean_norm", r.mean_norm},
         {"schedule_hash", detail::hex64(r.schedule_hash)},
         {"output_digest", detail::hex64(r.output_digest)},
         {"wall_seconds", r.wall_seconds}};
  j["T1"] = r.cell.T1 ? Json(*r.cell.T1) : Json(nullptr);
  j["K0"] = r.cell.K0 ? Json(*r.cell.K0) : Json(nullptr);
  if (r.ci) j["w2_ci"] = {{"lower", r.ci->lower}, {"upper", r.ci->upper}, {"level", r.ci->level},
                          {"resamples", r.ci->resamples}};
  if (r.bound) {
    j["bound"] = theory_bound_to_json(*r.bound);
    j["bound_holds"] = r.bound_holds;
  }
  const auto& s = r.cell.seeds;
  j["seeds"] = {{"master", s.master},       {"cell", s.cell},       {"sampler", s.sampler},
                {"reference", s.reference}, {"bootstrap", s.bootstrap}, {"certify", s.certify},
                {"slices", s.slices}};
  return j;
}

inline Json record_to_json(const ExperimentRecord& rec) {
  Json cells = Json::array();
  for (const auto& c : rec.cells) cells.push_back(cell_to_json(c));
  Json j{{"schema_version", kConfigSchemaVersion}, {"tool", "ddpmw2"},      {"name", rec.name},
         {"config_digest", rec.config_digest},    {"status", rec.status},  {"n_cells", rec.cells.size()},
         {"config", rec.config},                   {"cells", std::move(cells)}, {"fits", rec.fits}};
  if (!rec.error.empty()) j["error"] = rec.error;
  return j;
}

/// Rate fits for every (T1, oracle) group with at least three K0 values.
inline Json automatic_fits(const std::vector<CellResult>& cells) {
  Json fits = Json::array();
  std::vector<bool> used(cells.size(), false);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (used[i]) continue;
    std::vector<CellResult> group;
    for (std::size_t k = i; k < cells.size(); ++k) {
      if (cells[k].cell.oracle == cells[i].cell.oracle && cells[k].cell.T1 == cells[i].cell.T1) {
        group.push_back(cells[k]);
        used[k] = true;
      }
    }
    if (group.size() < 3) continue;
    Json entry{{"oracle", group.front().cell.oracle}, {"x_axis", "h_max"}, {"floor", "finest_cell"}};
    entry["T1"] = group.front().cell.T1 ? Json(*group.front().cell.T1) : Json(nullptr);
    try {
      const auto f = fit_rate(group);
      entry.update({{"slope", f.slope}, {"intercept", f.intercept}, {"r2", f.r2}, {"n_used", f.n_used},
                    {"floor_value", f.floor}});
    } catch (const ValidationError& e) {
      entry["error"] = e.what();
    }
    fits.push_back(std::move(entry));
  }
  return fits;
}

struct RunOptions {
  std::optional<std::filesystem::path> out_dir;
  std::ostream* log = nullptr;
};

/// Runs every cell in order. CSV rows are flushed as cells finish; on a
/// failure the JSON envelope is written with status "aborted" and the error
/// is rethrown with the cell label attached.
inline ExperimentRecord run_experiment(const ExperimentConfig& c, const Json& config_json,
                                       const RunOptions& ro = {}) {
  ExperimentRecord rec;
  rec.name = c.name;
  rec.config = config_json;
  rec.config_digest = config_digest(config_json);
  const auto cells = expand_sweep(c);
  if (ro.log) *ro.log << "sweep '" << c.name << "': " << cells.size() << " cell(s)\n" << std::flush;

  std::ofstream csv;
  if (ro.out_dir) {
    std::filesystem::create_directories(*ro.out_dir);
    csv.open(*ro.out_dir / "results.csv");
    if (!csv) throw ValidationError("cannot write results.csv under " + ro.out_dir->string());
    csv << kCsvHeader << '\n' << std::flush;
  }
  auto write_envelope = [&] {
    if (!ro.out_dir) return;
    std::ofstream js(*ro.out_dir / "results.json");
    js << record_to_json(rec).dump(2) << '\n';
  };

  for (const auto& cell : cells) {
    try {
      RunResult run;
      CellResult r = run_cell(c, cell, c.record_trajectory > 0 ? &run : nullptr);
      if (ro.out_dir) {
        csv << csv_row(c, r) << '\n' << std::flush;
        if (c.record_trajectory > 0) {
          std::ofstream tj(*ro.out_dir / ("cell_" + std::to_string(cell.index) + "_trajectory.json"));
          tj << trajectory_to_json(r, run).dump() << '\n';
        }
      }
      if (ro.log)
        *ro.log << "  " << cell.label() << ": h_max=" << r.h_max << " w2=" << r.w2 << " (" << r.wall_seconds
                << " s)\n"
                << std::flush;
      rec.cells.push_back(std::move(r));
    } catch (const ValidationError& e) {
      rec.status = "aborted";
      rec.error = cell.label() + ": " + e.what();
      write_envelope();
      throw ValidationError(rec.error);
    } catch (const NumericalError& e) {
      rec.status = "aborted";
      rec.error = cell.label() + ": " + e.what();
      write_envelope();
      throw NumericalError(rec.error);
    }
  }
  rec.fits = automatic_fits(rec.cells);
  write_envelope();
  return rec;
}

inline ExperimentRecord run_experiment(const Json& config_json, const RunOptions& ro = {}) {
  return run_experiment(config_from_json(config_json), config_json, ro);
}

// ---------------------------------------------------------------------------
// Monotonicity along a sweep axis

struct MonotoneStep {
  std::size_t from = 0;
  std::size_t to = 0;
  bool increased = false;    // point estimate grew
  bool ci_separated = false;  // lower CI of `to` above upper CI of `from`
};

/// Checks consecutive cells (in the given order) for a nondecreasing W2.
/// Decreases with overlapping intervals are flagged, not failed.
inline std::vector<MonotoneStep> monotone_steps(const std::vector<CellResult>& ordered) {
  std::vector<MonotoneStep> out;
  for (std::size_t i = 0; i + 1 < ordered.size(); ++i) {
    MonotoneStep s;
    s.from = ordered[i].cell.index;
    s.to = ordered[i + 1].cell.index;
    s.increased = ordered[i + 1].w2 >= ordered[i].w2;
    if (ordered[i].ci && ordered[i + 1].ci) s.ci_separated = ordered[i + 1].ci->lower > ordered[i].ci->upper;
    out.push_back(s);
  }
  return out;
}

inline bool monotone_or_overlapping(const std::vector<CellResult>& ordered) {
  for (std::size_t i = 0; i + 1 < ordered.size(); ++i) {
    const auto& a = ordered[i];
    const auto& b = ordered[i + 1];
    if (b.w2 >= a.w2) continue;
    if (a.ci && b.ci && b.ci->upper >= a.ci->lower) continue;  // overlap: flagged only
    return false;
  }
  return true;
}

}  // namespace ddpmw2
