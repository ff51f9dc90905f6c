// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "ddpmw2/error.hpp"
#include "ddpmw2/oracle.hpp"
#include "ddpmw2/parallel.hpp"
#include "ddpmw2/rng.hpp"
#include "ddpmw2/schedule.hpp"
#include "ddpmw2/targets.hpp"

namespace ddpmw2 {

/// Draws alpha_t X + beta_t xi. Draw i reuses the target stream of
/// sample_target, so t = 0 reproduces sample_target exactly.
inline Samples forward_marginal_sample(const TargetSpec& target, double t, std::size_t n, std::uint64_t seed) {
  require(n >= 1, "forward_marginal_sample: n must be at least 1");
  const NoiseLevel level = NoiseLevel::at_time(t);
  Samples out = sample_target(target, n, seed);
  if (t == 0.0) return out;
  for (std::size_t i = 0; i < n; ++i) {
    CounterRng rng(StreamId{seed, i, substreams::kForwardNoise});
    auto row = out.row(static_cast<Eigen::Index>(i));
    for (Eigen::Index j = 0; j < row.size(); ++j) row[j] = level.alpha * row[j] + level.beta * rng.normal();
  }
  return out;
}

/// (1 + h) z + 2 h score + sqrt(2 h) xi, written to out (may alias z).
inline void ddpm_step(std::span<const double> z, double h, std::span<const double> score, std::span<const double> xi,
                      std::span<double> out) {
  const double noise = std::sqrt(2.0 * h);
  for (std::size_t j = 0; j < z.size(); ++j) out[j] = (1.0 + h) * z[j] + 2.0 * h * score[j] + noise * xi[j];
}

inline Vector ddpm_step(const Vector& z, double h, const Vector& score, const Vector& xi) {
  require(h > 0.0, "ddpm_step: h must be positive");
  require(score.size() == z.size() && xi.size() == z.size(), "ddpm_step: dimension mismatch");
  Vector out(z.size());
  ddpm_step(view(z), h, view(score), view(xi), view(out));
  return out;
}

struct SamplerConfig {
  Schedule schedule;
  std::shared_ptr<const ScoreOracle> oracle;
  std::size_t n_chains = 1;
  std::uint64_t seed = 0;
  std::size_t trajectory_stride = 0;  // record Z_k every this many steps; 0 disables
  unsigned threads = 0;               // 0 resolves via DDPMW2_THREADS / hardware
};

struct Provenance {
  std::uint64_t seed = 0;
  std::uint64_t schedule_hash = 0;
  std::string oracle;
  std::size_t n_chains = 0;
  int K = 0;
};

struct RunResult {
  Samples outputs;                          // n_chains x D, the Z_{K+1}
  std::vector<double> mean_norm;            // mean ||Z_k|| for k = 0..K+1
  std::vector<std::uint64_t> oracle_calls;  // per query index k = 0..K
  std::uint64_t total_oracle_calls = 0;
  Provenance provenance;
  std::vector<int> trajectory_steps;  // grid indices of the recorded states
  std::vector<Samples> trajectory;    // one n_chains x D block per recorded index
};

inline constexpr std::size_t kChainsPerChunk = 512;

/// Batched reverse iteration. Chain c draws Z_0 from substream 0, its k-th
/// oracle query from substream 2k+1 and xi_{k+1} from substream 2k+2 of
/// stream c, so results are independent of the worker count.
inline RunResult run_ddpm(const SamplerConfig& cfg) {
  require(cfg.oracle != nullptr, "run_ddpm: oracle is null");
  require(cfg.n_chains >= 1, "run_ddpm: need at least one chain");
  const Schedule& sched = cfg.schedule;
  require(sched.times.size() >= 3, "run_ddpm: schedule is empty");
  const ScoreOracle& oracle = *cfg.oracle;
  const int dim = oracle.dim();
  const int K = sched.K();
  const double T = sched.horizon();
  const std::size_t n = cfg.n_chains;
  const std::size_t n_chunks = (n + kChainsPerChunk - 1) / kChainsPerChunk;

  RunResult res;
  res.outputs.resize(static_cast<Eigen::Index>(n), dim);
  res.provenance = {cfg.seed, sched.hash(), oracle.descriptor(), n, K};
  if (cfg.trajectory_stride > 0) {
    for (int k = 0; k <= K + 1; k += static_cast<int>(cfg.trajectory_stride)) res.trajectory_steps.push_back(k);
    if (res.trajectory_steps.back() != K + 1) res.trajectory_steps.push_back(K + 1);
    res.trajectory.assign(res.trajectory_steps.size(), Samples(static_cast<Eigen::Index>(n), dim));
  }

  std::vector<double> query_times(static_cast<std::size_t>(K + 1));
  for (int k = 0; k <= K; ++k) query_times[static_cast<std::size_t>(k)] = T - sched.times[static_cast<std::size_t>(k)];

  std::vector<std::vector<double>> norm_sums(n_chunks);
  std::vector<std::vector<std::uint64_t>> call_counts(n_chunks);

  parallel_chunks(n_chunks, resolve_threads(cfg.threads), [&](std::size_t chunk) {
    auto& norms = norm_sums[chunk];
    auto& calls = call_counts[chunk];
    norms.assign(static_cast<std::size_t>(K + 2), 0.0);
    calls.assign(static_cast<std::size_t>(K + 1), 0);
    Vector z(dim), score(dim), xi(dim);
    const std::size_t first = chunk * kChainsPerChunk;
    const std::size_t last = std::min(n, first + kChainsPerChunk);
    for (std::size_t c = first; c < last; ++c) {
      std::size_t rec = 0;
      auto record = [&](int k) {
        if (rec < res.trajectory_steps.size() && res.trajectory_steps[rec] == k) {
          res.trajectory[rec].row(static_cast<Eigen::Index>(c)) = z.transpose();
          ++rec;
        }
      };
      {
        CounterRng rng(StreamId{cfg.seed, c, substreams::kInitialState});
        for (int j = 0; j < dim; ++j) z[j] = rng.normal();
      }
      norms[0] += z.norm();
      record(0);
      for (int k = 0; k <= K; ++k) {
        const auto ku = static_cast<std::size_t>(k);
        CounterRng query_rng(StreamId{cfg.seed, c, substreams::oracle(ku)});
        oracle.query(query_times[ku], view(z), query_rng, view(score));
        ++calls[ku];
        CounterRng noise_rng(StreamId{cfg.seed, c, substreams::innovation(ku)});
        for (int j = 0; j < dim; ++j) xi[j] = noise_rng.normal();
        ddpm_step(view(z), sched.steps[ku], view(score), view(xi), view(z));
        if (!z.allFinite()) {
          std::ostringstream msg;
          msg << "run_ddpm: non-finite state after step " << k << " (query time " << query_times[ku]
              << ") in chain " << c << "; oracle " << oracle.descriptor();
          throw NumericalError(msg.str());
        }
        norms[ku + 1] += z.norm();
        record(k + 1);
      }
      res.outputs.row(static_cast<Eigen::Index>(c)) = z.transpose();
    }
  });

  res.mean_norm.assign(static_cast<std::size_t>(K + 2), 0.0);
  res.oracle_calls.assign(static_cast<std::size_t>(K + 1), 0);
  for (std::size_t chunk = 0; chunk < n_chunks; ++chunk) {
    for (std::size_t k = 0; k < res.mean_norm.size(); ++k) res.mean_norm[k] += norm_sums[chunk][k];
    for (std::size_t k = 0; k < res.oracle_calls.size(); ++k) res.oracle_calls[k] += call_counts[chunk][k];
  }
  for (double& v : res.mean_norm) v /= static_cast<double>(n);
  for (auto v : res.oracle_calls) res.total_oracle_calls += v;
  return res;
}

/// Probe states drawn from the forward marginals at every query time T - t_k.
inline std::vector<ProbePoint> default_probes(const TargetSpec& target, const Schedule& schedule,
                                              std::size_t per_time, std::uint64_t seed) {
  require(per_time >= 1, "default_probes: need at least one probe per time");
  std::vector<ProbePoint> probes;
  const double T = schedule.horizon();
  for (int k = 0; k <= schedule.K(); ++k) {
    const double t = T - schedule.times[static_cast<std::size_t>(k)];
    const Samples xs = forward_marginal_sample(target, t, per_time, derive_seed(seed, static_cast<std::uint64_t>(k)));
    for (Eigen::Index i = 0; i < xs.rows(); ++i) probes.push_back({t, xs.row(i).transpose()});
  }
  return probes;
}

}  // namespace ddpmw2
