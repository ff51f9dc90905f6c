// SPDX-License-Identifier: Apache-2.0
// ddpmw2 command-line front end.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "ddpmw2/ddpmw2.hpp"

namespace {

using namespace ddpmw2;

constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;

Schedule schedule_arg(const std::string& text) { return schedule_from_json(json_arg(text)); }

void print(const Json& j) { std::cout << j.dump(2) << '\n'; }

Json with_seed_override(Json config, const std::optional<std::uint64_t>& seed) {
  if (seed) config["seed"] = *seed;
  return config;
}

int cmd_experiment(const std::string& config_path, const std::string& out_dir,
                   const std::optional<std::uint64_t>& seed) {
  const Json cfg = with_seed_override(read_json_file(config_path), seed);
  RunOptions ro;
  if (!out_dir.empty()) ro.out_dir = out_dir;
  ro.log = &std::cerr;
  const auto rec = run_experiment(cfg, ro);
  Json summary = record_to_json(rec);
  summary.erase("config");
  print(summary);
  return 0;
}

int cmd_run(const std::string& target_text, const std::string& schedule_text, const std::string& oracle_spec,
            std::size_t chains, std::uint64_t seed, const std::string& out_path, std::size_t stride) {
  auto target = std::make_shared<const TargetSpec>(target_from_json(json_arg(target_text)));
  SamplerConfig sc;
  sc.schedule = schedule_arg(schedule_text);
  sc.oracle = std::make_shared<const ScoreOracle>(parse_oracle(oracle_spec, target));
  sc.n_chains = chains;
  sc.seed = seed;
  sc.trajectory_stride = stride;
  const RunResult res = run_ddpm(sc);
  Vector mean, var;
  if (res.outputs.rows() >= 2) fit_diagonal_gaussian(res.outputs, mean, var);
  Json j{{"provenance",
          {{"seed", res.provenance.seed},
           {"schedule_hash", detail::hex64(res.provenance.schedule_hash)},
           {"oracle", res.provenance.oracle},
           {"n_chains", res.provenance.n_chains},
           {"K", res.provenance.K}}},
         {"target", target_to_json(*target)},
         {"schedule", schedule_to_json(sc.schedule)},
         {"mean_norm", res.mean_norm},
         {"oracle_calls", res.oracle_calls},
         {"total_oracle_calls", res.total_oracle_calls},
         {"output_digest", detail::hex64(samples_digest(res.outputs))}};
  if (res.outputs.rows() >= 2) {
    j["output_mean"] = detail::vector_json(mean);
    j["output_var"] = detail::vector_json(var);
  }
  if (!out_path.empty()) {
    write_samples(out_path, res.outputs);
    j["samples_file"] = out_path;
  }
  if (stride > 0) {
    Json steps = Json::array();
    for (std::size_t s = 0; s < res.trajectory_steps.size(); ++s) {
      const Samples& z = res.trajectory[s];
      steps.push_back({{"k", res.trajectory_steps[s]},
                       {"mean", detail::vector_json(z.colwise().mean().transpose())}});
    }
    j["trajectory"] = std::move(steps);
  }
  print(j);
  return 0;
}

int cmd_schedule(const std::string& params_text, std::optional<double> T1, std::optional<double> a,
                 std::optional<int> K0, std::optional<double> delta) {
  Schedule s;
  if (!params_text.empty()) {
    s = schedule_arg(params_text);
  } else {
    if (!T1 || !K0) throw ValidationError("schedule: give --params or both --T1 and --K0");
    ScheduleParams p;
    p.T1 = *T1;
    p.K0 = *K0;
    if (a) p.a = *a;
    p.delta = delta;
    s = build_schedule(p);
  }
  std::cout.precision(17);
  std::cout << "k,t,h,phase\n";
  for (int k = 0; k <= s.K() + 1; ++k) {
    const auto ku = static_cast<std::size_t>(k);
    std::cout << k << ',' << s.times[ku] << ',';
    if (k <= s.K()) std::cout << s.steps[ku] << ',' << to_string(s.phase(k));
    else std::cout << ",end";
    std::cout << '\n';
  }
  std::cout << "# h_max," << s.h_max << '\n';
  std::cout << "# T," << s.horizon() << '\n';
  std::cout << "# theorem_compliant," << (s.theorem_compliant() ? "true" : "false") << '\n';
  if (s.params) {
    std::cout << "# h_max_bound," << s.params->h_max_bound() << '\n';
    std::cout << "# K0_lower_bound," << s.params->k0_lower_bound() << '\n';
  }
  return 0;
}

struct BoundArgs {
  std::string theorem = "thm1";
  std::string target;
  double m = 1.0, M = 0.0, b = 0.0, T1 = 1.0, h_max = 0.1, eps_b = 0.0, eps_v = 0.0, m2bar = 1.0;
  int D = 1;
};

int cmd_bound(const BoundArgs& a) {
  TheoryInputs in;
  if (!a.target.empty()) {
    const TargetSpec t = target_from_json(json_arg(a.target));
    in.constants = theory_constants(t);
    in.D = t.dim();
    in.m2bar = t.normalized_second_moment();
  } else {
    in.constants = {parse_theorem(a.theorem), a.m, a.M, a.b};
    in.D = a.D;
    in.m2bar = a.m2bar;
  }
  in.T1 = a.T1;
  in.h_max = a.h_max;
  in.eps_b = a.eps_b;
  in.eps_v = a.eps_v;
  print(theory_bound_to_json(thm_bound(in)));
  return 0;
}

int cmd_w2(const std::string& x, const std::string& y, const std::string& method, std::size_t slices,
           std::uint64_t seed) {
  const Samples xs = read_samples(x);
  const Samples ys = read_samples(y);
  W2Options opt;
  opt.method = parse_w2_method(method);
  opt.n_slices = slices;
  opt.seed = seed;
  opt.threads = resolve_threads();
  const auto r = w2_empirical(xs, ys, opt);
  Json j = w2_result_to_json(r);
  j["seed"] = seed;
  print(j);
  return 0;
}

int cmd_certify(const std::string& target_text, const std::string& oracle_spec, const std::string& schedule_text,
                std::size_t per_time, std::size_t reps, std::uint64_t seed, bool points) {
  auto target = std::make_shared<const TargetSpec>(target_from_json(json_arg(target_text)));
  const ScoreOracle oracle = parse_oracle(oracle_spec, target);
  const Schedule s = schedule_arg(schedule_text);
  const auto probes = default_probes(*target, s, per_time, seed);
  const auto rep = certify_assumption2(oracle, probes, reps, derive_seed(seed, 1));
  Json j = certification_to_json(rep, points);
  j["oracle"] = oracle.descriptor();
  j["declared_eps_b"] = oracle.declared_eps_b();
  j["declared_eps_v"] = finite_or_null(oracle.declared_eps_v());
  print(j);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ddpmw2: DDPM sampling against analytic targets with W2 error bounds"};
  app.require_subcommand(1);
  std::optional<unsigned> threads;
  app.add_option("--threads", threads, "Worker threads (default: DDPMW2_THREADS or hardware)")->check(CLI::PositiveNumber);

  std::string config, out, target, schedule, oracle = "exact", params;
  std::optional<std::uint64_t> seed;
  std::size_t chains = 1000, stride = 0;

  auto* run = app.add_subcommand("run", "Run the sampler once, or an experiment config with --config");
  run->add_option("--config", config, "Experiment config (JSON file)");
  run->add_option("--target", target, "Target JSON (inline or path)");
  run->add_option("--schedule", schedule, "Schedule JSON: {T1, a, K0, delta} or {times: [...]}");
  run->add_option("--oracle", oracle, "exact | gauss:s | uniform:s | laplace:s | student3:s | compress");
  run->add_option("--chains", chains, "Number of chains")->check(CLI::PositiveNumber);
  run->add_option("--seed", seed, "Master seed");
  run->add_option("--out", out, "Binary sample file (or output directory with --config)");
  run->add_option("--trajectory-stride", stride, "Record every m-th state");

  std::optional<double> T1, a, delta;
  std::optional<int> K0;
  auto* sched = app.add_subcommand("schedule", "Print the two-phase grid as CSV");
  sched->add_option("--params", params, "Schedule JSON (inline or path)");
  sched->add_option("--T1", T1, "Arithmetic-phase horizon");
  sched->add_option("--a", a, "Envelope constant a >= 1");
  sched->add_option("--K0", K0, "Steps per phase");
  sched->add_option("--delta", delta, "Final step (default 0.5 exp(-2 T1))");

  BoundArgs ba;
  auto* bound = app.add_subcommand("bound", "Evaluate the W2 bound");
  bound->add_option("--theorem", ba.theorem, "thm1 | thm2");
  bound->add_option("--target", ba.target, "Derive constants, D and m2bar from a target JSON");
  bound->add_option("--m", ba.m, "Strong log-concavity constant");
  bound->add_option("--M", ba.M, "Semi-log-concavity constant");
  bound->add_option("--b", ba.b, "Bounded-part constant");
  bound->add_option("--T1", ba.T1, "T1");
  bound->add_option("--h-max", ba.h_max, "Largest step");
  bound->add_option("--eps-b", ba.eps_b, "Score bias level");
  bound->add_option("--eps-v", ba.eps_v, "Score spread level");
  bound->add_option("--D", ba.D, "Dimension");
  bound->add_option("--m2bar", ba.m2bar, "max(1, E|X|^2 / D)");

  std::string xfile, yfile, method = "exact_assignment";
  std::size_t slices = 256;
  std::uint64_t w2_seed = 0;
  auto* w2 = app.add_subcommand("w2", "Empirical W2 between two sample files");
  w2->add_option("x", xfile, "First sample file")->required();
  w2->add_option("y", yfile, "Second sample file")->required();
  w2->add_option("--method", method, "exact_assignment | sliced | bures_gaussian_fit");
  w2->add_option("--slices", slices, "Slices for the sliced estimator");
  w2->add_option("--seed", w2_seed, "Slice seed");

  double sigma2 = 1.0, horizon = 1.0;
  auto* go = app.add_subcommand("gaussian-oracle", "Backward-process moments for N(0, (1 + s2) I)");
  go->add_option("--sigma2", sigma2, "s2 > 0")->required();
  go->add_option("--T", horizon, "Horizon T > 0")->required();

  std::size_t per_time = 4, reps = 1000;
  bool points = false;
  auto* cert = app.add_subcommand("certify", "Estimate the oracle's bias and spread on forward-marginal probes");
  cert->add_option("--target", target, "Target JSON")->required();
  cert->add_option("--oracle", oracle, "Oracle spec")->required();
  cert->add_option("--schedule", schedule, "Schedule JSON")->required();
  cert->add_option("--probes-per-time", per_time, "Probes per grid time");
  cert->add_option("--reps", reps, "Queries per probe");
  cert->add_option("--seed", seed, "Seed");
  cert->add_flag("--points", points, "Include the per-probe breakdown");

  auto* sweep = app.add_subcommand("sweep", "Run an experiment config with sweep axes");
  sweep->add_option("--config", config, "Experiment config (JSON file)")->required();
  sweep->add_option("--out", out, "Output directory");
  sweep->add_option("--seed", seed, "Override the config seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    if (threads) setenv("DDPMW2_THREADS", std::to_string(*threads).c_str(), 1);
    if (*run) {
      if (!config.empty()) return cmd_experiment(config, out, seed);
      if (target.empty() || schedule.empty()) throw ValidationError("run: give --config, or --target and --schedule");
      return cmd_run(target, schedule, oracle, chains, seed.value_or(0), out, stride);
    }
    if (*sched) return cmd_schedule(params, T1, a, K0, delta);
    if (*bound) return cmd_bound(ba);
    if (*w2) return cmd_w2(xfile, yfile, method, slices, w2_seed);
    if (*go) {
      print(gaussian_moments_to_json(gaussian_backward_moments(sigma2, horizon)));
      return 0;
    }
    if (*cert) return cmd_certify(target, oracle, schedule, per_time, reps, seed.value_or(0), points);
    if (*sweep) return cmd_experiment(config, out, seed);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const Json::exception& e) {
    std::cerr << "error: malformed JSON input: " << e.what() << '\n';
    return kExitValidation;
  }
  return 0;
}
