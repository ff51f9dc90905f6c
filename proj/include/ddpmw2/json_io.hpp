// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "ddpmw2/error.hpp"
#include "ddpmw2/metrics.hpp"
#include "ddpmw2/oracle.hpp"
#include "ddpmw2/schedule.hpp"
#include "ddpmw2/targets.hpp"
#include "ddpmw2/theory.hpp"

namespace ddpmw2 {

using Json = nlohmann::json;

// Numbers are written in the shortest decimal form that reads back to the
// same double, so every numeric field round-trips bit for bit.

namespace detail {

inline Json vector_json(const Vector& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline Json matrix_json(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(vector_json(m.row(i).transpose()));
  return rows;
}

inline const Json& field(const Json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw ValidationError(where + ": missing field '" + key + "'");
  return j.at(key);
}

inline double number(const Json& j, const std::string& where) {
  if (!j.is_number()) throw ValidationError(where + ": expected a number");
  return j.get<double>();
}

inline Vector vector_from(const Json& j, const std::string& where) {
  if (!j.is_array()) throw ValidationError(where + ": expected an array of numbers");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = number(j[i], where);
  return v;
}

inline Matrix matrix_from(const Json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) throw ValidationError(where + ": expected a non-empty array of rows");
  const std::size_t cols = j[0].is_array() ? j[0].size() : 0;
  Matrix m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < j.size(); ++i) {
    const Vector row = vector_from(j[i], where);
    if (static_cast<std::size_t>(row.size()) != cols) throw ValidationError(where + ": ragged rows");
    m.row(static_cast<Eigen::Index>(i)) = row.transpose();
  }
  return m;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Targets: {"kind": ..., "dim": D, "params": {...}}

inline Json target_to_json(const TargetSpec& t) {
  Json p;
  switch (t.kind()) {
    case TargetKind::Gaussian:
      p["mean"] = detail::vector_json(t.gaussian_params().mean);
      p["var"] = detail::vector_json(t.gaussian_params().var);
      break;
    case TargetKind::GaussianMixture:
      p["weights"] = detail::vector_json(t.mixture_params().weights);
      p["means"] = detail::matrix_json(t.mixture_params().means);
      p["var"] = t.mixture_params().var;
      break;
    case TargetKind::UniformBox: p["half_width"] = detail::vector_json(t.box_params().half_width); break;
    case TargetKind::SubspaceEmbedded:
      p["inner"] = target_to_json(*t.subspace_params().inner);
      p["basis"] = detail::matrix_json(t.subspace_params().basis);
      p["offset"] = detail::vector_json(t.subspace_params().offset);
      break;
    case TargetKind::Convolution:
      p["inner"] = target_to_json(*t.convolution_params().inner);
      p["tau"] = t.convolution_params().tau;
      break;
  }
  return Json{{"kind", std::string(to_string(t.kind()))}, {"dim", t.dim()}, {"params", p}};
}

inline TargetSpec target_from_json(const Json& j) {
  const std::string where = "target";
  const auto& kind_j = detail::field(j, "kind", where);
  if (!kind_j.is_string()) throw ValidationError("target: kind must be a string");
  const TargetKind kind = parse_target_kind(kind_j.get<std::string>());
  const auto& p = detail::field(j, "params", where);
  const std::string pw = "target." + std::string(to_string(kind));
  TargetSpec out = [&] {
    switch (kind) {
      case TargetKind::Gaussian:
        return TargetSpec::gaussian(detail::vector_from(detail::field(p, "mean", pw), pw + ".mean"),
                                    detail::vector_from(detail::field(p, "var", pw), pw + ".var"));
      case TargetKind::GaussianMixture:
        return TargetSpec::mixture(detail::vector_from(detail::field(p, "weights", pw), pw + ".weights"),
                                   detail::matrix_from(detail::field(p, "means", pw), pw + ".means"),
                                   detail::number(detail::field(p, "var", pw), pw + ".var"));
      case TargetKind::UniformBox:
        return TargetSpec::uniform_box(detail::vector_from(detail::field(p, "half_width", pw), pw + ".half_width"));
      case TargetKind::SubspaceEmbedded:
        return TargetSpec::subspace(target_from_json(detail::field(p, "inner", pw)),
                                    detail::matrix_from(detail::field(p, "basis", pw), pw + ".basis"),
                                    detail::vector_from(detail::field(p, "offset", pw), pw + ".offset"));
      case TargetKind::Convolution:
        return TargetSpec::convolution(target_from_json(detail::field(p, "inner", pw)),
                                       detail::number(detail::field(p, "tau", pw), pw + ".tau"));
    }
    throw ValidationError("target: unsupported kind");
  }();
  if (j.contains("dim") && j.at("dim").get<int>() != out.dim())
    throw ValidationError("target: declared dim does not match the parameters");
  return out;
}

// ---------------------------------------------------------------------------
// Schedules: {"T1", "a", "K0", "delta"?} or {"times": [...]}

inline Json schedule_params_to_json(const ScheduleParams& p) {
  Json j{{"T1", p.T1}, {"a", p.a}, {"K0", p.K0}};
  if (p.delta) j["delta"] = *p.delta;
  return j;
}

inline ScheduleParams schedule_params_from_json(const Json& j) {
  ScheduleParams p;
  p.T1 = detail::number(detail::field(j, "T1", "schedule"), "schedule.T1");
  p.a = j.contains("a") ? detail::number(j.at("a"), "schedule.a") : 1.0;
  const auto& k0 = detail::field(j, "K0", "schedule");
  if (!k0.is_number_integer()) throw ValidationError("schedule.K0 must be an integer");
  p.K0 = k0.get<int>();
  if (j.contains("delta") && !j.at("delta").is_null()) p.delta = detail::number(j.at("delta"), "schedule.delta");
  p.validate();
  return p;
}

inline Schedule schedule_from_json(const Json& j) {
  if (j.is_array()) return Schedule::from_times(j.get<std::vector<double>>());
  if (j.is_object() && j.contains("times")) return Schedule::from_times(j.at("times").get<std::vector<double>>());
  return build_schedule(schedule_params_from_json(j));
}

inline Json schedule_to_json(const Schedule& s) {
  Json j{{"times", s.times}, {"h_max", s.h_max}, {"K", s.K()}, {"T", s.horizon()},
         {"hash", s.hash()}, {"theorem_compliant", s.theorem_compliant()}};
  if (s.params) {
    j["params"] = schedule_params_to_json(*s.params);
    j["delta"] = s.params->delta_value();
    j["geometric_c"] = s.geometric_c;
  }
  return j;
}

// ---------------------------------------------------------------------------
// Reports

inline Json theory_bound_to_json(const TheoryBound& b) {
  const auto& in = b.inputs;
  return Json{{"theorem", std::string(to_string(in.constants.theorem))},
              {"inputs",
               {{"m", in.constants.m},
                {"M", in.constants.M},
                {"b", in.constants.b},
                {"T1", in.T1},
                {"h_max", in.h_max},
                {"eps_b", in.eps_b},
                {"eps_v", in.eps_v},
                {"D", in.D},
                {"m2bar", in.m2bar}}},
              {"a", b.a},
              {"terms",
               {{"init", b.terms.init},
                {"discr", b.terms.discr},
                {"bias", b.terms.bias},
                {"var", b.terms.var},
                {"prefactor", b.terms.prefactor}}},
              {"total_per_sqrt_d", b.total_per_sqrt_d},
              {"total", b.total}};
}

inline Json gaussian_moments_to_json(const GaussianBackwardMoments& g) {
  return Json{{"sigma2", g.sigma2},   {"T", g.T},        {"var_YT", g.var_YT},
              {"w2_per_sqrt_d", g.w2_per_sqrt_d}, {"ratio", g.ratio}};
}

inline Json w2_result_to_json(const EmpiricalW2Result& r) {
  Json j{{"method", std::string(to_string(r.method))}, {"value", r.value}, {"n", r.n}, {"m", r.m}, {"seed", r.seed}};
  if (r.method == W2Method::ExactAssignment) j["permutation_digest"] = r.permutation_digest;
  if (r.method == W2Method::Sliced) j["n_slices"] = r.n_slices;
  if (r.method == W2Method::BuresGaussianFit) {
    j["mean_x"] = detail::vector_json(r.mean_x);
    j["var_x"] = detail::vector_json(r.var_x);
    j["mean_y"] = detail::vector_json(r.mean_y);
    j["var_y"] = detail::vector_json(r.var_y);
  }
  return j;
}

inline Json certification_to_json(const CertificationReport& c, bool with_points) {
  Json j{{"eps_b_hat", c.eps_b_hat}, {"eps_v_hat", c.eps_v_hat}, {"exact_eps_b", c.exact_eps_b},
         {"exact_eps_v", c.exact_eps_v}, {"uniform", c.uniform}, {"n_reps", c.n_reps},
         {"n_points", c.points.size()}};
  if (with_points) {
    Json pts = Json::array();
    for (const auto& p : c.points)
      pts.push_back({{"t", p.t}, {"eps_b_hat", p.eps_b_hat}, {"eps_v_hat", p.eps_v_hat},
                     {"score_norm", p.score_norm}, {"exact_eps_v", p.exact_eps_v}});
    j["points"] = std::move(pts);
  }
  return j;
}

inline Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ValidationError("'" + path + "' is not valid JSON: " + e.what());
  }
}

/// Accepts inline JSON text or a path to a JSON file.
inline Json json_arg(const std::string& text_or_path) {
  const auto first = text_or_path.find_first_not_of(" \t\n");
  if (first != std::string::npos && (text_or_path[first] == '{' || text_or_path[first] == '[')) {
    try {
      return Json::parse(text_or_path);
    } catch (const Json::parse_error& e) {
      throw ValidationError(std::string("invalid inline JSON: ") + e.what());
    }
  }
  return read_json_file(text_or_path);
}

}  // namespace ddpmw2
