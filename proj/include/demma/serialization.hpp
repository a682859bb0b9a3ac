#pragma once

// JSON documents for mixture parameters, scan results, trained models and
// metrics reports. Doubles are written in shortest round-trip form so a
// write/read cycle reproduces every value bit for bit.

#include <cmath>
#include <cstddef>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "demma/error.hpp"
#include "demma/mixture.hpp"
#include "demma/pipeline.hpp"
#include "demma/threshold_scan.hpp"

namespace demma {

using Json = nlohmann::ordered_json;

inline constexpr int kMixtureFormatVersion = 1;
inline constexpr int kScanFormatVersion = 1;
inline constexpr int kMetricsFormatVersion = 1;

namespace detail {

inline double finite_or_throw(double v, const std::string& what) {
  if (!std::isfinite(v)) throw DomainError(what + " is not finite and cannot be serialized");
  return v;
}

inline const Json& field(const Json& j, const std::string& key, const std::string& ctx) {
  if (!j.is_object()) throw IngestionError(ctx + ": expected a JSON object");
  const auto it = j.find(key);
  if (it == j.end()) throw IngestionError(ctx + ": missing field '" + key + "'");
  return *it;
}

inline double number(const Json& j, const std::string& key, const std::string& ctx) {
  const Json& v = field(j, key, ctx);
  if (!v.is_number()) throw IngestionError(ctx + ": field '" + key + "' is not a number");
  return v.get<double>();
}

inline std::size_t count(const Json& j, const std::string& key, const std::string& ctx) {
  const Json& v = field(j, key, ctx);
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw IngestionError(ctx + ": field '" + key + "' is not a non-negative integer");
  }
  return v.get<std::size_t>();
}

inline void check_header(const Json& j, const std::string& kind, int version) {
  const Json& f = field(j, "format", kind);
  if (!f.is_string() || f.get<std::string>() != kind) {
    throw IngestionError("expected a '" + kind + "' document, found '" + (f.is_string() ? f.get<std::string>() : f.dump()) + "'");
  }
  const Json& v = field(j, "format_version", kind);
  if (!v.is_number_integer() || v.get<int>() != version) {
    throw IngestionError(kind + ": unsupported format_version " + v.dump() + " (expected " + std::to_string(version) + ")");
  }
}

inline std::vector<double> number_list(const Json& j, const std::string& ctx) {
  if (!j.is_array()) throw IngestionError(ctx + ": expected an array of numbers");
  std::vector<double> out;
  out.reserve(j.size());
  for (const Json& v : j) {
    if (!v.is_number()) throw IngestionError(ctx + ": non-numeric entry " + v.dump());
    out.push_back(v.get<double>());
  }
  return out;
}

inline Json tensor_to_json(const Tensor& t, const std::string& name) {
  Json rows = Json::array();
  for (std::size_t r = 0; r < t.rows(); ++r) {
    Json row = Json::array();
    for (std::size_t c = 0; c < t.cols(); ++c) row.push_back(finite_or_throw(t(r, c), name));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline void tensor_from_json(const Json& j, Tensor& t, const std::string& name) {
  if (!j.is_array() || j.size() != t.rows()) {
    throw ShapeError("weight '" + name + "' expected " + std::to_string(t.rows()) + " rows");
  }
  for (std::size_t r = 0; r < t.rows(); ++r) {
    const std::vector<double> row = number_list(j[r], "weight '" + name + "'");
    if (row.size() != t.cols()) {
      throw ShapeError("weight '" + name + "' row " + std::to_string(r) + " has " + std::to_string(row.size()) +
                       " entries, expected " + std::to_string(t.cols()));
    }
    for (std::size_t c = 0; c < t.cols(); ++c) t(r, c) = row[c];
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Files

inline Json read_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IngestionError("cannot open '" + path + "'");
  try {
    return Json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw IngestionError("'" + path + "' is not valid JSON: " + e.what());
  }
}

inline void write_json_file(const std::string& path, const Json& j) {
  std::ofstream os(path);
  if (!os) throw IngestionError("cannot write '" + path + "'");
  os << j.dump(2) << '\n';
  if (!os) throw IngestionError("write to '" + path + "' failed");
}

// ---------------------------------------------------------------------------
// Distribution parameters

inline Json to_json(const GpInvariantParams& g) {
  return Json{{"shape", detail::finite_or_throw(g.shape, "gp shape")},
              {"scale0", detail::finite_or_throw(g.scale0, "gp scale0")},
              {"zeta0", detail::finite_or_throw(g.zeta0, "gp zeta0")}};
}

inline GpInvariantParams gp_from_json(const Json& j) {
  return {detail::number(j, "shape", "gp"), detail::number(j, "scale0", "gp"), detail::number(j, "zeta0", "gp")};
}

inline Json to_json(const MixtureParams& m) {
  return Json{{"format", "demma-mixture"},
              {"format_version", kMixtureFormatVersion},
              {"p0", detail::finite_or_throw(m.p0, "p0")},
              {"p1", detail::finite_or_throw(m.p1, "p1")},
              {"u_star", detail::finite_or_throw(m.u_star, "u_star")},
              {"lognormal",
               {{"mu", detail::finite_or_throw(m.lognormal.mu, "lognormal mu")},
                {"sigma", detail::finite_or_throw(m.lognormal.sigma, "lognormal sigma")}}},
              {"gp", to_json(m.gp)}};
}

/// Reads and validates a mixture document.
inline MixtureParams mixture_from_json(const Json& j) {
  detail::check_header(j, "demma-mixture", kMixtureFormatVersion);
  MixtureParams m;
  m.p0 = detail::number(j, "p0", "mixture");
  m.p1 = detail::number(j, "p1", "mixture");
  m.u_star = detail::number(j, "u_star", "mixture");
  const Json& ln = detail::field(j, "lognormal", "mixture");
  m.lognormal = {detail::number(ln, "mu", "lognormal"), detail::number(ln, "sigma", "lognormal")};
  m.gp = gp_from_json(detail::field(j, "gp", "mixture"));
  m.validate();
  return m;
}

// ---------------------------------------------------------------------------
// Threshold scan

inline Json to_json(const ScanResult& s) {
  Json cands = Json::array();
  for (const ScanCandidate& c : s.candidates) {
    Json e{{"threshold", detail::finite_or_throw(c.threshold, "candidate threshold")}, {"n_exceed", c.n_exceed}};
    e["params"] = to_json(c.params);
    cands.push_back(std::move(e));
  }
  Json j{{"format", "demma-scan"},
         {"format_version", kScanFormatVersion},
         {"u_star", detail::finite_or_throw(s.u_star, "u_star")},
         {"stable", s.stable},
         {"index_lo", s.index_lo},
         {"index_hi", s.index_hi},
         {"max_dispersion", s.max_dispersion}};
  j["params"] = to_json(s.params);
  j["candidates"] = std::move(cands);
  return j;
}

inline ScanResult scan_from_json(const Json& j) {
  detail::check_header(j, "demma-scan", kScanFormatVersion);
  ScanResult s;
  s.u_star = detail::number(j, "u_star", "scan");
  const Json& stable = detail::field(j, "stable", "scan");
  if (!stable.is_boolean()) throw IngestionError("scan: field 'stable' is not a boolean");
  s.stable = stable.get<bool>();
  s.index_lo = detail::count(j, "index_lo", "scan");
  s.index_hi = detail::count(j, "index_hi", "scan");
  s.max_dispersion = detail::number(j, "max_dispersion", "scan");
  s.params = gp_from_json(detail::field(j, "params", "scan"));
  const Json& cands = detail::field(j, "candidates", "scan");
  if (!cands.is_array()) throw IngestionError("scan: 'candidates' is not an array");
  for (const Json& c : cands) {
    s.candidates.push_back({detail::number(c, "threshold", "scan candidate"),
                            gp_from_json(detail::field(c, "params", "scan candidate")),
                            detail::count(c, "n_exceed", "scan candidate")});
  }
  if (!s.candidates.empty() && (s.index_lo > s.index_hi || s.index_hi >= s.candidates.size())) {
    throw IngestionError("scan: stable window indices out of range");
  }
  return s;
}

// ---------------------------------------------------------------------------
// Model

inline Json to_json(const Hyperparameters& hp) {
  return Json{{"predictors", hp.predictors}, {"window", hp.window}, {"hidden", hp.hidden},
              {"heads", hp.heads},           {"tau", hp.tau},       {"w", hp.weight}};
}

inline Hyperparameters hyperparameters_from_json(const Json& j) {
  Hyperparameters hp;
  hp.predictors = detail::count(j, "predictors", "hyperparameters");
  hp.window = detail::count(j, "window", "hyperparameters");
  hp.hidden = detail::count(j, "hidden", "hyperparameters");
  hp.heads = detail::count(j, "heads", "hyperparameters");
  hp.tau = detail::number(j, "tau", "hyperparameters");
  hp.weight = detail::number(j, "w", "hyperparameters");
  return hp;
}

inline Json to_json(const DemmaModel& m) {
  Json weights = Json::object();
  m.for_each_parameter([&](const std::string& name, const Tensor& t) { weights[name] = detail::tensor_to_json(t, name); });
  Json st{{"mean", Json::array()}, {"stddev", Json::array()}};
  for (double v : m.standardization.mean) st["mean"].push_back(detail::finite_or_throw(v, "standardization mean"));
  for (double v : m.standardization.stddev) st["stddev"].push_back(detail::finite_or_throw(v, "standardization stddev"));
  Json j{{"format", "demma-model"}, {"format_version", m.format_version}};
  j["hyperparameters"] = to_json(m.hp);
  j["weights"] = std::move(weights);
  j["standardization"] = std::move(st);
  return j;
}

/// Rebuilds a model; every weight named by the architecture must be present
/// with the right shape and no unknown names are accepted.
inline DemmaModel model_from_json(const Json& j) {
  detail::check_header(j, "demma-model", kModelFormatVersion);
  const Hyperparameters hp = hyperparameters_from_json(detail::field(j, "hyperparameters", "model"));
  hp.validate();
  DemmaModel m = DemmaModel::zeros_like(hp);
  const Json& weights = detail::field(j, "weights", "model");
  if (!weights.is_object()) throw IngestionError("model: 'weights' is not an object");
  std::size_t seen = 0;
  m.for_each_parameter([&](const std::string& name, Tensor& t) {
    const auto it = weights.find(name);
    if (it == weights.end()) throw IngestionError("model: missing weight '" + name + "'");
    detail::tensor_from_json(*it, t, name);
    ++seen;
  });
  if (seen != weights.size()) {
    for (const auto& [name, _] : weights.items()) {
      bool known = false;
      m.for_each_parameter([&](const std::string& n, Tensor&) { known = known || n == name; });
      if (!known) throw IngestionError("model: unknown weight '" + name + "'");
    }
  }
  const Json& st = detail::field(j, "standardization", "model");
  m.standardization.mean = detail::number_list(detail::field(st, "mean", "standardization"), "standardization mean");
  m.standardization.stddev = detail::number_list(detail::field(st, "stddev", "standardization"), "standardization stddev");
  for (double s : m.standardization.stddev) {
    if (!(s > 0.0)) throw InvalidParameterization("standardization stddev must be > 0");
  }
  m.validate();
  return m;
}

// ---------------------------------------------------------------------------
// Metrics

inline Json to_json(const RegionMetric& r) {
  Json j{{"count", r.count}};
  if (r.rmse) {
    j["rmse"] = *r.rmse;
  } else {
    j["rmse"] = nullptr;  // no samples in the region
  }
  return j;
}

inline Json to_json(const MetricsReport& r) {
  Json j{{"format", "demma-metrics"},
         {"format_version", kMetricsFormatVersion},
         {"split_quantile", r.split_quantile},
         {"threshold", r.threshold},
         {"count", r.count},
         {"total_rmse", r.total_rmse}};
  j["zero"] = to_json(r.zero);
  j["moderate"] = to_json(r.moderate);
  j["extreme"] = to_json(r.extreme);
  return j;
}

inline MetricsReport metrics_from_json(const Json& j) {
  detail::check_header(j, "demma-metrics", kMetricsFormatVersion);
  MetricsReport r;
  r.split_quantile = detail::number(j, "split_quantile", "metrics");
  r.threshold = detail::number(j, "threshold", "metrics");
  r.count = detail::count(j, "count", "metrics");
  r.total_rmse = detail::number(j, "total_rmse", "metrics");
  auto region = [&](const char* key, RegionMetric& m) {
    const Json& e = detail::field(j, key, "metrics");
    m.count = detail::count(e, "count", key);
    const Json& v = detail::field(e, "rmse", key);
    if (!v.is_null()) m.rmse = detail::number(e, "rmse", key);
  };
  region("zero", r.zero);
  region("moderate", r.moderate);
  region("extreme", r.extreme);
  return r;
}

}  // namespace demma
