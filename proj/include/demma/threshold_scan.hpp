#pragma once

// Threshold-stability scan. GP parameters are estimated over an increasing
// grid of candidate thresholds and converted to the threshold-invariant form;
// above the optimal threshold those estimates stay (approximately) constant.
// The left edge of the first window of W consecutive candidates whose
// relative parameter dispersion is below a tolerance (and whose medians agree
// with the candidates that follow it) is the optimal threshold.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <iomanip>
#include <limits>
#include <ostream>
#include <span>
#include <sstream>
#include <vector>

#include "demma/distributions.hpp"
#include "demma/error.hpp"

namespace demma {

struct ScanConfig {
  double quantile_lo = 0.70;
  double quantile_hi = 0.995;
  std::size_t grid_count = 60;
  std::size_t stability_window = 10;
  double dispersion_tol = 0.20;
  std::size_t min_exceedances = 30;
  // Number of following candidates whose medians must agree with the window's
  // medians (within dispersion_tol); 0 disables the check. Skipped when fewer
  // than 3 candidates follow the window.
  std::size_t lookahead = 10;

  void validate() const {
    if (!(quantile_lo > 0.0 && quantile_lo < quantile_hi && quantile_hi < 1.0)) {
      throw ConfigError("scan requires 0 < quantile_lo < quantile_hi < 1");
    }
    if (stability_window < 3) throw ConfigError("scan stability window must be >= 3");
    if (!(dispersion_tol > 0.0)) throw ConfigError("scan dispersion tolerance must be > 0");
    if (grid_count < 2) throw ConfigError("scan grid must have at least 2 points");
  }
};

struct ScanCandidate {
  double threshold = 0.0;
  GpInvariantParams params;
  std::size_t n_exceed = 0;
};

struct ScanResult {
  std::vector<ScanCandidate> candidates;
  std::size_t index_lo = 0;  // inclusive
  std::size_t index_hi = 0;  // inclusive
  double u_star = 0.0;
  GpInvariantParams params;
  bool stable = false;
  // Stability score of the chosen window: the largest relative dispersion or
  // forward disagreement over the three stability coordinates.
  double max_dispersion = 0.0;
};

namespace detail {

// Linear-interpolation empirical quantile of sorted data.
inline double sorted_quantile(std::span<const double> sorted, double level) {
  const double h = level * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double relative_dispersion(const std::vector<double>& v) {
  const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
  return (*mx - *mn) / std::max(std::fabs(median_of(v)), 1e-9);
}

}  // namespace detail

/// Candidate thresholds: empirical quantiles of the positive values at
/// `grid_count` evenly spaced levels in [quantile_lo, quantile_hi],
/// deduplicated to be strictly increasing.
inline std::vector<double> candidate_thresholds(std::span<const double> data, const ScanConfig& cfg) {
  cfg.validate();
  std::vector<double> positives;
  positives.reserve(data.size());
  for (double y : data) {
    if (!(y >= 0.0) || !std::isfinite(y)) throw DomainError("scan data must be finite and >= 0");
    if (y > 0.0) positives.push_back(y);
  }
  if (positives.empty()) throw InsufficientDataError("scan data has no positive values");
  std::sort(positives.begin(), positives.end());
  std::vector<double> grid;
  grid.reserve(cfg.grid_count);
  for (std::size_t k = 0; k < cfg.grid_count; ++k) {
    const double level = cfg.quantile_lo + (cfg.quantile_hi - cfg.quantile_lo) * static_cast<double>(k) /
                                               static_cast<double>(cfg.grid_count - 1);
    const double u = detail::sorted_quantile(positives, level);
    if (grid.empty() || u > grid.back()) grid.push_back(u);
  }
  return grid;
}

inline ScanResult scan_thresholds(std::span<const double> data, const ScanConfig& cfg = {}) {
  const std::vector<double> grid = candidate_thresholds(data, cfg);
  std::vector<double> sorted(data.begin(), data.end());
  std::sort(sorted.begin(), sorted.end());
  const double total = static_cast<double>(sorted.size());

  ScanResult result;
  GpFitOptions fit_opt;
  fit_opt.min_samples = cfg.min_exceedances;
  std::vector<double> z;
  for (double u : grid) {
    const auto first_above = std::upper_bound(sorted.begin(), sorted.end(), u);
    const auto count = static_cast<std::size_t>(sorted.end() - first_above);
    // Counts only decrease along the grid.
    if (count < cfg.min_exceedances) break;
    z.assign(first_above, sorted.end());
    for (double& v : z) v -= u;
    try {
      const GpFit fit = gp_fit_mle(z, fit_opt);
      const GpThresholdParams tp{fit.shape, fit.scale, static_cast<double>(count) / total, u};
      result.candidates.push_back({u, convert_to_invariant(tp), count});
    } catch (const ConvergenceError&) {
      continue;  // candidate dropped; the grid keeps its order
    } catch (const InvalidParameterization&) {
      continue;
    }
  }

  const std::size_t n = result.candidates.size();
  if (n < 3) {
    std::ostringstream os;
    os << "only " << n << " candidate thresholds had >= " << cfg.min_exceedances << " exceedances";
    throw InsufficientDataError(os.str());
  }
  const std::size_t w = std::min(cfg.stability_window, n);

  // Per-candidate stability coordinates: shape, scale0, and the exceedance
  // probability each candidate's invariant parameters imply at `ref`. The
  // last one is zeta0 rescaled to a common level; comparing zeta0 directly
  // amplifies small shape errors by a factor of ~ln(scale_u/scale0)/shape^2.
  auto coordinate = [&](std::size_t i, int which, double ref) {
    const auto& p = result.candidates[i].params;
    if (which == 0) return p.shape;
    if (which == 1) return p.scale0;
    return gp_exceedance_at(ref, p);
  };
  auto values = [&](std::size_t lo, std::size_t len, int which, double ref) {
    std::vector<double> v;
    v.reserve(len);
    for (std::size_t i = lo; i < lo + len; ++i) v.push_back(coordinate(i, which, ref));
    return v;
  };

  std::size_t best_lo = 0;
  double best_score = std::numeric_limits<double>::infinity();
  bool found = false;
  for (std::size_t lo = 0; lo + w <= n; ++lo) {
    const double ref = result.candidates[lo].threshold;
    const std::size_t next = lo + w;
    const bool look = cfg.lookahead > 0 && next + 3 <= n;
    double score = 0.0;
    for (int which = 0; which < 3; ++which) {
      const std::vector<double> win = values(lo, w, which, ref);
      score = std::max(score, detail::relative_dispersion(win));
      if (look) {
        const double here = detail::median_of(win);
        const double ahead = detail::median_of(values(next, std::min(cfg.lookahead, n - next), which, ref));
        score = std::max(score, std::fabs(ahead - here) / std::max(std::fabs(here), 1e-9));
      }
    }
    if (score < cfg.dispersion_tol) {
      best_lo = lo;
      best_score = score;
      found = true;
      break;
    }
    if (score < best_score) {
      best_score = score;
      best_lo = lo;
    }
  }

  auto raw_values = [&](int which) {
    std::vector<double> v;
    for (std::size_t i = best_lo; i < best_lo + w; ++i) {
      const auto& p = result.candidates[i].params;
      v.push_back(which == 0 ? p.shape : which == 1 ? p.scale0 : p.zeta0);
    }
    return v;
  };

  result.stable = found;
  result.index_lo = best_lo;
  result.index_hi = best_lo + w - 1;
  result.u_star = result.candidates[best_lo].threshold;
  result.max_dispersion = best_score;
  result.params.shape = detail::median_of(raw_values(0));
  result.params.scale0 = detail::median_of(raw_values(1));
  result.params.zeta0 = detail::median_of(raw_values(2));
  return result;
}

/// Per-candidate table as tab-separated values with a header row.
inline void write_scan_table(std::ostream& os, const ScanResult& r) {
  os << "threshold\tshape\tscale0\tzeta0\tn_exceed\tin_stable_window\n";
  os << std::setprecision(17);
  for (std::size_t i = 0; i < r.candidates.size(); ++i) {
    const auto& c = r.candidates[i];
    os << c.threshold << '\t' << c.params.shape << '\t' << c.params.scale0 << '\t' << c.params.zeta0 << '\t'
       << c.n_exceed << '\t' << ((i >= r.index_lo && i <= r.index_hi) ? 1 : 0) << '\n';
  }
}

}  // namespace demma
