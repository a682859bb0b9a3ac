#pragma once

// Zero-inflated mixture: an atom at zero (p0), a log-normal body truncated to
// (0, u*) carrying mass p1, and a threshold-invariant GP tail above u*.
//
//   CDF(0)              = p0
//   CDF(y), 0 < y < u*  = p0 + p1 * F_L(y) / F_L(u*)
//   CDF(y), y >= u*     = 1 - zeta0 * (1 + shape * y / scale0)^(-1/shape)
//
// p1 is fixed by continuity at u*: p1 = 1 - p0 - zeta_{u*}.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <vector>

#include "demma/distributions.hpp"
#include "demma/error.hpp"
#include "demma/nelder_mead.hpp"
#include "demma/random.hpp"
#include "demma/threshold_scan.hpp"

namespace demma {

struct MixtureParams {
  double p0 = 0.0;
  double p1 = 0.0;
  LogNormalParams lognormal;
  GpInvariantParams gp;
  double u_star = 1.0;

  /// Tail mass zeta_{u*} = 1 - CDF(u*).
  double tail_mass() const { return gp_exceedance_at(u_star, gp); }

  void validate() const {
    lognormal.validate();
    gp.validate();
    if (!(p0 >= 0.0 && p0 < 1.0)) throw InvalidParameterization("p0 must lie in [0, 1)");
    if (!(p1 > 0.0 && p1 < 1.0)) throw InvalidParameterization("p1 must lie in (0, 1)");
    if (!(u_star > 0.0) || !std::isfinite(u_star)) throw InvalidParameterization("u* must be > 0");
    const double zeta = tail_mass();
    if (!(zeta > 0.0 && zeta <= 1.0)) throw InvalidParameterization("tail mass at u* must lie in (0, 1]");
    if (std::fabs(p0 + p1 + zeta - 1.0) > 1e-12) {
      std::ostringstream os;
      os << "p0 + p1 + zeta_u* = " << (p0 + p1 + zeta) << " != 1";
      throw InvalidParameterization(os.str());
    }
  }
  bool operator==(const MixtureParams&) const = default;
};

/// Assembles a mixture with p1 set by continuity at u*.
inline MixtureParams make_mixture(double p0, const LogNormalParams& body, const GpInvariantParams& tail,
                                  double u_star) {
  MixtureParams m{p0, 0.0, body, tail, u_star};
  const double zeta = gp_exceedance_at(u_star, tail);
  m.p1 = 1.0 - p0 - zeta;
  if (!(m.p1 > 0.0)) {
    std::ostringstream os;
    os << "p1 = 1 - p0 - zeta_u* = " << m.p1 << " <= 0 (p0 = " << p0 << ", zeta_u* = " << zeta << ")";
    throw InconsistentComponentsError(os.str());
  }
  m.validate();
  return m;
}

/// Tail parameters (zeta0) chosen so that the tail carries mass `tail_mass` above u.
inline GpInvariantParams gp_with_tail_mass(double shape, double scale0, double u, double tail_mass) {
  GpInvariantParams g{shape, scale0, 1.0};
  g.zeta0 = tail_mass / gp_exceedance_at(u, g);
  return g;
}

// ---------------------------------------------------------------------------
// Evaluation

inline double mixture_cdf(double y, const MixtureParams& m) {
  if (y < 0.0) return 0.0;
  if (y == 0.0) return m.p0;
  if (y < m.u_star) return m.p0 + m.p1 * lognormal_cdf(y, m.lognormal) / lognormal_cdf(m.u_star, m.lognormal);
  if (y >= m.gp.upper_endpoint()) return 1.0;
  return gp_cdf_invariant(y, m.gp);
}

inline double mixture_quantile(double q, const MixtureParams& m) {
  if (!(q >= 0.0 && q < 1.0)) throw DomainError("mixture_quantile requires 0 <= q < 1");
  if (q <= m.p0) return 0.0;
  const double body_top = m.p0 + m.p1;
  if (q < body_top) {
    const double v = (q - m.p0) * lognormal_cdf(m.u_star, m.lognormal) / m.p1;
    if (!(v > 0.0)) return 0.0;
    return std::min(lognormal_quantile(v, m.lognormal), m.u_star);
  }
  // Clamp rounding just below the GP branch's lower edge.
  return std::max(gp_quantile_invariant(std::max(q, 1.0 - m.tail_mass()), m.gp), m.u_star);
}

/// Density of the continuous part (the zero atom excluded).
inline double mixture_density(double y, const MixtureParams& m) {
  if (!(y > 0.0)) throw DomainError("mixture_density requires y > 0");
  if (y < m.u_star) return m.p1 * lognormal_pdf(y, m.lognormal) / lognormal_cdf(m.u_star, m.lognormal);
  return gp_pdf_invariant(y, m.gp);
}

// ---------------------------------------------------------------------------
// Sampling

inline std::vector<double> sample_mixture(const MixtureParams& m, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<double> out(n);
  for (double& y : out) y = mixture_quantile(uniform01(rng), m);
  return out;
}

// ---------------------------------------------------------------------------
// Fitting

/// Untruncated log-normal estimate: mean and (population) standard deviation of ln y.
inline LogNormalParams lognormal_fit_closed_form(std::span<const double> y) {
  if (y.empty()) throw InsufficientDataError("log-normal fit needs at least one value");
  double s = 0.0;
  for (double v : y) s += std::log(v);
  const double mu = s / static_cast<double>(y.size());
  double ss = 0.0;
  for (double v : y) ss += (std::log(v) - mu) * (std::log(v) - mu);
  const double sd = std::sqrt(ss / static_cast<double>(y.size()));
  return {mu, sd > 0.0 ? sd : 1e-3};
}

/// Log-likelihood of a log-normal truncated to (0, upper).
inline double truncated_lognormal_loglik(std::span<const double> y, const LogNormalParams& p, double upper) {
  if (!(p.sigma > 0.0)) return -std::numeric_limits<double>::infinity();
  const double log_norm = std::log(lognormal_cdf(upper, p));
  if (!std::isfinite(log_norm)) return -std::numeric_limits<double>::infinity();
  double s = 0.0;
  for (double v : y) s += lognormal_log_pdf(v, p);
  return s - static_cast<double>(y.size()) * log_norm;
}

/// Maximum-likelihood truncated log-normal on (0, upper) by Nelder-Mead over
/// (mu, ln sigma), started at the untruncated closed form.
inline LogNormalParams fit_truncated_lognormal(std::span<const double> y, double upper) {
  const LogNormalParams start = lognormal_fit_closed_form(y);
  auto objective = [&](const std::vector<double>& x) {
    return -truncated_lognormal_loglik(y, {x[0], std::exp(x[1])}, upper);
  };
  NelderMeadOptions nm;
  nm.initial_step = {0.1, 0.1};
  nm.f_tolerance = 1e-13;
  nm.x_tolerance = 1e-9;
  const NelderMeadResult r = nelder_mead(objective, {start.mu, std::log(start.sigma)}, nm);
  if (!r.converged || !std::isfinite(r.value)) {
    std::ostringstream os;
    os << "truncated log-normal fit did not converge after " << r.iterations << " iterations";
    throw ConvergenceError(os.str());
  }
  return {r.x[0], std::exp(r.x[1])};
}

inline MixtureParams fit_mixture(std::span<const double> data, const ScanResult& scan) {
  if (data.empty()) throw InsufficientDataError("mixture fit on empty data");
  std::size_t zeros = 0;
  std::vector<double> body;
  for (double y : data) {
    if (!(y >= 0.0) || !std::isfinite(y)) throw DomainError("mixture data must be finite and >= 0");
    if (y == 0.0) {
      ++zeros;
    } else if (y < scan.u_star) {
      body.push_back(y);
    }
  }
  if (body.empty()) throw InsufficientDataError("no values in (0, u*) for the log-normal body");
  const double p0 = static_cast<double>(zeros) / static_cast<double>(data.size());
  const LogNormalParams ln = fit_truncated_lognormal(body, scan.u_star);
  return make_mixture(p0, ln, scan.params, scan.u_star);
}

// ---------------------------------------------------------------------------
// Diagnostics

/// Empirical vs model CDF on `points` equally spaced values in [0, max(data)].
/// Columns: y, empirical_cdf, model_cdf.
inline void write_cdf_diagnostics(std::ostream& os, std::span<const double> data, const MixtureParams& m,
                                  std::size_t points = 200) {
  if (data.empty()) throw InsufficientDataError("CDF diagnostics on empty data");
  if (points < 2) throw ConfigError("diagnostic grid needs at least 2 points");
  std::vector<double> sorted(data.begin(), data.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  os << "y\tempirical_cdf\tmodel_cdf\n" << std::setprecision(17);
  for (std::size_t i = 0; i < points; ++i) {
    const double y = sorted.back() * static_cast<double>(i) / static_cast<double>(points - 1);
    const auto le = std::upper_bound(sorted.begin(), sorted.end(), y) - sorted.begin();
    os << y << '\t' << static_cast<double>(le) / n << '\t' << mixture_cdf(y, m) << '\n';
  }
}

/// Log survival, empirical vs model, on `points` log-spaced values between the
/// smallest and largest positive observation; rows where the empirical
/// survival is zero are omitted. Columns: y, log_empirical_survival,
/// log_model_survival.
inline void write_survival_diagnostics(std::ostream& os, std::span<const double> data, const MixtureParams& m,
                                       std::size_t points = 200) {
  std::vector<double> sorted;
  for (double y : data)
    if (y > 0.0) sorted.push_back(y);
  if (sorted.empty()) throw InsufficientDataError("survival diagnostics need positive data");
  if (points < 2) throw ConfigError("diagnostic grid needs at least 2 points");
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(data.size());
  const double lo = std::log(sorted.front());
  const double hi = std::log(sorted.back());
  os << "y\tlog_empirical_survival\tlog_model_survival\n" << std::setprecision(17);
  for (std::size_t i = 0; i < points; ++i) {
    const double y = std::exp(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1));
    const auto above = sorted.end() - std::upper_bound(sorted.begin(), sorted.end(), y);
    if (above == 0) continue;
    os << y << '\t' << std::log(static_cast<double>(above) / n) << '\t' << std::log1p(-mixture_cdf(y, m)) << '\n';
  }
}

}  // namespace demma
