#pragma once

// Probability kernels: log-normal CDF, the generalized Pareto (GP) law in its
// threshold-dependent and threshold-independent forms, conversion between
// the two, and maximum-likelihood GP fitting.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <sstream>
#include <vector>

#include "demma/error.hpp"
#include "demma/nelder_mead.hpp"
#include "demma/special.hpp"

namespace demma {

// |shape| below this switches to the exponential (shape = 0) branch.
inline constexpr double kShapeZeroTol = 1e-8;

/// GP parameters tied to a threshold u: exceedances y - u follow
/// GP(shape, scale) and occur with probability exceed_prob.
struct GpThresholdParams {
  double shape = 0.0;
  double scale = 1.0;
  double exceed_prob = 1.0;
  double threshold = 0.0;

  void validate() const {
    if (!(scale > 0.0) || !std::isfinite(scale)) throw InvalidParameterization("GP scale must be > 0");
    if (!(exceed_prob > 0.0 && exceed_prob <= 1.0)) {
      throw InvalidParameterization("GP exceedance probability must lie in (0, 1]");
    }
    if (!(threshold >= 0.0) || !std::isfinite(shape)) {
      throw InvalidParameterization("GP threshold must be >= 0 and shape finite");
    }
  }
  // Upper endpoint of the support; +inf for shape >= 0.
  double upper_endpoint() const {
    return shape < 0.0 ? threshold - scale / shape : std::numeric_limits<double>::infinity();
  }
};

/// Threshold-invariant GP parameters (shape, scale0, zeta0). zeta0 is a
/// parameter and may exceed 1.
struct GpInvariantParams {
  double shape = 0.0;
  double scale0 = 1.0;
  double zeta0 = 1.0;

  void validate() const {
    if (!(scale0 > 0.0) || !std::isfinite(scale0)) throw InvalidParameterization("GP scale0 must be > 0");
    if (!(zeta0 > 0.0) || !std::isfinite(zeta0)) throw InvalidParameterization("GP zeta0 must be > 0");
    if (!std::isfinite(shape)) throw InvalidParameterization("GP shape must be finite");
  }
  double upper_endpoint() const {
    return shape < 0.0 ? -scale0 / shape : std::numeric_limits<double>::infinity();
  }
  bool operator==(const GpInvariantParams&) const = default;
};

struct LogNormalParams {
  double mu = 0.0;
  double sigma = 1.0;

  void validate() const {
    if (!(sigma > 0.0) || !std::isfinite(sigma) || !std::isfinite(mu)) {
      throw InvalidParameterization("log-normal sigma must be > 0 and mu finite");
    }
  }
  bool operator==(const LogNormalParams&) const = default;
};

namespace detail {

// (1 + shape * z)^(-1/shape), or exp(-z) as shape -> 0. Requires 1 + shape*z > 0.
inline double gp_survival_standard(double shape, double z) {
  if (std::fabs(shape) < kShapeZeroTol) return std::exp(-z);
  return std::exp(-std::log1p(shape * z) / shape);
}

inline double gp_log_survival_standard(double shape, double z) {
  if (std::fabs(shape) < kShapeZeroTol) return -z;
  return -std::log1p(shape * z) / shape;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Log-normal

inline double lognormal_cdf(double y, const LogNormalParams& p) {
  if (!(y > 0.0)) throw DomainError("lognormal_cdf requires y > 0");
  const double z = (std::log(y) - p.mu) / p.sigma;
  return 0.5 * demma::erfc(-z / std::numbers::sqrt2);
}

inline double lognormal_log_pdf(double y, const LogNormalParams& p) {
  if (!(y > 0.0)) throw DomainError("lognormal_log_pdf requires y > 0");
  const double ly = std::log(y);
  const double z = (ly - p.mu) / p.sigma;
  return -0.5 * z * z - ly - std::log(p.sigma) - 0.5 * std::log(2.0 * std::numbers::pi);
}

inline double lognormal_pdf(double y, const LogNormalParams& p) { return std::exp(lognormal_log_pdf(y, p)); }

inline double lognormal_quantile(double q, const LogNormalParams& p) {
  if (!(q > 0.0 && q < 1.0)) throw DomainError("lognormal_quantile requires 0 < q < 1");
  return std::exp(p.mu + p.sigma * std::numbers::sqrt2 * erf_inv(2.0 * q - 1.0));
}

// ---------------------------------------------------------------------------
// Generalized Pareto, threshold-dependent form

inline double gp_cdf_threshold(double y, const GpThresholdParams& p) {
  if (!(y >= p.threshold)) throw DomainError("gp_cdf_threshold requires y >= threshold");
  const double z = (y - p.threshold) / p.scale;
  if (std::fabs(p.shape) >= kShapeZeroTol && !(1.0 + p.shape * z > 0.0)) {
    throw DomainError("gp_cdf_threshold: y beyond the upper endpoint of the support");
  }
  return -std::expm1(detail::gp_log_survival_standard(p.shape, z));
}

// ---------------------------------------------------------------------------
// Generalized Pareto, threshold-invariant form

inline double gp_cdf_invariant(double y, const GpInvariantParams& p) {
  if (!(y >= 0.0)) throw DomainError("gp_cdf_invariant requires y >= 0");
  const double z = y / p.scale0;
  if (std::fabs(p.shape) >= kShapeZeroTol && !(1.0 + p.shape * z > 0.0)) {
    throw DomainError("gp_cdf_invariant: y beyond the upper endpoint of the support");
  }
  return 1.0 - p.zeta0 * detail::gp_survival_standard(p.shape, z);
}

/// Tail probability zeta_u = 1 - F(u) implied at level u.
inline double gp_exceedance_at(double u, const GpInvariantParams& p) {
  if (!(u >= 0.0)) throw DomainError("gp_exceedance_at requires u >= 0");
  const double z = u / p.scale0;
  if (std::fabs(p.shape) >= kShapeZeroTol && !(1.0 + p.shape * z > 0.0)) return 0.0;
  return p.zeta0 * detail::gp_survival_standard(p.shape, z);
}

inline double gp_pdf_invariant(double y, const GpInvariantParams& p) {
  if (!(y >= 0.0)) throw DomainError("gp_pdf_invariant requires y >= 0");
  const double z = y / p.scale0;
  if (std::fabs(p.shape) < kShapeZeroTol) return p.zeta0 / p.scale0 * std::exp(-z);
  const double base = 1.0 + p.shape * z;
  if (!(base > 0.0)) return 0.0;
  return p.zeta0 / p.scale0 * std::exp(-(1.0 / p.shape + 1.0) * std::log1p(p.shape * z));
}

/// Inverse of gp_cdf_invariant on [max(0, 1 - zeta0), 1).
inline double gp_quantile_invariant(double q, const GpInvariantParams& p) {
  if (!(q < 1.0) || !(q >= 1.0 - p.zeta0) || !(q >= 0.0)) {
    throw DomainError("gp_quantile_invariant requires max(0, 1 - zeta0) <= q < 1");
  }
  // log((1 - q) / zeta0) <= 0
  const double log_ratio = std::log1p(-q) - std::log(p.zeta0);
  if (std::fabs(p.shape) < kShapeZeroTol) return std::max(0.0, -p.scale0 * log_ratio);
  return std::max(0.0, p.scale0 / p.shape * std::expm1(-p.shape * log_ratio));
}

// ---------------------------------------------------------------------------
// Reparameterization

/// zeta0 from the first algebraic form: zeta_u * (1 + shape * u / scale0)^(1/shape).
inline double zeta0_from_scale0(const GpThresholdParams& p) {
  const double scale0 = p.scale - p.shape * p.threshold;
  if (std::fabs(p.shape) < kShapeZeroTol) return p.exceed_prob * std::exp(p.threshold / scale0);
  return p.exceed_prob * std::exp(std::log1p(p.shape * p.threshold / scale0) / p.shape);
}

/// zeta0 from the second algebraic form: zeta_u * (1 - shape * u / scale_u)^(-1/shape).
inline double zeta0_from_scale_u(const GpThresholdParams& p) {
  if (std::fabs(p.shape) < kShapeZeroTol) return p.exceed_prob * std::exp(p.threshold / p.scale);
  return p.exceed_prob * std::exp(-std::log1p(-p.shape * p.threshold / p.scale) / p.shape);
}

inline GpInvariantParams convert_to_invariant(const GpThresholdParams& p) {
  p.validate();
  const double scale0 = p.scale - p.shape * p.threshold;
  if (!(scale0 > 0.0)) {
    std::ostringstream os;
    os << "scale - shape * threshold = " << scale0 << " <= 0";
    throw InvalidParameterization(os.str());
  }
  return {p.shape, scale0, zeta0_from_scale0(p)};
}

/// Threshold-dependent parameters implied at level u (inverse conversion).
inline GpThresholdParams convert_to_threshold(const GpInvariantParams& p, double u) {
  p.validate();
  if (!(u >= 0.0) || !(u < p.upper_endpoint())) {
    throw DomainError("convert_to_threshold requires 0 <= u < upper endpoint");
  }
  return {p.shape, p.scale0 + p.shape * u, gp_exceedance_at(u, p), u};
}

// ---------------------------------------------------------------------------
// Maximum likelihood

struct GpFit {
  double shape = 0.0;
  double scale = 1.0;
  double loglik = 0.0;
  std::size_t iterations = 0;
};

struct GpFitOptions {
  std::size_t min_samples = 30;
  std::size_t max_iterations = 4000;
};

/// GP log-likelihood of exceedances z > 0; -inf outside the feasible set
/// (1 + shape * z_i / scale <= 1e-12 for some i).
inline double gp_loglik(std::span<const double> z, double shape, double scale) {
  if (!(scale > 0.0)) return -std::numeric_limits<double>::infinity();
  const double n = static_cast<double>(z.size());
  if (std::fabs(shape) < kShapeZeroTol) {
    double s = 0.0;
    for (double v : z) s += v;
    return -n * std::log(scale) - s / scale;
  }
  const double k = shape / scale;
  double s = 0.0;
  for (double v : z) {
    const double arg = k * v;
    if (!(1.0 + arg > 1e-12)) return -std::numeric_limits<double>::infinity();
    s += std::log1p(arg);
  }
  return -n * std::log(scale) - (1.0 + 1.0 / shape) * s;
}

/// Probability-weighted-moment estimates (Hosking & Wallis, 1987).
inline GpFit gp_fit_pwm(std::span<const double> z) {
  std::vector<double> sorted(z.begin(), z.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  double a0 = 0.0;
  double a1 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    a0 += sorted[i];
    a1 += sorted[i] * static_cast<double>(n - 1 - i) / static_cast<double>(n - 1);
  }
  a0 /= static_cast<double>(n);
  a1 /= static_cast<double>(n);
  const double denom = a0 - 2.0 * a1;
  GpFit fit;
  if (denom > 0.0) {
    // Hosking's k is -shape.
    fit.shape = -(a0 / denom - 2.0);
    fit.scale = 2.0 * a0 * a1 / denom;
  } else {
    fit.shape = 0.0;
    fit.scale = a0;
  }
  if (!(fit.scale > 0.0)) {
    fit.shape = 0.0;
    fit.scale = std::max(a0, 1e-12);
  }
  fit.shape = std::clamp(fit.shape, -0.45, 0.95);
  fit.loglik = gp_loglik(z, fit.shape, fit.scale);
  return fit;
}

/// Maximum-likelihood GP fit by Nelder-Mead over (shape, log scale),
/// started from the probability-weighted-moment estimates.
inline GpFit gp_fit_mle(std::span<const double> exceedances, const GpFitOptions& opt = {}) {
  if (exceedances.size() < std::max<std::size_t>(opt.min_samples, 2)) {
    std::ostringstream os;
    os << "GP fit needs at least " << opt.min_samples << " exceedances, got " << exceedances.size();
    throw InsufficientDataError(os.str());
  }
  double max_z = 0.0;
  for (double v : exceedances) {
    if (!(v > 0.0) || !std::isfinite(v)) throw DomainError("GP exceedances must be finite and > 0");
    max_z = std::max(max_z, v);
  }

  GpFit start = gp_fit_pwm(exceedances);
  // Pull infeasible starting points (shape < 0 with too small a scale) back inside the support.
  if (start.shape < 0.0 && !(1.0 + start.shape * max_z / start.scale > 1e-6)) {
    start.scale = -start.shape * max_z * 1.1;
  }
  if (!std::isfinite(gp_loglik(exceedances, start.shape, start.scale))) {
    start.shape = 0.0;
  }

  // Shape <= -1 makes the likelihood unbounded; excluded from the search.
  auto objective = [&](const std::vector<double>& x) {
    if (x[0] <= -1.0) return std::numeric_limits<double>::infinity();
    return -gp_loglik(exceedances, x[0], std::exp(x[1]));
  };

  NelderMeadOptions nm;
  nm.max_iterations = opt.max_iterations;
  nm.initial_step = {0.05, 0.1};
  nm.f_tolerance = 1e-13;
  nm.x_tolerance = 1e-8;
  const NelderMeadResult r = nelder_mead(objective, {start.shape, std::log(start.scale)}, nm);
  if (!r.converged || !std::isfinite(r.value)) {
    std::ostringstream os;
    os << "GP maximum likelihood did not converge after " << r.iterations << " iterations ("
       << r.evaluations << " evaluations), last -loglik = " << r.value;
    throw ConvergenceError(os.str());
  }
  GpFit fit;
  fit.shape = r.x[0];
  fit.scale = std::exp(r.x[1]);
  fit.loglik = -r.value;
  fit.iterations = r.iterations;
  return fit;
}

}  // namespace demma
