#include "demma/distributions.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "oracles.hpp"

namespace demma {
namespace {

// Inverse-transform GP sampler written directly from the closed-form
// quantile of the standard GP law, independent of the library's inverses.
std::vector<double> draw_gp(double shape, double scale, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> z(n);
  for (double& v : z) {
    double u = 0.0;
    do {
      u = unif(rng);
    } while (u == 0.0);
    v = shape == 0.0 ? -scale * std::log(u) : scale / shape * (std::pow(u, -shape) - 1.0);
  }
  return z;
}

TEST(LogNormal, MedianAndLimits) {
  const LogNormalParams p{1.3, 0.7};
  EXPECT_NEAR(lognormal_cdf(std::exp(1.3), p), 0.5, 1e-15);
  EXPECT_LT(lognormal_cdf(1e-200, p), 1e-100);
  EXPECT_THROW(lognormal_cdf(0.0, p), DomainError);
  EXPECT_THROW(lognormal_cdf(-1.0, p), DomainError);
}

TEST(LogNormal, StandardNormalAtOneMatchesQuadrature) {
  // Phi(1) = 1/2 + (1/sqrt(2 pi)) * integral_0^1 exp(-t^2/2) dt
  const double oracle =
      0.5 + testing::integrate([](double t) { return std::exp(-0.5 * t * t); }, 0.0, 1.0) /
                std::sqrt(2.0 * std::numbers::pi);
  EXPECT_NEAR(oracle, 0.841344746068543, 1e-13);
  EXPECT_NEAR(lognormal_cdf(std::numbers::e, {0.0, 1.0}), oracle, 1e-13);
}

TEST(LogNormal, QuantileInvertsCdf) {
  const LogNormalParams p{0.4, 1.1};
  for (double q : {1e-9, 0.01, 0.3, 0.5, 0.77, 0.999, 1.0 - 1e-9}) {
    EXPECT_NEAR(lognormal_cdf(lognormal_quantile(q, p), p), q, 1e-10);
  }
}

TEST(GpThreshold, ClosedFormValues) {
  EXPECT_EQ(gp_cdf_threshold(10.0, {0.3, 2.0, 0.1, 10.0}), 0.0);
  EXPECT_NEAR(gp_cdf_threshold(12.0, {0.0, 2.0, 0.1, 10.0}), 1.0 - std::exp(-1.0), 1e-15);
  EXPECT_NEAR(gp_cdf_threshold(1.0, {0.5, 1.0, 1.0, 0.0}), 1.0 - 1.0 / 2.25, 1e-15);
}

TEST(GpThreshold, DomainErrors) {
  EXPECT_THROW(gp_cdf_threshold(9.0, {0.3, 2.0, 0.1, 10.0}), DomainError);
  // shape -0.5, scale 1: upper endpoint u + 2
  EXPECT_THROW(gp_cdf_threshold(12.5, {-0.5, 1.0, 0.1, 10.0}), DomainError);
  EXPECT_NO_THROW(gp_cdf_threshold(11.9, {-0.5, 1.0, 0.1, 10.0}));
}

TEST(GpInvariant, ClosedFormValues) {
  const GpInvariantParams p{0.0, 3.0, 0.5};
  EXPECT_NEAR(gp_cdf_invariant(0.0, p), 0.5, 1e-15);
  EXPECT_NEAR(gp_cdf_invariant(3.0 * std::numbers::ln2, p), 0.75, 1e-15);
  EXPECT_NEAR(gp_quantile_invariant(0.75, p), 3.0 * std::numbers::ln2, 1e-12);
  EXPECT_NEAR(gp_cdf_invariant(10.0, {0.2, 3.0, 1.28601}), 0.9, 1e-4);
}

TEST(GpInvariant, QuantileAgreesWithBisection) {
  const GpInvariantParams p{0.2, 3.0, 1.2860082304526748};
  for (double q : {0.0, 0.2, 0.5, 0.9, 0.99, 0.999}) {
    const double oracle = testing::bisect([&](double y) { return gp_cdf_invariant(y, p); }, q, 0.0, 1e7);
    EXPECT_NEAR(gp_quantile_invariant(q, p), oracle, 1e-8 * std::max(1.0, oracle)) << "q = " << q;
  }
}

TEST(GpInvariant, RoundTripBothWays) {
  for (const GpInvariantParams& p :
       {GpInvariantParams{0.2, 3.0, 1.3}, GpInvariantParams{0.0, 2.0, 0.4}, GpInvariantParams{-0.3, 5.0, 0.8}}) {
    for (double q : {0.5, 0.9, 0.99, 0.999}) {
      if (q < 1.0 - p.zeta0) continue;
      EXPECT_NEAR(gp_cdf_invariant(gp_quantile_invariant(q, p), p), q, 1e-9);
    }
    for (double y = 0.0; y < std::min(p.upper_endpoint(), 60.0); y += 0.25) {
      const double q = gp_cdf_invariant(y, p);
      if (q < 0.0) continue;  // zeta0 > 1: region below the model's support
      if (1.0 - q < 1e-8) break;  // y is ill-conditioned in q beyond this
      EXPECT_NEAR(gp_quantile_invariant(q, p), y, 1e-7 * std::max(1.0, y));
    }
  }
}

TEST(GpInvariant, QuantileDomainErrors) {
  const GpInvariantParams p{0.1, 1.0, 0.5};
  EXPECT_THROW(gp_quantile_invariant(1.0, p), DomainError);
  EXPECT_THROW(gp_quantile_invariant(0.4, p), DomainError);  // below 1 - zeta0
  EXPECT_THROW(gp_cdf_invariant(-0.1, p), DomainError);
}

TEST(Conversion, IdentityAtZeroThreshold) {
  const GpThresholdParams tp{0.25, 1.7, 0.3, 0.0};
  const GpInvariantParams ip = convert_to_invariant(tp);
  EXPECT_EQ(ip.shape, 0.25);
  EXPECT_EQ(ip.scale0, 1.7);
  EXPECT_NEAR(ip.zeta0, 0.3, 1e-16);
}

TEST(Conversion, WorkedExample) {
  const GpInvariantParams ip = convert_to_invariant({0.2, 5.0, 0.1, 10.0});
  EXPECT_DOUBLE_EQ(ip.scale0, 3.0);
  EXPECT_NEAR(ip.zeta0, 0.1 * std::pow(5.0 / 3.0, 5.0), 1e-12);
  EXPECT_NEAR(ip.zeta0, 1.2860082304526748, 1e-12);
}

TEST(Conversion, SurvivalAgreementOnGrid) {
  for (const GpThresholdParams& tp : {GpThresholdParams{0.2, 5.0, 0.1, 10.0}, GpThresholdParams{0.0, 2.0, 0.2, 4.0},
                                      GpThresholdParams{-0.2, 4.0, 0.3, 6.0}}) {
    const GpInvariantParams ip = convert_to_invariant(tp);
    for (double y = tp.threshold; y < std::min(tp.upper_endpoint(), tp.threshold + 80.0); y += 0.1) {
      // conditional exceedance: 1 - F_inv(y) = zeta_u * (1 - F_thr(y))
      const double inv_surv = 1.0 - gp_cdf_invariant(y, ip);
      const double thr_surv = tp.exceed_prob * (1.0 - gp_cdf_threshold(y, tp));
      EXPECT_NEAR(inv_surv, thr_surv, 1e-10) << "y = " << y;
    }
  }
}

TEST(Conversion, BothZetaFormsAgreeOnRandomDraws) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> shape(-0.4, 0.6), scale(0.5, 10.0), zeta(0.01, 1.0), thr(0.0, 20.0);
  int checked = 0;
  while (checked < 1000) {
    const GpThresholdParams tp{shape(rng), scale(rng), zeta(rng), thr(rng)};
    if (!(tp.scale - tp.shape * tp.threshold > 0.0)) continue;
    const double a = zeta0_from_scale0(tp);
    const double b = zeta0_from_scale_u(tp);
    EXPECT_LE(std::fabs(a - b), 1e-10 * std::max(1.0, std::fabs(a)));
    ++checked;
  }
}

TEST(Conversion, RejectsNonPositiveScale0) {
  EXPECT_THROW(convert_to_invariant({0.5, 1.0, 0.1, 3.0}), InvalidParameterization);
}

TEST(Conversion, ThresholdShiftReproducesConditionalGp) {
  // From u1 to u2 > u1 the scale grows by shape * (u2 - u1), and conditioning the
  // invariant CDF on exceeding u2 yields GP(shape, sigma_u2).
  const GpThresholdParams at_u1{0.25, 2.0, 0.2, 5.0};
  const GpInvariantParams ip = convert_to_invariant(at_u1);
  for (double u2 : {5.5, 8.0, 20.0}) {
    const GpThresholdParams at_u2 = convert_to_threshold(ip, u2);
    EXPECT_NEAR(at_u2.scale, at_u1.scale + at_u1.shape * (u2 - at_u1.threshold), 1e-12);
    const double surv_u2 = 1.0 - gp_cdf_invariant(u2, ip);
    for (double y = u2; y < u2 + 30.0; y += 0.5) {
      const double conditional = (gp_cdf_invariant(y, ip) - (1.0 - surv_u2)) / surv_u2;
      EXPECT_NEAR(conditional, gp_cdf_threshold(y, at_u2), 1e-12);
    }
  }
}

TEST(Properties, CdfsAreMonotone) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> shape(-0.5, 0.8), scale(0.2, 8.0), zeta(0.05, 2.0), mu(-1.0, 3.0),
      s(0.1, 2.0);
  for (int trial = 0; trial < 200; ++trial) {
    const GpInvariantParams ip{shape(rng), scale(rng), zeta(rng)};
    const LogNormalParams lp{mu(rng), s(rng)};
    double prev_gp = -1.0;
    double prev_ln = -1.0;
    for (double y = 1e-3; y < std::min(ip.upper_endpoint(), 100.0); y *= 1.07) {
      const double g = gp_cdf_invariant(y, ip);
      const double l = lognormal_cdf(y, lp);
      EXPECT_GE(g, prev_gp);
      EXPECT_GE(l, prev_ln);
      prev_gp = g;
      prev_ln = l;
    }
  }
}

TEST(Properties, ShapeZeroContinuity) {
  for (double y = 0.0; y < 50.0; y += 0.5) {
    const double a = gp_cdf_invariant(y, {1e-8, 3.0, 0.7});
    const double b = gp_cdf_invariant(y, {0.0, 3.0, 0.7});
    EXPECT_LT(std::fabs(a - b), 1e-6);
    const double c = gp_cdf_threshold(y + 2.0, {1e-8, 3.0, 0.7, 2.0});
    const double d = gp_cdf_threshold(y + 2.0, {0.0, 3.0, 0.7, 2.0});
    EXPECT_LT(std::fabs(c - d), 1e-6);
  }
}

TEST(GpFit, RecoversExponential) {
  const std::vector<double> z = draw_gp(0.0, 2.0, 100000, 101);
  const GpFit fit = gp_fit_mle(z);
  EXPECT_GE(fit.shape, -0.03);
  EXPECT_LE(fit.shape, 0.03);
  EXPECT_GE(fit.scale, 1.94);
  EXPECT_LE(fit.scale, 2.06);
}

TEST(GpFit, RecoversHeavyTail) {
  const std::vector<double> z = draw_gp(0.3, 1.0, 100000, 202);
  const GpFit fit = gp_fit_mle(z);
  EXPECT_GE(fit.shape, 0.27);
  EXPECT_LE(fit.shape, 0.33);
  EXPECT_GE(fit.scale, 0.95);
  EXPECT_LE(fit.scale, 1.05);
}

TEST(GpFit, BeatsGridSearch) {
  const std::vector<double> z = draw_gp(0.3, 1.0, 5000, 303);
  const GpFit fit = gp_fit_mle(z);
  double best = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < 200; ++i) {
    for (int j = 0; j < 200; ++j) {
      const double shape = -0.5 + 1.5 * i / 199.0;
      const double scale = 0.5 + 1.5 * j / 199.0;
      best = std::max(best, gp_loglik(z, shape, scale));
    }
  }
  EXPECT_GE(fit.loglik, best - 1e-4);
}

TEST(GpFit, BoundedTailSample) {
  const std::vector<double> z = draw_gp(-0.2, 1.5, 20000, 404);
  const GpFit fit = gp_fit_mle(z);
  EXPECT_NEAR(fit.shape, -0.2, 0.03);
  EXPECT_NEAR(fit.scale, 1.5, 0.06);
}

TEST(GpFit, Errors) {
  std::vector<double> small(10, 1.0);
  EXPECT_THROW(gp_fit_mle(small), InsufficientDataError);
  std::vector<double> bad = draw_gp(0.1, 1.0, 100, 5);
  bad[3] = -1.0;
  EXPECT_THROW(gp_fit_mle(bad), DomainError);
  GpFitOptions opt;
  opt.max_iterations = 3;
  EXPECT_THROW(gp_fit_mle(draw_gp(0.1, 1.0, 100, 5), opt), ConvergenceError);
}

}  // namespace
}  // namespace demma
