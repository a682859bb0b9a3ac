#include "demma/threshold_scan.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include "demma/mixture.hpp"

namespace demma {
namespace {

MixtureParams reference_mixture() {
  return make_mixture(0.4, {1.0, 0.5}, gp_with_tail_mass(0.2, 3.0, 15.0, 0.1), 15.0);
}

double grid_step_at(const ScanResult& r, std::size_t i) {
  double step = 0.0;
  if (i + 1 < r.candidates.size()) step = std::max(step, r.candidates[i + 1].threshold - r.candidates[i].threshold);
  if (i > 0) step = std::max(step, r.candidates[i].threshold - r.candidates[i - 1].threshold);
  return step;
}

TEST(ThresholdScan, RecoversGraftedTail) {
  const std::vector<double> data = sample_mixture(reference_mixture(), 100000, 2024);
  const ScanResult r = scan_thresholds(data);
  EXPECT_TRUE(r.stable);
  EXPECT_LE(std::fabs(r.u_star - 15.0), grid_step_at(r, r.index_lo)) << "u* = " << r.u_star;
  EXPECT_GE(r.params.shape, 0.15);
  EXPECT_LE(r.params.shape, 0.25);
}

TEST(ThresholdScan, PureGpIsStableFromTheFirstCandidate) {
  std::mt19937_64 rng(99);
  std::vector<double> data(50000);
  for (double& y : data) y = 3.0 / 0.2 * (std::pow(1.0 - uniform01(rng), -0.2) - 1.0);
  const ScanResult r = scan_thresholds(data);
  EXPECT_TRUE(r.stable);
  EXPECT_EQ(r.index_lo, 0u);
  EXPECT_EQ(r.u_star, r.candidates.front().threshold);
  EXPECT_NEAR(r.params.shape, 0.2, 0.05);
  EXPECT_NEAR(r.params.scale0, 3.0, 0.3);
  EXPECT_NEAR(r.params.zeta0, 1.0, 0.1);
}

TEST(ThresholdScan, StableWindowChoiceDoesNotMatterOnExactGp) {
  std::mt19937_64 rng(5);
  std::vector<double> data(50000);
  for (double& y : data) y = 3.0 / 0.2 * (std::pow(1.0 - uniform01(rng), -0.2) - 1.0);
  ScanConfig cfg;
  const ScanResult r = scan_thresholds(data, cfg);
  // Shift the window right: the medians must agree within 2 * dispersion_tol.
  std::vector<double> shape, scale0;
  for (std::size_t i = 5; i < 5 + cfg.stability_window; ++i) {
    shape.push_back(r.candidates[i].params.shape);
    scale0.push_back(r.candidates[i].params.scale0);
  }
  std::sort(shape.begin(), shape.end());
  std::sort(scale0.begin(), scale0.end());
  const double shape_med = 0.5 * (shape[4] + shape[5]);
  const double scale_med = 0.5 * (scale0[4] + scale0[5]);
  EXPECT_LE(std::fabs(shape_med - r.params.shape), 2 * cfg.dispersion_tol * std::fabs(r.params.shape));
  EXPECT_LE(std::fabs(scale_med - r.params.scale0), 2 * cfg.dispersion_tol * r.params.scale0);
}

TEST(ThresholdScan, CandidateInvariants) {
  const std::vector<double> data = sample_mixture(reference_mixture(), 30000, 7);
  const ScanResult r = scan_thresholds(data);
  ASSERT_GE(r.candidates.size(), 3u);
  for (std::size_t i = 1; i < r.candidates.size(); ++i) {
    EXPECT_GT(r.candidates[i].threshold, r.candidates[i - 1].threshold);
    EXPECT_LE(r.candidates[i].n_exceed, r.candidates[i - 1].n_exceed);
  }
  EXPECT_EQ(r.u_star, r.candidates[r.index_lo].threshold);
  EXPECT_EQ(r.index_hi - r.index_lo + 1, ScanConfig{}.stability_window);
}

TEST(ThresholdScan, MediansOverWindow) {
  const std::vector<double> data = sample_mixture(reference_mixture(), 30000, 8);
  const ScanResult r = scan_thresholds(data);
  std::vector<double> zeta;
  for (std::size_t i = r.index_lo; i <= r.index_hi; ++i) zeta.push_back(r.candidates[i].params.zeta0);
  std::sort(zeta.begin(), zeta.end());
  const std::size_t n = zeta.size();
  const double med = n % 2 ? zeta[n / 2] : 0.5 * (zeta[n / 2 - 1] + zeta[n / 2]);
  EXPECT_EQ(r.params.zeta0, med);
}

TEST(ThresholdScan, Deterministic) {
  const std::vector<double> data = sample_mixture(reference_mixture(), 20000, 9);
  const ScanResult a = scan_thresholds(data);
  const ScanResult b = scan_thresholds(data);
  ASSERT_EQ(a.candidates.size(), b.candidates.size());
  for (std::size_t i = 0; i < a.candidates.size(); ++i) {
    EXPECT_EQ(a.candidates[i].params, b.candidates[i].params);
  }
  EXPECT_EQ(a.u_star, b.u_star);
  EXPECT_EQ(a.params, b.params);
}

TEST(ThresholdScan, DuplicateQuantilesAreDeduplicated) {
  // Heavily tied data: most positive values equal 1.
  std::vector<double> data(8000, 1.0);
  std::mt19937_64 rng(1);
  for (std::size_t i = 0; i < 2000; ++i) data.push_back(1.0 + 2.0 * (std::pow(1.0 - uniform01(rng), -0.1) - 1.0) / 0.1);
  const std::vector<double> grid = candidate_thresholds(data, {});
  EXPECT_LT(grid.size(), ScanConfig{}.grid_count);
  for (std::size_t i = 1; i < grid.size(); ++i) EXPECT_GT(grid[i], grid[i - 1]);
}

TEST(ThresholdScan, UnstableDataReportsMinimumDispersionWindow) {
  ScanConfig cfg;
  cfg.dispersion_tol = 1e-6;  // unattainable
  const std::vector<double> data = sample_mixture(reference_mixture(), 20000, 10);
  const ScanResult r = scan_thresholds(data, cfg);
  EXPECT_FALSE(r.stable);
  EXPECT_GT(r.max_dispersion, cfg.dispersion_tol);
}

TEST(ThresholdScan, Errors) {
  EXPECT_THROW(scan_thresholds(std::vector<double>(100, 0.0)), InsufficientDataError);
  std::vector<double> few = {1.0, 2.0, 3.0, 4.0, 5.0, 6.0};
  EXPECT_THROW(scan_thresholds(few), InsufficientDataError);
  ScanConfig bad;
  bad.quantile_lo = 0.9;
  bad.quantile_hi = 0.8;
  EXPECT_THROW(scan_thresholds(few, bad), ConfigError);
  bad = {};
  bad.stability_window = 2;
  EXPECT_THROW(bad.validate(), ConfigError);
  EXPECT_THROW(scan_thresholds(std::vector<double>{1.0, -2.0}), DomainError);
}

TEST(ThresholdScan, TableHasOneRowPerCandidate) {
  const std::vector<double> data = sample_mixture(reference_mixture(), 20000, 12);
  const ScanResult r = scan_thresholds(data);
  std::ostringstream os;
  write_scan_table(os, r);
  const std::string s = os.str();
  EXPECT_EQ(static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')), r.candidates.size() + 1);
  EXPECT_EQ(s.rfind("threshold\tshape\tscale0\tzeta0\tn_exceed", 0), 0u);
}

}  // namespace
}  // namespace demma
