#include "demma/serialization.hpp"

#include <gtest/gtest.h>

#include <bit>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <random>

namespace {

using namespace demma;

std::uint64_t bits(double v) { return std::bit_cast<std::uint64_t>(v); }

MixtureParams reference_mixture() {
  return make_mixture(0.4, {1.0, 0.5}, gp_with_tail_mass(0.2, 3.0, 15.0, 0.1), 15.0);
}

Hyperparameters tiny_hp() { return {.predictors = 2, .window = 3, .hidden = 4, .heads = 2, .tau = 0.3, .weight = 0.4}; }

TEST(MixtureJson, RoundTripIsBitExact) {
  const MixtureParams m = reference_mixture();
  const MixtureParams back = mixture_from_json(Json::parse(to_json(m).dump()));
  EXPECT_EQ(bits(back.p0), bits(m.p0));
  EXPECT_EQ(bits(back.p1), bits(m.p1));
  EXPECT_EQ(bits(back.u_star), bits(m.u_star));
  EXPECT_EQ(bits(back.lognormal.mu), bits(m.lognormal.mu));
  EXPECT_EQ(bits(back.lognormal.sigma), bits(m.lognormal.sigma));
  EXPECT_EQ(bits(back.gp.shape), bits(m.gp.shape));
  EXPECT_EQ(bits(back.gp.scale0), bits(m.gp.scale0));
  EXPECT_EQ(bits(back.gp.zeta0), bits(m.gp.zeta0));
}

TEST(MixtureJson, FittedParametersRoundTrip) {
  const std::vector<double> y = sample_mixture(reference_mixture(), 20000, 5);
  const MixtureParams fit = fit_mixture(y, scan_thresholds(y));
  const std::string once = to_json(fit).dump();
  const MixtureParams back = mixture_from_json(Json::parse(once));
  EXPECT_TRUE(back == fit);
  EXPECT_EQ(to_json(back).dump(), once);
}

TEST(MixtureJson, CarriesFormatVersion) {
  const Json j = to_json(reference_mixture());
  EXPECT_EQ(j["format"], "demma-mixture");
  EXPECT_EQ(j["format_version"], kMixtureFormatVersion);
}

TEST(MixtureJson, RejectsWrongVersionAndMissingFields) {
  Json j = to_json(reference_mixture());
  j["format_version"] = 99;
  EXPECT_THROW(mixture_from_json(j), IngestionError);
  j = to_json(reference_mixture());
  j.erase("p1");
  EXPECT_THROW(mixture_from_json(j), IngestionError);
  j = to_json(reference_mixture());
  j["gp"]["shape"] = "0.2";
  EXPECT_THROW(mixture_from_json(j), IngestionError);
}

TEST(MixtureJson, RejectsInconsistentMasses) {
  Json j = to_json(reference_mixture());
  j["p1"] = j["p1"].get<double>() + 1e-6;
  EXPECT_THROW(mixture_from_json(j), InvalidParameterization);
}

TEST(ScanJson, RoundTrip) {
  const std::vector<double> y = sample_mixture(reference_mixture(), 20000, 9);
  const ScanResult s = scan_thresholds(y);
  const ScanResult back = scan_from_json(Json::parse(to_json(s).dump()));
  EXPECT_EQ(bits(back.u_star), bits(s.u_star));
  EXPECT_EQ(back.stable, s.stable);
  EXPECT_EQ(back.index_lo, s.index_lo);
  EXPECT_EQ(back.index_hi, s.index_hi);
  ASSERT_EQ(back.candidates.size(), s.candidates.size());
  for (std::size_t i = 0; i < s.candidates.size(); ++i) {
    EXPECT_EQ(bits(back.candidates[i].threshold), bits(s.candidates[i].threshold));
    EXPECT_EQ(bits(back.candidates[i].params.zeta0), bits(s.candidates[i].params.zeta0));
    EXPECT_EQ(back.candidates[i].n_exceed, s.candidates[i].n_exceed);
  }
  EXPECT_EQ(to_json(back).dump(), to_json(s).dump());
}

TEST(ModelJson, RoundTripIsBitExact) {
  DemmaModel m = DemmaModel::init(tiny_hp(), 17);
  m.standardization = {{0.25, -3.5}, {1.0 / 3.0, 7.0}};
  const Json j = to_json(m);
  const DemmaModel back = model_from_json(Json::parse(j.dump()));
  EXPECT_TRUE(back == m);
  std::vector<std::uint64_t> a, b;
  m.for_each_parameter([&](const std::string&, const Tensor& t) {
    for (double v : t.values()) a.push_back(bits(v));
  });
  back.for_each_parameter([&](const std::string&, const Tensor& t) {
    for (double v : t.values()) b.push_back(bits(v));
  });
  EXPECT_EQ(a, b);
}

TEST(ModelJson, AwkwardDoublesSurvive) {
  DemmaModel m = DemmaModel::zeros_like(tiny_hp());
  const std::vector<double> awkward = {0.1,
                                       -0.0,
                                       std::numeric_limits<double>::denorm_min(),
                                       std::numeric_limits<double>::min(),
                                       std::numeric_limits<double>::max(),
                                       std::nextafter(1.0, 2.0),
                                       -1e-300,
                                       1.0 / 3.0};
  std::mt19937_64 rng(3);
  std::size_t k = 0;
  m.for_each_parameter([&](const std::string&, Tensor& t) {
    for (double& v : t.values()) {
      v = k < awkward.size() ? awkward[k] : std::ldexp(uniform01(rng) - 0.5, static_cast<int>(rng() % 200) - 100);
      ++k;
    }
  });
  const DemmaModel back = model_from_json(Json::parse(to_json(m).dump()));
  std::vector<std::uint64_t> a, b;
  m.for_each_parameter([&](const std::string&, const Tensor& t) {
    for (double v : t.values()) a.push_back(bits(v));
  });
  back.for_each_parameter([&](const std::string&, const Tensor& t) {
    for (double v : t.values()) b.push_back(bits(v));
  });
  EXPECT_EQ(a, b);
}

TEST(ModelJson, HyperparametersComeFirstAndWeightsAreNamedNestedLists) {
  const Json j = to_json(DemmaModel::init(tiny_hp(), 1));
  auto it = j.begin();
  EXPECT_EQ(it.key(), "format");
  ++it;
  EXPECT_EQ(it.key(), "format_version");
  ++it;
  EXPECT_EQ(it.key(), "hyperparameters");
  const Json& w = j["weights"]["encoder.w_input"];
  ASSERT_TRUE(w.is_array());
  EXPECT_EQ(w.size(), 2u);
  EXPECT_EQ(w[0].size(), 16u);
  EXPECT_TRUE(j["weights"].contains("forecaster.attention.head1.w_value"));
}

TEST(ModelJson, RejectsShapeMismatchMissingAndUnknownWeights) {
  const Json good = to_json(DemmaModel::init(tiny_hp(), 1));
  Json j = good;
  j["weights"]["encoder.bias"][0].push_back(0.0);
  EXPECT_THROW(model_from_json(j), ShapeError);
  j = good;
  j["weights"].erase("decoder.w_hidden");
  EXPECT_THROW(model_from_json(j), IngestionError);
  j = good;
  j["weights"]["encoder.extra"] = Json::array({Json::array({1.0})});
  EXPECT_THROW(model_from_json(j), IngestionError);
  j = good;
  j["hyperparameters"]["heads"] = 3;
  EXPECT_THROW(model_from_json(j), ConfigError);
}

TEST(ModelJson, RefusesNonFiniteWeights) {
  DemmaModel m = DemmaModel::init(tiny_hp(), 1);
  m.encoder.bias(0, 0) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(to_json(m), DomainError);
}

TEST(MetricsJson, EmptyRegionIsNull) {
  const std::vector<double> y = {1.0, 2.0, 3.0};
  const std::vector<double> yhat = {1.0, 2.0, 5.0};
  const MetricsReport r = evaluate(yhat, y);
  const Json j = to_json(r);
  EXPECT_TRUE(j["zero"]["rmse"].is_null());
  EXPECT_EQ(j["zero"]["count"], 0u);
  const MetricsReport back = metrics_from_json(Json::parse(j.dump()));
  EXPECT_FALSE(back.zero.rmse.has_value());
  ASSERT_TRUE(back.extreme.rmse.has_value());
  EXPECT_EQ(bits(*back.extreme.rmse), bits(*r.extreme.rmse));
  EXPECT_EQ(back.moderate.count, r.moderate.count);
}

TEST(JsonFiles, MissingOrMalformedFileIsIngestionError) {
  EXPECT_THROW(read_json_file("/nonexistent/dir/model.json"), IngestionError);
  const auto path = std::filesystem::temp_directory_path() / "demma_bad.json";
  {
    std::ofstream os(path);
    os << "{ not json";
  }
  EXPECT_THROW(read_json_file(path.string()), IngestionError);
  std::filesystem::remove(path);
}

TEST(JsonFiles, FileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "demma_mixture_rt.json";
  write_json_file(path.string(), to_json(reference_mixture()));
  EXPECT_TRUE(mixture_from_json(read_json_file(path.string())) == reference_mixture());
  std::filesystem::remove(path);
}

}  // namespace
