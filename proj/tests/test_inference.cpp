#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "choicefit/inference.hpp"
#include "choicefit/synth.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace choicefit;
using Op = Predicate::Op;

TEST(ChiSquared, Examples) {
  EXPECT_EQ(chi_squared_sf(0.0, 7), 1.0);
  EXPECT_NEAR(chi_squared_sf(2 * std::log(20.0), 2), 0.05, 1e-14);
  const double p = chi_squared_sf(16.26, 14);
  EXPECT_NEAR(p, oracle::chi2_tail(16.26, 14), 1e-10);
  EXPECT_NEAR(p, 0.30, 0.01);
  EXPECT_EQ(chi_squared_sf(0.0, 0), 1.0);
  EXPECT_EQ(chi_squared_sf(3.0, 0), 0.0);
  EXPECT_EQ(chi_squared_sf(-1e-12, 3), 1.0);
}

TEST(ChiSquared, ExponentialBranchAndMonotone) {
  for (double x = 0; x <= 80; x += 0.37) {
    EXPECT_NEAR(chi_squared_sf(x, 2), std::exp(-x / 2), 1e-12);
    for (std::size_t df : {1u, 3u, 10u, 41u}) {
      const double p = chi_squared_sf(x, df), q = chi_squared_sf(x + 0.37, df);
      EXPECT_LE(q, p);
      // strict once the tail is representably below 1
      if (p < 1 - 1e-12 && p > 1e-300) EXPECT_LT(q, p);
    }
  }
}

TEST(ChiSquared, AgreesWithIntegrationOracle) {
  double worst = 0;
  for (int df = 1; df <= 60; df += 3)
    for (double x = 0; x <= 120; x += 7.5) worst = std::max(worst, std::abs(chi_squared_sf(x, df) - oracle::chi2_tail(x, df)));
  EXPECT_LT(worst, 1e-8);
}

TEST(LRTest, PublishedRows) {
  const auto a = lr_test_from_sum(-1426.61, -1418.48, 3, 7);
  EXPECT_NEAR(a.statistic, 16.26, 1e-9);
  EXPECT_EQ(a.df, 14u);
  EXPECT_NEAR(a.p_value, 0.30, 0.01);
  EXPECT_FALSE(a.reject);

  const auto b = lr_test_from_sum(-1310.1, -1293.1, 2, 11);
  EXPECT_NEAR(b.statistic, 34.0, 1e-9);
  EXPECT_EQ(b.df, 11u);
  // The LLs are printed to 0.1, so the statistic is only known to lie in
  // [33.8, 34.2]; the published 3.8e-4 sits inside that p range.
  EXPECT_NEAR(b.p_value, 3.6e-4, 0.05e-4);
  EXPECT_LT(chi_squared_sf(34.2, 11), 3.8e-4);
  EXPECT_GT(chi_squared_sf(33.8, 11), 3.8e-4);
  EXPECT_TRUE(b.reject);

  const auto c = lr_test_from_sum(-500.0, -500.0, 4, 3);
  EXPECT_EQ(c.statistic, 0.0);
  EXPECT_EQ(c.p_value, 1.0);
  EXPECT_FALSE(c.reject);
}

TEST(LRTest, Errors) {
  EXPECT_THROW(lr_test_from_sum(-100.0, -100.1, 2, 3), NestingError);
  EXPECT_NO_THROW(lr_test_from_sum(-100.0, -100.0000005, 2, 3));
  const double one[1] = {-50.0};
  EXPECT_THROW(lr_test(-60.0, one, 3), ConfigError);
}

TEST(LRTest, BinOrderIrrelevant) {
  std::vector<double> lls{-310.27, -45.5, -1022.125, -7.75, -88.0625};
  const auto ref = lr_test(-1490.0, lls, 6);
  std::mt19937_64 gen(2);
  for (int rep = 0; rep < 50; ++rep) {
    std::shuffle(lls.begin(), lls.end(), gen);
    const auto r = lr_test(-1490.0, lls, 6);
    EXPECT_EQ(r.statistic, ref.statistic);
    EXPECT_EQ(r.df, ref.df);
    EXPECT_EQ(r.p_value, ref.p_value);
  }
}

TEST(LRTest, JsonRoundTrip) {
  const std::vector<double> lls{-40.5, -60.25};
  const auto r = lr_test(-103.0, lls, 2);
  const auto back = nlohmann::json(r).get<LRTestResult>();
  EXPECT_EQ(nlohmann::json(back), nlohmann::json(r));
}

namespace {

/// x1, x2 standard normal plus speed uniform on [20, 70) with no effect.
GeneratorSpec speed_model(std::size_t n, std::uint64_t seed) {
  auto g = support::normal_model(3, {{0.2, 0.8, -0.4}, {-0.3, -0.5, 0.6}}, n, seed);
  g.covariates.push_back({"speed", CovariateLaw::uniform, {20.0, 70.0}, 0.0});
  return g;
}

const BinningSpec kSpeedBins{"speed", {{20, 40}, {40, 55}, {55, 70}}};

Dimension halves(const std::string& var) {
  return {"split", var, {{"a", Predicate::compare(Op::lt, 45)}, {"b", Predicate::compare(Op::ge, 45)}}};
}

}  // namespace

TEST(Pooling, StatisticNonNegativeOnPartitions) {
  for (std::uint64_t seed = 1; seed <= 15; ++seed) {
    const auto ds = generate(speed_model(1200, seed));
    const auto spec = ModelSpec::shared("y", support::outcomes(3), {"x1", "x2"});
    const auto r = pooling_test(spec, ds, halves("speed"));
    EXPECT_GE(r.test.statistic, -1e-9);
    EXPECT_EQ(r.test.df, 6u);
    EXPECT_EQ(r.conclusion, r.test.reject ? "separately" : "together");
    EXPECT_EQ(r.parts.size(), 2u);
  }
}

TEST(Pooling, UnderdeterminedSubsetIsNamed) {
  const auto ds = generate(speed_model(400, 3));
  const auto spec = ModelSpec::shared("y", support::outcomes(3), {"x1", "x2"});
  const Dimension lopsided{"split", "speed", {{"tiny", Predicate::compare(Op::lt, 20.2)},
                                              {"rest", Predicate::compare(Op::ge, 20.2)}}};
  try {
    pooling_test(spec, ds, lopsided);
    FAIL() << "no error";
  } catch (const EstimationError& e) {
    EXPECT_NE(std::string(e.what()).find("tiny"), std::string::npos);
  }
}

TEST(BinStructure, RemovesBinningAndConstantVariables) {
  auto ds = generate(speed_model(3000, 5));
  const auto sp = ds.column("speed");
  std::vector<double> fast(sp.size());
  for (std::size_t r = 0; r < sp.size(); ++r) fast[r] = sp[r] >= 55 ? 1.0 : 0.0;
  ds = ds.with_column({"fast", VariableKind::indicator, {}, {}, {}, {}}, fast);

  const auto spec = ModelSpec::shared("y", support::outcomes(3), {"x1", "speed", "fast", "x2"});
  const auto r = bin_structure_test(spec, ds, kSpeedBins);
  ASSERT_EQ(r.removed.size(), 2u);
  EXPECT_EQ(r.removed[0], "speed: binning variable");
  EXPECT_EQ(r.removed[1].rfind("fast: constant inside bin", 0), 0u);
  EXPECT_EQ(r.reduced.variables(), (std::vector<std::string>{"x1", "x2"}));
  EXPECT_EQ(r.test.K, 6u);
  EXPECT_EQ(r.test.M, 3u);
  EXPECT_EQ(r.conclusion, r.test.p_value < 0.05 ? "SL effect" : "no SL effect");
}

TEST(BinStructure, SmallBinMergedOrRejected) {
  const auto ds = generate(speed_model(2000, 8));
  const auto spec = ModelSpec::shared("y", support::outcomes(3), {"x1", "x2"});
  const BinningSpec bins{"speed", {{20, 20.1}, {20.1, 45}, {45, 70}}};
  EXPECT_THROW(bin_structure_test(spec, ds, bins), UnderdeterminedError);
  const auto r = bin_structure_test(spec, ds, bins, {}, {0.05, true});
  EXPECT_EQ(r.test.M, 2u);
  EXPECT_EQ(r.bin_labels.front(), "[20,20.1)+[20.1,45)");
}

TEST(BinStructure, DetectsAndIgnoresSpeedEffects) {
  // Same model in every bin: the test should rarely reject.
  int kept = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const auto ds = generate(speed_model(1500, 1000 + seed));
    const auto r = bin_structure_test(ModelSpec::shared("y", support::outcomes(3), {"x1", "x2"}), ds, kSpeedBins);
    kept += !r.test.reject;
  }
  EXPECT_GE(kept, 90);

  // Coefficients that switch sign with speed: an obvious structural effect.
  auto lo = generate(speed_model(3000, 77));
  const auto sp = lo.column("speed");
  std::vector<std::size_t> slow;
  for (std::size_t r = 0; r < sp.size(); ++r)
    if (sp[r] < 45) slow.push_back(r);
  auto g = speed_model(3000, 78);
  g.covariates.back().params = {45.0, 70.0};
  g.beta[0]["x1"] = -0.8;
  g.beta[1]["x2"] = -0.6;
  auto hi = generate(g);
  std::vector<std::vector<double>> cols;
  for (std::size_t c = 0; c < lo.cols(); ++c) {
    std::vector<double> v;
    for (auto r : slow) v.push_back(lo.value(r, c));
    for (std::size_t r = 0; r < hi.rows(); ++r) v.push_back(hi.value(r, c));
    cols.push_back(std::move(v));
  }
  const Dataset mixed(lo.schema(), cols);
  const auto r = bin_structure_test(ModelSpec::shared("y", support::outcomes(3), {"x1", "x2"}), mixed,
                                    BinningSpec{"speed", {{20, 45}, {45, 70}}});
  EXPECT_EQ(r.conclusion, "SL effect");
}
