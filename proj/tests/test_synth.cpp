#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <sstream>

#include "choicefit/selection.hpp"
#include "choicefit/synth.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace choicefit;

namespace {

std::string as_csv(const Dataset& ds) {
  std::ostringstream os;
  write_delimited(os, ds);
  return os.str();
}

std::vector<std::size_t> counts(const Dataset& ds, const GeneratorSpec& g) {
  std::vector<std::size_t> c(g.outcomes.size());
  for (double v : ds.column(g.outcome))
    for (std::size_t i = 0; i < g.outcomes.size(); ++i)
      if (v == g.outcomes[i].code) ++c[i];
  return c;
}

}  // namespace

TEST(Rng, SplitmixReferenceValues) {
  std::uint64_t s = 0;
  EXPECT_EQ(splitmix64(s), 0xe220a8397b1dcdafULL);
  EXPECT_EQ(splitmix64(s), 0x6e789e6aa1b965f4ULL);
  EXPECT_EQ(splitmix64(s), 0x06c45d188009454fULL);
  EXPECT_EQ(splitmix64(s), 0xf88bb8a8724c81ecULL);
}

TEST(Rng, XoshiroMatchesReference) {
  // Reference step of xoshiro256**, seeded from the splitmix64(0) stream above.
  std::uint64_t s[4] = {0xe220a8397b1dcdafULL, 0x6e789e6aa1b965f4ULL, 0x06c45d188009454fULL, 0xf88bb8a8724c81ecULL};
  auto step = [&] {
    const std::uint64_t out = std::rotl(s[1] * 5, 7) * 9, t = s[1] << 17;
    s[2] ^= s[0], s[3] ^= s[1], s[1] ^= s[2], s[0] ^= s[3], s[2] ^= t, s[3] = std::rotl(s[3], 45);
    return out;
  };
  Rng r(0);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(r.next(), step());
}

TEST(Rng, StreamsDifferByPurpose) {
  auto a = Rng::stream(5, "covariates"), b = Rng::stream(5, "outcome");
  EXPECT_NE(a.next(), b.next());
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
}

TEST(Generate, UniformSharesAtZeroBeta) {
  const auto g = support::normal_model(3, {{0.0, 0.0}, {0.0, 0.0}}, 30000, 42);
  const auto c = counts(generate(g), g);
  for (auto n : c) EXPECT_NEAR(static_cast<double>(n) / 30000.0, 1.0 / 3, 0.01);
}

TEST(Generate, Deterministic) {
  auto g = support::normal_model(3, {{0.2, 0.5}, {-0.1, 0.3}}, 500, 9);
  g.covariates.push_back({"flag", CovariateLaw::bernoulli, {0.3}, 0.05});
  g.covariates.push_back({"speed", CovariateLaw::uniform, {25.0, 70.0}, 0.0});
  const auto a = as_csv(generate(g));
  EXPECT_EQ(a, as_csv(generate(g)));
  g.seed = 10;
  EXPECT_NE(a, as_csv(generate(g)));
}

TEST(Generate, MissingnessRate) {
  auto g = support::normal_model(2, {{0.0, 0.4}}, 30000, 3);
  g.covariates[0].missing_rate = 0.1;
  const auto ds = generate(g);
  const double frac = static_cast<double>(ds.missing_count()) / 30000.0;
  EXPECT_NEAR(frac, 0.1, 0.01);
}

TEST(Generate, SharesMatchModelProbabilities) {
  int pass = 0;
  const int seeds = 100;
  for (int seed = 1; seed <= seeds; ++seed) {
    const auto g = support::normal_model(3, {{0.3, 0.8, -0.2}, {-0.5, 0.1, 0.9}}, 10000, static_cast<std::uint64_t>(seed));
    const auto ds = generate(g);
    const auto c = counts(ds, g);
    // Expected counts: sum of the true probabilities over the drawn covariates.
    std::vector<double> expect(3, 0.0);
    const auto x1 = ds.column("x1"), x2 = ds.column("x2");
    for (std::size_t r = 0; r < ds.rows(); ++r) {
      const auto p = oracle::naive_probs({0.3 + 0.8 * x1[r] - 0.2 * x2[r], -0.5 + 0.1 * x1[r] + 0.9 * x2[r]});
      for (std::size_t i = 0; i < 3; ++i) expect[i] += p[i];
    }
    double stat = 0;
    for (std::size_t i = 0; i < 3; ++i) stat += std::pow(static_cast<double>(c[i]) - expect[i], 2) / expect[i];
    pass += oracle::chi2_tail(stat, 2) > 0.001;
  }
  EXPECT_GE(pass, 99);
}

TEST(Generate, JsonRoundTripAndValidation) {
  auto g = support::normal_model(3, {{0.2, 0.5}, {-0.1, 0.3}}, 100, 9);
  g.covariates.push_back({"flag", CovariateLaw::bernoulli, {0.3}, 0.05});
  const auto back = nlohmann::json(g).get<GeneratorSpec>();
  EXPECT_EQ(nlohmann::json(back), nlohmann::json(g));
  EXPECT_EQ(as_csv(generate(back)), as_csv(generate(g)));

  auto bad = g;
  bad.covariates.back().params = {0.3, 0.1};
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = g;
  bad.beta.pop_back();
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Exhaustive, NoCandidates) {
  const auto g = support::normal_model(2, {{0.4}}, 200, 1);
  const auto r = exhaustive_aic(generate(g), std::vector<std::string>{}, ModelSpec::shared("y", g.outcomes, {}));
  EXPECT_TRUE(r.variables.empty());
  EXPECT_TRUE(std::isfinite(r.aic));
}

TEST(Exhaustive, RecoversStrongPlantedSupportAndDominatesGreedy) {
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    const auto g = support::normal_model(2, {{0.1, 1.0, 0.0, -0.9, 0.0, 0.8, 0.0}}, 3000, seed);
    const auto ds = generate(g);
    const auto base = ModelSpec::shared("y", g.outcomes, {});
    const std::vector<std::string> cands{"x1", "x2", "x3", "x4", "x5", "x6"};
    const auto r = exhaustive_aic(ds, cands, base);
    // Every planted coefficient is many standard errors from zero here.
    for (const auto& v : {"x1", "x3", "x5"})
      EXPECT_NE(std::find(r.variables.begin(), r.variables.end(), v), r.variables.end()) << v;

    SelectionProblem pb;
    pb.data = &ds;
    pb.base = base;
    for (const auto& v : cands) pb.candidates.push_back(Term::all(base, v));
    for (auto kind : {Procedure::A, Procedure::B}) {
      const auto s = run_procedure(kind, pb);
      EXPECT_LE(r.aic, s.aic_optimal.aic + 1e-9);
      EXPECT_LE(r.aic, s.final.aic + 1e-9);
    }
  }
}

TEST(Exhaustive, Preconditions) {
  auto g = support::normal_model(2, {{0.1, 0.5}}, 200, 1);
  g.covariates[0].missing_rate = 0.2;
  const auto base = ModelSpec::shared("y", g.outcomes, {});
  EXPECT_THROW(exhaustive_aic(generate(g), std::vector<std::string>{"x1"}, base), ConfigError);
  EXPECT_THROW(exhaustive_aic(generate(g), std::vector<std::string>(13, "x1"), base), ConfigError);
}

TEST(FiniteDifferences, QuadraticAndConstant) {
  Eigen::VectorXd x(3);
  x << 0.5, -2.0, 30.0;
  const auto q = fd_gradient([](const Eigen::VectorXd& v) { return 0.5 * v.squaredNorm(); }, x);
  for (Eigen::Index k = 0; k < 3; ++k) EXPECT_NEAR(q(k), x(k), 1e-8 * std::max(1.0, std::abs(x(k))));
  const auto z = fd_gradient([](const Eigen::VectorXd&) { return 7.0; }, x);
  EXPECT_EQ(z, Eigen::VectorXd::Zero(3));
  const auto j = fd_jacobian([](const Eigen::VectorXd& v) -> Eigen::VectorXd { return 2.0 * v; }, x);
  EXPECT_LT((j - 2.0 * Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-8);
}
