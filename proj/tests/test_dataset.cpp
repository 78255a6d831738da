#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <sstream>

#include "choicefit/dataset.hpp"

using namespace choicefit;
using Op = Predicate::Op;

namespace {

VariableSpec quant(std::string name) { return {std::move(name), VariableKind::quantitative, {}, {}, {}, {}}; }
VariableSpec indicator(std::string name) { return {std::move(name), VariableKind::indicator, {}, {}, {}, {}}; }
VariableSpec categorical(std::string name, std::vector<Level> levels) {
  return {std::move(name), VariableKind::categorical, {}, {}, std::move(levels), {}};
}
VariableSpec derived(std::string name, std::string base, Predicate p) {
  return {std::move(name), VariableKind::derived_indicator, std::move(base), std::move(p), {}, {}};
}

Dataset parse(const std::string& text, const Schema& s, TypePolicy policy = TypePolicy::strict) {
  std::istringstream in(text);
  return read_delimited(in, s, {',', policy});
}

std::vector<std::vector<double>> row_multiset(const Dataset& ds) {
  std::vector<std::vector<double>> rows;
  for (std::size_t r = 0; r < ds.rows(); ++r) {
    std::vector<double> row;
    // NaN never compares equal; -1 stands in for missing (no generated value is negative).
    for (std::size_t c = 0; c < ds.cols(); ++c) row.push_back(is_missing(ds.value(r, c)) ? -1.0 : ds.value(r, c));
    rows.push_back(row);
  }
  std::sort(rows.begin(), rows.end());
  return rows;
}

Dataset numbered(std::size_t n, std::size_t k, std::uint64_t seed, double missing_rate) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(0, 1);
  Schema s;
  std::vector<std::vector<double>> cols(k);
  for (std::size_t c = 0; c < k; ++c) {
    s.add(quant("v" + std::to_string(c)));
    for (std::size_t r = 0; r < n; ++r) cols[c].push_back(u(gen) < missing_rate ? missing : std::floor(u(gen) * 80));
  }
  return Dataset(s, cols);
}

}  // namespace

TEST(Load, EmptyCellBecomesMissing) {
  const Schema s({quant("a"), quant("b")});
  const auto ds = parse("a,b\n1,2\n3,\n5,6\n", s);
  EXPECT_EQ(ds.rows(), 3u);
  EXPECT_EQ(ds.missing_count(), 1u);
  EXPECT_TRUE(is_missing(ds.value(1, 1)));
}

TEST(Load, StrictPolicyLocatesBadIndicator) {
  const Schema s({quant("a"), indicator("young")});
  try {
    parse("a,young\n1,0\n2,2\n", s);
    FAIL() << "no error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.row(), 2u);
    EXPECT_EQ(e.column(), "young");
  }
  const auto lenient = parse("a,young\n1,0\n2,2\n", s, TypePolicy::lenient);
  EXPECT_TRUE(is_missing(lenient.value(1, 1)));
}

TEST(Load, HeaderOnlyGivesEmptyDataset) {
  const Schema s({quant("a")});
  const auto ds = parse("a\n", s);
  EXPECT_EQ(ds.rows(), 0u);
  EXPECT_TRUE(ds.empty());
}

TEST(Load, UnknownColumnIsSchemaError) {
  const Schema s({quant("a"), quant("speed")});
  EXPECT_THROW(parse("a,b\n1,2\n", s), SchemaError);
}

TEST(Load, CategoricalLabelsAndSentinels) {
  Schema s({categorical("severity", {{1, "fatal"}, {2, "injury"}, {3, "pdo"}})});
  s.missing_tokens.push_back("-9");
  const auto ds = parse("severity\nfatal\n2\n-9\n", s);
  EXPECT_EQ(ds.value(0, 0), 1.0);
  EXPECT_EQ(ds.value(1, 0), 2.0);
  EXPECT_TRUE(is_missing(ds.value(2, 0)));
}

TEST(Load, SchemaJsonRoundTrip) {
  Schema s({quant("age"), derived("young", "age", Predicate::compare(Op::lt, 25))});
  const Schema back = nlohmann::json(s).get<Schema>();
  EXPECT_EQ(nlohmann::json(back), nlohmann::json(s));
}

TEST(DeriveIndicator, YoungDriver) {
  const Schema s({quant("driver_age")});
  const Dataset ds(s, {{22, 40, missing}});
  const auto out = derive_indicator(ds, derived("young", "driver_age", Predicate::compare(Op::lt, 25)));
  const auto y = out.column("young");
  EXPECT_EQ(y[0], 1.0);
  EXPECT_EQ(y[1], 0.0);
  EXPECT_TRUE(is_missing(y[2]));
}

TEST(DeriveIndicator, MediumLowSpeedIsHalfOpen) {
  const Schema s({quant("speed")});
  const Dataset ds(s, {{50, 30, 31, 55}});
  const auto p = Predicate::both(Predicate::compare(Op::gt, 30), Predicate::compare(Op::le, 50));
  const auto out = derive_indicator(ds, derived("medium_low", "speed", p));
  const auto y = out.column("medium_low");
  EXPECT_EQ(std::vector<double>(y.begin(), y.end()), (std::vector<double>{1, 0, 1, 0}));
}

TEST(DeriveIndicator, NameCollisionRejected) {
  const Schema s({quant("speed")});
  const Dataset ds(s, {{50}});
  EXPECT_THROW(derive_indicator(ds, derived("speed", "speed", Predicate::compare(Op::gt, 1))), SchemaError);
}

TEST(DeriveIndicator, RederivingUnderFreshNameIsIdentical) {
  const auto ds = numbered(200, 1, 3, 0.1);
  const auto p = Predicate::compare(Op::ge, 40);
  const auto a = derive_indicator(ds, derived("hi", "v0", p));
  const auto b = derive_indicator(a, derived("hi2", "v0", p));
  const auto x = b.column("hi"), y = b.column("hi2");
  for (std::size_t r = 0; r < b.rows(); ++r)
    EXPECT_TRUE(x[r] == y[r] || (is_missing(x[r]) && is_missing(y[r])));
}

TEST(CompleteCases, Examples) {
  const Schema s({quant("v"), quant("w")});
  Dataset ds(s, {{1, missing, 3, 4, 5, 6, missing, 8, 9, 10}, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10}});
  const std::vector<std::string> v{"v"};
  const auto f = complete_cases(ds, v);
  EXPECT_EQ(f.data.rows(), 8u);
  EXPECT_EQ(f.removed, 2u);

  const auto same = complete_cases(ds, std::vector<std::string>{});
  EXPECT_EQ(row_multiset(same.data).size(), 10u);
  EXPECT_EQ(same.removed, 0u);

  const Dataset sparse(s, {{1, missing, 3}, {missing, 2, 5}});
  const auto one = complete_cases(sparse, std::vector<std::string>{"v", "w"});
  ASSERT_EQ(one.data.rows(), 1u);
  EXPECT_EQ(one.data.value(0, 0), 3.0);
}

TEST(CompleteCases, ComposesOverUnion) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto ds = numbered(150, 4, seed, 0.15);
    const std::vector<std::string> A{"v0", "v1"}, B{"v2"}, AB{"v0", "v1", "v2"};
    const auto once = complete_cases(ds, AB).data;
    const auto twice = complete_cases(complete_cases(ds, A).data, B).data;
    EXPECT_EQ(row_multiset(once), row_multiset(twice));
  }
}

namespace {

Taxonomy accident_types() {
  Dimension type{"type", "vehicles", {{"1-vehicle", Predicate::compare(Op::eq, 1)},
                                      {"2-car", Predicate::compare(Op::eq, 2)}}};
  return Taxonomy({type});
}

}  // namespace

TEST(Partition, UnmatchedRowsAreUnmodeled) {
  const Schema s({quant("vehicles")});
  const Dataset ds(s, {{1, 3, 2, 1, 3, missing}});  // 3 = two trucks
  const auto p = partition(ds, accident_types());
  ASSERT_EQ(p.parts.size(), 2u);
  EXPECT_EQ(p.parts[0].second.rows(), 2u);
  EXPECT_EQ(p.parts[1].second.rows(), 1u);
  EXPECT_EQ(p.unmodeled.rows(), 3u);
}

TEST(Partition, EmptyInputGivesEmptyParts) {
  const Schema s({quant("vehicles")});
  const Dataset ds(s, {std::vector<double>{}});
  const auto p = partition(ds, accident_types());
  for (const auto& [k, d] : p.parts) EXPECT_EQ(d.rows(), 0u);
  EXPECT_EQ(p.unmodeled.rows(), 0u);
}

TEST(Partition, OverlappingRulesRejected) {
  Dimension d{"speed", "speed", {{"low", Predicate::compare(Op::le, 30)}, {"mid", Predicate::compare(Op::ge, 30)}}};
  EXPECT_THROW(Taxonomy({d}), SchemaError);
}

TEST(Partition, ThirtyCellGridIsLossless) {
  Dimension road{"road", "road", {}};
  for (int c = 1; c <= 5; ++c) road.categories.push_back({"r" + std::to_string(c), Predicate::compare(Op::eq, c)});
  Dimension area{"area", "urban", {{"rural", Predicate::compare(Op::eq, 0)}, {"urban", Predicate::compare(Op::eq, 1)}}};
  Dimension type{"type", "vehicles", {{"1v", Predicate::compare(Op::eq, 1)},
                                      {"2car", Predicate::compare(Op::eq, 2)},
                                      {"car-truck", Predicate::compare(Op::eq, 4)}}};
  const Taxonomy tax({road, area, type});
  EXPECT_EQ(tax.keys().size(), 30u);

  std::mt19937_64 gen(11);
  std::vector<double> r, u, v;
  for (int n = 0; n < 3000; ++n) {
    r.push_back(static_cast<double>(gen() % 6));  // 0 is outside
    u.push_back(static_cast<double>(gen() % 2));
    v.push_back(static_cast<double>(1 + gen() % 4));  // 3 is outside
  }
  const Dataset ds(Schema({quant("road"), quant("urban"), quant("vehicles")}), {r, u, v});
  const auto p = partition(ds, tax);
  std::size_t nonempty = 0;
  std::vector<std::vector<double>> all = row_multiset(p.unmodeled);
  for (const auto& [k, d] : p.parts) {
    nonempty += d.rows() > 0;
    const auto rows = row_multiset(d);
    all.insert(all.end(), rows.begin(), rows.end());
  }
  std::sort(all.begin(), all.end());
  EXPECT_LE(nonempty, 30u);
  EXPECT_EQ(all, row_multiset(ds));
}

TEST(Bin, ExamplesAndEdges) {
  const Schema s({quant("speed")});
  const BinningSpec spec{"speed", {{5, 30}, {30, 50}, {50, 60}}};
  const auto b = bin(Dataset(s, {{25, 30, 55}}), spec);
  ASSERT_EQ(b.bins.size(), 3u);
  for (const auto& d : b.bins) EXPECT_EQ(d.rows(), 1u);
  EXPECT_EQ(b.bins[1].value(0, 0), 30.0);  // left edge belongs to its bin

  const auto r = bin(Dataset(s, {{65, 70, missing, 3, 55}}), spec);
  EXPECT_EQ(r.bins[0].rows() + r.bins[1].rows(), 0u);  // empty bins allowed
  EXPECT_EQ(r.bins[2].rows(), 1u);
  EXPECT_EQ(r.missing, 1u);
  EXPECT_EQ(r.outside, 3u);
}

TEST(Bin, BadEdgesRejected) {
  const Schema s({quant("speed")});
  const Dataset ds(s, {{1}});
  EXPECT_THROW(bin(ds, BinningSpec{"speed", {{30, 50}, {5, 30}}}), ConfigError);
  EXPECT_THROW(bin(ds, BinningSpec{"speed", {{5, 35}, {30, 50}}}), ConfigError);
}

TEST(Bin, SizesInvariantUnderPermutation) {
  const auto ds = numbered(500, 1, 5, 0.05);
  const BinningSpec spec{"v0", {{0, 20}, {20, 45}, {45, 70}}};
  std::vector<std::size_t> perm(ds.rows());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(9));
  const auto a = bin(ds, spec), b = bin(ds.select_rows(perm), spec);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(a.bins[i].rows(), b.bins[i].rows());
}

TEST(Describe, Shares) {
  const Schema s({categorical("severity", {{1, "fatal"}, {2, "injury"}, {3, "pdo"}})});
  const Dataset ds(s, {{1, 2, 2, 2, 3, 3, 3, 3, 3, 3, missing}});
  const auto d = describe(ds, "severity");
  ASSERT_EQ(d.shares.size(), 3u);
  EXPECT_NEAR(d.shares[0].percent, 10.0, 1e-12);
  EXPECT_NEAR(d.shares[1].percent, 30.0, 1e-12);
  EXPECT_NEAR(d.shares[2].percent, 60.0, 1e-12);
  EXPECT_EQ(d.missing, 1u);

  const auto single = describe(Dataset(s, {{2, 2}}), "severity");
  EXPECT_NEAR(single.shares[1].percent, 100.0, 1e-12);
  EXPECT_THROW(describe(Dataset(s, {{missing}}), "severity"), Error);
}

TEST(Describe, PerBinSharesMatchKnownCounts) {
  // counts[bin][level] for severity levels 1..3
  const int counts[4][3] = {{1, 4, 5}, {0, 3, 7}, {2, 2, 16}, {5, 10, 5}};
  const double speeds[4] = {20, 40, 52, 65};
  std::vector<double> speed, sev;
  for (int b = 0; b < 4; ++b)
    for (int l = 0; l < 3; ++l)
      for (int k = 0; k < counts[b][l]; ++k) {
        speed.push_back(speeds[b]);
        sev.push_back(l + 1);
      }
  const Schema s({quant("speed"), categorical("severity", {{1, "fatal"}, {2, "injury"}, {3, "pdo"}})});
  const auto bins = bin(Dataset(s, {speed, sev}), BinningSpec{"speed", {{0, 30}, {30, 50}, {50, 60}, {60, 80}}});
  for (int b = 0; b < 4; ++b) {
    const auto d = describe(bins.bins[b], "severity");
    const double total = counts[b][0] + counts[b][1] + counts[b][2];
    double sum = 0;
    for (int l = 0; l < 3; ++l) {
      EXPECT_NEAR(d.shares[l].percent, 100.0 * counts[b][l] / total, 1e-12);
      sum += d.shares[l].percent;
    }
    EXPECT_NEAR(sum, 100.0, 1e-9);
  }
}
