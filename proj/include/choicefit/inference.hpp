#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <iostream>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "choicefit/dataset.hpp"
#include "choicefit/error.hpp"
#include "choicefit/logit.hpp"
#include "choicefit/mle.hpp"

namespace choicefit {

namespace detail {

// P(a, x) by its power series; converges fast for x < a + 1.
inline double gamma_p_series(double a, double x) {
  double term = 1.0 / a, sum = term;
  for (int n = 1; n < 10000; ++n) {
    term *= x / (a + n);
    sum += term;
    if (std::abs(term) < std::abs(sum) * 1e-17) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Q(a, x) by the Legendre continued fraction (modified Lentz).
inline double gamma_q_fraction(double a, double x) {
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 10000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-16) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace detail

/// Regularized upper incomplete gamma Q(a, x).
inline double gamma_q(double a, double x) {
  if (!(a > 0)) throw Error("gamma_q: shape must be positive");
  if (x <= 0) return 1.0;
  if (x < a + 1.0) return 1.0 - detail::gamma_p_series(a, x);
  return detail::gamma_q_fraction(a, x);
}

/// Pr(chi2_df > x). df = 0 is the point mass at zero.
inline double chi_squared_sf(double x, std::size_t df) {
  if (x < 0) {
    if (x < -1e-9) std::cerr << "choicefit: warning: negative chi-squared statistic " << x << " clamped to 0\n";
    x = 0;
  }
  if (df == 0) return x <= 0 ? 1.0 : 0.0;
  return std::clamp(gamma_q(0.5 * static_cast<double>(df), 0.5 * x), 0.0, 1.0);
}

struct LRTestResult {
  double ll_pooled = 0.0;
  std::vector<double> ll_bins;
  double ll_bins_sum = 0.0;
  std::size_t M = 0;
  std::size_t K = 0;
  double statistic = 0.0;
  std::size_t df = 0;
  double p_value = 1.0;
  double level = 0.05;
  bool reject = false;
};

inline void to_json(nlohmann::json& j, const LRTestResult& r) {
  j = {{"ll_pooled", r.ll_pooled}, {"ll_bins", r.ll_bins}, {"ll_bins_sum", r.ll_bins_sum}, {"M", r.M},
       {"K", r.K},                 {"statistic", r.statistic}, {"df", r.df},             {"p_value", r.p_value},
       {"level", r.level},         {"reject", r.reject}};
}

inline void from_json(const nlohmann::json& j, LRTestResult& r) {
  r.ll_pooled = j.at("ll_pooled").get<double>();
  r.ll_bins = j.value("ll_bins", std::vector<double>{});
  r.ll_bins_sum = j.at("ll_bins_sum").get<double>();
  r.M = j.at("M").get<std::size_t>();
  r.K = j.at("K").get<std::size_t>();
  r.statistic = j.at("statistic").get<double>();
  r.df = j.at("df").get<std::size_t>();
  r.p_value = j.at("p_value").get<double>();
  r.level = j.value("level", 0.05);
  r.reject = j.at("reject").get<bool>();
}

/// Likelihood-ratio test from the pooled LL and the sum of M per-subset LLs.
inline LRTestResult lr_test_from_sum(double ll_pooled, double ll_bins_sum, std::size_t M, std::size_t K,
                                     double level = 0.05) {
  if (M < 2) throw ConfigError("likelihood-ratio test needs at least two subsets");
  if (!(level > 0 && level < 1)) throw ConfigError("level must be in (0,1)");
  if (ll_bins_sum < ll_pooled - 1e-6)
    throw NestingError("sum of subset log-likelihoods (" + std::to_string(ll_bins_sum) +
                       ") is below the pooled log-likelihood (" + std::to_string(ll_pooled) +
                       "): subsets are not a partition of the pooled sample");
  LRTestResult r;
  r.ll_pooled = ll_pooled;
  r.ll_bins_sum = ll_bins_sum;
  r.M = M;
  r.K = K;
  r.level = level;
  r.statistic = -2.0 * (ll_pooled - ll_bins_sum);
  r.df = (M - 1) * K;
  r.p_value = chi_squared_sf(r.statistic, r.df);
  r.reject = r.p_value < level;
  return r;
}

inline LRTestResult lr_test(double ll_pooled, std::span<const double> ll_bins, std::size_t K, double level = 0.05) {
  // Summed in sorted order: permuting the bins cannot change the rounding.
  std::vector<double> sorted(ll_bins.begin(), ll_bins.end());
  std::sort(sorted.begin(), sorted.end());
  const double sum = std::accumulate(sorted.begin(), sorted.end(), 0.0);
  auto r = lr_test_from_sum(ll_pooled, sum, ll_bins.size(), K, level);
  r.ll_bins.assign(ll_bins.begin(), ll_bins.end());
  return r;
}

// ---------------------------------------------------------------------------

struct PoolingResult {
  LRTestResult test;
  FitResult pooled;
  std::vector<std::string> labels;
  std::vector<FitResult> parts;
  std::string conclusion;  // "together" or "separately"
};

/// Fit one variable list on the pooled sample and on each split subset,
/// then test whether the subsets share one coefficient vector.
inline PoolingResult pooling_test(const ModelSpec& spec, const Dataset& pooled, const Dimension& split,
                                  const OptimizerConfig& cfg = {}, double level = 0.05) {
  const auto rows = complete_case_rows(pooled, spec.required_columns());
  const auto col = pooled.column(split.variable);
  std::vector<std::vector<std::size_t>> subsets(split.categories.size());
  for (auto r : rows) {
    const double v = col[r];
    bool placed = false;
    if (!is_missing(v))
      for (std::size_t c = 0; c < split.categories.size(); ++c)
        if (split.categories[c].when(v)) {
          subsets[c].push_back(r);
          placed = true;
          break;
        }
    if (!placed) throw ConfigError("split '" + split.name + "' does not cover row " + std::to_string(r));
  }
  PoolingResult res;
  for (std::size_t c = 0; c < subsets.size(); ++c) {
    if (subsets[c].empty()) continue;
    res.labels.push_back(split.categories[c].label);
    try {
      res.parts.push_back(fit(spec, make_design(spec, pooled, subsets[c]), cfg));
    } catch (const EstimationError& e) {
      throw EstimationError("subset '" + split.categories[c].label + "': " + e.what());
    }
  }
  if (res.parts.size() < 2) throw ConfigError("split '" + split.name + "' yields fewer than two non-empty subsets");
  res.pooled = fit(spec, make_design(spec, pooled, rows), cfg);
  std::vector<double> lls;
  for (const auto& p : res.parts) lls.push_back(p.ll);
  res.test = lr_test(res.pooled.ll, lls, spec.num_params(), level);
  res.conclusion = res.test.reject ? "separately" : "together";
  return res;
}

// ---------------------------------------------------------------------------

struct StructureOptions {
  double level = 0.05;
  bool merge_small_bins = false;
};

struct BinStructureResult {
  LRTestResult test;
  ModelSpec reduced;
  std::vector<std::string> removed;  // "variable: reason"
  std::vector<std::string> bin_labels;
  std::vector<FitResult> bin_fits;
  FitResult pooled;
  std::string conclusion;  // "SL effect" or "no SL effect"
};

namespace detail {

inline ModelSpec without_variable(ModelSpec spec, const std::string& var) {
  for (auto& cv : spec.covariates) cv.erase(std::remove(cv.begin(), cv.end(), var), cv.end());
  return spec;
}

inline bool constant_on(std::span<const double> col, std::span<const std::size_t> rows) {
  if (rows.empty()) return false;
  const double first = col[rows.front()];
  return std::all_of(rows.begin(), rows.end(), [&](std::size_t r) { return col[r] == first; });
}

}  // namespace detail

/// Re-estimate a final model separately on each bin of `bins.variable`
/// and test the per-bin models against the pooled one. The binning
/// variable, and any variable constant inside some bin, are removed first.
inline BinStructureResult bin_structure_test(const ModelSpec& final_spec, const Dataset& ds, const BinningSpec& bins,
                                             const OptimizerConfig& cfg = {}, const StructureOptions& opt = {}) {
  BinStructureResult res;
  ModelSpec spec = final_spec;
  {
    const auto vars = spec.variables();
    if (std::find(vars.begin(), vars.end(), bins.variable) != vars.end()) {
      spec = detail::without_variable(spec, bins.variable);
      res.removed.push_back(bins.variable + ": binning variable");
    }
  }

  // Each plan entry is a run of adjacent bins estimated as one group.
  std::vector<std::vector<std::size_t>> plan(bins.bins.size());
  for (std::size_t b = 0; b < plan.size(); ++b) plan[b] = {b};
  auto plan_label = [&](const std::vector<std::size_t>& entry) {
    std::string s;
    for (auto b : entry) s += (s.empty() ? "" : "+") + bins.bins[b].label();
    return s;
  };

  std::vector<std::vector<std::size_t>> groups;
  std::vector<std::string> labels;
  const auto y = ds.column(spec.outcome);
  for (;;) {
    auto req = spec.required_columns();
    req.push_back(bins.variable);
    const auto raw = bin_rows(ds, bins, complete_case_rows(ds, req));
    groups.clear();
    labels.clear();
    std::vector<std::vector<std::size_t>> live_plan;
    for (const auto& entry : plan) {
      std::vector<std::size_t> g;
      for (auto b : entry) g.insert(g.end(), raw[b].begin(), raw[b].end());
      if (g.empty()) continue;  // empty bins are dropped and M reduced
      std::sort(g.begin(), g.end());
      groups.push_back(std::move(g));
      labels.push_back(plan_label(entry));
      live_plan.push_back(entry);
    }
    plan = std::move(live_plan);

    bool removed = false;
    for (const auto& v : spec.variables()) {
      const auto col = ds.column(v);
      for (std::size_t g = 0; g < groups.size() && !removed; ++g)
        if (detail::constant_on(col, groups[g])) {
          spec = detail::without_variable(spec, v);
          res.removed.push_back(v + ": constant inside bin " + labels[g]);
          removed = true;
        }
      if (removed) break;
    }
    if (removed) continue;

    const auto k = spec.num_params();
    std::size_t bad = groups.size();
    for (std::size_t g = 0; g < groups.size() && bad == groups.size(); ++g) {
      if (groups[g].size() <= k) bad = g;
      for (const auto& o : spec.outcomes)
        if (std::none_of(groups[g].begin(), groups[g].end(), [&](std::size_t r) { return y[r] == o.code; }))
          bad = g;
    }
    if (bad == groups.size()) break;
    if (!opt.merge_small_bins || groups.size() < 2)
      throw UnderdeterminedError("bin " + labels[bad] + " (" + std::to_string(groups[bad].size()) +
                                 " rows) cannot be estimated with " + std::to_string(k) + " coefficients");
    const std::size_t into = bad == 0 ? 1 : bad - 1;
    auto& dst = plan[into];
    dst.insert(bad < into ? dst.begin() : dst.end(), plan[bad].begin(), plan[bad].end());
    plan.erase(plan.begin() + static_cast<std::ptrdiff_t>(bad));
  }

  if (groups.size() < 2)
    throw UnderdeterminedError("fewer than two estimable bins on '" + bins.variable + "'");

  std::vector<std::size_t> all;
  for (const auto& g : groups) all.insert(all.end(), g.begin(), g.end());
  std::sort(all.begin(), all.end());
  res.reduced = spec;
  res.bin_labels = labels;
  res.pooled = fit(spec, make_design(spec, ds, all), cfg);
  std::vector<double> lls;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    try {
      res.bin_fits.push_back(fit(spec, make_design(spec, ds, groups[g]), cfg));
    } catch (const EstimationError& e) {
      throw EstimationError("bin " + labels[g] + ": " + e.what());
    }
    lls.push_back(res.bin_fits.back().ll);
  }
  res.test = lr_test(res.pooled.ll, lls, spec.num_params(), opt.level);
  res.conclusion = res.test.reject ? "SL effect" : "no SL effect";
  return res;
}

}  // namespace choicefit
