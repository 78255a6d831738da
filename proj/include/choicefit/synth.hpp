#pragma once

// Synthetic logit data and brute-force oracles.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "choicefit/dataset.hpp"
#include "choicefit/error.hpp"
#include "choicefit/logit.hpp"
#include "choicefit/mle.hpp"

namespace choicefit {

inline constexpr std::string_view kRngAlgorithm = "xoshiro256** seeded by splitmix64(seed ^ fnv1a64(purpose))";

inline std::uint64_t splitmix64(std::uint64_t& s) {
  std::uint64_t z = (s += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    for (auto& w : s_) w = splitmix64(seed);
  }
  /// Independent stream per (seed, purpose).
  static Rng stream(std::uint64_t seed, std::string_view purpose) { return Rng(seed ^ fnv1a64(purpose)); }

  std::uint64_t next() {
    const std::uint64_t result = std::rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = std::rotl(s_[3], 45);
    return result;
  }
  /// [0, 1) from the top 53 bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  bool bernoulli(double p) { return uniform() < p; }
  /// Box-Muller; both variates are used.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
    have_spare_ = true;
    return r * std::cos(2.0 * std::numbers::pi * u2);
  }
  double normal(double mean, double sd) { return mean + sd * normal(); }

 private:
  std::uint64_t s_[4]{};
  double spare_ = 0.0;
  bool have_spare_ = false;
};

enum class CovariateLaw { normal, uniform, bernoulli };

struct CovariateSpec {
  std::string name;
  CovariateLaw distribution = CovariateLaw::normal;
  std::vector<double> params;  // normal: mean, sd; uniform: lo, hi; bernoulli: p
  double missing_rate = 0.0;
};

struct GeneratorSpec {
  std::string outcome = "y";
  std::vector<Outcome> outcomes;  // base last
  bool intercept = true;
  std::vector<std::map<std::string, double>> beta;  // per non-base outcome; key kConstant for the intercept
  std::vector<CovariateSpec> covariates;
  std::size_t n = 1000;
  std::uint64_t seed = 1;

  void validate() const {
    if (outcomes.size() < 2) throw ConfigError("generator needs at least two outcomes");
    if (beta.size() != outcomes.size() - 1) throw ConfigError("generator needs one coefficient map per non-base outcome");
    for (const auto& c : covariates) {
      const std::size_t need = c.distribution == CovariateLaw::bernoulli ? 1 : 2;
      if (c.params.size() != need) throw ConfigError("covariate '" + c.name + "' has wrong parameter count");
      if (c.missing_rate < 0 || c.missing_rate >= 1) throw ConfigError("missing_rate must be in [0,1)");
    }
    for (const auto& b : beta)
      for (const auto& [k, v] : b) {
        if (k == kConstant) continue;
        if (std::none_of(covariates.begin(), covariates.end(), [&](const auto& c) { return c.name == k; }))
          throw ConfigError("coefficient for unknown covariate '" + k + "'");
      }
  }

  /// The generating model as a ModelSpec, covariates in declaration order.
  ModelSpec model() const {
    ModelSpec s;
    s.outcome = outcome;
    s.outcomes = outcomes;
    s.intercept = intercept;
    for (const auto& b : beta) {
      std::vector<std::string> cv;
      for (const auto& c : covariates)
        if (b.count(c.name)) cv.push_back(c.name);
      s.covariates.push_back(cv);
    }
    return s;
  }
};

inline void from_json(const nlohmann::json& j, CovariateSpec& c) {
  c.name = j.at("name").get<std::string>();
  const auto d = j.value("distribution", std::string("normal"));
  if (d == "normal") c.distribution = CovariateLaw::normal;
  else if (d == "uniform") c.distribution = CovariateLaw::uniform;
  else if (d == "bernoulli") c.distribution = CovariateLaw::bernoulli;
  else throw ConfigError("unknown distribution '" + d + "'");
  c.params = j.at("params").get<std::vector<double>>();
  c.missing_rate = j.value("missing_rate", 0.0);
}

inline void to_json(nlohmann::json& j, const CovariateSpec& c) {
  static const char* names[] = {"normal", "uniform", "bernoulli"};
  j = {{"name", c.name},
       {"distribution", names[static_cast<int>(c.distribution)]},
       {"params", c.params},
       {"missing_rate", c.missing_rate}};
}

inline void from_json(const nlohmann::json& j, GeneratorSpec& g) {
  g = GeneratorSpec{};
  g.outcome = j.value("outcome", std::string("y"));
  for (const auto& o : j.at("outcomes")) g.outcomes.push_back({o.at("code").get<double>(), o.at("label").get<std::string>()});
  g.intercept = j.value("intercept", true);
  const auto& coefs = j.at("coefficients");
  for (std::size_t i = 0; i + 1 < g.outcomes.size(); ++i) {
    const auto& label = g.outcomes[i].label;
    if (!coefs.contains(label)) throw ConfigError("no coefficients for outcome '" + label + "'");
    g.beta.push_back(coefs[label].get<std::map<std::string, double>>());
  }
  g.covariates = j.value("covariates", std::vector<CovariateSpec>{});
  g.n = j.at("n").get<std::size_t>();
  g.seed = j.value("seed", std::uint64_t{1});
  g.validate();
}

inline void to_json(nlohmann::json& j, const GeneratorSpec& g) {
  j = {{"outcome", g.outcome}, {"intercept", g.intercept}, {"n", g.n}, {"seed", g.seed}, {"rng", kRngAlgorithm}};
  j["outcomes"] = nlohmann::json::array();
  for (const auto& o : g.outcomes) j["outcomes"].push_back({{"code", o.code}, {"label", o.label}});
  j["coefficients"] = nlohmann::json::object();
  for (std::size_t i = 0; i < g.beta.size(); ++i) j["coefficients"][g.outcomes[i].label] = g.beta[i];
  j["covariates"] = g.covariates;
}

/// Draw a dataset. Covariates come from one stream, outcomes from another,
/// missingness from a third, so changing the missing rate leaves the
/// complete data untouched.
inline Dataset generate(const GeneratorSpec& g) {
  g.validate();
  const std::size_t I = g.outcomes.size();
  Rng xr = Rng::stream(g.seed, "covariates");
  Rng yr = Rng::stream(g.seed, "outcome");
  Rng mr = Rng::stream(g.seed, "missing");

  std::vector<std::vector<double>> x(g.covariates.size(), std::vector<double>(g.n));
  for (std::size_t r = 0; r < g.n; ++r)
    for (std::size_t c = 0; c < g.covariates.size(); ++c) {
      const auto& cs = g.covariates[c];
      switch (cs.distribution) {
        case CovariateLaw::normal: x[c][r] = xr.normal(cs.params[0], cs.params[1]); break;
        case CovariateLaw::uniform: x[c][r] = xr.uniform(cs.params[0], cs.params[1]); break;
        case CovariateLaw::bernoulli: x[c][r] = xr.bernoulli(cs.params[0]) ? 1.0 : 0.0; break;
      }
    }

  std::vector<double> y(g.n);
  std::vector<double> u(I), p(I);
  for (std::size_t r = 0; r < g.n; ++r) {
    for (std::size_t i = 0; i + 1 < I; ++i) {
      double v = 0.0;
      for (const auto& [k, b] : g.beta[i]) {
        if (k == kConstant) {
          if (g.intercept) v += b;
          continue;
        }
        for (std::size_t c = 0; c < g.covariates.size(); ++c)
          if (g.covariates[c].name == k) v += b * x[c][r];
      }
      u[i] = v;
    }
    u[I - 1] = 0.0;
    p = choice_probabilities(u);
    const double draw = yr.uniform();
    double acc = 0.0;
    std::size_t pick = I - 1;
    for (std::size_t i = 0; i < I; ++i) {
      acc += p[i];
      if (draw < acc) {
        pick = i;
        break;
      }
    }
    y[r] = g.outcomes[pick].code;
  }

  for (std::size_t c = 0; c < g.covariates.size(); ++c)
    if (g.covariates[c].missing_rate > 0)
      for (std::size_t r = 0; r < g.n; ++r)
        if (mr.bernoulli(g.covariates[c].missing_rate)) x[c][r] = missing;

  Schema schema;
  VariableSpec ys;
  ys.name = g.outcome;
  ys.kind = VariableKind::categorical;
  for (const auto& o : g.outcomes) ys.levels.push_back({o.code, o.label});
  schema.add(ys);
  for (const auto& cs : g.covariates) {
    VariableSpec v;
    v.name = cs.name;
    v.kind = cs.distribution == CovariateLaw::bernoulli ? VariableKind::indicator : VariableKind::quantitative;
    schema.add(v);
  }
  std::vector<std::vector<double>> cols;
  cols.push_back(std::move(y));
  for (auto& c : x) cols.push_back(std::move(c));
  return Dataset(std::move(schema), std::move(cols), "synthetic seed=" + std::to_string(g.seed));
}

struct SubsetResult {
  std::vector<std::string> variables;  // names of the chosen units, in candidate order
  double aic = std::numeric_limits<double>::infinity();
  std::size_t skipped = 0;
};

/// One enumerable unit: a variable in the utilities of the listed outcomes.
/// Named like selection terms: "x" when shared, "x@label" for one outcome.
struct SubsetUnit {
  std::string name;
  std::string variable;
  std::vector<std::size_t> outcomes;
};

/// Enumerate every subset of `units` and return the AIC minimiser. Ties:
/// smaller subset, then lexicographic by candidate position.
inline SubsetResult exhaustive_aic(const Dataset& ds, const std::vector<SubsetUnit>& units, const ModelSpec& base,
                                   const OptimizerConfig& cfg = {}, std::ostream* log = nullptr) {
  if (units.size() > 12) throw ConfigError("exhaustive search is limited to 12 candidates");
  std::vector<std::string> all{base.outcome};
  for (const auto& u : units) all.push_back(u.variable);
  const auto rows = complete_case_rows(ds, all);
  if (rows.size() != ds.rows()) throw ConfigError("exhaustive search requires data without missing values");

  SubsetResult best;
  std::vector<std::size_t> best_idx;
  const std::size_t total = std::size_t{1} << units.size();
  for (std::size_t mask = 0; mask < total; ++mask) {
    std::vector<std::size_t> idx;
    for (std::size_t k = 0; k < units.size(); ++k)
      if (mask >> k & 1U) idx.push_back(k);
    ModelSpec spec = base;
    spec.covariates.assign(base.num_outcomes() - 1, {});
    std::vector<std::string> names;
    for (auto k : idx) {
      names.push_back(units[k].name);
      for (auto i : units[k].outcomes) spec.covariates.at(i).push_back(units[k].variable);
    }
    double a;
    try {
      auto f = fit(spec, make_design(spec, ds, rows), cfg);
      if (!f.converged) throw EstimationError("no convergence");
      a = f.aic;
    } catch (const EstimationError& e) {
      ++best.skipped;
      if (log) {
        std::string s;
        for (const auto& v : names) s += (s.empty() ? "" : ",") + v;
        *log << "exhaustive_aic: subset {" << s << "} skipped: " << e.what() << '\n';
      }
      continue;
    }
    const bool better = a < best.aic || (a == best.aic && (idx.size() < best_idx.size() ||
                                                           (idx.size() == best_idx.size() && idx < best_idx)));
    if (better) {
      best.aic = a;
      best.variables = names;
      best_idx = idx;
    }
  }
  return best;
}

/// Variables entering every non-base utility.
inline SubsetResult exhaustive_aic(const Dataset& ds, const std::vector<std::string>& candidates, const ModelSpec& base,
                                   const OptimizerConfig& cfg = {}, std::ostream* log = nullptr) {
  std::vector<SubsetUnit> units;
  for (const auto& v : candidates) {
    SubsetUnit u{v, v, {}};
    for (std::size_t i = 0; i + 1 < base.num_outcomes(); ++i) u.outcomes.push_back(i);
    units.push_back(std::move(u));
  }
  return exhaustive_aic(ds, units, base, cfg, log);
}

/// Central differences with h_k = max(1e-5, 1e-7 |x_k|).
inline Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd xp = x;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double h = std::max(1e-5, 1e-7 * std::abs(x(k)));
    xp(k) = x(k) + h;
    const double fp = f(xp);
    xp(k) = x(k) - h;
    const double fm = f(xp);
    xp(k) = x(k);
    g(k) = (fp - fm) / (2.0 * h);
  }
  return g;
}

/// Jacobian of a vector function by the same central differences.
inline Eigen::MatrixXd fd_jacobian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                                   const Eigen::VectorXd& x) {
  const Eigen::VectorXd f0 = f(x);
  Eigen::MatrixXd J(f0.size(), x.size());
  Eigen::VectorXd xp = x;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double h = std::max(1e-5, 1e-7 * std::abs(x(k)));
    xp(k) = x(k) + h;
    const Eigen::VectorXd fp = f(xp);
    xp(k) = x(k) - h;
    const Eigen::VectorXd fm = f(xp);
    xp(k) = x(k);
    J.col(k) = (fp - fm) / (2.0 * h);
  }
  return J;
}

}  // namespace choicefit
