#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "choicefit/dataset.hpp"
#include "choicefit/error.hpp"
#include "choicefit/logit.hpp"

namespace choicefit {

struct OptimizerConfig {
  int max_iterations = 200;
  double gradient_tolerance = 1e-8;  // infinity norm
  int max_step_halvings = 30;
  double divergence_bound = 50.0;    // on |beta|_inf
  double ridge = 1e-8;

  void validate() const {
    if (max_iterations <= 0 || !(gradient_tolerance > 0) || max_step_halvings <= 0 || !(divergence_bound > 0) ||
        !(ridge > 0))
      throw ConfigError("optimizer settings must all be positive");
  }
};

inline void from_json(const nlohmann::json& j, OptimizerConfig& c) {
  c = OptimizerConfig{};
  c.max_iterations = j.value("max_iterations", c.max_iterations);
  c.gradient_tolerance = j.value("gradient_tolerance", c.gradient_tolerance);
  c.max_step_halvings = j.value("max_step_halvings", c.max_step_halvings);
  c.divergence_bound = j.value("divergence_bound", c.divergence_bound);
  c.ridge = j.value("ridge", c.ridge);
  c.validate();
}

struct FitDiagnostics {
  int iterations = 0;
  std::vector<double> ll_trace;  // LL at each accepted iterate, starting at beta = 0
  double gradient_norm = 0.0;
  bool separation = false;
  bool ridge_used = false;
};

struct FitResult {
  ModelSpec spec;
  std::vector<std::string> names;
  Eigen::VectorXd beta;
  Eigen::MatrixXd covariance;
  Eigen::VectorXd t_ratios;
  double ll = 0.0;
  double ll_restricted = 0.0;
  double rho2 = 0.0;
  double aic = 0.0;
  std::size_t n_used = 0;
  bool converged = false;
  FitDiagnostics diagnostics;
  std::vector<std::size_t> rows;            // estimation sample (source row indices)
  std::vector<std::size_t> outcome_counts;  // per outcome, base last

  std::size_t num_params() const { return static_cast<std::size_t>(beta.size()); }

  std::size_t index(std::size_t outcome, const std::string& var) const {
    const auto k = spec.param_index(outcome, var);
    if (k == static_cast<std::size_t>(-1))
      throw Error("'" + var + "' is not in the utility of outcome '" + spec.outcomes.at(outcome).label + "'");
    return k;
  }
  double coefficient(std::size_t outcome, const std::string& var) const {
    return beta(static_cast<Eigen::Index>(index(outcome, var)));
  }
  double t_ratio(std::size_t outcome, const std::string& var) const {
    return t_ratios(static_cast<Eigen::Index>(index(outcome, var)));
  }
};

/// Thrown when |beta|_inf passes the divergence bound while the gradient
/// has not vanished. `best()` is the last iterate, flagged non-converged.
class SeparationError : public EstimationError {
 public:
  SeparationError(const std::string& what, FitResult best) : EstimationError(what), best_(std::move(best)) {}
  const FitResult& best() const noexcept { return best_; }

 private:
  FitResult best_;
};

inline double aic(double ll, std::size_t k) { return -2.0 * ll + 2.0 * static_cast<double>(k); }

/// Log-likelihood of the intercepts-only model: sum_i n_i ln(n_i / N).
inline double restricted_log_likelihood(std::span<const std::size_t> counts) {
  double n = 0.0;
  for (auto c : counts) n += static_cast<double>(c);
  double ll = 0.0;
  for (auto c : counts)
    if (c > 0) ll += static_cast<double>(c) * std::log(static_cast<double>(c) / n);
  return ll;
}

inline double mcfadden_rho2(double ll, double ll_restricted) {
  if (!(ll_restricted < 0)) throw ConsistencyError("restricted log-likelihood must be negative");
  if (ll > 0) throw ConsistencyError("log-likelihood cannot be positive");
  if (ll < ll_restricted) throw ConsistencyError("log-likelihood below the restricted log-likelihood");
  return 1.0 - ll / ll_restricted;
}

/// Inverse standard normal CDF (Acklam's rational approximation with one
/// Halley correction step).
inline double normal_quantile(double p) {
  if (!(p > 0 && p < 1)) throw Error("normal_quantile: p must be in (0,1)");
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01,  -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  constexpr double lo = 0.02425;
  double x;
  if (p < lo) {
    const double q = std::sqrt(-2 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  } else if (p <= 1 - lo) {
    const double q = p - 0.5, r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
  } else {
    const double q = std::sqrt(-2 * std::log(1 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
  const double u = e * std::sqrt(2 * M_PI) * std::exp(x * x / 2);
  return x - u / (1 + x * u / 2);
}

/// Two-tailed large-sample critical value; 1.959964 at level 0.05.
inline double critical_value(double level = 0.05) {
  if (!(level > 0 && level < 1)) throw ConfigError("significance level must be in (0,1)");
  return normal_quantile(1.0 - level / 2.0);
}

inline bool is_significant(double t, double level = 0.05) { return std::abs(t) >= critical_value(level); }

namespace detail {

/// Rank check on each covariate block; names the columns a pivoted QR
/// leaves outside the numerical rank.
inline void check_collinearity(const ModelSpec& spec, const Design& d) {
  std::vector<std::string> bad;
  const auto names = spec.param_names();
  std::size_t off = 0;
  for (std::size_t i = 0; i < d.blocks.size(); ++i) {
    const auto& x = d.blocks[i];
    if (x.cols() == 0) continue;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
    qr.setThreshold(1e-10);
    const auto rank = qr.rank();
    if (rank < x.cols()) {
      const auto& perm = qr.colsPermutation().indices();
      for (Eigen::Index c = rank; c < x.cols(); ++c) bad.push_back(names[off + static_cast<std::size_t>(perm(c))]);
    }
    off += static_cast<std::size_t>(x.cols());
  }
  if (!bad.empty()) {
    std::string msg = "collinear design columns:";
    for (const auto& b : bad) msg += " " + b;
    throw CollinearityError(msg, bad);
  }
}

inline Eigen::VectorXd newton_direction(const Eigen::MatrixXd& neg_hessian, const Eigen::VectorXd& g, double ridge,
                                        bool& ridge_used) {
  Eigen::LLT<Eigen::MatrixXd> llt(neg_hessian);
  if (llt.info() == Eigen::Success) return llt.solve(g);
  const double scale = std::max(1.0, neg_hessian.diagonal().cwiseAbs().maxCoeff());
  for (double eps = ridge; eps < 1e6; eps *= 10) {
    Eigen::MatrixXd a = neg_hessian;
    a.diagonal().array() += eps * scale;
    Eigen::LLT<Eigen::MatrixXd> r(a);
    if (r.info() == Eigen::Success) {
      ridge_used = true;
      return r.solve(g);
    }
  }
  throw EstimationError("Hessian cannot be regularized");
}

inline void finish(FitResult& fr, const Design& d, const Eigen::MatrixXd& neg_hessian) {
  fr.n_used = d.size();
  fr.rows = d.rows;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(neg_hessian);
  const auto k = neg_hessian.rows();
  if (ldlt.info() == Eigen::Success && ldlt.isPositive() && k > 0)
    fr.covariance = ldlt.solve(Eigen::MatrixXd::Identity(k, k));
  else
    fr.covariance = Eigen::MatrixXd::Constant(k, k, std::numeric_limits<double>::quiet_NaN());
  fr.covariance = (0.5 * (fr.covariance + fr.covariance.transpose())).eval();
  fr.t_ratios.resize(k);
  for (Eigen::Index i = 0; i < k; ++i) fr.t_ratios(i) = fr.beta(i) / std::sqrt(fr.covariance(i, i));
  fr.aic = aic(fr.ll, static_cast<std::size_t>(k));
  if (fr.spec.intercept) {
    fr.ll_restricted = restricted_log_likelihood(fr.outcome_counts);
  } else {
    fr.ll_restricted = static_cast<double>(d.size()) * std::log(1.0 / static_cast<double>(d.num_outcomes));
  }
  fr.rho2 = fr.ll_restricted < 0 ? 1.0 - fr.ll / fr.ll_restricted : 0.0;
}

}  // namespace detail

/// Newton-Raphson with step halving from beta = 0.
inline FitResult fit(const ModelSpec& spec, const Design& d, const OptimizerConfig& cfg = {}) {
  cfg.validate();
  const std::size_t k = d.num_params();
  if (d.size() <= k)
    throw UnderdeterminedError("sample of " + std::to_string(d.size()) + " rows cannot identify " +
                               std::to_string(k) + " coefficients");
  FitResult fr;
  fr.spec = spec;
  fr.names = spec.param_names();
  fr.outcome_counts.assign(spec.num_outcomes(), 0);
  for (int c : d.choice) ++fr.outcome_counts[static_cast<std::size_t>(c)];
  for (std::size_t i = 0; i < fr.outcome_counts.size(); ++i)
    if (fr.outcome_counts[i] == 0)
      throw DegenerateOutcomeError("outcome '" + spec.outcomes[i].label + "' is never observed in the sample");
  detail::check_collinearity(spec, d);

  fr.beta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k));
  auto ev = evaluate(d, fr.beta);
  fr.diagnostics.ll_trace.push_back(ev.ll);
  for (int it = 0; it < cfg.max_iterations; ++it) {
    fr.diagnostics.gradient_norm = ev.gradient.size() ? ev.gradient.cwiseAbs().maxCoeff() : 0.0;
    if (fr.diagnostics.gradient_norm <= cfg.gradient_tolerance) {
      fr.converged = true;
      break;
    }
    const Eigen::MatrixXd neg_h = -ev.hessian;
    const Eigen::VectorXd step = detail::newton_direction(neg_h, ev.gradient, cfg.ridge, fr.diagnostics.ridge_used);
    double scale = 1.0;
    bool accepted = false;
    // Near the optimum the gain of a Newton step drops below the rounding
    // noise of the LL sum; a decrease within that noise is not a real one.
    const double noise = 1e-12 * std::max(1.0, std::abs(ev.ll));
    for (int h = 0; h <= cfg.max_step_halvings; ++h, scale *= 0.5) {
      Eigen::VectorXd cand = fr.beta + scale * step;
      const double ll = evaluate(d, cand, Order::value).ll;
      if (ll >= ev.ll - noise) {
        fr.beta = std::move(cand);
        accepted = true;
        break;
      }
    }
    fr.diagnostics.iterations = it + 1;
    if (!accepted) break;
    ev = evaluate(d, fr.beta);
    fr.diagnostics.ll_trace.push_back(ev.ll);
    if (fr.beta.cwiseAbs().maxCoeff() > cfg.divergence_bound) {
      fr.ll = ev.ll;
      fr.diagnostics.gradient_norm = ev.gradient.cwiseAbs().maxCoeff();
      if (fr.diagnostics.gradient_norm > cfg.gradient_tolerance) {
        fr.diagnostics.separation = true;
        detail::finish(fr, d, -ev.hessian);
        throw SeparationError("coefficients diverge (|beta| > " + std::to_string(cfg.divergence_bound) +
                                  "): quasi-complete separation suspected",
                              std::move(fr));
      }
    }
  }
  fr.ll = ev.ll;
  fr.diagnostics.gradient_norm = ev.gradient.size() ? ev.gradient.cwiseAbs().maxCoeff() : 0.0;
  if (fr.diagnostics.gradient_norm <= cfg.gradient_tolerance) fr.converged = true;
  detail::finish(fr, d, -ev.hessian);
  // A perfect fit is only reached at infinity. With widely spread covariates
  // the gradient vanishes well before |beta| meets the bound.
  if (fr.converged && fr.ll > -1e-6) {
    fr.converged = false;
    fr.diagnostics.separation = true;
    throw SeparationError("every observation is fitted with probability ~1: complete separation suspected",
                          std::move(fr));
  }
  return fr;
}

/// Fit on the complete cases (w.r.t. the model's variables) of `rows`.
inline FitResult fit(const ModelSpec& spec, const Dataset& ds, std::span<const std::size_t> rows,
                     const OptimizerConfig& cfg = {}) {
  const auto cols = spec.required_columns();
  std::vector<std::size_t> keep;
  keep.reserve(rows.size());
  std::vector<std::span<const double>> c;
  for (const auto& v : cols) c.push_back(ds.column(v));
  for (auto r : rows) {
    bool ok = true;
    for (const auto& col : c)
      if (is_missing(col[r])) {
        ok = false;
        break;
      }
    if (ok) keep.push_back(r);
  }
  return fit(spec, make_design(spec, ds, keep), cfg);
}

inline FitResult fit(const ModelSpec& spec, const Dataset& ds, const OptimizerConfig& cfg = {}) {
  return fit(spec, make_design(spec, ds), cfg);
}

/// The spec with every covariate removed: intercepts only.
inline ModelSpec intercepts_only(const ModelSpec& spec) {
  ModelSpec r = spec;
  for (auto& cv : r.covariates) cv.clear();
  r.intercept = true;
  return r;
}

/// Iterative intercepts-only fit on the same complete-case sample as `spec`.
inline FitResult restricted_fit(const ModelSpec& spec, const Dataset& ds, const OptimizerConfig& cfg = {}) {
  const auto rows = complete_case_rows(ds, spec.required_columns());
  return fit(intercepts_only(spec), make_design(intercepts_only(spec), ds, rows), cfg);
}

/// Per-coefficient significance flags at a two-tailed level.
inline std::vector<bool> significance(const FitResult& fr, double level = 0.05) {
  if (!fr.converged) throw EstimationError("significance of a non-converged fit");
  const double crit = critical_value(level);
  std::vector<bool> out(fr.num_params());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::abs(fr.t_ratios(static_cast<Eigen::Index>(i))) >= crit;
  return out;
}

/// Two-outcome fit through the closed-form sigmoid, independent of the
/// multinomial evaluation path. Returns beta for outcome 0's block.
inline Eigen::VectorXd fit_binary(const Design& d, const OptimizerConfig& cfg = {}) {
  if (d.num_outcomes != 2) throw DimensionError("fit_binary needs exactly two outcomes");
  const auto& x = d.blocks.at(0);
  const auto n = x.rows();
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) y(i) = d.choice[static_cast<std::size_t>(i)] == 0 ? 1.0 : 0.0;
  auto loglik = [&](const Eigen::VectorXd& b) {
    double ll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double p = binary_probability(x.row(i).dot(b));
      ll += y(i) > 0 ? std::log(p) : std::log1p(-p);
    }
    return ll;
  };
  Eigen::VectorXd b = Eigen::VectorXd::Zero(x.cols());
  double ll = loglik(b);
  for (int it = 0; it < cfg.max_iterations; ++it) {
    Eigen::VectorXd p(n);
    for (Eigen::Index i = 0; i < n; ++i) p(i) = binary_probability(x.row(i).dot(b));
    const Eigen::VectorXd g = x.transpose() * (y - p);
    if (g.cwiseAbs().maxCoeff() <= cfg.gradient_tolerance) break;
    const Eigen::VectorXd w = p.array() * (1.0 - p.array());
    const Eigen::MatrixXd info = x.transpose() * w.asDiagonal() * x;
    const Eigen::VectorXd step = info.ldlt().solve(g);
    double s = 1.0;
    for (int h = 0; h <= cfg.max_step_halvings; ++h, s *= 0.5) {
      const Eigen::VectorXd cand = b + s * step;
      const double l = loglik(cand);
      if (l >= ll) {
        b = cand;
        ll = l;
        break;
      }
    }
  }
  return b;
}

inline void to_json(nlohmann::json& j, const FitResult& f) {
  j = nlohmann::json::object();
  j["model"] = f.spec;
  auto& coefs = j["coefficients"] = nlohmann::json::array();
  for (std::size_t i = 0; i < f.num_params(); ++i) {
    const auto e = static_cast<Eigen::Index>(i);
    const auto& name = f.names[i];
    const auto colon = name.find(':');
    coefs.push_back({{"name", name},
                     {"outcome", name.substr(0, colon)},
                     {"variable", name.substr(colon + 1)},
                     {"estimate", f.beta(e)},
                     {"std_error", std::sqrt(f.covariance(e, e))},
                     {"t_ratio", f.t_ratios(e)}});
  }
  j["ll"] = f.ll;
  j["ll_restricted"] = f.ll_restricted;
  j["rho2"] = f.rho2;
  j["aic"] = f.aic;
  j["k"] = f.num_params();
  j["n_used"] = f.n_used;
  j["outcome_counts"] = f.outcome_counts;
  j["converged"] = f.converged;
  j["separation"] = f.diagnostics.separation;
  j["iterations"] = f.diagnostics.iterations;
  j["gradient_norm"] = f.diagnostics.gradient_norm;
  j["ridge_used"] = f.diagnostics.ridge_used;
}

}  // namespace choicefit
