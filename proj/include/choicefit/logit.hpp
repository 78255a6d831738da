#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "choicefit/dataset.hpp"
#include "choicefit/error.hpp"

namespace choicefit {

inline const std::string kConstant = "const";

struct Outcome {
  double code = 0.0;
  std::string label;
};

/// One multinomial logit model. The last outcome is the base: its utility
/// is identically zero. Each non-base outcome has its own covariate list,
/// preceded by an intercept unless `intercept` is false.
struct ModelSpec {
  std::string outcome;
  std::vector<Outcome> outcomes;
  std::vector<std::vector<std::string>> covariates;  // size outcomes.size() - 1
  bool intercept = true;

  static ModelSpec shared(std::string outcome, std::vector<Outcome> outcomes, const std::vector<std::string>& vars,
                          bool intercept = true) {
    ModelSpec s;
    s.outcome = std::move(outcome);
    s.outcomes = std::move(outcomes);
    s.covariates.assign(s.outcomes.size() > 0 ? s.outcomes.size() - 1 : 0, vars);
    s.intercept = intercept;
    return s;
  }

  std::size_t num_outcomes() const { return outcomes.size(); }
  std::size_t block_size(std::size_t i) const { return covariates.at(i).size() + (intercept ? 1 : 0); }
  std::size_t num_params() const {
    std::size_t k = 0;
    for (std::size_t i = 0; i < covariates.size(); ++i) k += block_size(i);
    return k;
  }
  std::size_t offset(std::size_t i) const {
    std::size_t k = 0;
    for (std::size_t j = 0; j < i; ++j) k += block_size(j);
    return k;
  }

  /// Position of `var` in outcome i's parameter block, or npos.
  std::size_t param_index(std::size_t i, const std::string& var) const {
    const auto& cv = covariates.at(i);
    auto it = std::find(cv.begin(), cv.end(), var);
    if (it == cv.end()) return static_cast<std::size_t>(-1);
    return offset(i) + (intercept ? 1 : 0) + static_cast<std::size_t>(it - cv.begin());
  }

  /// Distinct covariates in first-appearance order.
  std::vector<std::string> variables() const {
    std::vector<std::string> out;
    for (const auto& cv : covariates)
      for (const auto& v : cv)
        if (std::find(out.begin(), out.end(), v) == out.end()) out.push_back(v);
    return out;
  }

  /// Covariates plus the outcome column: what complete cases are taken over.
  std::vector<std::string> required_columns() const {
    auto v = variables();
    v.insert(v.begin(), outcome);
    return v;
  }

  /// "label:variable" for every free parameter.
  std::vector<std::string> param_names() const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < covariates.size(); ++i) {
      if (intercept) out.push_back(outcomes[i].label + ":" + kConstant);
      for (const auto& v : covariates[i]) out.push_back(outcomes[i].label + ":" + v);
    }
    return out;
  }

  void validate() const {
    if (outcomes.size() < 2) throw DimensionError("a logit model needs at least two outcomes");
    if (covariates.size() != outcomes.size() - 1)
      throw DimensionError("need one covariate list per non-base outcome");
    for (std::size_t a = 0; a < outcomes.size(); ++a)
      for (std::size_t b = a + 1; b < outcomes.size(); ++b)
        if (outcomes[a].code == outcomes[b].code) throw DimensionError("duplicate outcome code");
    for (const auto& cv : covariates)
      for (std::size_t a = 0; a < cv.size(); ++a) {
        if (cv[a] == kConstant) throw DimensionError("'const' is reserved for the intercept");
        for (std::size_t b = a + 1; b < cv.size(); ++b)
          if (cv[a] == cv[b]) throw DimensionError("variable '" + cv[a] + "' listed twice for one outcome");
      }
  }
};

inline void to_json(nlohmann::json& j, const ModelSpec& s) {
  j = {{"outcome", s.outcome}, {"intercept", s.intercept}, {"outcomes", nlohmann::json::array()}};
  for (std::size_t i = 0; i < s.outcomes.size(); ++i) {
    nlohmann::json o = {{"code", s.outcomes[i].code}, {"label", s.outcomes[i].label}};
    if (i < s.covariates.size()) o["covariates"] = s.covariates[i];
    j["outcomes"].push_back(o);
  }
}

inline void from_json(const nlohmann::json& j, ModelSpec& s) {
  s = ModelSpec{};
  s.outcome = j.at("outcome").get<std::string>();
  s.intercept = j.value("intercept", true);
  const auto& os = j.at("outcomes");
  for (std::size_t i = 0; i < os.size(); ++i) {
    s.outcomes.push_back({os[i].at("code").get<double>(), os[i].at("label").get<std::string>()});
    if (i + 1 < os.size()) s.covariates.push_back(os[i].value("covariates", std::vector<std::string>{}));
  }
}

/// Materialized covariates for one (model, sample) pair.
struct Design {
  std::vector<Eigen::MatrixXd> blocks;  // per non-base outcome: n x block_size
  std::vector<int> choice;              // outcome index per row
  std::vector<std::size_t> rows;        // source row of each observation
  std::size_t num_outcomes = 0;

  std::size_t size() const { return choice.size(); }
  std::size_t num_params() const {
    std::size_t k = 0;
    for (const auto& b : blocks) k += static_cast<std::size_t>(b.cols());
    return k;
  }
};

/// Build the design for the given rows, which must be complete for the
/// model's variables. Throws on an outcome code that the spec does not list.
inline Design make_design(const ModelSpec& spec, const Dataset& ds, std::span<const std::size_t> rows) {
  spec.validate();
  Design d;
  d.num_outcomes = spec.num_outcomes();
  d.rows.assign(rows.begin(), rows.end());
  const auto y = ds.column(spec.outcome);
  d.choice.reserve(rows.size());
  for (auto r : rows) {
    const double v = y[r];
    int idx = -1;
    for (std::size_t i = 0; i < spec.outcomes.size(); ++i)
      if (spec.outcomes[i].code == v) idx = static_cast<int>(i);
    if (idx < 0)
      throw DimensionError("row " + std::to_string(r) + ": outcome value " + detail::format_number(v) +
                           " is not a declared outcome of '" + spec.outcome + "'");
    d.choice.push_back(idx);
  }
  const auto n = static_cast<Eigen::Index>(rows.size());
  for (std::size_t i = 0; i + 1 < spec.num_outcomes(); ++i) {
    Eigen::MatrixXd x(n, static_cast<Eigen::Index>(spec.block_size(i)));
    Eigen::Index c = 0;
    if (spec.intercept) x.col(c++).setOnes();
    for (const auto& v : spec.covariates[i]) {
      const auto col = ds.column(v);
      for (Eigen::Index k = 0; k < n; ++k) {
        const double val = col[rows[static_cast<std::size_t>(k)]];
        if (is_missing(val)) throw DimensionError("design row has missing '" + v + "'");
        x(k, c) = val;
      }
      ++c;
    }
    d.blocks.push_back(std::move(x));
  }
  return d;
}

inline Design make_design(const ModelSpec& spec, const Dataset& ds) {
  const auto cols = spec.required_columns();
  return make_design(spec, ds, complete_case_rows(ds, cols));
}

/// Softmax over all I linear predictors (base included), with the maximum
/// subtracted first.
inline std::vector<double> choice_probabilities(std::span<const double> utilities) {
  if (utilities.empty()) throw DimensionError("no utilities");
  const double m = *std::max_element(utilities.begin(), utilities.end());
  std::vector<double> p(utilities.size());
  double z = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) z += (p[i] = std::exp(utilities[i] - m));
  for (auto& v : p) v /= z;
  return p;
}

/// Two-outcome closed form: P(1) = 1 / (1 + exp(-u)).
inline double binary_probability(double utility) {
  if (utility >= 0) return 1.0 / (1.0 + std::exp(-utility));
  const double e = std::exp(utility);
  return e / (1.0 + e);
}

/// Linear predictors of row k under parameter vector beta (base last, zero).
inline void utilities(const Design& d, const Eigen::VectorXd& beta, Eigen::Index k, std::vector<double>& u) {
  u.assign(d.num_outcomes, 0.0);
  Eigen::Index off = 0;
  for (std::size_t i = 0; i < d.blocks.size(); ++i) {
    const auto& x = d.blocks[i];
    u[i] = x.row(k).dot(beta.segment(off, x.cols()));
    off += x.cols();
  }
}

inline void check_dims(const Design& d, const Eigen::VectorXd& beta) {
  if (static_cast<std::size_t>(beta.size()) != d.num_params())
    throw DimensionError("parameter vector has length " + std::to_string(beta.size()) + ", model needs " +
                         std::to_string(d.num_params()));
}

/// Probability vector P(1..I) for observation k.
inline std::vector<double> probabilities(const Design& d, const Eigen::VectorXd& beta, std::size_t k) {
  check_dims(d, beta);
  if (k >= d.size()) throw DimensionError("observation index out of range");
  std::vector<double> u;
  utilities(d, beta, static_cast<Eigen::Index>(k), u);
  return choice_probabilities(u);
}

struct Evaluation {
  double ll = 0.0;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd hessian;
};

enum class Order { value, gradient, hessian };

/// Log-likelihood sum_n ln P_n(chosen) and, on request, its analytic
/// gradient and Hessian. Evaluation is single-threaded with a fixed
/// summation order, so results are bit-reproducible.
inline Evaluation evaluate(const Design& d, const Eigen::VectorXd& beta, Order order = Order::hessian) {
  check_dims(d, beta);
  const auto k_total = static_cast<Eigen::Index>(d.num_params());
  const std::size_t J = d.blocks.size();
  const auto N = static_cast<Eigen::Index>(d.size());

  std::vector<Eigen::Index> off(J + 1, 0);
  for (std::size_t i = 0; i < J; ++i) off[i + 1] = off[i] + d.blocks[i].cols();

  // Non-base utilities, one column per outcome.
  Eigen::MatrixXd u(N, static_cast<Eigen::Index>(J));
  for (std::size_t i = 0; i < J; ++i)
    u.col(static_cast<Eigen::Index>(i)).noalias() = d.blocks[i] * beta.segment(off[i], d.blocks[i].cols());

  Evaluation ev;
  Eigen::MatrixXd p(N, static_cast<Eigen::Index>(J));
  for (Eigen::Index n = 0; n < N; ++n) {
    double m = 0.0;  // base utility
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(J); ++i) m = std::max(m, u(n, i));
    double z = std::exp(-m);
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(J); ++i) z += std::exp(u(n, i) - m);
    const double log_z = m + std::log(z);
    const int chosen = d.choice[static_cast<std::size_t>(n)];
    ev.ll += (chosen < static_cast<int>(J) ? u(n, chosen) : 0.0) - log_z;
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(J); ++i) p(n, i) = std::exp(u(n, i) - log_z);
  }
  if (order == Order::value) return ev;

  ev.gradient.resize(k_total);
  for (std::size_t i = 0; i < J; ++i) {
    Eigen::VectorXd resid = -p.col(static_cast<Eigen::Index>(i));
    for (Eigen::Index n = 0; n < N; ++n)
      if (d.choice[static_cast<std::size_t>(n)] == static_cast<int>(i)) resid(n) += 1.0;
    ev.gradient.segment(off[i], d.blocks[i].cols()).noalias() = d.blocks[i].transpose() * resid;
  }
  if (order != Order::hessian) return ev;

  ev.hessian.resize(k_total, k_total);
  for (std::size_t i = 0; i < J; ++i)
    for (std::size_t j = i; j < J; ++j) {
      const auto pi = p.col(static_cast<Eigen::Index>(i)).array();
      Eigen::VectorXd w = -pi * p.col(static_cast<Eigen::Index>(j)).array();
      if (i == j) w.array() += pi;
      Eigen::MatrixXd blk = -(d.blocks[i].transpose() * (w.asDiagonal() * d.blocks[j]));
      ev.hessian.block(off[i], off[j], blk.rows(), blk.cols()) = blk;
      if (i != j) ev.hessian.block(off[j], off[i], blk.cols(), blk.rows()) = blk.transpose();
    }
  // Exact symmetry within diagonal blocks.
  ev.hessian = (0.5 * (ev.hessian + ev.hessian.transpose())).eval();
  return ev;
}

inline double log_likelihood(const Design& d, const Eigen::VectorXd& beta) {
  if (d.size() == 0) throw DimensionError("log-likelihood of an empty sample");
  return evaluate(d, beta, Order::value).ll;
}
inline Eigen::VectorXd gradient(const Design& d, const Eigen::VectorXd& beta) {
  return evaluate(d, beta, Order::gradient).gradient;
}
inline Eigen::MatrixXd hessian(const Design& d, const Eigen::VectorXd& beta) {
  return evaluate(d, beta, Order::hessian).hessian;
}

}  // namespace choicefit
