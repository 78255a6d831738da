#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "choicefit/dataset.hpp"
#include "choicefit/error.hpp"
#include "choicefit/logit.hpp"
#include "choicefit/mle.hpp"

namespace choicefit {

/// Elasticity of P_i with respect to a covariate in outcome i's own utility.
inline double direct_elasticity(double p_i, double beta_ik, double x_k) { return (1.0 - p_i) * beta_ik * x_k; }

/// Elasticity of P_i (i != j) with respect to a covariate in outcome j's utility.
inline double cross_elasticity(double p_j, double beta_jk, double x_k) { return -p_j * beta_jk * x_k; }

enum class Elasticity { inelastic, elastic };

inline Elasticity classify(double e) { return std::abs(e) >= 1.0 ? Elasticity::elastic : Elasticity::inelastic; }

/// Averaged elasticities with respect to one variable entering the utility
/// of outcome `source`. `averaged[i]` is the mean elasticity of P_i: the
/// direct one at i == source, the (common) cross one elsewhere.
struct ElasticityEntry {
  std::size_t source = 0;
  std::string source_label;
  double coefficient = 0.0;
  std::vector<double> averaged;
  std::vector<std::vector<double>> per_observation;  // [row][outcome], only when requested
};

struct ElasticityReport {
  std::string variable;
  std::size_t n_averaged = 0;
  std::vector<ElasticityEntry> entries;
};

inline void to_json(nlohmann::json& j, const ElasticityReport& r) {
  j = {{"variable", r.variable}, {"n_averaged", r.n_averaged}, {"entries", nlohmann::json::array()}};
  for (const auto& e : r.entries)
    j["entries"].push_back(
        {{"source", e.source_label}, {"coefficient", e.coefficient}, {"averaged", e.averaged}});
}

/// Averages over exactly the fit's estimation sample. Refuses discrete
/// variables: their discrete-change analogue is not computed here.
inline ElasticityReport averaged_elasticities(const FitResult& fit, const Dataset& ds, const std::string& var,
                                              bool keep_per_observation = false) {
  if (!fit.converged) throw EstimationError("elasticities need a converged fit");
  const auto& vs = ds.schema().at(var);
  if (vs.kind != VariableKind::quantitative)
    throw Error("'" + var + "' is discrete (" + to_string(vs.kind) +
                "); elasticities are defined for continuous variables only and pseudo-elasticities are not computed");

  const auto& spec = fit.spec;
  const Design d = make_design(spec, ds, fit.rows);
  const auto x = ds.column(var);
  const std::size_t I = spec.num_outcomes();

  ElasticityReport rep;
  rep.variable = var;
  rep.n_averaged = d.size();
  for (std::size_t src = 0; src + 1 < I; ++src) {
    const auto k = spec.param_index(src, var);
    if (k == static_cast<std::size_t>(-1)) continue;
    ElasticityEntry e;
    e.source = src;
    e.source_label = spec.outcomes[src].label;
    e.coefficient = fit.beta(static_cast<Eigen::Index>(k));
    e.averaged.assign(I, 0.0);
    rep.entries.push_back(std::move(e));
  }
  if (rep.entries.empty()) throw Error("'" + var + "' is not in the model");

  for (std::size_t n = 0; n < d.size(); ++n) {
    const auto p = probabilities(d, fit.beta, n);
    const double xv = x[d.rows[n]];
    for (auto& e : rep.entries) {
      std::vector<double> row(I);
      for (std::size_t i = 0; i < I; ++i)
        row[i] = i == e.source ? direct_elasticity(p[i], e.coefficient, xv)
                               : cross_elasticity(p[e.source], e.coefficient, xv);
      for (std::size_t i = 0; i < I; ++i) e.averaged[i] += row[i];
      if (keep_per_observation) e.per_observation.push_back(std::move(row));
    }
  }
  for (auto& e : rep.entries)
    for (auto& v : e.averaged) v /= static_cast<double>(d.size());
  return rep;
}

}  // namespace choicefit
