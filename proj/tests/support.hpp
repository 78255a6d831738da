#pragma once

#include <map>
#include <string>
#include <vector>

#include "choicefit/logit.hpp"
#include "choicefit/synth.hpp"

namespace support {

using choicefit::CovariateLaw;
using choicefit::CovariateSpec;
using choicefit::GeneratorSpec;

/// Outcomes 1..I-1 plus the base, labelled o1, o2, ..., base.
inline std::vector<choicefit::Outcome> outcomes(std::size_t I) {
  std::vector<choicefit::Outcome> o;
  for (std::size_t i = 0; i + 1 < I; ++i) o.push_back({static_cast<double>(i + 1), "o" + std::to_string(i + 1)});
  o.push_back({0.0, "base"});
  return o;
}

/// Standard-normal covariates x1..xk; beta[i] lists the intercept first.
inline GeneratorSpec normal_model(std::size_t I, const std::vector<std::vector<double>>& beta, std::size_t n,
                                  std::uint64_t seed) {
  GeneratorSpec g;
  g.outcomes = outcomes(I);
  const std::size_t k = beta.empty() ? 0 : beta[0].size() - 1;
  for (std::size_t c = 0; c < k; ++c) g.covariates.push_back({"x" + std::to_string(c + 1), CovariateLaw::normal, {0.0, 1.0}, 0.0});
  for (const auto& b : beta) {
    std::map<std::string, double> m{{choicefit::kConstant, b[0]}};
    for (std::size_t c = 0; c < k; ++c)
      if (b[c + 1] != 0.0) m["x" + std::to_string(c + 1)] = b[c + 1];
    g.beta.push_back(m);
  }
  g.n = n;
  g.seed = seed;
  return g;
}

/// A model over x1..xk with every covariate in every non-base utility.
inline choicefit::ModelSpec full_spec(const GeneratorSpec& g, std::size_t k) {
  std::vector<std::string> vars;
  for (std::size_t c = 0; c < k; ++c) vars.push_back("x" + std::to_string(c + 1));
  choicefit::ModelSpec s;
  s.outcome = g.outcome;
  s.outcomes = g.outcomes;
  s.covariates.assign(g.outcomes.size() - 1, vars);
  return s;
}

}  // namespace support
