#pragma once

// Reference computations for tests. None of these call into the library's
// numerical code paths.

#include <cmath>
#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

/// Adaptive Gauss-Kronrod (7/15) on [a, b].
inline double integrate(const std::function<double(double)>& f, double a, double b, double tol = 1e-13, int depth = 0) {
  static const double xk[8] = {0.991455371120812639, 0.949107912342758525, 0.864864423359769073, 0.741531185599394440,
                               0.586087235467691130, 0.405845151377397167, 0.207784955007898468, 0.0};
  static const double wk[8] = {0.022935322010529225, 0.063092092629978553, 0.104790010322250184, 0.140653259715525919,
                               0.169004726639267903, 0.190350578064785410, 0.204432940075298892, 0.209482141084727828};
  static const double wg[4] = {0.129484966168869693, 0.279705391489276668, 0.381830050505118945, 0.417959183673469388};
  const double c = 0.5 * (a + b), h = 0.5 * (b - a);
  double k = wk[7] * f(c), g = wg[3] * f(c);
  for (int i = 0; i < 7; ++i) {
    const double s = f(c - h * xk[i]) + f(c + h * xk[i]);
    k += wk[i] * s;
    if (i % 2 == 1) g += wg[i / 2] * s;
  }
  k *= h;
  g *= h;
  // The per-interval tolerance is not halved: below ~1e-16 the estimate is
  // roundoff and further splitting only multiplies work.
  if (std::abs(k - g) <= tol || depth > 30) return k;
  return integrate(f, a, c, tol, depth + 1) + integrate(f, c, b, tol, depth + 1);
}

/// Pr(chi2_df > x) by integrating the density after t = u^2, which removes
/// the singularity at zero for df = 1.
inline double chi2_tail(double x, int df) {
  const double k = df;
  const double lognorm = std::log(2.0) - 0.5 * k * std::log(2.0) - std::lgamma(0.5 * k);
  auto g = [&](double u) {
    if (u <= 0) return df == 1 ? std::exp(lognorm) : 0.0;
    return std::exp(lognorm + (k - 1) * std::log(u) - 0.5 * u * u);
  };
  const double lo = std::sqrt(std::max(0.0, x));
  const double hi = std::max(lo, std::sqrt(k)) + 40.0;
  // Split at the mode so the adaptive rule sees the peak.
  const double mode = std::sqrt(std::max(0.0, k - 1));
  if (mode > lo) return integrate(g, lo, mode) + integrate(g, mode, hi);
  return integrate(g, lo, hi);
}

/// Plain multinomial logit probabilities, no max-subtraction. `u` excludes
/// the base outcome, whose utility is zero.
inline std::vector<double> naive_probs(const std::vector<double>& u) {
  double den = 1.0;
  for (double v : u) den += std::exp(v);
  std::vector<double> p;
  for (double v : u) p.push_back(std::exp(v) / den);
  p.push_back(1.0 / den);
  return p;
}

/// Log-likelihood from first principles. `x[n][i]` is the covariate row of
/// observation n for non-base outcome i (intercept column included).
inline double naive_ll(const std::vector<std::vector<std::vector<double>>>& x, const std::vector<int>& y,
                       const std::vector<std::vector<double>>& beta) {
  double ll = 0.0;
  for (std::size_t n = 0; n < y.size(); ++n) {
    std::vector<double> u;
    for (std::size_t i = 0; i < beta.size(); ++i) {
      double v = 0.0;
      for (std::size_t k = 0; k < beta[i].size(); ++k) v += beta[i][k] * x[n][i][k];
      u.push_back(v);
    }
    ll += std::log(naive_probs(u)[static_cast<std::size_t>(y[n])]);
  }
  return ll;
}

}  // namespace oracle
