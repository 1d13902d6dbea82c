#pragma once

#include <Eigen/Dense>

namespace ccopf {

// Gauss rule for a probability measure: weights sum to the measure's total mass.
struct GaussRule {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;

  template <class F>
  double integrate(F&& f) const {
    double acc = 0.0;
    for (Eigen::Index k = 0; k < nodes.size(); ++k) acc += weights[k] * f(nodes[k]);
    return acc;
  }
};

// Monic three-term recurrence p_{k+1}(x) = (x - alpha_k) p_k(x) - beta_k p_{k-1}(x), beta_0 = total mass.
struct Recurrence {
  Eigen::VectorXd alpha;
  Eigen::VectorXd beta;

  int size() const { return static_cast<int>(alpha.size()); }
  double monic(int degree, double x) const;
};

inline constexpr int kQuadratureNodes = 64;

Recurrence hermite_recurrence(int n);                        // standard normal
Recurrence legendre01_recurrence(int n);                     // uniform on [0, 1]
Recurrence jacobi01_recurrence(int n, double a, double b);   // Beta(a, b) on [0, 1]
Recurrence laguerre_recurrence(int n, double p);             // Gamma(p, 1)

// Recurrence coefficients of a discrete measure (discretized Stieltjes procedure).
Recurrence stieltjes(const GaussRule& measure, int n);

// Golub-Welsch: n-node Gauss rule from the first n recurrence coefficients.
GaussRule golub_welsch(const Recurrence& rec, int n);

// Gauss-Legendre rule on [lo, hi] for Lebesgue measure.
GaussRule gauss_legendre(int n, double lo, double hi);

}  // namespace ccopf
