#include "ccopf/quadrature.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/Eigenvalues>

namespace ccopf {

double Recurrence::monic(int degree, double x) const {
  if (degree < 0) throw std::invalid_argument("negative polynomial degree");
  if (degree > size()) throw std::invalid_argument("recurrence too short for requested degree");
  double prev = 0.0, cur = 1.0;
  for (int k = 0; k < degree; ++k) {
    const double next = (x - alpha[k]) * cur - (k > 0 ? beta[k] * prev : 0.0);
    prev = cur;
    cur = next;
  }
  return cur;
}

Recurrence hermite_recurrence(int n) {
  Recurrence r{Eigen::VectorXd::Zero(n), Eigen::VectorXd(n)};
  r.beta[0] = 1.0;
  for (int k = 1; k < n; ++k) r.beta[k] = k;
  return r;
}

Recurrence legendre01_recurrence(int n) {
  Recurrence r{Eigen::VectorXd::Constant(n, 0.5), Eigen::VectorXd(n)};
  r.beta[0] = 1.0;
  for (int k = 1; k < n; ++k) {
    const double kk = static_cast<double>(k) * k;
    r.beta[k] = kk / (4.0 * (4.0 * kk - 1.0));
  }
  return r;
}

Recurrence jacobi01_recurrence(int n, double a, double b) {
  // Beta(a, b) on [0, 1] is the Jacobi weight (1-x)^(b-1) (1+x)^(a-1) under x = 2 xi - 1.
  const double al = b - 1.0, be = a - 1.0;
  Recurrence r{Eigen::VectorXd(n), Eigen::VectorXd(n)};
  for (int k = 0; k < n; ++k) {
    const double s = 2.0 * k + al + be;
    double alpha_j;
    if (k == 0)
      alpha_j = (be - al) / (al + be + 2.0);
    else
      alpha_j = (be * be - al * al) / (s * (s + 2.0));
    r.alpha[k] = 0.5 * (alpha_j + 1.0);
    double beta_j;
    if (k == 0)
      beta_j = 1.0;
    else if (k == 1)
      beta_j = 4.0 * (1.0 + al) * (1.0 + be) / ((2.0 + al + be) * (2.0 + al + be) * (3.0 + al + be));
    else
      beta_j = 4.0 * k * (k + al) * (k + be) * (k + al + be) / (s * s * (s + 1.0) * (s - 1.0));
    r.beta[k] = k == 0 ? 1.0 : 0.25 * beta_j;
  }
  return r;
}

Recurrence laguerre_recurrence(int n, double p) {
  Recurrence r{Eigen::VectorXd(n), Eigen::VectorXd(n)};
  for (int k = 0; k < n; ++k) {
    r.alpha[k] = 2.0 * k + p;
    r.beta[k] = k == 0 ? 1.0 : k * (k + p - 1.0);
  }
  return r;
}

Recurrence stieltjes(const GaussRule& measure, int n) {
  const Eigen::Index m = measure.nodes.size();
  if (n > m) throw std::invalid_argument("Stieltjes: more coefficients than support points");
  Recurrence r{Eigen::VectorXd(n), Eigen::VectorXd(n)};
  Eigen::VectorXd prev = Eigen::VectorXd::Zero(m), cur = Eigen::VectorXd::Ones(m);
  double norm_prev = 1.0;
  for (int k = 0; k < n; ++k) {
    const double norm = (measure.weights.array() * cur.array().square()).sum();
    const double xnorm = (measure.weights.array() * measure.nodes.array() * cur.array().square()).sum();
    r.alpha[k] = xnorm / norm;
    r.beta[k] = k == 0 ? norm : norm / norm_prev;
    // prev is identically zero at k = 0, so the beta_0 term drops out.
    Eigen::VectorXd next = (measure.nodes.array() - r.alpha[k]) * cur.array() - r.beta[k] * prev.array();
    prev = cur;
    cur = next;
    norm_prev = norm;
  }
  return r;
}

GaussRule golub_welsch(const Recurrence& rec, int n) {
  if (n > rec.size()) throw std::invalid_argument("Golub-Welsch: recurrence too short");
  Eigen::MatrixXd T = Eigen::MatrixXd::Zero(n, n);
  for (int k = 0; k < n; ++k) {
    T(k, k) = rec.alpha[k];
    if (k + 1 < n) T(k, k + 1) = T(k + 1, k) = std::sqrt(rec.beta[k + 1]);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
  if (es.info() != Eigen::Success) throw std::runtime_error("Golub-Welsch eigensolve failed");
  GaussRule rule;
  rule.nodes = es.eigenvalues();
  rule.weights = rec.beta[0] * es.eigenvectors().row(0).transpose().array().square();
  return rule;
}

GaussRule gauss_legendre(int n, double lo, double hi) {
  GaussRule rule = golub_welsch(legendre01_recurrence(n), n);
  rule.nodes = (lo + (hi - lo) * rule.nodes.array()).matrix();
  rule.weights *= (hi - lo);
  return rule;
}

}  // namespace ccopf
