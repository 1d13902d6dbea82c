#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ccopf/error.hpp"
#include "ccopf/quadrature.hpp"

namespace ccopf {

enum class GermKind { GaussianStandard, Uniform01, Beta, Gamma, Custom };

// A density on [lo, hi], either a closed-form callable or piecewise-linear through (x, f) pairs.
struct CustomDensity {
  std::string name;
  double lo = 0.0;
  double hi = 1.0;
  std::function<double(double)> pdf;
  std::vector<double> table_x;
  std::vector<double> table_f;

  bool tabulated() const { return !table_x.empty(); }
  double operator()(double x) const;

  static CustomDensity closed_form(std::string name, double lo, double hi, std::function<double(double)> pdf);
  static CustomDensity table(std::vector<double> x, std::vector<double> f, bool normalize = false);
  // pi/2 sin(pi x) on [0, 1].
  static CustomDensity sine();
};

struct GermSpec {
  GermKind kind = GermKind::GaussianStandard;
  double a = 0.0;  // Beta shape a, Gamma shape p
  double b = 0.0;  // Beta shape b
  std::shared_ptr<const CustomDensity> custom;
  std::optional<double> mean;      // custom only; computed by quadrature when absent
  std::optional<double> variance;  // custom only

  static GermSpec gaussian() { return {}; }
  static GermSpec uniform() { return with(GermKind::Uniform01, 0.0, 0.0); }
  static GermSpec beta(double a, double b) { return with(GermKind::Beta, a, b); }
  static GermSpec gamma(double p) { return with(GermKind::Gamma, p, 0.0); }
  static GermSpec from_density(CustomDensity density);

 private:
  static GermSpec with(GermKind kind, double a, double b) {
    GermSpec s;
    s.kind = kind;
    s.a = a;
    s.b = b;
    return s;
  }
};

struct GermComponent {
  GermSpec spec;
  double psi_a = 0.0;  // psi_1(xi) = psi_a + psi_b * xi
  double psi_b = 1.0;
  double gamma1 = 1.0;
  double mean = 0.0;
  double variance = 1.0;
  double lo = 0.0;  // support, possibly infinite
  double hi = 0.0;
  double density_mass = 1.0;  // integral of a custom density before normalization
  std::shared_ptr<const GaussRule> rule;
  std::shared_ptr<const Recurrence> recurrence;
  // Custom germs: CDF sampled on a uniform grid of lo..hi for inverse-CDF sampling.
  std::shared_ptr<const std::vector<double>> cdf_table;

  double psi1(double xi) const { return psi_a + psi_b * xi; }
  double cdf(double xi) const;
  double inverse_cdf(double u) const;  // exact for canonical families, table-interpolated for custom
  std::string family() const;
  std::string describe() const;
};

inline constexpr int kInverseCdfPoints = 4096;

GermComponent build_germ(const GermSpec& spec);

double inner_product(const std::function<double(double)>& f, const std::function<double(double)>& g,
                     const GermComponent& component);

// Monic orthogonal polynomial of the component's measure; degree 1 is psi_1 / psi_b.
double orthogonal_polynomial(const GermComponent& component, int degree, double xi);

struct MultivariateBasis {
  std::vector<GermComponent> components;
  int L = 0;
  Eigen::VectorXd gammas;

  // (psi_1, ..., psi_L) at a germ realization.
  Eigen::VectorXd psi(const Eigen::Ref<const Eigen::VectorXd>& xi) const;
  Eigen::VectorXd germ_a() const;
  Eigen::VectorXd germ_B() const;
};

MultivariateBasis tensorize(std::vector<GermComponent> components);

// (L+1)x(L+1) Gram matrix of {1, psi_1, ..., psi_L} under the product measure, by quadrature.
Eigen::MatrixXd gram_matrix(const MultivariateBasis& basis);

struct AffinePce {
  Eigen::VectorXd x0;
  Eigen::MatrixXd X;
  std::shared_ptr<const MultivariateBasis> basis;

  Eigen::Index dim() const { return x0.size(); }
  Eigen::VectorXd evaluate(const Eigen::Ref<const Eigen::VectorXd>& xi) const;
};

struct Moments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
};

Moments moments(const AffinePce& pce);

// count x n_xi matrix of independent draws; rows are consumed component by component from one engine.
Eigen::MatrixXd sample_germ(const MultivariateBasis& basis, int count, std::uint64_t seed);

}  // namespace ccopf
