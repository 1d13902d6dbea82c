#include "ccopf/stochastics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/gamma.hpp>

namespace ccopf {

namespace {

constexpr double kNormTol = 1e-8;

std::string fmt_num(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

void require_shape(double v, const char* what) {
  if (!(v > 0.0) || !std::isfinite(v)) throw ModelError(std::string(what) + " must be positive and finite");
}

double table_pdf(const CustomDensity& d, double x) {
  const auto& xs = d.table_x;
  if (x < xs.front() || x > xs.back()) return 0.0;
  auto it = std::upper_bound(xs.begin(), xs.end(), x);
  if (it == xs.end()) return d.table_f.back();
  const size_t k = static_cast<size_t>(it - xs.begin()) - 1;
  const double t = (x - xs[k]) / (xs[k + 1] - xs[k]);
  return (1.0 - t) * d.table_f[k] + t * d.table_f[k + 1];
}

// Unnormalized integral of a tabulated density over [lo, x]; exact for piecewise-linear f.
double table_integral(const CustomDensity& d, double x) {
  const auto& xs = d.table_x;
  const auto& fs = d.table_f;
  double acc = 0.0;
  for (size_t k = 0; k + 1 < xs.size(); ++k) {
    if (x <= xs[k]) break;
    const double right = std::min(x, xs[k + 1]);
    acc += 0.5 * (right - xs[k]) * (fs[k] + table_pdf(d, right));
  }
  return acc;
}

GaussRule density_rule(const CustomDensity& d) {
  if (!d.tabulated()) {
    GaussRule rule = gauss_legendre(kQuadratureNodes, d.lo, d.hi);
    for (Eigen::Index k = 0; k < rule.nodes.size(); ++k) {
      const double f = d(rule.nodes[k]);
      if (!(f >= 0.0) || !std::isfinite(f)) throw ModelError("custom density '" + d.name + "' is negative or non-finite");
      rule.weights[k] *= f;
    }
    return rule;
  }
  // Three-point Gauss-Legendre per segment integrates (linear density) x (polynomial of degree <= 3) exactly.
  const GaussRule unit = gauss_legendre(3, 0.0, 1.0);
  const size_t segs = d.table_x.size() - 1;
  GaussRule rule{Eigen::VectorXd(3 * segs), Eigen::VectorXd(3 * segs)};
  for (size_t s = 0; s < segs; ++s) {
    const double x0 = d.table_x[s], x1 = d.table_x[s + 1];
    for (int q = 0; q < 3; ++q) {
      const double x = x0 + (x1 - x0) * unit.nodes[q];
      rule.nodes[3 * s + q] = x;
      rule.weights[3 * s + q] = (x1 - x0) * unit.weights[q] * table_pdf(d, x);
    }
  }
  return rule;
}

}  // namespace

double CustomDensity::operator()(double x) const { return tabulated() ? table_pdf(*this, x) : pdf(x); }

CustomDensity CustomDensity::closed_form(std::string name, double lo, double hi, std::function<double(double)> pdf) {
  if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi)) throw ModelError("custom density needs a finite support lo < hi");
  CustomDensity d;
  d.name = std::move(name);
  d.lo = lo;
  d.hi = hi;
  d.pdf = std::move(pdf);
  return d;
}

CustomDensity CustomDensity::table(std::vector<double> x, std::vector<double> f, bool normalize) {
  if (x.size() < 2 || x.size() != f.size()) throw ModelError("tabulated density needs >= 2 matching (x, f) pairs");
  for (size_t k = 0; k < x.size(); ++k) {
    if (!std::isfinite(x[k]) || !std::isfinite(f[k]) || f[k] < 0.0) throw ModelError("tabulated density has invalid entry");
    if (k > 0 && !(x[k] > x[k - 1])) throw ModelError("tabulated density abscissae must increase strictly");
  }
  CustomDensity d;
  d.name = "table";
  d.lo = x.front();
  d.hi = x.back();
  d.table_x = std::move(x);
  d.table_f = std::move(f);
  if (normalize) {
    const double mass = table_integral(d, d.hi);
    if (!(mass > 0.0)) throw ModelError("tabulated density has zero mass");
    for (double& v : d.table_f) v /= mass;
  }
  return d;
}

CustomDensity CustomDensity::sine() {
  return closed_form("sine", 0.0, 1.0, [](double x) { return 0.5 * std::numbers::pi * std::sin(std::numbers::pi * x); });
}

GermSpec GermSpec::from_density(CustomDensity density) {
  GermSpec s;
  s.kind = GermKind::Custom;
  s.custom = std::make_shared<const CustomDensity>(std::move(density));
  return s;
}

GermComponent build_germ(const GermSpec& spec) {
  GermComponent c;
  c.spec = spec;
  const int n = kQuadratureNodes;
  Recurrence rec;
  switch (spec.kind) {
    case GermKind::GaussianStandard:
      c.psi_a = 0.0, c.psi_b = 1.0, c.mean = 0.0, c.variance = 1.0;
      c.lo = -std::numeric_limits<double>::infinity(), c.hi = std::numeric_limits<double>::infinity();
      rec = hermite_recurrence(n);
      break;
    case GermKind::Uniform01:
      c.psi_a = -1.0, c.psi_b = 2.0, c.mean = 0.5, c.variance = 1.0 / 12.0;
      c.lo = 0.0, c.hi = 1.0;
      rec = legendre01_recurrence(n);
      break;
    case GermKind::Beta: {
      require_shape(spec.a, "beta shape a");
      require_shape(spec.b, "beta shape b");
      const double a = spec.a, b = spec.b;
      c.psi_a = -a, c.psi_b = a + b;
      c.mean = a / (a + b);
      c.variance = a * b / ((a + b) * (a + b) * (a + b + 1.0));
      c.lo = 0.0, c.hi = 1.0;
      rec = jacobi01_recurrence(n, a, b);
      break;
    }
    case GermKind::Gamma:
      require_shape(spec.a, "gamma shape p");
      c.psi_a = spec.a, c.psi_b = -1.0, c.mean = spec.a, c.variance = spec.a;
      c.lo = 0.0, c.hi = std::numeric_limits<double>::infinity();
      rec = laguerre_recurrence(n, spec.a);
      break;
    case GermKind::Custom: {
      if (!spec.custom) throw ModelError("custom germ without a density");
      const CustomDensity& d = *spec.custom;
      GaussRule rule = density_rule(d);
      const double mass = rule.weights.sum();
      if (std::abs(mass - 1.0) > kNormTol)
        throw ModelError("custom density '" + d.name + "' not normalized within 1e-8 (integral " + fmt_num(mass) + ")");
      rule.weights /= mass;
      c.density_mass = mass;
      c.mean = spec.mean ? *spec.mean : rule.integrate([](double x) { return x; });
      c.variance = spec.variance ? *spec.variance
                                 : rule.integrate([m = c.mean](double x) { return (x - m) * (x - m); });
      if (!(c.variance > 0.0) || !std::isfinite(c.variance))
        throw ModelError("custom density '" + d.name + "' has nonpositive or non-finite variance");
      c.psi_a = -c.mean, c.psi_b = 1.0;
      c.lo = d.lo, c.hi = d.hi;
      c.rule = std::make_shared<const GaussRule>(rule);
      c.recurrence = std::make_shared<const Recurrence>(stieltjes(rule, std::min<int>(16, static_cast<int>(rule.nodes.size()))));

      auto table = std::make_shared<std::vector<double>>(kInverseCdfPoints + 1);
      const double h = (d.hi - d.lo) / kInverseCdfPoints;
      if (d.tabulated()) {
        for (int j = 0; j <= kInverseCdfPoints; ++j) (*table)[j] = table_integral(d, d.lo + j * h);
      } else {
        const GaussRule cell = gauss_legendre(8, 0.0, 1.0);
        double acc = 0.0;
        (*table)[0] = 0.0;
        for (int j = 0; j < kInverseCdfPoints; ++j) {
          const double x0 = d.lo + j * h;
          acc += h * cell.integrate([&](double t) { return d(x0 + h * t); });
          (*table)[j + 1] = acc;
        }
      }
      const double total = table->back();
      for (double& v : *table) v /= total;
      c.cdf_table = table;
      c.gamma1 = c.variance;
      return c;
    }
  }
  c.gamma1 = c.psi_b * c.psi_b * c.variance;
  c.recurrence = std::make_shared<const Recurrence>(rec);
  c.rule = std::make_shared<const GaussRule>(golub_welsch(rec, n));
  return c;
}

double GermComponent::cdf(double x) const {
  switch (spec.kind) {
    case GermKind::GaussianStandard:
      return 0.5 * std::erfc(-x / std::numbers::sqrt2);
    case GermKind::Uniform01:
      return std::clamp(x, 0.0, 1.0);
    case GermKind::Beta:
      if (x <= 0.0) return 0.0;
      if (x >= 1.0) return 1.0;
      return boost::math::ibeta(spec.a, spec.b, x);
    case GermKind::Gamma:
      return x <= 0.0 ? 0.0 : boost::math::gamma_p(spec.a, x);
    case GermKind::Custom: {
      const CustomDensity& d = *spec.custom;
      if (x <= lo) return 0.0;
      if (x >= hi) return 1.0;
      if (d.tabulated()) return table_integral(d, x) / density_mass;
      const GaussRule r = gauss_legendre(kQuadratureNodes, lo, x);
      return r.integrate(d) / density_mass;
    }
  }
  return 0.0;
}

double GermComponent::inverse_cdf(double u) const {
  u = std::clamp(u, 0.0, 1.0);
  switch (spec.kind) {
    case GermKind::GaussianStandard:
      if (u <= 0.0) return -std::numeric_limits<double>::infinity();
      if (u >= 1.0) return std::numeric_limits<double>::infinity();
      return boost::math::quantile(boost::math::normal_distribution<>(), u);
    case GermKind::Uniform01:
      return u;
    case GermKind::Beta:
      return boost::math::ibeta_inv(spec.a, spec.b, u);
    case GermKind::Gamma:
      if (u >= 1.0) return std::numeric_limits<double>::infinity();
      return boost::math::gamma_p_inv(spec.a, u);
    case GermKind::Custom: {
      const auto& F = *cdf_table;
      auto it = std::upper_bound(F.begin(), F.end(), u);
      if (it == F.end()) return hi;
      if (it == F.begin()) return lo;
      const size_t j = static_cast<size_t>(it - F.begin()) - 1;
      const double h = (hi - lo) / kInverseCdfPoints;
      const double span = F[j + 1] - F[j];
      const double t = span > 0.0 ? (u - F[j]) / span : 0.0;
      return lo + (j + t) * h;
    }
  }
  return 0.0;
}

std::string GermComponent::family() const {
  switch (spec.kind) {
    case GermKind::GaussianStandard:
      return "gaussian";
    case GermKind::Uniform01:
      return "uniform";
    case GermKind::Beta:
      return "beta";
    case GermKind::Gamma:
      return "gamma";
    case GermKind::Custom:
      return "custom";
  }
  return "unknown";
}

std::string GermComponent::describe() const {
  std::ostringstream os;
  os << family();
  if (spec.kind == GermKind::Beta) os << "(" << fmt_num(spec.a) << "," << fmt_num(spec.b) << ")";
  if (spec.kind == GermKind::Gamma) os << "(" << fmt_num(spec.a) << ")";
  if (spec.kind == GermKind::Custom) os << "(" << spec.custom->name << ")";
  os << ": psi1 = " << fmt_num(psi_b) << "*xi " << (psi_a < 0 ? "- " : "+ ") << fmt_num(std::abs(psi_a));
  return os.str();
}

double inner_product(const std::function<double(double)>& f, const std::function<double(double)>& g,
                     const GermComponent& component) {
  if (!component.rule) throw ModelError("quadrature nodes unavailable for germ " + component.family());
  return component.rule->integrate([&](double x) { return f(x) * g(x); });
}

double orthogonal_polynomial(const GermComponent& component, int degree, double xi) {
  return component.recurrence->monic(degree, xi);
}

Eigen::VectorXd MultivariateBasis::psi(const Eigen::Ref<const Eigen::VectorXd>& xi) const {
  Eigen::VectorXd out(L);
  for (int l = 0; l < L; ++l) out[l] = components[l].psi1(xi[l]);
  return out;
}

Eigen::VectorXd MultivariateBasis::germ_a() const {
  Eigen::VectorXd a(L);
  for (int l = 0; l < L; ++l) a[l] = components[l].psi_a;
  return a;
}

Eigen::VectorXd MultivariateBasis::germ_B() const {
  Eigen::VectorXd b(L);
  for (int l = 0; l < L; ++l) b[l] = components[l].psi_b;
  return b;
}

MultivariateBasis tensorize(std::vector<GermComponent> components) {
  if (components.empty()) throw ModelError("tensorize: empty component list");
  MultivariateBasis basis;
  basis.L = static_cast<int>(components.size());
  basis.gammas.resize(basis.L);
  for (int l = 0; l < basis.L; ++l) basis.gammas[l] = components[l].gamma1;
  basis.components = std::move(components);
  return basis;
}

Eigen::MatrixXd gram_matrix(const MultivariateBasis& basis) {
  const int L = basis.L;
  Eigen::VectorXd mass(L), first(L), second(L);
  for (int l = 0; l < L; ++l) {
    const GermComponent& c = basis.components[l];
    const GaussRule& r = *c.rule;
    mass[l] = r.weights.sum();
    first[l] = r.integrate([&](double x) { return c.psi1(x); });
    second[l] = r.integrate([&](double x) { return c.psi1(x) * c.psi1(x); });
  }
  // Product measure: factors of components not involved in a basis pair contribute their mass.
  auto others = [&](int skip1, int skip2) {
    double p = 1.0;
    for (int l = 0; l < L; ++l)
      if (l != skip1 && l != skip2) p *= mass[l];
    return p;
  };
  Eigen::MatrixXd G(L + 1, L + 1);
  G(0, 0) = others(-1, -1);
  for (int l = 0; l < L; ++l) {
    G(0, l + 1) = G(l + 1, 0) = first[l] * others(l, -1);
    G(l + 1, l + 1) = second[l] * others(l, -1);
    for (int k = l + 1; k < L; ++k) G(l + 1, k + 1) = G(k + 1, l + 1) = first[l] * first[k] * others(l, k);
  }
  return G;
}

Eigen::VectorXd AffinePce::evaluate(const Eigen::Ref<const Eigen::VectorXd>& xi) const {
  return x0 + X * basis->psi(xi);
}

Moments moments(const AffinePce& pce) {
  Moments m;
  m.mean = pce.x0;
  m.covariance = pce.X * pce.basis->gammas.asDiagonal() * pce.X.transpose();
  return m;
}

Eigen::MatrixXd sample_germ(const MultivariateBasis& basis, int count, std::uint64_t seed) {
  if (count < 1) throw ModelError("sample_germ: count must be >= 1");
  for (const auto& c : basis.components)
    if (c.spec.kind == GermKind::Custom && !c.cdf_table)
      throw ModelError("custom germ without an inverse-CDF table cannot be sampled");

  std::mt19937_64 engine(seed);
  const int L = basis.L;
  std::vector<std::normal_distribution<double>> normals(L);
  std::vector<std::gamma_distribution<double>> gam_a(L), gam_b(L);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int l = 0; l < L; ++l) {
    const GermSpec& s = basis.components[l].spec;
    if (s.kind == GermKind::Beta) {
      gam_a[l] = std::gamma_distribution<double>(s.a, 1.0);
      gam_b[l] = std::gamma_distribution<double>(s.b, 1.0);
    } else if (s.kind == GermKind::Gamma) {
      gam_a[l] = std::gamma_distribution<double>(s.a, 1.0);
    }
  }

  Eigen::MatrixXd out(count, L);
  for (int r = 0; r < count; ++r) {
    for (int l = 0; l < L; ++l) {
      const GermComponent& c = basis.components[l];
      double v = 0.0;
      switch (c.spec.kind) {
        case GermKind::GaussianStandard:
          v = normals[l](engine);
          break;
        case GermKind::Uniform01:
          v = unif(engine);
          break;
        case GermKind::Beta: {
          const double x = gam_a[l](engine), y = gam_b[l](engine);
          v = x / (x + y);
          break;
        }
        case GermKind::Gamma:
          v = gam_a[l](engine);
          break;
        case GermKind::Custom:
          v = c.inverse_cdf(unif(engine));
          break;
      }
      out(r, l) = v;
    }
  }
  return out;
}

}  // namespace ccopf
