#include "ccopf/uncertainty.hpp"

#include <cmath>
#include <fstream>
#include <set>

namespace ccopf {

using nlohmann::json;

DistributionSpec DistributionSpec::gaussian(double mean, double stddev) {
  if (!(stddev > 0.0)) throw ModelError("gaussian standard deviation must be positive");
  return {GermSpec::gaussian(), mean, stddev};
}

DistributionSpec DistributionSpec::beta(double a, double b, double lo, double hi) {
  if (!(lo < hi)) throw ModelError("beta support must satisfy lo < hi");
  return {GermSpec::beta(a, b), lo, hi - lo};
}

DistributionSpec DistributionSpec::uniform(double lo, double hi) {
  if (!(lo < hi)) throw ModelError("uniform support must satisfy lo < hi");
  return {GermSpec::uniform(), lo, hi - lo};
}

DistributionSpec DistributionSpec::gamma(double shape, double scale, double loc) {
  if (!(scale != 0.0)) throw ModelError("gamma scale must be nonzero");
  return {GermSpec::gamma(shape), loc, scale};
}

DistributionSpec DistributionSpec::custom(CustomDensity density, double loc, double scale) {
  return {GermSpec::from_density(std::move(density)), loc, scale};
}

DistributionSpec gaussian_pm15_spec(double nominal) {
  if (nominal == 0.0) throw ModelError("pm15 rule needs a nonzero nominal value");
  return DistributionSpec::gaussian(nominal, 0.05 * std::abs(nominal));
}

DistributionSpec beta_pm15_spec(double nominal, double a, double b) {
  if (nominal == 0.0) throw ModelError("pm15 rule needs a nonzero nominal value");
  const double x = 0.85 * nominal, y = 1.15 * nominal;
  return DistributionSpec::beta(a, b, std::min(x, y), std::max(x, y));
}

namespace {

// Mean of the physical value and its coefficient on psi_1.
std::pair<double, double> affine_coefficients(const DistributionSpec& dist, const GermComponent& germ) {
  const double mean = dist.loc + dist.scale * germ.mean;
  const double coef = dist.scale / germ.psi_b;
  return {mean, coef};
}

}  // namespace

UncertaintySource bus_source(const Grid& grid, std::string id, int bus, DistributionSpec distribution) {
  if (bus < 0 || bus >= grid.n_bus()) throw ModelError("source '" + id + "': bus out of range");
  UncertaintySource s;
  s.id = std::move(id);
  s.distribution = std::move(distribution);
  s.injection_pattern = Eigen::VectorXd::Zero(grid.n_bus());
  s.injection_pattern[bus] = 1.0;
  const GermComponent germ = build_germ(s.distribution.germ);
  s.offset = Eigen::VectorXd::Zero(grid.n_bus());
  s.offset[bus] = affine_coefficients(s.distribution, germ).first - grid.nominal_demand[bus];
  s.replaces_bus = bus;
  return s;
}

UncertaintySource distributed_source(const Grid& grid, std::string id, const Eigen::VectorXd& weights,
                                     DistributionSpec distribution) {
  if (weights.size() != grid.n_bus()) throw ModelError("source '" + id + "': weight vector size mismatch");
  UncertaintySource s;
  s.id = std::move(id);
  s.distribution = std::move(distribution);
  s.injection_pattern = weights;
  const GermComponent germ = build_germ(s.distribution.germ);
  s.offset = weights * affine_coefficients(s.distribution, germ).first;
  return s;
}

DemandPce assemble_demand(const Grid& grid, const std::vector<UncertaintySource>& sources) {
  if (sources.empty()) throw ModelError("assemble_demand: no uncertainty sources");
  const int n = grid.n_bus();
  const int L = static_cast<int>(sources.size());
  std::set<std::string> ids;
  std::set<int> replaced;
  std::vector<GermComponent> components;
  Eigen::VectorXd d0 = Eigen::Map<const Eigen::VectorXd>(grid.nominal_demand.data(), n);
  Eigen::MatrixXd D(n, L);
  DemandPce out;
  for (int l = 0; l < L; ++l) {
    const UncertaintySource& s = sources[l];
    if (!ids.insert(s.id).second) throw ModelError("duplicate source id '" + s.id + "'");
    if (s.replaces_bus && !replaced.insert(*s.replaces_bus).second)
      throw ModelError("source '" + s.id + "': bus already carries an uncertain injection");
    if (s.injection_pattern.size() != n || s.offset.size() != n)
      throw ModelError("source '" + s.id + "': pattern size mismatch");
    if (!s.injection_pattern.allFinite() || s.injection_pattern.cwiseAbs().maxCoeff() == 0.0)
      throw ModelError("source '" + s.id + "': injection pattern must be finite with a nonzero entry");
    components.push_back(build_germ(s.distribution.germ));
    const double coef = affine_coefficients(s.distribution, components.back()).second;
    if (coef == 0.0 || !std::isfinite(coef)) throw ModelError("source '" + s.id + "': zero-variance source");
    D.col(l) = s.injection_pattern * coef;
    d0 += s.offset;
    out.source_ids.push_back(s.id);
  }
  out.pce.x0 = d0;
  out.pce.X = D;
  out.pce.basis = std::make_shared<const MultivariateBasis>(tensorize(std::move(components)));
  return out;
}

namespace {

double param(const json& p, const char* key, const std::string& where) {
  if (!p.contains(key) || !p[key].is_number()) throw ModelError(where + ": missing numeric parameter '" + key + "'");
  return p[key].get<double>();
}

double param_or(const json& p, const char* key, double fallback) {
  return p.contains(key) && p[key].is_number() ? p[key].get<double>() : fallback;
}

DistributionSpec parse_distribution(const json& src, std::optional<double> nominal, const std::string& where) {
  const std::string family = src.value("family", std::string());
  const std::string rule = src.value("rule", std::string("explicit"));
  const json params = src.value("params", json::object());
  if (rule != "explicit" && rule != "pm15") throw ModelError(where + ": unknown rule '" + rule + "'");
  if (rule == "pm15" && !nominal) throw ModelError(where + ": pm15 rule needs a single bus");

  if (family == "gaussian") {
    if (rule == "pm15") return gaussian_pm15_spec(*nominal);
    return DistributionSpec::gaussian(param(params, "mean", where), param(params, "std", where));
  }
  if (family == "beta") {
    const double a = param(params, "a", where), b = param(params, "b", where);
    if (rule == "pm15") return beta_pm15_spec(*nominal, a, b);
    return DistributionSpec::beta(a, b, param(params, "lo", where), param(params, "hi", where));
  }
  if (family == "uniform") {
    if (rule == "pm15") {
      if (*nominal == 0.0) throw ModelError(where + ": pm15 rule needs a nonzero nominal value");
      const double x = 0.85 * *nominal, y = 1.15 * *nominal;
      return DistributionSpec::uniform(std::min(x, y), std::max(x, y));
    }
    return DistributionSpec::uniform(param(params, "lo", where), param(params, "hi", where));
  }
  if (family == "gamma") {
    if (rule == "pm15") throw ModelError(where + ": pm15 rule is not defined for gamma sources");
    return DistributionSpec::gamma(param(params, "p", where), param_or(params, "scale", 1.0), param_or(params, "loc", 0.0));
  }
  if (family == "custom") {
    if (rule == "pm15") throw ModelError(where + ": pm15 rule is not defined for custom sources");
    CustomDensity density;
    if (params.contains("table")) {
      const json& t = params["table"];
      density = CustomDensity::table(t.at("x").get<std::vector<double>>(), t.at("f").get<std::vector<double>>(),
                                     t.value("normalize", false));
    } else if (params.value("density", std::string()) == "sine") {
      density = CustomDensity::sine();
    } else {
      throw ModelError(where + ": custom density must be \"sine\" or a {x, f} table");
    }
    DistributionSpec spec = DistributionSpec::custom(std::move(density), param_or(params, "loc", 0.0), param_or(params, "scale", 1.0));
    if (params.contains("mean")) spec.germ.mean = params["mean"].get<double>();
    if (params.contains("variance")) spec.germ.variance = params["variance"].get<double>();
    return spec;
  }
  throw ModelError(where + ": unknown family '" + family + "'");
}

}  // namespace

std::vector<UncertaintySource> load_uncertainty_spec(const Grid& grid, const json& doc) {
  const json& list = doc.is_object() ? doc.at("sources") : doc;
  if (!list.is_array()) throw ModelError("uncertainty spec must be a list of sources");
  std::vector<UncertaintySource> out;
  for (size_t k = 0; k < list.size(); ++k) {
    const json& src = list[k];
    const std::string where = "source " + std::to_string(k);
    const std::string family = src.value("family", std::string("source"));
    if (src.contains("bus")) {
      int bus;
      try {
        bus = grid.bus_index(src["bus"].get<long>());
      } catch (const CaseError& e) {
        throw ModelError(where + ": " + e.what());
      }
      const std::string id = src.value("id", family + "@" + std::to_string(grid.bus_ids[bus]));
      out.push_back(bus_source(grid, id, bus, parse_distribution(src, grid.nominal_demand[bus], where)));
    } else if (src.contains("pattern") || src.contains("buses")) {
      Eigen::VectorXd w = Eigen::VectorXd::Zero(grid.n_bus());
      if (src.contains("buses")) {
        for (const auto& id : src["buses"]) w[grid.bus_index(id.get<long>())] = 1.0;
      } else {
        const std::string pattern = src["pattern"].get<std::string>();
        if (pattern == "all_load_buses") {
          for (int i = 0; i < grid.n_bus(); ++i)
            if (grid.nominal_demand[i] < 0.0) w[i] = 1.0;
        } else if (pattern == "all_buses") {
          w.setOnes();
        } else {
          throw ModelError(where + ": unknown pattern '" + pattern + "'");
        }
      }
      if (w.sum() == 0.0) throw ModelError(where + ": pattern selects no buses");
      w /= w.sum();
      const std::string id = src.value("id", family + "@pattern" + std::to_string(k));
      out.push_back(distributed_source(grid, id, w, parse_distribution(src, std::nullopt, where)));
    } else {
      throw ModelError(where + ": needs 'bus', 'buses' or 'pattern'");
    }
  }
  return out;
}

std::vector<UncertaintySource> load_uncertainty_file(const Grid& grid, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ModelError("cannot open uncertainty spec " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ModelError(path + ": " + e.what());
  }
  return load_uncertainty_spec(grid, doc);
}

}  // namespace ccopf
