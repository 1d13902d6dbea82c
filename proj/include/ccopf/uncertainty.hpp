#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <optional>
#include <string>
#include <vector>

#include "ccopf/grid.hpp"
#include "ccopf/stochastics.hpp"

namespace ccopf {

// Physical value = loc + scale * xi with xi drawn from the germ.
struct DistributionSpec {
  GermSpec germ;
  double loc = 0.0;
  double scale = 1.0;

  static DistributionSpec gaussian(double mean, double stddev);
  static DistributionSpec beta(double a, double b, double lo, double hi);
  static DistributionSpec uniform(double lo, double hi);
  static DistributionSpec gamma(double shape, double scale, double loc = 0.0);
  static DistributionSpec custom(CustomDensity density, double loc = 0.0, double scale = 1.0);
};

DistributionSpec gaussian_pm15_spec(double nominal);
DistributionSpec beta_pm15_spec(double nominal, double a, double b);

struct UncertaintySource {
  std::string id;
  DistributionSpec distribution;
  Eigen::VectorXd injection_pattern;  // per unit of the physical value
  Eigen::VectorXd offset;             // contribution to d0
  std::optional<int> replaces_bus;    // bus sources stand in for that bus's nominal demand
};

// The source's value becomes the bus injection (nominal demand is replaced).
UncertaintySource bus_source(const Grid& grid, std::string id, int bus, DistributionSpec distribution);
// The source's value is added on top of nominal demand, split by weights.
UncertaintySource distributed_source(const Grid& grid, std::string id, const Eigen::VectorXd& weights,
                                     DistributionSpec distribution);

struct DemandPce {
  AffinePce pce;  // d = d0 + D psi
  std::vector<std::string> source_ids;

  const Eigen::VectorXd& d0() const { return pce.x0; }
  const Eigen::MatrixXd& D() const { return pce.X; }
  const MultivariateBasis& basis() const { return *pce.basis; }
  int L() const { return pce.basis->L; }
};

DemandPce assemble_demand(const Grid& grid, const std::vector<UncertaintySource>& sources);

// Uncertainty spec sidecar: {"sources": [...]} or a bare list.
std::vector<UncertaintySource> load_uncertainty_spec(const Grid& grid, const nlohmann::json& doc);
std::vector<UncertaintySource> load_uncertainty_file(const Grid& grid, const std::string& path);

}  // namespace ccopf
