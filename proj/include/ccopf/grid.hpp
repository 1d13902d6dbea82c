#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <istream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "ccopf/error.hpp"

namespace ccopf {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Bus references inside Grid are 0-based positions; external ids live in bus_ids.
struct Line {
  int from = 0;
  int to = 0;
  double reactance = 0.0;
  double p_lower = -kInf;
  double p_upper = kInf;
};

struct Generator {
  double u_lower = -kInf;
  double u_upper = kInf;
  double cost_h = 0.0;
  double cost_H = 0.0;
};

struct Grid {
  std::vector<long> bus_ids;
  std::vector<double> nominal_demand;  // d_i < 0 consumption, > 0 feed-in
  std::vector<Line> lines;
  std::vector<std::optional<Generator>> generators;  // one slot per bus
  std::optional<int> slack_bus;
  std::string name;

  int n_bus() const { return static_cast<int>(bus_ids.size()); }
  int n_line() const { return static_cast<int>(lines.size()); }
  bool has_generator(int bus) const { return generators[bus].has_value(); }
  // Buses without a generator are pinned to zero output.
  double u_lower(int bus) const { return generators[bus] ? generators[bus]->u_lower : 0.0; }
  double u_upper(int bus) const { return generators[bus] ? generators[bus]->u_upper : 0.0; }
  std::vector<int> generator_buses() const;
  int n_generators() const;
  int bus_index(long id) const;  // throws CaseError for unknown ids
  int default_slack() const;     // explicit slack if set, else lowest-indexed generator bus
};

// Throws CaseError naming the first violated invariant.
void validate(const Grid& grid);

Grid load_case_json(const nlohmann::json& doc);

enum class ReactancePolicy { Reject, Absolute };

struct MatpowerOptions {
  // Series-compensated branches carry negative reactance in some stock cases.
  ReactancePolicy reactance = ReactancePolicy::Reject;
};

Grid load_matpower(std::istream& in, const MatpowerOptions& options = {});

// Dispatches on extension: ".m" goes through the MATPOWER importer, anything else is JSON.
Grid load_case(const std::string& path, const MatpowerOptions& options = {});

nlohmann::json case_to_json(const Grid& grid);

struct Ptdf {
  Eigen::MatrixXd matrix;  // n_line x n_bus, slack column zero
  int slack_bus = 0;

  // phi (I - 1 1^T / N): agrees with matrix on balanced injections and has zero row sums.
  Eigen::MatrixXd projected() const;
};

Ptdf compute_ptdf(const Grid& grid, int slack_bus);
inline Ptdf compute_ptdf(const Grid& grid) { return compute_ptdf(grid, grid.default_slack()); }

}  // namespace ccopf
