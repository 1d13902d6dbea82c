#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "ccopf/formulation.hpp"
#include "ccopf/stochastics.hpp"

namespace ccopf {

// Affine feedback u = u0 + U psi(xi) for the demand d = d0 + D psi(xi), psi = a + B xi (B diagonal).
struct Policy {
  Eigen::VectorXd u0;
  Eigen::MatrixXd U;
  std::shared_ptr<const MultivariateBasis> basis;
  Eigen::VectorXd d0;
  Eigen::MatrixXd D;
  Eigen::VectorXd germ_a;
  Eigen::VectorXd germ_B;

  std::vector<long> bus_ids;
  std::vector<std::string> source_ids;
  double objective = 0.0;
  double epsilon_gen = 0.0;
  double epsilon_line = 0.0;
  double beta_gen = 0.0;
  double beta_line = 0.0;
  std::string beta_rule;
  std::string config_hash;
  std::uint64_t seed = 0;

  int N() const { return static_cast<int>(u0.size()); }
  int L() const { return static_cast<int>(U.cols()); }
  Eigen::VectorXd evaluate(const Eigen::Ref<const Eigen::VectorXd>& xi) const;
  Eigen::VectorXd demand(const Eigen::Ref<const Eigen::VectorXd>& xi) const;
  // Max over l of |1'(d_l + u_l)|, l = 0..L.
  double coefficient_balance_residual() const;
};

Policy make_policy(const CcOpfProblem& problem, const CcOpfSolution& solution);

struct GermRecovery {
  Eigen::VectorXd xi;
  double residual = 0.0;  // inf-norm of D B xi - (d - d0 - D a)
  Eigen::VectorXd singular_values;
  bool in_support = true;
  std::vector<std::string> warnings;
};

inline constexpr double kRankTolerance = 1e-10;
inline constexpr double kRecoveryResidualTolerance = 1e-8;

// Least-squares solve of D B xi = d - d0 - D a. Throws PolicyError on rank deficiency or an inconsistent d.
GermRecovery recover_germ(const Policy& policy, const Eigen::Ref<const Eigen::VectorXd>& d_tilde);

// u(d) = intercept + slope * d[coordinates]; coordinates are bus positions chosen by pivoted QR on D'.
struct DemandCoordinatePolicy {
  Eigen::VectorXd intercept;
  Eigen::MatrixXd slope;
  std::vector<int> coordinates;
};

DemandCoordinatePolicy policy_in_demand_coordinates(const Policy& policy);

enum class LimitSide { Upper, Lower };

// Exact P(u_bus <= bound) (Upper) or P(u_bus >= bound) (Lower) when u_bus depends on a single germ component.
// Throws PolicyError when several components enter, which needs Monte Carlo instead.
double satisfaction_probability_closed_form(const Policy& policy, int bus, double bound, LimitSide side = LimitSide::Upper);

nlohmann::json policy_to_json(const Policy& policy);
Policy policy_from_json(const nlohmann::json& doc);
Policy load_policy_file(const std::string& path);

nlohmann::json germ_spec_to_json(const GermSpec& spec);
GermSpec germ_spec_from_json(const nlohmann::json& doc);

}  // namespace ccopf
