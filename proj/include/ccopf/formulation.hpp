#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

#include "ccopf/conic.hpp"
#include "ccopf/grid.hpp"
#include "ccopf/uncertainty.hpp"

namespace ccopf {

// J(u) = 1/2 u'Hu + h'u. H is N x N over all buses; zero rows for buses without a generator.
struct CostSpec {
  Eigen::MatrixXd H;
  Eigen::VectorXd h;

  bool is_diagonal() const;
  double evaluate(const Eigen::Ref<const Eigen::VectorXd>& u) const { return 0.5 * u.dot(H * u) + h.dot(u); }
  static CostSpec from_grid(const Grid& grid);
};

enum class BetaRule { DistributionallyRobust, GaussianExact, Explicit };

BetaRule parse_beta_rule(const std::string& name);  // "robust", "gaussian", "explicit"
std::string to_string(BetaRule rule);

// Throws ModelError unless 0 < epsilon < 1 (and explicit_beta >= 0 for Explicit).
double beta_factor(BetaRule rule, double epsilon, double explicit_beta = 0.0);

struct ChanceSpec {
  double epsilon_gen = 0.05;
  double epsilon_line = 0.05;
  BetaRule rule = BetaRule::DistributionallyRobust;
  double explicit_beta_gen = 0.0;
  double explicit_beta_line = 0.0;

  double beta_gen() const { return beta_factor(rule, epsilon_gen, explicit_beta_gen); }
  double beta_line() const { return beta_factor(rule, epsilon_line, explicit_beta_line); }
  static ChanceSpec uniform(double epsilon, BetaRule rule) { return {epsilon, epsilon, rule}; }
};

struct FormulationOptions {
  // Non-zero-order coefficients of every generator proportional to the net demand coefficients.
  bool global_balancing = false;
  // Drop line cones that the generation cones already imply.
  bool prune_redundant_lines = true;
  // Divide the objective by max(1, |h|_inf, max H_ii) before handing it to the solver.
  bool normalize_objective = true;
};

struct CcOpfProblem {
  Grid grid;
  Ptdf ptdf;
  DemandPce demand;
  CostSpec cost;
  ChanceSpec chance;
  FormulationOptions options;

  int N() const { return grid.n_bus(); }
  int L() const { return demand.L(); }
};

// Validates the grid, computes the PTDF and takes the cost from the generator data.
CcOpfProblem make_problem(Grid grid, DemandPce demand, ChanceSpec chance, FormulationOptions options = {});

struct SocpLayout {
  int N = 0;
  int L = 0;
  Eigen::Index n_u = 0;  // N (L + 1) control coefficients, u(i, l) = l N + i
  std::vector<int> flow_lines;  // lines carrying flow variables, in order
  Eigen::Index flow_begin = 0;
  Eigen::Index epi_begin = 0;
  Eigen::Index n_epi = 0;
  double objective_scale = 1.0;
  double beta_gen = 0.0;
  double beta_line = 0.0;
  int gen_cones = 0;
  int line_cones = 0;
  int pruned_line_sides = 0;
  int balance_rows = 0;

  Eigen::Index u(int bus, int l) const { return static_cast<Eigen::Index>(l) * N + bus; }
  Eigen::Index flow(int k, int l) const { return flow_begin + static_cast<Eigen::Index>(k) * (L + 1) + l; }
};

struct AssembledSocp {
  ConicProblem conic;
  SocpLayout layout;
  CostSpec cost;
  Eigen::VectorXd gammas;
};

// Exact reformulation of the affine-policy chance-constrained OPF as an SOCP.
AssembledSocp build_socp(const CcOpfProblem& problem);

// Deterministic DC-OPF for a fixed demand vector (the L = 0 instance of build_socp).
AssembledSocp build_dcopf(const Grid& grid, const Ptdf& ptdf, const CostSpec& cost, const Eigen::VectorXd& demand,
                          const FormulationOptions& options = {});

struct CcOpfSolution {
  Eigen::VectorXd u0;
  Eigen::MatrixXd U;  // N x L
  double objective = 0.0;  // J(u0) + 1/2 sum gamma_l u_l'Hu_l, recomputed from the coefficients
  Solution solver;

  bool optimal() const { return solver.optimal(); }
};

CcOpfSolution extract_solution(const AssembledSocp& socp, const Solution& solution);
CcOpfSolution solve_ccopf(const CcOpfProblem& problem, const SolverSettings& settings = {});

double policy_cost(const CostSpec& cost, const Eigen::VectorXd& gammas, const Eigen::VectorXd& u0, const Eigen::MatrixXd& U);

// Gaussian special case over (u0, alpha) with u = u0 - alpha 1'D xi. Requires all-Gaussian sources and H = 0.
struct GaussianReference {
  ConicProblem conic;
  int N = 0;
  Eigen::RowVectorXd s;  // 1'D
  double objective_scale = 1.0;

  Eigen::Index u0(int bus) const { return bus; }
  Eigen::Index alpha(int bus) const { return N + bus; }
};

GaussianReference build_gaussian_reference(const CcOpfProblem& problem);

struct GaussianReferenceSolution {
  Eigen::VectorXd u0;
  Eigen::VectorXd alpha;
  Eigen::MatrixXd U;  // -alpha s
  double objective = 0.0;
  Solution solver;
};

GaussianReferenceSolution solve_gaussian_reference(const CcOpfProblem& problem, const SolverSettings& settings = {});

}  // namespace ccopf
