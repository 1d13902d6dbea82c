#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <nlohmann/json.hpp>

#include <string>
#include <vector>

#include "ccopf/cones.hpp"

namespace ccopf {

using SpMat = Eigen::SparseMatrix<double>;

// min c'x + offset  s.t.  A x = b,  h - G x in K (cones cover the rows of G in order).
struct ConicProblem {
  Eigen::VectorXd c;
  SpMat A;
  Eigen::VectorXd b;
  SpMat G;
  Eigen::VectorXd h;
  std::vector<Cone> cones;
  std::vector<std::string> var_names;
  double objective_offset = 0.0;

  Eigen::Index n() const { return c.size(); }
  Eigen::Index p() const { return b.size(); }
  Eigen::Index m() const { return h.size(); }
  // Throws std::invalid_argument on inconsistent dimensions or non-finite data.
  void check() const;
};

enum class SolveStatus { Optimal, Infeasible, Unbounded, MaxIterations, NumericalError };

std::string to_string(SolveStatus status);

struct SolverSettings {
  double tol = 1e-8;
  int max_iter = 200;
  bool presolve = true;
  bool equilibrate = true;
  int refine_steps = 10;
  double step_fraction = 0.99;
  double static_reg = 1e-9;
  // Active-set Newton refinement of an optimal point; kept only when it lowers the KKT residuals.
  bool polish = true;
  bool verbose = false;
};

struct IterationInfo {
  int iter = 0;
  double pcost = 0.0;
  double dcost = 0.0;
  double gap = 0.0;
  double pres = 0.0;
  double dres = 0.0;
  double kappa_over_tau = 0.0;
  double step = 0.0;
  double sigma = 0.0;
};

struct KktResiduals {
  double primal = 0.0;
  double dual = 0.0;
  double gap = 0.0;
};

struct PresolveReport {
  int fixed_variables = 0;
  int singleton_rows = 0;
  int dependent_rows = 0;
  int empty_rows = 0;
  int free_columns = 0;
  int constant_cone_rows = 0;
  Eigen::Index n_before = 0, n_after = 0;
  Eigen::Index p_before = 0, p_after = 0;
  Eigen::Index m_before = 0, m_after = 0;
};

// On Infeasible, (y, z) is a Farkas certificate normalized to b'y + h'z = -1; on Unbounded, x has c'x = -1.
struct Solution {
  Eigen::VectorXd x, y, z, s;
  SolveStatus status = SolveStatus::NumericalError;
  double objective = 0.0;
  KktResiduals kkt;
  int iterations = 0;
  std::vector<IterationInfo> trace;
  PresolveReport presolve;
  std::string message;
  bool polished = false;
  double seconds = 0.0;

  bool optimal() const { return status == SolveStatus::Optimal; }
};

Solution solve(const ConicProblem& problem, const SolverSettings& settings = {});

// Newton iteration on the KKT system with every cone fixed as interior, boundary or zero as the interior-point
// solution suggests. Replaces sol and returns true when the result is feasible and has smaller residuals.
bool polish(const ConicProblem& problem, Solution& sol);

// Relative KKT residuals of (x, y, z, s) for the problem, in infinity norms.
KktResiduals kkt_residuals(const ConicProblem& problem, const Solution& sol);

class PresolveResult {
 public:
  ConicProblem reduced;
  bool infeasible = false;
  bool unbounded = false;
  std::string reason;
  PresolveReport report;

  // Maps a solution of `reduced` back to the original problem, duals included.
  Solution restore(const Solution& reduced_solution) const;

 private:
  friend PresolveResult presolve(const ConicProblem& problem, double tol);
  ConicProblem original_;
  std::vector<int> kept_cols_;
  std::vector<int> kept_rows_;
  std::vector<int> kept_g_rows_;
  Eigen::VectorXd fixed_value_;
  std::vector<char> is_fixed_;
  // Singleton rows in removal order: (row, column).
  std::vector<std::pair<int, int>> singleton_;
};

PresolveResult presolve(const ConicProblem& problem, double tol = 1e-9);

nlohmann::json to_json(const ConicProblem& problem);
ConicProblem conic_from_json(const nlohmann::json& doc);

}  // namespace ccopf
