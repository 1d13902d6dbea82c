#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ccopf/conic.hpp"
#include "ccopf/formulation.hpp"
#include "ccopf/policy.hpp"

namespace ccopf {

// Absolute slack when checking a sampled value against a hard limit.
inline constexpr double kLimitTolerance = 1e-9;

struct ConstraintAudit {
  std::string name;
  std::string kind;  // "generator" or "line"
  int index = 0;     // bus position or line index
  LimitSide side = LimitSide::Upper;
  double bound = 0.0;
  double epsilon = 0.0;
  long satisfied = 0;
  double frequency = 0.0;
  std::optional<double> closed_form;  // exact satisfaction probability when one germ component drives it

  bool meets_target() const { return frequency >= 1.0 - epsilon; }
};

struct Histogram {
  std::string label;
  double lo = 0.0;
  double hi = 0.0;
  std::vector<long> counts;
  long underflow = 0;
  long overflow = 0;
};

inline constexpr int kHistogramBins = 200;

struct HindsightStats {
  long requested = 0;
  long solved = 0;
  long infeasible = 0;
  long failed = 0;
  Eigen::VectorXd mean;  // per generator bus
  Eigen::VectorXd std;
  Eigen::VectorXd policy_mean;  // the policy over the same solved samples
  Eigen::VectorXd policy_std;
  double max_balance_residual = 0.0;
  long compared = 0;              // samples where the policy and hOPF are both feasible
  double min_objective_gap = 0.0;  // min of J(policy) - J(hOPF) over compared samples
  long dominance_violations = 0;   // gap < -1e-8
  double seconds = 0.0;
};

inline constexpr double kDominanceTolerance = 1e-8;

struct ValidationReport {
  long sample_count = 0;
  std::uint64_t seed = 0;
  std::string config_hash;
  double policy_objective = 0.0;

  std::vector<ConstraintAudit> constraints;
  double max_balance_residual = 0.0;
  long policy_feasible_samples = 0;  // every hard limit met

  std::vector<int> generator_buses;
  std::vector<long> generator_bus_ids;
  Eigen::VectorXd policy_mean;
  Eigen::VectorXd policy_std;  // empirical over all samples
  Eigen::VectorXd policy_std_analytic;  // from the PCE coefficients
  std::optional<HindsightStats> hindsight;
  std::vector<Histogram> histograms;
};

struct StdComparison {
  double norm1_policy = 0.0;
  double norm1_hindsight = 0.0;
  double norm1_gap = 0.0;  // policy minus hindsight
  double relative_gap = 0.0;
  double inf_norm = 0.0;
  long argmax_bus_id = 0;
};

// Policy std over the hOPF samples against the hOPF std. Throws PolicyError when the report has no hindsight half.
StdComparison compare_std(const ValidationReport& report);
// From raw std vectors over the same generator list.
StdComparison compare_std(const Eigen::VectorXd& policy_std, const Eigen::VectorXd& hindsight_std,
                          const std::vector<long>& bus_ids);

struct HindsightResult {
  SolveStatus status = SolveStatus::NumericalError;
  Eigen::VectorXd u;  // all buses
  double objective = 0.0;
  bool polished = false;

  bool optimal() const { return status == SolveStatus::Optimal; }
};

// Deterministic OPF for one demand realization, built over generator buses only. Line sides that cannot bind
// for the realization are left out.
class HindsightOpf {
 public:
  HindsightOpf(const Grid& grid, const Ptdf& ptdf, const CostSpec& cost, SolverSettings settings = default_settings());

  ConicProblem build(const Eigen::VectorXd& demand) const;
  HindsightResult solve(const Eigen::VectorXd& demand) const;
  const std::vector<int>& generators() const { return gens_; }

  static SolverSettings default_settings();

 private:
  int n_bus_ = 0;
  Eigen::MatrixXd phi_;
  CostSpec cost_;
  SolverSettings settings_;
  std::vector<int> gens_;
  double sigma_ = 1.0;
  Eigen::MatrixXd epi_rows_;  // factor rows over generators
  Eigen::MatrixXd phi_gen_;   // PTDF columns of generator buses
  Eigen::VectorXd gen_lo_, gen_hi_, line_lo_, line_hi_;
  // Per line: shift c and the extreme values of sum_g (phi_jg - c) u_g over the generator box.
  Eigen::VectorXd shift_, box_max_, box_min_;
};

HindsightResult hindsight_opf(const Grid& grid, const CostSpec& cost, const Eigen::VectorXd& demand);

struct AuditOptions {
  long samples = 20000;
  std::uint64_t seed = 1;
  bool hindsight = false;
  long hindsight_samples = 20000;  // first samples of the audit set
  bool histograms = true;
  int threads = 0;  // 0: CCOPF_THREADS or hardware concurrency
};

inline constexpr long kChunkSize = 1024;

int worker_count(int requested);

ValidationReport monte_carlo_audit(const Policy& policy, const CcOpfProblem& problem, const AuditOptions& options);

nlohmann::json report_to_json(const ValidationReport& report);
ValidationReport report_from_json(const nlohmann::json& doc);
// Per-generator CSV: bus_id, policy mean/std (empirical and analytic), hOPF mean/std.
std::string std_table_csv(const ValidationReport& report);
std::string constraints_csv(const ValidationReport& report);
std::string histograms_csv(const ValidationReport& report);
// Markdown summary with the audit table and norm comparisons.
std::string report_markdown(const std::vector<ValidationReport>& reports, const std::vector<std::string>& labels);

}  // namespace ccopf
