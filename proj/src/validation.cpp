#include "ccopf/validation.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <thread>

namespace ccopf {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// Running mean and sum of squared deviations; merged pairwise (Chan et al.).
struct RunningMoments {
  long n = 0;
  VectorXd mean, m2;

  explicit RunningMoments(Index dim = 0) : mean(VectorXd::Zero(dim)), m2(VectorXd::Zero(dim)) {}
  void add(const VectorXd& x) {
    ++n;
    const VectorXd delta = x - mean;
    mean += delta / static_cast<double>(n);
    m2 += delta.cwiseProduct(x - mean);
  }
  void merge(const RunningMoments& o) {
    if (o.n == 0) return;
    if (n == 0) {
      *this = o;
      return;
    }
    const double na = static_cast<double>(n), nb = static_cast<double>(o.n), nt = na + nb;
    const VectorXd delta = o.mean - mean;
    mean += delta * (nb / nt);
    m2 += o.m2 + delta.cwiseProduct(delta) * (na * nb / nt);
    n += o.n;
  }
  VectorXd stddev() const {
    if (n < 2) return VectorXd::Zero(mean.size());
    return (m2 / static_cast<double>(n - 1)).cwiseMax(0.0).cwiseSqrt();
  }
};

struct Limit {
  bool line = false;
  int index = 0;  // generator slot or line
  LimitSide side = LimitSide::Upper;
  double bound = 0.0;
};

struct ChunkResult {
  std::vector<long> satisfied;
  long feasible = 0;
  double max_residual = 0.0;
  RunningMoments policy;
  std::vector<std::vector<long>> bins;
  std::vector<long> under, over;

  long h_solved = 0, h_infeasible = 0, h_failed = 0, h_compared = 0, h_violations = 0;
  double h_residual = 0.0;
  double h_min_gap = std::numeric_limits<double>::infinity();
  RunningMoments hopf, paired;
};

double objective_scale_of(const CostSpec& cost) {
  double s = 1.0;
  if (cost.h.size()) s = std::max(s, cost.h.cwiseAbs().maxCoeff());
  if (cost.H.size()) s = std::max(s, cost.H.cwiseAbs().maxCoeff());
  return s;
}

// psi range of a component, with +-6 standard deviations standing in for an infinite end.
std::pair<double, double> psi_range(const GermComponent& c) {
  const double sd = std::sqrt(c.variance);
  const double lo = std::isfinite(c.lo) ? c.lo : c.mean - 6.0 * sd;
  const double hi = std::isfinite(c.hi) ? c.hi : c.mean + 6.0 * sd;
  const double a = c.psi1(lo), b = c.psi1(hi);
  return {std::min(a, b), std::max(a, b)};
}

}  // namespace

int worker_count(int requested) {
  if (requested > 0) return requested;
  int n = static_cast<int>(std::thread::hardware_concurrency());
  if (n < 1) n = 1;
  if (const char* env = std::getenv("CCOPF_THREADS")) {
    const int cap = std::atoi(env);
    if (cap > 0) n = std::min(n, cap);
  }
  return n;
}

StdComparison compare_std(const VectorXd& policy_std, const VectorXd& hindsight_std, const std::vector<long>& bus_ids) {
  if (policy_std.size() != hindsight_std.size() || static_cast<size_t>(policy_std.size()) != bus_ids.size())
    throw PolicyError("std vectors do not cover the same generators");
  StdComparison c;
  c.norm1_policy = policy_std.lpNorm<1>();
  c.norm1_hindsight = hindsight_std.lpNorm<1>();
  c.norm1_gap = c.norm1_policy - c.norm1_hindsight;
  c.relative_gap = c.norm1_hindsight > 0.0 ? std::abs(c.norm1_gap) / c.norm1_hindsight : 0.0;
  if (policy_std.size()) {
    Index k;
    c.inf_norm = (hindsight_std - policy_std).cwiseAbs().maxCoeff(&k);
    c.argmax_bus_id = bus_ids[k];
  }
  return c;
}

StdComparison compare_std(const ValidationReport& report) {
  if (!report.hindsight) throw PolicyError("report has no hindsight statistics");
  return compare_std(report.hindsight->policy_std, report.hindsight->std, report.generator_bus_ids);
}

SolverSettings HindsightOpf::default_settings() {
  SolverSettings s;
  s.presolve = false;
  return s;
}

HindsightOpf::HindsightOpf(const Grid& grid, const Ptdf& ptdf, const CostSpec& cost, SolverSettings settings)
    : n_bus_(grid.n_bus()), phi_(ptdf.matrix), cost_(cost), settings_(settings), gens_(grid.generator_buses()) {
  if (phi_.rows() != grid.n_line() || phi_.cols() != n_bus_) throw ModelError("hOPF: PTDF dimension mismatch");
  if (cost.H.rows() != n_bus_ || cost.h.size() != n_bus_) throw ModelError("hOPF: cost dimension mismatch");
  const Index ng = static_cast<Index>(gens_.size());
  sigma_ = objective_scale_of(cost);

  MatrixXd Hg(ng, ng);
  for (Index a = 0; a < ng; ++a)
    for (Index b = 0; b < ng; ++b) Hg(a, b) = cost.H(gens_[a], gens_[b]);
  if (cost.is_diagonal()) {
    std::vector<Index> rows;
    for (Index a = 0; a < ng; ++a)
      if (Hg(a, a) > 0.0) rows.push_back(a);
    epi_rows_ = MatrixXd::Zero(rows.size(), ng);
    for (size_t k = 0; k < rows.size(); ++k) epi_rows_(k, rows[k]) = std::sqrt(Hg(rows[k], rows[k]));
  } else {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(Hg);
    const double cut = 1e-12 * std::max(es.eigenvalues().cwiseAbs().maxCoeff(), 1e-300);
    if (es.eigenvalues().minCoeff() < -cut) throw ModelError("cost matrix H is not positive semidefinite");
    std::vector<Index> keep;
    for (Index k = 0; k < ng; ++k)
      if (es.eigenvalues()[k] > cut) keep.push_back(k);
    epi_rows_.resize(keep.size(), ng);
    for (size_t k = 0; k < keep.size(); ++k)
      epi_rows_.row(k) = std::sqrt(es.eigenvalues()[keep[k]]) * es.eigenvectors().col(keep[k]).transpose();
  }

  phi_gen_.resize(phi_.rows(), ng);
  gen_lo_.resize(ng);
  gen_hi_.resize(ng);
  for (Index a = 0; a < ng; ++a) {
    phi_gen_.col(a) = phi_.col(gens_[a]);
    gen_lo_[a] = grid.u_lower(gens_[a]);
    gen_hi_[a] = grid.u_upper(gens_[a]);
  }
  line_lo_.resize(grid.n_line());
  line_hi_.resize(grid.n_line());
  for (int j = 0; j < grid.n_line(); ++j) {
    line_lo_[j] = grid.lines[j].p_lower;
    line_hi_[j] = grid.lines[j].p_upper;
  }

  // flow = (phi - c 1)'(u + d) on balanced injections; c is the weighted median of the generator entries.
  shift_ = VectorXd::Zero(phi_.rows());
  box_max_ = VectorXd::Constant(phi_.rows(), kInf);
  box_min_ = VectorXd::Constant(phi_.rows(), -kInf);
  const bool finite_box = gen_lo_.allFinite() && gen_hi_.allFinite();
  if (!finite_box || ng == 0) return;
  VectorXd weight(ng);
  for (Index a = 0; a < ng; ++a) weight[a] = std::max({std::abs(gen_lo_[a]), std::abs(gen_hi_[a]), 1e-12});
  for (Index j = 0; j < phi_.rows(); ++j) {
    std::vector<std::pair<double, double>> wv;
    for (Index a = 0; a < ng; ++a) wv.emplace_back(phi_gen_(j, a), weight[a]);
    std::sort(wv.begin(), wv.end());
    double acc = 0.0, c = 0.0;
    for (const auto& [v, w] : wv) {
      acc += w;
      if (acc >= 0.5 * weight.sum()) {
        c = v;
        break;
      }
    }
    shift_[j] = c;
    double mx = 0.0, mn = 0.0;
    for (Index a = 0; a < ng; ++a) {
      const double coef = phi_gen_(j, a) - c;
      mx += std::max(coef * gen_lo_[a], coef * gen_hi_[a]);
      mn += std::min(coef * gen_lo_[a], coef * gen_hi_[a]);
    }
    box_max_[j] = mx;
    box_min_[j] = mn;
  }
}

ConicProblem HindsightOpf::build(const VectorXd& d) const {
  if (d.size() != n_bus_) throw ModelError("hOPF: demand has the wrong dimension");
  const Index ng = static_cast<Index>(gens_.size());
  const bool quadratic = epi_rows_.rows() > 0;
  const Index n = ng + (quadratic ? 1 : 0);
  const VectorXd flow_d = phi_ * d;
  const double total = d.sum();

  ConicProblem P;
  P.c = VectorXd::Zero(n);
  for (Index a = 0; a < ng; ++a) P.c[a] = cost_.h[gens_[a]] / sigma_;
  if (quadratic) P.c[ng] = 1.0;
  std::vector<Eigen::Triplet<double>> at, gt;
  for (Index a = 0; a < ng; ++a) at.emplace_back(0, a, 1.0);
  P.A.resize(1, n);
  P.A.setFromTriplets(at.begin(), at.end());
  P.b = VectorXd::Constant(1, -total);

  std::vector<double> h;
  auto row = [&](auto&& fill, double rhs) {
    fill(static_cast<Index>(h.size()));
    h.push_back(rhs);
  };
  for (Index a = 0; a < ng; ++a) {
    if (std::isfinite(gen_hi_[a])) row([&](Index r) { gt.emplace_back(r, a, 1.0); }, gen_hi_[a]);
    if (std::isfinite(gen_lo_[a])) row([&](Index r) { gt.emplace_back(r, a, -1.0); }, -gen_lo_[a]);
  }
  for (Index j = 0; j < phi_.rows(); ++j) {
    const double rest = flow_d[j] - shift_[j] * total;
    auto coeffs = [&](double sign) {
      return [&, sign](Index r) {
        for (Index a = 0; a < ng; ++a)
          if (phi_gen_(j, a) != 0.0) gt.emplace_back(r, a, sign * phi_gen_(j, a));
      };
    };
    if (std::isfinite(line_hi_[j]) && !(box_max_[j] + rest <= line_hi_[j])) row(coeffs(1.0), line_hi_[j] - flow_d[j]);
    if (std::isfinite(line_lo_[j]) && !(box_min_[j] + rest >= line_lo_[j])) row(coeffs(-1.0), flow_d[j] - line_lo_[j]);
  }
  if (!h.empty()) P.cones.push_back(Cone::nonneg(static_cast<Index>(h.size())));
  if (quadratic) {
    // (t + 1/2, t - 1/2, R u / sqrt(sigma)).
    const Index r0 = static_cast<Index>(h.size());
    gt.emplace_back(r0, ng, -1.0);
    gt.emplace_back(r0 + 1, ng, -1.0);
    h.push_back(0.5);
    h.push_back(-0.5);
    const double w = 1.0 / std::sqrt(sigma_);
    for (Index k = 0; k < epi_rows_.rows(); ++k) {
      for (Index a = 0; a < ng; ++a)
        if (epi_rows_(k, a) != 0.0) gt.emplace_back(r0 + 2 + k, a, -w * epi_rows_(k, a));
      h.push_back(0.0);
    }
    P.cones.push_back(Cone::soc(2 + epi_rows_.rows()));
  }
  P.G.resize(static_cast<Index>(h.size()), n);
  P.G.setFromTriplets(gt.begin(), gt.end());
  P.h = Eigen::Map<VectorXd>(h.data(), static_cast<Index>(h.size()));
  return P;
}

HindsightResult HindsightOpf::solve(const VectorXd& d) const {
  const Solution sol = ccopf::solve(build(d), settings_);
  HindsightResult out;
  out.status = sol.status;
  out.polished = sol.polished;
  out.u = VectorXd::Zero(n_bus_);
  if (sol.optimal()) {
    for (size_t a = 0; a < gens_.size(); ++a) out.u[gens_[a]] = sol.x[a];
    out.objective = cost_.evaluate(out.u);
  }
  return out;
}

HindsightResult hindsight_opf(const Grid& grid, const CostSpec& cost, const VectorXd& demand) {
  return HindsightOpf(grid, compute_ptdf(grid), cost).solve(demand);
}

ValidationReport monte_carlo_audit(const Policy& policy, const CcOpfProblem& problem, const AuditOptions& options) {
  const Grid& grid = problem.grid;
  const int N = grid.n_bus(), L = problem.L();
  if (policy.N() != N || policy.L() != L || policy.bus_ids != grid.bus_ids)
    throw PolicyError("policy does not match the grid and uncertainty model");
  if (options.samples < 1) throw PolicyError("sample count must be positive");
  if (options.samples > std::numeric_limits<int>::max()) throw PolicyError("sample count too large");

  ValidationReport rep;
  rep.sample_count = options.samples;
  rep.seed = options.seed;
  rep.config_hash = policy.config_hash;
  rep.policy_objective = policy_cost(problem.cost, policy.basis->gammas, policy.u0, policy.U);
  rep.generator_buses = grid.generator_buses();
  const int ng = static_cast<int>(rep.generator_buses.size());
  for (int i : rep.generator_buses) rep.generator_bus_ids.push_back(grid.bus_ids[i]);

  std::vector<Limit> limits;
  for (int a = 0; a < ng; ++a) {
    const int i = rep.generator_buses[a];
    const std::string id = std::to_string(grid.bus_ids[i]);
    for (LimitSide side : {LimitSide::Upper, LimitSide::Lower}) {
      const double bound = side == LimitSide::Upper ? grid.u_upper(i) : grid.u_lower(i);
      if (!std::isfinite(bound)) continue;
      ConstraintAudit c;
      c.name = "u[" + id + (side == LimitSide::Upper ? "] <= " : "] >= ") + std::to_string(bound);
      c.kind = "generator";
      c.index = i;
      c.side = side;
      c.bound = bound;
      c.epsilon = problem.chance.epsilon_gen;
      try {
        c.closed_form = satisfaction_probability_closed_form(policy, i, bound, side);
      } catch (const PolicyError&) {
      }
      rep.constraints.push_back(c);
      limits.push_back({false, a, side, bound});
    }
  }
  for (int j = 0; j < grid.n_line(); ++j) {
    for (LimitSide side : {LimitSide::Upper, LimitSide::Lower}) {
      const Line& ln = grid.lines[j];
      const double bound = side == LimitSide::Upper ? ln.p_upper : ln.p_lower;
      if (!std::isfinite(bound)) continue;
      ConstraintAudit c;
      c.name = "p[" + std::to_string(j) + (side == LimitSide::Upper ? "] <= " : "] >= ") + std::to_string(bound);
      c.kind = "line";
      c.index = j;
      c.side = side;
      c.bound = bound;
      c.epsilon = problem.chance.epsilon_line;
      rep.constraints.push_back(c);
      limits.push_back({true, j, side, bound});
    }
  }

  // Histogram ranges over the analytic support of each generator's output.
  std::vector<std::pair<double, double>> ranges(ng);
  for (int a = 0; a < ng; ++a) {
    const int i = rep.generator_buses[a];
    double lo = policy.u0[i], hi = policy.u0[i];
    for (int l = 0; l < L; ++l) {
      const auto [pl, ph] = psi_range(policy.basis->components[l]);
      const double x = policy.U(i, l) * pl, y = policy.U(i, l) * ph;
      lo += std::min(x, y);
      hi += std::max(x, y);
    }
    if (!(hi > lo)) {
      const double pad = 1e-6 * std::max(1.0, std::abs(lo));
      lo -= pad;
      hi += pad;
    }
    ranges[a] = {lo, hi};
  }

  const MatrixXd xi = sample_germ(*policy.basis, static_cast<int>(options.samples), options.seed);
  const long hindsight_count = options.hindsight ? std::min(options.hindsight_samples, options.samples) : 0;
  std::optional<HindsightOpf> hopf;
  if (hindsight_count > 0) hopf.emplace(grid, problem.ptdf, problem.cost);
  const MatrixXd phi_gen = [&] {
    MatrixXd m(grid.n_line(), ng);
    for (int a = 0; a < ng; ++a) m.col(a) = problem.ptdf.matrix.col(rep.generator_buses[a]);
    return m;
  }();

  const long n_chunks = (options.samples + kChunkSize - 1) / kChunkSize;
  std::vector<ChunkResult> results(n_chunks);
  auto run_chunk = [&](long c) {
    ChunkResult& r = results[c];
    r.satisfied.assign(limits.size(), 0);
    r.policy = RunningMoments(ng);
    r.hopf = RunningMoments(ng);
    r.paired = RunningMoments(ng);
    if (options.histograms) {
      r.bins.assign(ng, std::vector<long>(kHistogramBins, 0));
      r.under.assign(ng, 0);
      r.over.assign(ng, 0);
    }
    const long begin = c * kChunkSize, end = std::min(options.samples, begin + kChunkSize);
    VectorXd ug(ng);
    for (long k = begin; k < end; ++k) {
      const VectorXd psi = policy.basis->psi(xi.row(k).transpose());
      const VectorXd u = policy.u0 + policy.U * psi;
      const VectorXd d = policy.d0 + policy.D * psi;
      r.max_residual = std::max(r.max_residual, std::abs((u + d).sum()));
      for (int a = 0; a < ng; ++a) ug[a] = u[rep.generator_buses[a]];
      const VectorXd flow = grid.n_line() ? VectorXd(problem.ptdf.matrix * (u + d)) : VectorXd();
      bool feasible = true;
      for (size_t q = 0; q < limits.size(); ++q) {
        const Limit& lim = limits[q];
        const double v = lim.line ? flow[lim.index] : ug[lim.index];
        const double tol = kLimitTolerance * std::max(1.0, std::abs(lim.bound));
        const bool ok = lim.side == LimitSide::Upper ? v <= lim.bound + tol : v >= lim.bound - tol;
        r.satisfied[q] += ok;
        feasible = feasible && ok;
      }
      r.feasible += feasible;
      r.policy.add(ug);
      if (options.histograms)
        for (int a = 0; a < ng; ++a) {
          const auto [lo, hi] = ranges[a];
          if (ug[a] < lo) {
            ++r.under[a];
          } else if (ug[a] > hi) {
            ++r.over[a];
          } else {
            const int b = std::min(kHistogramBins - 1, static_cast<int>((ug[a] - lo) / (hi - lo) * kHistogramBins));
            ++r.bins[a][b];
          }
        }

      if (k < hindsight_count) {
        const HindsightResult hr = hopf->solve(d);
        if (hr.status == SolveStatus::Infeasible) {
          ++r.h_infeasible;
          continue;
        }
        if (!hr.optimal()) {
          ++r.h_failed;
          continue;
        }
        ++r.h_solved;
        VectorXd hg(ng);
        for (int a = 0; a < ng; ++a) hg[a] = hr.u[rep.generator_buses[a]];
        r.hopf.add(hg);
        r.paired.add(ug);
        r.h_residual = std::max(r.h_residual, std::abs((hr.u + d).sum()));
        if (feasible) {
          // J(u) - J(v) = 1/2 (u - v)'H(u + v) + h'(u - v), free of the cancellation in J(u) - J(v).
          const VectorXd delta = u - hr.u;
          const double gap = 0.5 * delta.dot(problem.cost.H * (u + hr.u)) + problem.cost.h.dot(delta);
          ++r.h_compared;
          r.h_min_gap = std::min(r.h_min_gap, gap);
          r.h_violations += gap < -kDominanceTolerance;
        }
      }
    }
  };

  const int workers = std::min<long>(worker_count(options.threads), n_chunks);
  const auto start = std::chrono::steady_clock::now();
  if (workers <= 1) {
    for (long c = 0; c < n_chunks; ++c) run_chunk(c);
  } else {
    std::atomic<long> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (long c; (c = next.fetch_add(1)) < n_chunks;) run_chunk(c);
      });
    for (auto& t : pool) t.join();
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  // Fixed merge order keeps the report independent of the worker count.
  RunningMoments pol(ng), hm(ng), pm(ng);
  std::vector<long> satisfied(limits.size(), 0);
  HindsightStats hs;
  hs.requested = hindsight_count;
  hs.min_objective_gap = std::numeric_limits<double>::infinity();
  if (options.histograms)
    for (int a = 0; a < ng; ++a) {
      Histogram h;
      h.label = "u[" + std::to_string(rep.generator_bus_ids[a]) + "]";
      h.lo = ranges[a].first;
      h.hi = ranges[a].second;
      h.counts.assign(kHistogramBins, 0);
      rep.histograms.push_back(std::move(h));
    }
  for (const ChunkResult& r : results) {
    for (size_t q = 0; q < limits.size(); ++q) satisfied[q] += r.satisfied[q];
    rep.policy_feasible_samples += r.feasible;
    rep.max_balance_residual = std::max(rep.max_balance_residual, r.max_residual);
    pol.merge(r.policy);
    if (options.histograms)
      for (int a = 0; a < ng; ++a) {
        for (int b = 0; b < kHistogramBins; ++b) rep.histograms[a].counts[b] += r.bins[a][b];
        rep.histograms[a].underflow += r.under[a];
        rep.histograms[a].overflow += r.over[a];
      }
    hm.merge(r.hopf);
    pm.merge(r.paired);
    hs.solved += r.h_solved;
    hs.infeasible += r.h_infeasible;
    hs.failed += r.h_failed;
    hs.compared += r.h_compared;
    hs.dominance_violations += r.h_violations;
    hs.max_balance_residual = std::max(hs.max_balance_residual, r.h_residual);
    hs.min_objective_gap = std::min(hs.min_objective_gap, r.h_min_gap);
  }
  for (size_t q = 0; q < limits.size(); ++q) {
    rep.constraints[q].satisfied = satisfied[q];
    rep.constraints[q].frequency = static_cast<double>(satisfied[q]) / static_cast<double>(options.samples);
  }
  rep.policy_mean = pol.mean;
  rep.policy_std = pol.stddev();
  rep.policy_std_analytic.resize(ng);
  for (int a = 0; a < ng; ++a) {
    double v = 0.0;
    for (int l = 0; l < L; ++l) v += policy.basis->gammas[l] * policy.U(rep.generator_buses[a], l) * policy.U(rep.generator_buses[a], l);
    rep.policy_std_analytic[a] = std::sqrt(v);
  }
  if (hindsight_count > 0) {
    hs.mean = hm.mean;
    hs.std = hm.stddev();
    hs.policy_mean = pm.mean;
    hs.policy_std = pm.stddev();
    if (hs.compared == 0) hs.min_objective_gap = 0.0;
    hs.seconds = seconds;
    rep.hindsight = hs;
  }
  return rep;
}

}  // namespace ccopf
