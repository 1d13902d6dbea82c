#include "ccopf/formulation.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>

namespace ccopf {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

bool CostSpec::is_diagonal() const {
  MatrixXd off = H;
  off.diagonal().setZero();
  return off.cwiseAbs().maxCoeff() == 0.0;
}

CostSpec CostSpec::from_grid(const Grid& grid) {
  const int n = grid.n_bus();
  CostSpec c{MatrixXd::Zero(n, n), VectorXd::Zero(n)};
  for (int i = 0; i < n; ++i) {
    if (!grid.generators[i]) continue;
    c.H(i, i) = grid.generators[i]->cost_H;
    c.h[i] = grid.generators[i]->cost_h;
  }
  return c;
}

BetaRule parse_beta_rule(const std::string& name) {
  if (name == "robust" || name == "distributionally_robust") return BetaRule::DistributionallyRobust;
  if (name == "gaussian" || name == "gaussian_exact") return BetaRule::GaussianExact;
  if (name == "explicit") return BetaRule::Explicit;
  throw ModelError("unknown beta rule '" + name + "'");
}

std::string to_string(BetaRule rule) {
  switch (rule) {
    case BetaRule::DistributionallyRobust:
      return "robust";
    case BetaRule::GaussianExact:
      return "gaussian";
    case BetaRule::Explicit:
      return "explicit";
  }
  return "robust";
}

double beta_factor(BetaRule rule, double epsilon, double explicit_beta) {
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw ModelError("risk level epsilon must lie in (0, 1)");
  switch (rule) {
    case BetaRule::DistributionallyRobust:
      return std::sqrt((1.0 - epsilon) / epsilon);
    case BetaRule::GaussianExact:
      return boost::math::quantile(boost::math::normal_distribution<double>(), 1.0 - epsilon);
    case BetaRule::Explicit:
      if (!(explicit_beta >= 0.0) || !std::isfinite(explicit_beta)) throw ModelError("explicit beta must be finite and >= 0");
      return explicit_beta;
  }
  return 0.0;
}

CcOpfProblem make_problem(Grid grid, DemandPce demand, ChanceSpec chance, FormulationOptions options) {
  validate(grid);
  if (demand.d0().size() != grid.n_bus() || demand.D().rows() != grid.n_bus())
    throw ModelError("demand PCE dimension does not match the grid");
  CcOpfProblem p;
  p.ptdf = compute_ptdf(grid);
  p.cost = CostSpec::from_grid(grid);
  p.grid = std::move(grid);
  p.demand = std::move(demand);
  p.chance = chance;
  p.options = options;
  return p;
}

double policy_cost(const CostSpec& cost, const VectorXd& gammas, const VectorXd& u0, const MatrixXd& U) {
  double j = cost.evaluate(u0);
  for (Index l = 0; l < U.cols(); ++l) j += 0.5 * gammas[l] * U.col(l).dot(cost.H * U.col(l));
  return j;
}

namespace {

using Terms = std::vector<std::pair<Index, double>>;

class Builder {
 public:
  Index add_var(std::string name, double cost = 0.0) {
    c_.push_back(cost);
    names_.push_back(std::move(name));
    return static_cast<Index>(c_.size()) - 1;
  }
  void add_eq(const Terms& terms, double rhs) {
    for (const auto& [j, v] : terms)
      if (v != 0.0) A_.emplace_back(static_cast<Index>(b_.size()), j, v);
    b_.push_back(rhs);
  }
  // h - G x >= 0.
  void add_nonneg(const Terms& g, double h) {
    push_row(g, h);
    if (!cones_.empty() && cones_.back().kind == Cone::Kind::NonNeg)
      ++cones_.back().dim;
    else
      cones_.push_back(Cone::nonneg(1));
  }
  // (h_r - G_r x)_r in the second-order cone.
  void add_soc(const std::vector<std::pair<Terms, double>>& rows) {
    for (const auto& [g, h] : rows) push_row(g, h);
    cones_.push_back(Cone::soc(static_cast<Index>(rows.size())));
  }
  Index n() const { return static_cast<Index>(c_.size()); }

  ConicProblem finish(double offset = 0.0) {
    ConicProblem P;
    const Index n = this->n();
    P.c = Eigen::Map<VectorXd>(c_.data(), n);
    P.A.resize(static_cast<Index>(b_.size()), n);
    P.A.setFromTriplets(A_.begin(), A_.end());
    P.b = Eigen::Map<VectorXd>(b_.data(), static_cast<Index>(b_.size()));
    P.G.resize(static_cast<Index>(h_.size()), n);
    P.G.setFromTriplets(G_.begin(), G_.end());
    P.h = Eigen::Map<VectorXd>(h_.data(), static_cast<Index>(h_.size()));
    P.cones = cones_;
    P.var_names = names_;
    P.objective_offset = offset;
    return P;
  }

 private:
  void push_row(const Terms& g, double h) {
    for (const auto& [j, v] : g)
      if (v != 0.0) G_.emplace_back(static_cast<Index>(h_.size()), j, v);
    h_.push_back(h);
  }

  std::vector<double> c_;
  std::vector<std::string> names_;
  std::vector<Eigen::Triplet<double>> A_, G_;
  std::vector<double> b_, h_;
  std::vector<Cone> cones_;
};

double objective_scale(const CostSpec& cost, bool normalize) {
  if (!normalize) return 1.0;
  double s = 1.0;
  if (cost.h.size()) s = std::max(s, cost.h.cwiseAbs().maxCoeff());
  if (cost.H.size()) s = std::max(s, cost.H.cwiseAbs().maxCoeff());
  return s;
}

// Rows r_k with H = sum r_k r_k'.
MatrixXd cost_factor(const CostSpec& cost) {
  const Index n = cost.H.rows();
  if (cost.is_diagonal()) {
    std::vector<Index> rows;
    for (Index i = 0; i < n; ++i)
      if (cost.H(i, i) > 0.0) rows.push_back(i);
    MatrixXd R = MatrixXd::Zero(rows.size(), n);
    for (size_t k = 0; k < rows.size(); ++k) R(k, rows[k]) = std::sqrt(cost.H(rows[k], rows[k]));
    return R;
  }
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(cost.H);
  const VectorXd& ev = es.eigenvalues();
  const double cut = 1e-12 * std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
  if (ev.minCoeff() < -cut) throw ModelError("cost matrix H is not positive semidefinite");
  std::vector<Index> keep;
  for (Index k = 0; k < ev.size(); ++k)
    if (ev[k] > cut) keep.push_back(k);
  MatrixXd R(keep.size(), n);
  for (size_t k = 0; k < keep.size(); ++k) R.row(k) = std::sqrt(ev[keep[k]]) * es.eigenvectors().col(keep[k]).transpose();
  return R;
}

double weighted_std(const VectorXd& v, const VectorXd& gammas) {
  double acc = 0.0;
  for (Index l = 0; l < v.size(); ++l) acc += gammas[l] * v[l] * v[l];
  return std::sqrt(acc);
}

// Upper bound on |mean| + beta_line * std of a line flow over every point satisfying the generation cones,
// using phi - c 1 for the shift that gives the tighter bound. Infinite when no bound exists.
double line_flow_bound(const Grid& grid, const VectorXd& phi, const VectorXd& d0, const MatrixXd& D,
                       const VectorXd& gammas, double beta_u, double beta_l) {
  const int L = static_cast<int>(D.cols());
  std::vector<int> gens = grid.generator_buses();
  std::vector<double> M(gens.size());
  for (size_t k = 0; k < gens.size(); ++k) {
    const double lo = grid.u_lower(gens[k]), hi = grid.u_upper(gens[k]);
    if (!std::isfinite(lo) || !std::isfinite(hi)) return kInf;
    M[k] = std::max(std::abs(lo), std::abs(hi));
  }
  double kappa = 1.0;
  if (L > 0 && beta_l > 0.0) {
    if (beta_u <= 0.0) return kInf;
    kappa = std::max(1.0, beta_l / beta_u);
  }
  auto bound_for = [&](double shift) {
    double b = 0.0;
    for (size_t k = 0; k < gens.size(); ++k) b += std::abs(phi[gens[k]] - shift) * kappa * M[k];
    const VectorXd p = phi.array() - shift;
    b += std::abs(p.dot(d0));
    if (L > 0) b += beta_l * weighted_std(D.transpose() * p, gammas);
    return b;
  };
  // Weighted median of the generator entries.
  std::vector<std::pair<double, double>> wv;
  double total = 0.0;
  for (size_t k = 0; k < gens.size(); ++k) {
    wv.emplace_back(phi[gens[k]], M[k]);
    total += M[k];
  }
  std::sort(wv.begin(), wv.end());
  double median = 0.0, acc = 0.0;
  for (const auto& [v, w] : wv) {
    acc += w;
    if (acc >= 0.5 * total) {
      median = v;
      break;
    }
  }
  return std::min(bound_for(0.0), bound_for(median));
}

AssembledSocp assemble(const Grid& grid, const Ptdf& ptdf, const CostSpec& cost, const VectorXd& d0, const MatrixXd& D,
                       const VectorXd& gammas, double beta_u, double beta_l, const FormulationOptions& options) {
  const int N = grid.n_bus();
  const int L = static_cast<int>(D.cols());
  if (d0.size() != N || D.rows() != N || gammas.size() != L) throw ModelError("formulation: dimension mismatch");
  if (cost.H.rows() != N || cost.H.cols() != N || cost.h.size() != N) throw ModelError("formulation: cost dimension mismatch");
  if (ptdf.matrix.rows() != grid.n_line() || ptdf.matrix.cols() != N) throw ModelError("formulation: PTDF dimension mismatch");

  AssembledSocp out;
  out.cost = cost;
  out.gammas = gammas;
  SocpLayout& lay = out.layout;
  lay.N = N;
  lay.L = L;
  lay.n_u = static_cast<Index>(N) * (L + 1);
  lay.beta_gen = beta_u;
  lay.beta_line = beta_l;
  const double sigma = objective_scale(cost, options.normalize_objective);
  lay.objective_scale = sigma;
  VectorXd gtil(L + 1);  // gamma with gamma_0 = 1
  gtil[0] = 1.0;
  gtil.tail(L) = gammas;
  auto dcol = [&](int l) -> VectorXd { return l == 0 ? d0 : VectorXd(D.col(l - 1)); };

  Builder B;
  for (int l = 0; l <= L; ++l)
    for (int i = 0; i < N; ++i)
      B.add_var("u[" + std::to_string(grid.bus_ids[i]) + "," + std::to_string(l) + "]", l == 0 ? cost.h[i] / sigma : 0.0);

  // Which line sides need a constraint.
  std::vector<char> need_up(grid.n_line(), 0), need_lo(grid.n_line(), 0);
  for (int j = 0; j < grid.n_line(); ++j) {
    const Line& ln = grid.lines[j];
    const bool up = std::isfinite(ln.p_upper), lo = std::isfinite(ln.p_lower);
    if (!up && !lo) continue;
    double bound = kInf;
    if (options.prune_redundant_lines)
      bound = line_flow_bound(grid, ptdf.matrix.row(j).transpose(), d0, D, gammas, beta_u, beta_l);
    need_up[j] = up && !(bound <= ln.p_upper);
    need_lo[j] = lo && !(bound <= -ln.p_lower);
    lay.pruned_line_sides += (up && !need_up[j]) + (lo && !need_lo[j]);
    if (L > 0 && (need_up[j] || need_lo[j])) lay.flow_lines.push_back(j);
  }
  lay.flow_begin = B.n();
  for (int j : lay.flow_lines)
    for (int l = 0; l <= L; ++l) B.add_var("p[" + std::to_string(j) + "," + std::to_string(l) + "]");

  // Epigraph variables for the quadratic cost.
  const MatrixXd R = cost_factor(cost);
  lay.epi_begin = B.n();
  const bool per_bus = L > 0 && cost.is_diagonal();
  std::vector<std::vector<std::pair<Terms, double>>> epi_cones;
  if (R.rows() > 0) {
    auto head = [](Index t) {
      return std::vector<std::pair<Terms, double>>{{Terms{{t, -1.0}}, 0.5}, {Terms{{t, -1.0}}, -0.5}};
    };
    if (per_bus) {
      for (int i = 0; i < N; ++i) {
        if (!(cost.H(i, i) > 0.0)) continue;
        const Index t = B.add_var("t[" + std::to_string(grid.bus_ids[i]) + "]", 1.0);
        auto rows = head(t);
        for (int l = 0; l <= L; ++l) rows.push_back({Terms{{lay.u(i, l), -std::sqrt(cost.H(i, i) * gtil[l] / sigma)}}, 0.0});
        epi_cones.push_back(std::move(rows));
      }
    } else {
      const int groups = L == 0 ? 1 : L + 1;
      for (int g = 0; g < groups; ++g) {
        const Index t = B.add_var("t[" + std::to_string(g) + "]", 1.0);
        auto rows = head(t);
        const int l_begin = L == 0 ? 0 : g, l_end = L == 0 ? 0 : g;
        for (int l = l_begin; l <= l_end; ++l) {
          const double w = std::sqrt(gtil[l] / sigma);
          for (Index k = 0; k < R.rows(); ++k) {
            Terms terms;
            for (int i = 0; i < N; ++i)
              if (R(k, i) != 0.0) terms.push_back({lay.u(i, l), -w * R(k, i)});
            rows.push_back({terms, 0.0});
          }
        }
        epi_cones.push_back(std::move(rows));
      }
    }
  }
  lay.n_epi = B.n() - lay.epi_begin;

  // Equalities: buses without generation, balance per coefficient, flow definitions, optional global balancing.
  for (int i = 0; i < N; ++i)
    if (!grid.has_generator(i))
      for (int l = 0; l <= L; ++l) B.add_eq({{lay.u(i, l), 1.0}}, 0.0);
  for (int l = 0; l <= L; ++l) {
    Terms terms;
    for (int i = 0; i < N; ++i) terms.push_back({lay.u(i, l), 1.0});
    B.add_eq(terms, -dcol(l).sum());
    ++lay.balance_rows;
  }
  const std::vector<int> gens = grid.generator_buses();
  for (size_t k = 0; k < lay.flow_lines.size(); ++k) {
    const int j = lay.flow_lines[k];
    for (int l = 0; l <= L; ++l) {
      Terms terms{{lay.flow(static_cast<int>(k), l), 1.0}};
      for (int i : gens)
        if (ptdf.matrix(j, i) != 0.0) terms.push_back({lay.u(i, l), -ptdf.matrix(j, i)});
      B.add_eq(terms, ptdf.matrix.row(j).dot(dcol(l)));
    }
  }
  if (options.global_balancing && L >= 2) {
    VectorXd s(L);
    for (int l = 0; l < L; ++l) s[l] = D.col(l).sum();
    Index ref;
    if (s.cwiseAbs().maxCoeff(&ref) > 0.0) {
      for (int i : gens)
        for (int l = 1; l <= L; ++l)
          if (l - 1 != ref) B.add_eq({{lay.u(i, l), s[ref]}, {lay.u(i, static_cast<int>(ref) + 1), -s[l - 1]}}, 0.0);
    }
  }

  // Cones: epigraphs, generation limits, line limits.
  for (const auto& rows : epi_cones) B.add_soc(rows);

  auto limit_cone = [&](double sign, double limit, auto var_of, const Terms& head_terms, double head_const, double beta) {
    // sign = +1: limit - mean >= beta * std; sign = -1: mean - limit >= beta * std.
    Terms g0;
    for (const auto& [j, v] : head_terms) g0.push_back({j, sign * v});
    const double h0 = sign * (limit - head_const);
    if (L == 0 || beta <= 0.0) {
      B.add_nonneg(g0, h0);
      return false;
    }
    std::vector<std::pair<Terms, double>> rows{{g0, h0}};
    for (int l = 1; l <= L; ++l) rows.push_back(var_of(l, -beta * std::sqrt(gammas[l - 1])));
    B.add_soc(rows);
    return true;
  };

  for (int i : gens) {
    const Generator& g = *grid.generators[i];
    auto var_of = [&](int l, double coef) { return std::pair<Terms, double>{Terms{{lay.u(i, l), coef}}, 0.0}; };
    const Terms head{{lay.u(i, 0), 1.0}};
    if (std::isfinite(g.u_upper)) {
      limit_cone(1.0, g.u_upper, var_of, head, 0.0, beta_u);
      ++lay.gen_cones;
    }
    if (std::isfinite(g.u_lower)) {
      limit_cone(-1.0, g.u_lower, var_of, head, 0.0, beta_u);
      ++lay.gen_cones;
    }
  }

  for (int j = 0; j < grid.n_line(); ++j) {
    if (!need_up[j] && !need_lo[j]) continue;
    const Line& ln = grid.lines[j];
    Terms head;
    double head_const = 0.0;
    std::function<std::pair<Terms, double>(int, double)> var_of;
    if (L == 0) {
      for (int i : gens)
        if (ptdf.matrix(j, i) != 0.0) head.push_back({lay.u(i, 0), ptdf.matrix(j, i)});
      head_const = ptdf.matrix.row(j).dot(d0);
    } else {
      const int k = static_cast<int>(std::find(lay.flow_lines.begin(), lay.flow_lines.end(), j) - lay.flow_lines.begin());
      head.push_back({lay.flow(k, 0), 1.0});
      var_of = [&lay, k](int l, double coef) { return std::pair<Terms, double>{Terms{{lay.flow(k, l), coef}}, 0.0}; };
    }
    // With flow variables the head is f_0; without, phi (u_0 + d_0) with the d part as a constant.
    if (need_up[j]) {
      limit_cone(1.0, ln.p_upper, var_of, head, head_const, beta_l);
      ++lay.line_cones;
    }
    if (need_lo[j]) {
      limit_cone(-1.0, ln.p_lower, var_of, head, head_const, beta_l);
      ++lay.line_cones;
    }
  }

  out.conic = B.finish();
  return out;
}

}  // namespace

AssembledSocp build_socp(const CcOpfProblem& problem) {
  const DemandPce& dem = problem.demand;
  if (!dem.pce.basis) throw ModelError("formulation: demand PCE has no basis");
  if (dem.L() != dem.D().cols()) throw ModelError("formulation: demand basis size does not match D");
  return assemble(problem.grid, problem.ptdf, problem.cost, dem.d0(), dem.D(), dem.basis().gammas, problem.chance.beta_gen(),
                  problem.chance.beta_line(), problem.options);
}

AssembledSocp build_dcopf(const Grid& grid, const Ptdf& ptdf, const CostSpec& cost, const VectorXd& demand,
                          const FormulationOptions& options) {
  return assemble(grid, ptdf, cost, demand, MatrixXd(grid.n_bus(), 0), VectorXd(0), 0.0, 0.0, options);
}

CcOpfSolution extract_solution(const AssembledSocp& socp, const Solution& solution) {
  const SocpLayout& lay = socp.layout;
  CcOpfSolution out;
  out.solver = solution;
  out.u0 = VectorXd::Zero(lay.N);
  out.U = MatrixXd::Zero(lay.N, lay.L);
  if (solution.x.size() != socp.conic.n()) return out;
  for (int i = 0; i < lay.N; ++i) {
    out.u0[i] = solution.x[lay.u(i, 0)];
    for (int l = 1; l <= lay.L; ++l) out.U(i, l - 1) = solution.x[lay.u(i, l)];
  }
  out.objective = policy_cost(socp.cost, socp.gammas, out.u0, out.U);
  return out;
}

CcOpfSolution solve_ccopf(const CcOpfProblem& problem, const SolverSettings& settings) {
  const AssembledSocp socp = build_socp(problem);
  return extract_solution(socp, solve(socp.conic, settings));
}

GaussianReference build_gaussian_reference(const CcOpfProblem& problem) {
  const DemandPce& dem = problem.demand;
  for (const GermComponent& c : dem.basis().components)
    if (c.spec.kind != GermKind::GaussianStandard) throw ModelError("Gaussian reference needs every source to be Gaussian");
  if (problem.cost.H.cwiseAbs().maxCoeff() != 0.0) throw ModelError("Gaussian reference needs a linear cost (H = 0)");

  const Grid& grid = problem.grid;
  const int N = grid.n_bus();
  const int L = dem.L();
  const MatrixXd& phi = problem.ptdf.matrix;
  const double beta_u = problem.chance.beta_gen(), beta_l = problem.chance.beta_line();
  GaussianReference ref;
  ref.N = N;
  ref.s = dem.D().colwise().sum();
  ref.objective_scale = objective_scale(problem.cost, problem.options.normalize_objective);
  const double snorm = ref.s.norm();

  Builder B;
  for (int i = 0; i < N; ++i) B.add_var("u0[" + std::to_string(grid.bus_ids[i]) + "]", problem.cost.h[i] / ref.objective_scale);
  for (int i = 0; i < N; ++i) B.add_var("alpha[" + std::to_string(grid.bus_ids[i]) + "]");

  for (int i = 0; i < N; ++i)
    if (!grid.has_generator(i)) {
      B.add_eq({{ref.u0(i), 1.0}}, 0.0);
      B.add_eq({{ref.alpha(i), 1.0}}, 0.0);
    }
  Terms bal, part;
  for (int i = 0; i < N; ++i) {
    bal.push_back({ref.u0(i), 1.0});
    part.push_back({ref.alpha(i), 1.0});
  }
  B.add_eq(bal, -dem.d0().sum());
  B.add_eq(part, 1.0);

  const std::vector<int> gens = grid.generator_buses();
  auto gen_cone = [&](int i, double sign, double limit) {
    const Terms g0{{ref.u0(i), sign}};
    const double h0 = sign * limit;
    if (beta_u <= 0.0 || snorm == 0.0)
      B.add_nonneg(g0, h0);
    else
      B.add_soc({{g0, h0}, {Terms{{ref.alpha(i), -beta_u * snorm}}, 0.0}});
  };
  for (int i : gens) {
    const Generator& g = *grid.generators[i];
    if (std::isfinite(g.u_upper)) gen_cone(i, 1.0, g.u_upper);
    if (std::isfinite(g.u_lower)) gen_cone(i, -1.0, g.u_lower);
  }

  // Line flow std vector over xi: beta (phi_j D - (phi_j alpha) s).
  for (int j = 0; j < grid.n_line(); ++j) {
    const Line& ln = grid.lines[j];
    const VectorXd phij = phi.row(j).transpose();
    const VectorXd pd = dem.D().transpose() * phij;
    for (double sign : {1.0, -1.0}) {
      const double limit = sign > 0 ? ln.p_upper : ln.p_lower;
      if (!std::isfinite(limit)) continue;
      Terms g0;
      for (int i : gens)
        if (phij[i] != 0.0) g0.push_back({ref.u0(i), sign * phij[i]});
      const double h0 = sign * (limit - phij.dot(dem.d0()));
      if (beta_l <= 0.0 || L == 0) {
        B.add_nonneg(g0, h0);
        continue;
      }
      std::vector<std::pair<Terms, double>> rows{{g0, h0}};
      for (int l = 0; l < L; ++l) {
        Terms t;
        for (int i : gens)
          if (phij[i] != 0.0) t.push_back({ref.alpha(i), beta_l * ref.s[l] * phij[i]});
        rows.push_back({t, beta_l * pd[l]});
      }
      B.add_soc(rows);
    }
  }
  ref.conic = B.finish();
  return ref;
}

GaussianReferenceSolution solve_gaussian_reference(const CcOpfProblem& problem, const SolverSettings& settings) {
  const GaussianReference ref = build_gaussian_reference(problem);
  GaussianReferenceSolution out;
  out.solver = solve(ref.conic, settings);
  const int N = ref.N;
  out.u0 = VectorXd::Zero(N);
  out.alpha = VectorXd::Zero(N);
  if (out.solver.x.size() == ref.conic.n()) {
    out.u0 = out.solver.x.head(N);
    out.alpha = out.solver.x.segment(N, N);
  }
  out.U = -out.alpha * ref.s;
  out.objective = problem.cost.h.dot(out.u0);
  return out;
}

}  // namespace ccopf
