// Acceptance run: one PASS/FAIL line per criterion. Exit status is the number of failed criteria.
#include <boost/math/distributions/beta.hpp>
#include <boost/math/distributions/gamma.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

#include "ccopf/validation.hpp"
#include "support/instances.hpp"

using namespace ccopf;
using ccopf::testkit::data_path;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void report(int id, bool pass, const std::string& what, const std::string& detail) {
  if (!pass) ++failures;
  std::cout << (pass ? "PASS" : "FAIL") << "  " << id << ". " << what << ": " << detail << std::endl;
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream os;
  os.precision(digits);
  os << v;
  return os.str();
}

struct ThreeBus {
  CcOpfProblem problem;
  CcOpfSolution solution;
  Policy policy;
};

ThreeBus three_bus(const std::string& which, double eps) {
  const Grid g = load_case(data_path("cases/case3_" + which + ".json"));
  DemandPce d = assemble_demand(g, load_uncertainty_file(g, data_path("uncertainty/unc_" + which + ".json")));
  const BetaRule rule = which == "beta" ? BetaRule::DistributionallyRobust : BetaRule::GaussianExact;
  ThreeBus t{make_problem(g, d, ChanceSpec::uniform(eps, rule)), {}, {}};
  t.solution = solve_ccopf(t.problem);
  if (t.solution.optimal()) t.policy = make_policy(t.problem, t.solution);
  return t;
}

// Criteria 1 and 2.
void table_one(int id, const std::string& which, const double rows[2][5]) {
  const auto t0 = Clock::now();
  double worst = 0.0;
  bool ok = true;
  for (int k = 0; k < 2; ++k) {
    const ThreeBus t = three_bus(which, rows[k][0]);
    ok = ok && t.solution.optimal();
    if (!t.solution.optimal()) continue;
    const double got[4] = {t.solution.u0[0], t.solution.u0[1], t.solution.U(0, 0), t.solution.U(1, 0)};
    for (int j = 0; j < 4; ++j) worst = std::max(worst, std::abs(got[j] - rows[k][1 + j]));
  }
  const double secs = seconds_since(t0);
  report(id, ok && worst <= 1e-3 && secs < 1.0, "Table 1, " + which + " case",
         "max |error| " + fmt(worst, 3) + " (tol 1e-3), " + fmt(secs * 1e3, 3) + " ms for both risk levels");
}

void policy_coordinates() {
  struct Row {
    std::string which;
    double eps, c, s1, s2;
  };
  double worst = 0.0;
  for (const Row& r : {Row{"beta", 0.05, 0.6513, -0.1270, -0.8730}, Row{"sin", 0.05, 0.5126, -0.1919, -0.8081},
                       Row{"sin", 0.10, 0.4511, -0.2376, -0.7624}}) {
    const ThreeBus t = three_bus(r.which, r.eps);
    const DemandCoordinatePolicy dc = policy_in_demand_coordinates(t.policy);
    worst = std::max({worst, std::abs(dc.intercept[0] - r.c), std::abs(dc.intercept[1] + r.c),
                      std::abs(dc.slope(0, 0) - r.s1), std::abs(dc.slope(1, 0) - r.s2)});
  }
  report(3, worst <= 1e-3, "demand-coordinate policies", "max |error| " + fmt(worst, 3) + " (tol 1e-3)");
}

void closed_form_probabilities() {
  struct Row {
    std::string which;
    double eps, expected;
  };
  std::ostringstream detail;
  bool ok = true;
  for (const Row& r : {Row{"beta", 0.05, 1.0}, Row{"beta", 0.10, 1.0}, Row{"sin", 0.05, 0.9511}, Row{"sin", 0.10, 0.9105}}) {
    const ThreeBus t = three_bus(r.which, r.eps);
    const double p = satisfaction_probability_closed_form(t.policy, 0, 0.85);
    const int n = 1000000;
    const MatrixXd xi = sample_germ(t.problem.demand.basis(), n, 4);
    long hit = 0;
    for (int k = 0; k < n; ++k) hit += t.policy.evaluate(xi.row(k).transpose())[0] <= 0.85;
    const double mc = static_cast<double>(hit) / n;
    const bool row_ok = std::abs(p - r.expected) <= 1e-3 && std::abs(mc - r.expected) <= 3e-3;
    ok = ok && row_ok;
    detail << (detail.tellp() ? "; " : "") << r.which << " eps " << r.eps << " closed " << fmt(p) << " MC " << fmt(mc)
           << " vs " << r.expected << (row_ok ? "" : " (off)");
  }
  report(4, ok, "closed-form satisfaction probabilities", detail.str());
}

double sampled_balance(const Policy& p, int samples, std::uint64_t seed) {
  const MatrixXd xi = sample_germ(*p.basis, samples, seed);
  double worst = 0.0;
  for (int r = 0; r < samples; ++r) {
    const VectorXd x = xi.row(r).transpose();
    worst = std::max(worst, std::abs(p.evaluate(x).sum() + p.demand(x).sum()));
  }
  return worst;
}

CcOpfProblem case300_problem() {
  MatpowerOptions mo;
  mo.reactance = ReactancePolicy::Absolute;
  const Grid g = load_case(data_path("cases/case300.m"), mo);
  DemandPce d = assemble_demand(g, load_uncertainty_file(g, data_path("uncertainty/case300_representative.json")));
  return make_problem(g, d, ChanceSpec::uniform(0.025, BetaRule::DistributionallyRobust));
}

void viability(const Policy& case300_policy) {
  double worst = 0.0;
  int solved = 0, cases = 0;
  for (const std::string which : {"beta", "sin"}) {
    ++cases;
    const ThreeBus t = three_bus(which, 0.05);
    if (!t.solution.optimal()) continue;
    ++solved;
    worst = std::max(worst, sampled_balance(t.policy, 10000, 1));
  }
  std::mt19937_64 rng(5);
  for (int k = 0; k < 20; ++k) {
    ++cases;
    testkit::RandomGridOptions o;
    o.n_bus = 5 + (k * 25) / 19;
    o.extra_lines = o.n_bus / 3;
    o.line_limits = k % 2 == 0;
    o.capacity_margin = 2.5;
    const Grid g = testkit::random_grid(rng, o);
    const DemandPce d = assemble_demand(g, testkit::random_sources(rng, g, 1 + k % 4, testkit::SourceMix::Mixed));
    const CcOpfProblem P = make_problem(g, d, ChanceSpec::uniform(0.05, BetaRule::DistributionallyRobust));
    const CcOpfSolution s = solve_ccopf(P);
    if (!s.optimal()) continue;
    ++solved;
    worst = std::max(worst, sampled_balance(make_policy(P, s), 10000, 10 + k));
  }
  ++cases;
  if (case300_policy.N() > 0) {
    ++solved;
    worst = std::max(worst, sampled_balance(case300_policy, 10000, 2));
  }
  report(5, solved == cases && worst <= 1e-9, "viability",
         std::to_string(solved) + "/" + std::to_string(cases) + " solved, max balance residual " + fmt(worst, 3) + " (tol 1e-9)");
}

void gaussian_equivalence() {
  std::mt19937_64 rng(6);
  double cost_err = 0.0, moment_err = 0.0;
  int agree = 0;
  for (int k = 0; k < 20; ++k) {
    testkit::RandomGridOptions o;
    o.n_bus = 4 + k % 7;
    o.extra_lines = 2;
    o.linear_cost = true;
    o.capacity_margin = 2.0;
    const Grid g = testkit::random_grid(rng, o);
    const DemandPce d = assemble_demand(g, testkit::random_sources(rng, g, 1 + k % 3, testkit::SourceMix::Gaussian));
    const CcOpfProblem P = make_problem(g, d, ChanceSpec::uniform(0.05 + 0.01 * (k % 5), BetaRule::DistributionallyRobust));
    const CcOpfSolution a = solve_ccopf(P);
    const GaussianReferenceSolution b = solve_gaussian_reference(P);
    if (!a.optimal() || !b.solver.optimal()) continue;
    ++agree;
    cost_err = std::max(cost_err, std::abs(a.objective - b.objective) / (1.0 + std::abs(b.objective)));
    const MatrixXd ca = a.U * a.U.transpose(), cb = b.U * b.U.transpose();
    moment_err = std::max({moment_err, (a.u0 - b.u0).cwiseAbs().maxCoeff(), (ca - cb).cwiseAbs().maxCoeff()});
  }
  report(6, agree == 20 && cost_err <= 1e-6 && moment_err <= 1e-6, "Gaussian (u0, alpha) equivalence",
         std::to_string(agree) + "/20 solved by both, cost gap " + fmt(cost_err, 3) + ", mean/covariance gap " +
             fmt(moment_err, 3) + " (tol 1e-6)");
}

// Gram matrix of the orthogonal polynomials of degree 0..3 by adaptive quadrature against the density.
double gram_offdiag(const GermComponent& c, const std::function<double(double)>& pdf, double lo, double hi) {
  double worst = 0.0;
  for (int i = 0; i <= 3; ++i)
    for (int j = 0; j <= 3; ++j) {
      auto f = [&](int a, int b) {
        auto g = [&](double x) { return orthogonal_polynomial(c, a, x) * orthogonal_polynomial(c, b, x) * pdf(x); };
        return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(g, lo, hi, 15, 1e-14);
      };
      if (i == j) continue;
      worst = std::max(worst, std::abs(f(i, j)) / std::sqrt(f(i, i) * f(j, j)));
    }
  return worst;
}

void orthogonality() {
  const double inf = std::numeric_limits<double>::infinity();
  const boost::math::normal_distribution<double> normal;
  const boost::math::beta_distribution<double> beta(4.0, 2.0);
  const boost::math::gamma_distribution<double> gamma(2.5);
  const GermComponent hermite = build_germ(GermSpec::gaussian());
  const GermComponent jacobi = build_germ(GermSpec::beta(4, 2));
  const GermComponent legendre = build_germ(GermSpec::uniform());
  const GermComponent laguerre = build_germ(GermSpec::gamma(2.5));
  const GermComponent sine = build_germ(GermSpec::from_density(CustomDensity::sine()));
  const double offdiag = std::max(
      {gram_offdiag(hermite, [&](double x) { return boost::math::pdf(normal, x); }, -inf, inf),
       gram_offdiag(jacobi, [&](double x) { return boost::math::pdf(beta, x); }, 0.0, 1.0),
       gram_offdiag(legendre, [](double) { return 1.0; }, 0.0, 1.0),
       gram_offdiag(laguerre, [&](double x) { return boost::math::pdf(gamma, x); }, 0.0, inf),
       gram_offdiag(sine, [](double x) { return M_PI / 2.0 * std::sin(M_PI * x); }, 0.0, 1.0)});
  const double g_beta = std::abs(jacobi.gamma1 - 8.0 / 7.0);
  const double g_sine = std::abs(sine.gamma1 - (0.25 - 2.0 / (M_PI * M_PI)));
  report(7, offdiag <= 1e-8 && g_beta <= 1e-10 && g_sine <= 1e-10, "orthogonality and gamma_1",
         "max normalized off-diagonal " + fmt(offdiag, 3) + " (tol 1e-8), |gamma1 - 8/7| " + fmt(g_beta, 3) +
             ", |gamma1 - (1/4 - 2/pi^2)| " + fmt(g_sine, 3) + " (tol 1e-10)");
}

Policy case300() {
  const auto t0 = Clock::now();
  const CcOpfProblem P = case300_problem();
  const CcOpfSolution s = solve_ccopf(P);
  const double solve_secs = seconds_since(t0);
  if (!s.optimal()) {
    report(8, false, "case300", "SOCP ended with " + to_string(s.solver.status));
    return {};
  }
  Policy pol = make_policy(P, s);
  AuditOptions o;
  o.samples = 20000;
  o.seed = 300;
  o.hindsight = true;
  o.hindsight_samples = 20000;
  const auto t1 = Clock::now();
  const ValidationReport r = monte_carlo_audit(pol, P, o);
  const double audit_secs = seconds_since(t1);
  const HindsightStats& h = *r.hindsight;
  const StdComparison c = compare_std(r);
  const bool a = solve_secs < 10.0;
  const bool b = h.solved + h.infeasible == h.requested && h.failed == 0 && h.dominance_violations == 0;
  const bool cc = c.norm1_policy >= c.norm1_hindsight - 1e-6 && c.relative_gap <= 0.05;
  bool d = true;
  double lowest = 1.0;
  for (const ConstraintAudit& k : r.constraints) {
    d = d && k.meets_target();
    lowest = std::min(lowest, k.frequency);
  }
  std::ostringstream os;
  os << "(a) " << (a ? "ok" : "slow") << " " << fmt(solve_secs, 3) << " s; (b) " << (b ? "ok" : "fail") << " " << h.solved
     << "/" << h.requested << " hOPF solved, " << h.dominance_violations << " dominance violations of " << h.compared
     << ", min gap " << fmt(h.min_objective_gap, 3) << ", " << fmt(audit_secs, 3) << " s; (c) " << (cc ? "ok" : "fail")
     << " |s_ccopf|_1 " << fmt(c.norm1_policy, 6) << " |s_hopf|_1 " << fmt(c.norm1_hindsight, 6) << " rel gap "
     << fmt(c.relative_gap, 3) << "; (d) " << (d ? "ok" : "fail") << " lowest frequency " << fmt(lowest, 5) << " of "
     << r.constraints.size() << " constraints";
  report(8, a && b && cc && d, "case300 representative run", os.str());
  return pol;
}

void ptdf_oracle() {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> z;
  double worst = 0.0;
  for (int k = 0; k < 50; ++k) {
    testkit::RandomGridOptions o;
    o.n_bus = 2 + k % 29;
    o.extra_lines = k % 7;
    const Grid g = testkit::random_grid(rng, o);
    const Ptdf ptdf = compute_ptdf(g);
    VectorXd p(g.n_bus());
    for (int i = 0; i < g.n_bus(); ++i) p[i] = z(rng);
    p.array() -= p.mean();
    worst = std::max(worst, (ptdf.matrix * p - testkit::angle_flows(g, p)).cwiseAbs().maxCoeff());
  }
  report(9, worst <= 1e-8, "PTDF against angle flows", "50 networks, max |error| " + fmt(worst, 3) + " (tol 1e-8)");
}

void degenerate_reduction() {
  double u_err = 0.0, coeff = 0.0;
  int ok = 0, total = 0;
  auto check = [&](CcOpfProblem P) {
    ++total;
    P.demand.pce.X.setZero();
    const CcOpfSolution s = solve_ccopf(P);
    const AssembledSocp dc = build_dcopf(P.grid, P.ptdf, P.cost, P.demand.d0());
    const Solution r = solve(dc.conic);
    if (!s.optimal() || !r.optimal()) return;
    ++ok;
    u_err = std::max(u_err, (s.u0 - extract_solution(dc, r).u0).cwiseAbs().maxCoeff());
    coeff = std::max(coeff, s.U.cwiseAbs().maxCoeff());
  };
  check(three_bus("beta", 0.05).problem);
  check(three_bus("sin", 0.05).problem);
  std::mt19937_64 rng(10);
  for (int k = 0; k < 10; ++k) {
    testkit::RandomGridOptions o;
    o.n_bus = 5 + 2 * k;
    o.line_limits = k % 2 == 1;
    const Grid g = testkit::random_grid(rng, o);
    const DemandPce d = assemble_demand(g, testkit::random_sources(rng, g, 2, testkit::SourceMix::Mixed));
    check(make_problem(g, d, ChanceSpec::uniform(0.05, BetaRule::DistributionallyRobust)));
  }
  report(10, ok == total && u_err <= 1e-8 && coeff <= 1e-10, "zero-uncertainty reduction",
         std::to_string(ok) + "/" + std::to_string(total) + " solved, max |u0 - u_dcopf| " + fmt(u_err, 3) +
             " (tol 1e-8), max |U| " + fmt(coeff, 3) + " (tol 1e-10)");
}

}  // namespace

int main() {
  const double beta_rows[2][5] = {{0.05, 0.7910, 0.3090, -0.0127, -0.0873}, {0.10, 0.7890, 0.3110, -0.0190, -0.0810}};
  const double sine_rows[2][5] = {{0.05, 0.7813, 0.6187, -0.1919, -0.8081}, {0.10, 0.7837, 0.6163, -0.2376, -0.7624}};
  table_one(1, "beta", beta_rows);
  table_one(2, "sin", sine_rows);
  policy_coordinates();
  closed_form_probabilities();
  // Criterion 8 runs before 5 so the case300 policy can join the viability check; lines print in this order.
  std::ostringstream held;
  std::streambuf* saved = std::cout.rdbuf(held.rdbuf());
  const Policy p300 = case300();
  std::cout.rdbuf(saved);
  viability(p300);
  gaussian_equivalence();
  orthogonality();
  std::cout << held.str();
  ptdf_oracle();
  degenerate_reduction();
  std::cout << (failures ? std::to_string(failures) + (failures == 1 ? " criterion failed" : " criteria failed") : std::string("all criteria passed")) << std::endl;
  return failures;
}
