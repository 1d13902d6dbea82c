#include <gtest/gtest.h>

#include <boost/math/distributions/beta.hpp>

#include <algorithm>
#include <cmath>
#include <random>

#include "ccopf/policy.hpp"
#include "support/instances.hpp"

using namespace ccopf;
using ccopf::testkit::data_path;
using Eigen::VectorXd;

namespace {

struct Solved {
  CcOpfProblem problem;
  CcOpfSolution solution;
  Policy policy;
};

Solved three_bus(const std::string& which, double eps) {
  const Grid g = load_case(data_path("cases/case3_" + which + ".json"));
  DemandPce d = assemble_demand(g, load_uncertainty_file(g, data_path("uncertainty/unc_" + which + ".json")));
  const BetaRule rule = which == "beta" ? BetaRule::DistributionallyRobust : BetaRule::GaussianExact;
  Solved s{make_problem(g, d, ChanceSpec::uniform(eps, rule)), {}, {}};
  s.solution = solve_ccopf(s.problem);
  s.policy = make_policy(s.problem, s.solution);
  return s;
}

VectorXd demand_at_bus3(double value) {
  VectorXd d = VectorXd::Zero(3);
  d[2] = value;
  return d;
}

}  // namespace

TEST(Policy, RecoverGermAtSupportEnds) {
  const Solved beta = three_bus("beta", 0.05);
  const GermRecovery r = recover_germ(beta.policy, demand_at_bus3(-1.5));
  EXPECT_NEAR(r.xi[0], 0.0, 1e-12);
  EXPECT_TRUE(r.in_support);
  EXPECT_LE(r.residual, 1e-12);

  const Solved sine = three_bus("sin", 0.05);
  EXPECT_NEAR(recover_germ(sine.policy, demand_at_bus3(-0.9)).xi[0], 1.0, 1e-12);
  EXPECT_NEAR(recover_germ(sine.policy, demand_at_bus3(-1.4)).xi[0], 0.5, 1e-12);
}

TEST(Policy, RecoverGermRoundTrip) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 5; ++trial) {
    testkit::RandomGridOptions o;
    o.n_bus = 10;
    o.capacity_margin = 2.5;
    const Grid g = testkit::random_grid(rng, o);
    const DemandPce d = assemble_demand(g, testkit::random_sources(rng, g, 4, testkit::SourceMix::Mixed));
    const CcOpfProblem P = make_problem(g, d, ChanceSpec::uniform(0.1, BetaRule::DistributionallyRobust));
    const CcOpfSolution s = solve_ccopf(P);
    ASSERT_TRUE(s.optimal());
    const Policy pol = make_policy(P, s);
    const Eigen::MatrixXd xi = sample_germ(P.demand.basis(), 50, 100 + trial);
    for (int r = 0; r < xi.rows(); ++r) {
      const VectorXd x = xi.row(r).transpose();
      const GermRecovery rec = recover_germ(pol, pol.demand(x));
      EXPECT_LT((rec.xi - x).cwiseAbs().maxCoeff(), 1e-10);
      EXPECT_TRUE(rec.in_support);
    }
  }
}

TEST(Policy, RecoverGermErrors) {
  Solved beta = three_bus("beta", 0.05);
  EXPECT_THROW(recover_germ(beta.policy, VectorXd::Zero(2)), PolicyError);
  // A demand change at a bus no source drives is inconsistent with the model.
  VectorXd d = demand_at_bus3(-1.2);
  d[0] = 0.3;
  EXPECT_THROW(recover_germ(beta.policy, d), PolicyError);
  // Outside the Beta support: solved, but flagged.
  const GermRecovery outside = recover_germ(beta.policy, demand_at_bus3(-1.6));
  EXPECT_FALSE(outside.in_support);
  EXPECT_FALSE(outside.warnings.empty());

  Policy flat = beta.policy;
  flat.D.setZero();
  EXPECT_THROW(recover_germ(flat, demand_at_bus3(-1.1)), PolicyError);
  EXPECT_THROW(policy_in_demand_coordinates(flat), PolicyError);
}

TEST(Policy, EvaluateAtMeanGivesNominalDispatch) {
  const Solved beta = three_bus("beta", 0.05);
  EXPECT_LT((beta.policy.evaluate(VectorXd::Constant(1, 2.0 / 3.0)) - beta.policy.u0).cwiseAbs().maxCoeff(), 1e-14);
  const Solved sine = three_bus("sin", 0.05);
  EXPECT_LT((sine.policy.evaluate(VectorXd::Constant(1, 0.5)) - sine.policy.u0).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Policy, DemandCoordinatesMatchPublishedPolicies) {
  struct Row {
    std::string which;
    double eps, c1, s1, s2;
  };
  for (const Row& r : {Row{"beta", 0.05, 0.6513, -0.1270, -0.8730}, Row{"beta", 0.10, 0.58, -0.19, -0.81}, Row{"sin", 0.05, 0.5126, -0.1919, -0.8081},
                       Row{"sin", 0.10, 0.4511, -0.2376, -0.7624}}) {
    const Solved s = three_bus(r.which, r.eps);
    const DemandCoordinatePolicy dc = policy_in_demand_coordinates(s.policy);
    ASSERT_EQ(dc.coordinates, std::vector<int>{2});
    EXPECT_NEAR(dc.intercept[0], r.c1, 1e-3) << r.which << " " << r.eps;
    EXPECT_NEAR(dc.intercept[1], -r.c1, 1e-3);
    EXPECT_NEAR(dc.slope(0, 0), r.s1, 1e-3);
    EXPECT_NEAR(dc.slope(1, 0), r.s2, 1e-3);
    EXPECT_EQ(dc.intercept[2], 0.0);
    // Same action as the germ-coordinate policy.
    for (double dv : {-1.5, -1.2, -0.9}) {
      const VectorXd d = demand_at_bus3(dv);
      const VectorXd via_germ = s.policy.evaluate(recover_germ(s.policy, d).xi);
      const VectorXd direct = dc.intercept + dc.slope * VectorXd::Constant(1, dv);
      EXPECT_LT((via_germ - direct).cwiseAbs().maxCoeff(), 1e-12);
    }
  }
}

namespace {

// The published closed forms for the two bundled germs, evaluated from the PCE coefficients of generator 1.
double published_formula(const std::string& which, double bound, double u0, double u1) {
  if (which == "beta") {
    const boost::math::beta_distribution<double> f(4.0, 2.0);
    const double x = ((bound - u0) / u1 + 4.0) / 6.0;
    return 1.0 - boost::math::cdf(f, std::clamp(x, 0.0, 1.0));
  }
  const double x = std::clamp((bound - u0) / u1 + 0.5, 0.0, 1.0);
  return 0.5 * (1.0 + std::cos(M_PI * x));
}

}  // namespace

TEST(Policy, ClosedFormSatisfactionProbability) {
  struct Row {
    std::string which;
    double eps;
  };
  for (const Row& r : {Row{"beta", 0.05}, Row{"beta", 0.10}, Row{"sin", 0.05}, Row{"sin", 0.10}}) {
    const Solved s = three_bus(r.which, r.eps);
    const double p = satisfaction_probability_closed_form(s.policy, 0, 0.85);
    EXPECT_NEAR(p, published_formula(r.which, 0.85, s.policy.u0[0], s.policy.U(0, 0)), 1e-12) << r.which << " " << r.eps;
    // The robust factor guarantees the target for any distribution; the Gaussian factor does not.
    if (r.which == "beta") EXPECT_GE(p, 1.0 - r.eps);

    const int n = 1000000;
    const Eigen::MatrixXd xi = sample_germ(s.problem.demand.basis(), n, 77);
    long ok = 0;
    for (int k = 0; k < n; ++k) ok += s.policy.evaluate(xi.row(k).transpose())[0] <= 0.85;
    const double freq = static_cast<double>(ok) / n;
    EXPECT_NEAR(freq, p, std::max(3.0 * std::sqrt(p * (1.0 - p) / n), 1e-12)) << r.which << " " << r.eps;
  }
}

TEST(Policy, ClosedFormPublishedValues) {
  EXPECT_EQ(satisfaction_probability_closed_form(three_bus("beta", 0.05).policy, 0, 0.85), 1.0);
  EXPECT_NEAR(satisfaction_probability_closed_form(three_bus("sin", 0.05).policy, 0, 0.85), 0.9511, 1e-3);
  // At eps = 0.10 the published coefficients themselves give 0.9987 (Beta) and 0.8843 (sine).
  EXPECT_NEAR(published_formula("beta", 0.85, 0.7890, -0.0190), 0.9987, 1e-4);
  EXPECT_NEAR(published_formula("sin", 0.85, 0.7837, -0.2376), 0.8843, 1e-4);
  EXPECT_NEAR(satisfaction_probability_closed_form(three_bus("beta", 0.10).policy, 0, 0.85), 0.9987, 1e-3);
  EXPECT_NEAR(satisfaction_probability_closed_form(three_bus("sin", 0.10).policy, 0, 0.85), 0.8843, 1e-3);
}

TEST(Policy, ClosedFormEdgeCases) {
  const Solved beta = three_bus("beta", 0.05);
  // Bus 3 has no generator: u is identically zero.
  EXPECT_EQ(satisfaction_probability_closed_form(beta.policy, 2, 0.0, LimitSide::Upper), 1.0);
  EXPECT_EQ(satisfaction_probability_closed_form(beta.policy, 2, 0.0, LimitSide::Lower), 1.0);
  EXPECT_EQ(satisfaction_probability_closed_form(beta.policy, 2, -0.1, LimitSide::Upper), 0.0);
  EXPECT_EQ(satisfaction_probability_closed_form(beta.policy, 2, 0.1, LimitSide::Lower), 0.0);
  EXPECT_THROW(satisfaction_probability_closed_form(beta.policy, 3, 0.0), PolicyError);
  // Upper and lower sides at the same bound are complementary for a continuous germ.
  const double up = satisfaction_probability_closed_form(beta.policy, 0, 0.8);
  const double lo = satisfaction_probability_closed_form(beta.policy, 0, 0.8, LimitSide::Lower);
  EXPECT_NEAR(up + lo, 1.0, 1e-12);

  std::mt19937_64 rng(22);
  testkit::RandomGridOptions o;
  o.capacity_margin = 2.5;
  const Grid g = testkit::random_grid(rng, o);
  const DemandPce d = assemble_demand(g, testkit::random_sources(rng, g, 2, testkit::SourceMix::Gaussian));
  const CcOpfProblem P = make_problem(g, d, ChanceSpec::uniform(0.1, BetaRule::DistributionallyRobust));
  const Policy pol = make_policy(P, solve_ccopf(P));
  int mixed = -1;
  for (int i : g.generator_buses())
    if ((pol.U.row(i).array() != 0.0).count() >= 2) mixed = i;
  ASSERT_GE(mixed, 0);
  EXPECT_THROW(satisfaction_probability_closed_form(pol, mixed, 1.0), PolicyError);
}

TEST(Policy, BalanceHoldsForEveryRealization) {
  std::mt19937_64 rng(23);
  testkit::RandomGridOptions o;
  o.n_bus = 14;
  o.line_limits = true;
  o.capacity_margin = 2.5;
  const Grid g = testkit::random_grid(rng, o);
  const DemandPce d = assemble_demand(g, testkit::random_sources(rng, g, 5, testkit::SourceMix::Mixed));
  const CcOpfProblem P = make_problem(g, d, ChanceSpec::uniform(0.1, BetaRule::DistributionallyRobust));
  const CcOpfSolution s = solve_ccopf(P);
  ASSERT_TRUE(s.optimal());
  const Policy pol = make_policy(P, s);
  EXPECT_LE(pol.coefficient_balance_residual(), 1e-9);
  const Eigen::MatrixXd xi = sample_germ(P.demand.basis(), 20000, 5);
  for (int r = 0; r < xi.rows(); ++r) {
    const VectorXd x = xi.row(r).transpose();
    ASSERT_LE(std::abs(pol.evaluate(x).sum() + pol.demand(x).sum()), 1e-9);
  }
}

TEST(Policy, JsonRoundTrip) {
  for (const std::string which : {"beta", "sin"}) {
    Solved s = three_bus(which, 0.05);
    s.policy.config_hash = "0123456789abcdef";
    s.policy.seed = 42;
    const Policy back = policy_from_json(nlohmann::json::parse(policy_to_json(s.policy).dump()));
    EXPECT_EQ(back.u0, s.policy.u0);
    EXPECT_EQ(back.U, s.policy.U);
    EXPECT_EQ(back.D, s.policy.D);
    EXPECT_EQ(back.bus_ids, s.policy.bus_ids);
    EXPECT_EQ(back.config_hash, s.policy.config_hash);
    EXPECT_EQ(back.seed, 42u);
    EXPECT_EQ(back.beta_rule, s.policy.beta_rule);
    EXPECT_DOUBLE_EQ(back.objective, s.policy.objective);
    EXPECT_NEAR(back.basis->gammas[0], s.policy.basis->gammas[0], 1e-12);
    const VectorXd xi = VectorXd::Constant(1, 0.3);
    EXPECT_LT((back.evaluate(xi) - s.policy.evaluate(xi)).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_NEAR(satisfaction_probability_closed_form(back, 0, 0.85),
                satisfaction_probability_closed_form(s.policy, 0, 0.85), 1e-6);
  }
  EXPECT_THROW(policy_from_json(nlohmann::json::parse(R"({"format": "other"})")), PolicyError);
  EXPECT_THROW(load_policy_file("/nonexistent/policy.json"), PolicyError);
}

TEST(Policy, GermSpecJson) {
  for (const GermSpec& g : {GermSpec::gaussian(), GermSpec::uniform(), GermSpec::beta(4, 2), GermSpec::gamma(3),
                            GermSpec::from_density(CustomDensity::sine())}) {
    const GermSpec back = germ_spec_from_json(germ_spec_to_json(g));
    const GermComponent a = build_germ(g), b = build_germ(back);
    EXPECT_EQ(a.family(), b.family());
    EXPECT_NEAR(a.gamma1, b.gamma1, 1e-12);
    EXPECT_NEAR(a.psi_a, b.psi_a, 1e-12);
  }
  EXPECT_THROW(germ_spec_from_json(nlohmann::json::parse(R"({"family": "weibull"})")), PolicyError);
}
