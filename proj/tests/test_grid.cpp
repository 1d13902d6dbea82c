#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "ccopf/grid.hpp"
#include "support/instances.hpp"

using namespace ccopf;
using ccopf::testkit::angle_flows;
using ccopf::testkit::data_path;

namespace {

nlohmann::json three_bus_ring() {
  return nlohmann::json::parse(R"({
    "buses": [{"id": 1, "demand_nominal": 0.0}, {"id": 2, "demand_nominal": 0.0}, {"id": 3, "demand_nominal": -1.0}],
    "lines": [{"from": 1, "to": 2, "reactance": 1.0}, {"from": 2, "to": 3, "reactance": 1.0},
              {"from": 1, "to": 3, "reactance": 1.0}],
    "generators": [{"bus": 1, "u_max": 2.0, "cost_h": 1.0, "cost_H_diag": 0.1}]
  })");
}

Eigen::VectorXd random_balanced(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> z;
  Eigen::VectorXd p(n);
  for (int i = 0; i < n; ++i) p[i] = z(rng);
  return p.array() - p.mean();
}

}  // namespace

TEST(Grid, BundledThreeBusCase) {
  const Grid g = load_case(data_path("cases/case3_beta.json"));
  EXPECT_EQ(g.n_bus(), 3);
  EXPECT_EQ(g.n_line(), 3);
  EXPECT_EQ(g.generator_buses(), (std::vector<int>{0, 1}));
  EXPECT_DOUBLE_EQ(g.nominal_demand[2], -1.1);
  EXPECT_EQ(g.default_slack(), 0);
}

TEST(Grid, BundledCase300) {
  MatpowerOptions mo;
  mo.reactance = ReactancePolicy::Absolute;
  const Grid g = load_case(data_path("cases/case300.m"), mo);
  EXPECT_EQ(g.n_bus(), 300);
  EXPECT_EQ(g.n_line(), 411);
  EXPECT_EQ(g.n_generators(), 69);

  const Grid j = load_case(data_path("cases/case300.json"));
  EXPECT_EQ(j.n_bus(), 300);
  EXPECT_EQ(j.n_line(), 411);
  EXPECT_EQ(j.n_generators(), 69);
  EXPECT_EQ(j.bus_ids, g.bus_ids);
}

TEST(Grid, MatpowerNegativeReactanceIsRejectedByDefault) {
  try {
    load_case(data_path("cases/case300.m"));
    FAIL() << "expected CaseError";
  } catch (const CaseError& e) {
    EXPECT_NE(std::string(e.what()).find("nonpositive reactance"), std::string::npos);
  }
}

TEST(Grid, MatpowerInline) {
  std::istringstream in(R"(function mpc = tiny
mpc.baseMVA = 100;
mpc.bus = [
	1	3	0	0	0	0	1	1	0	135	1	1.05	0.95;
	2	1	50	0	0	0	1	1	0	135	1	1.05	0.95;
];
mpc.gen = [
	1	0	0	10	-10	1	100	1	80	10	0	0	0	0	0	0	0	0	0	0	0;
];
mpc.branch = [
	1	2	0	0.25	0	60	60	60	0	0	1	-360	360;
];
mpc.gencost = [
	2	0	0	3	0.02	15	0;
];
)");
  const Grid g = load_matpower(in);
  ASSERT_EQ(g.n_bus(), 2);
  EXPECT_DOUBLE_EQ(g.nominal_demand[1], -0.5);
  EXPECT_DOUBLE_EQ(g.lines[0].reactance, 0.25);
  EXPECT_DOUBLE_EQ(g.lines[0].p_upper, 0.6);
  ASSERT_TRUE(g.has_generator(0));
  EXPECT_DOUBLE_EQ(g.u_upper(0), 0.8);
  EXPECT_DOUBLE_EQ(g.u_lower(0), 0.1);
  // Costs in per unit: c2 * base^2 and c1 * base.
  EXPECT_DOUBLE_EQ(g.generators[0]->cost_H, 2.0 * 0.02 * 100 * 100);
  EXPECT_DOUBLE_EQ(g.generators[0]->cost_h, 15.0 * 100);
  ASSERT_TRUE(g.slack_bus);
  EXPECT_EQ(*g.slack_bus, 0);
}

TEST(Grid, ZeroReactanceNamesTheInvariant) {
  auto doc = three_bus_ring();
  doc["lines"][1]["reactance"] = 0.0;
  try {
    load_case_json(doc);
    FAIL() << "expected CaseError";
  } catch (const CaseError& e) {
    EXPECT_NE(std::string(e.what()).find("nonpositive reactance"), std::string::npos);
  }
}

TEST(Grid, ValidationErrors) {
  auto bad = [](auto mutate) {
    auto doc = three_bus_ring();
    mutate(doc);
    EXPECT_THROW(load_case_json(doc), CaseError) << doc.dump();
  };
  bad([](auto& d) { d["buses"][1]["id"] = 1; });
  bad([](auto& d) { d["lines"][0]["to"] = 9; });
  bad([](auto& d) { d["lines"][0]["to"] = 1; });
  bad([](auto& d) { d["generators"][0]["u_min"] = 3.0; });
  bad([](auto& d) { d["generators"][0]["cost_H_diag"] = -1.0; });
  bad([](auto& d) { d["generators"].push_back({{"bus", 1}}); });
  bad([](auto& d) { d.erase("lines"); });
  bad([](auto& d) {
    d["buses"].push_back({{"id", 4}, {"demand_nominal", 0.0}});
  });  // disconnected
}

TEST(Grid, JsonRoundTrip) {
  const Grid g = load_case(data_path("cases/case3_sin.json"));
  const Grid back = load_case_json(case_to_json(g));
  EXPECT_EQ(back.bus_ids, g.bus_ids);
  EXPECT_EQ(back.nominal_demand, g.nominal_demand);
  ASSERT_EQ(back.n_line(), g.n_line());
  for (int j = 0; j < g.n_line(); ++j) {
    EXPECT_EQ(back.lines[j].from, g.lines[j].from);
    EXPECT_EQ(back.lines[j].p_upper, g.lines[j].p_upper);
  }
  EXPECT_EQ(back.u_upper(0), g.u_upper(0));
  EXPECT_EQ(back.u_lower(1), g.u_lower(1));
}

TEST(Ptdf, TwoBus) {
  auto doc = nlohmann::json::parse(R"({
    "buses": [{"id": 1, "demand_nominal": 0}, {"id": 2, "demand_nominal": -1}],
    "lines": [{"from": 1, "to": 2, "reactance": 0.4}],
    "generators": [{"bus": 1}]
  })");
  const Grid g = load_case_json(doc);
  const Ptdf phi = compute_ptdf(g, 0);
  // Slack column zero; injecting at bus 2 and withdrawing at the slack pushes flow against the line direction.
  EXPECT_DOUBLE_EQ(phi.matrix(0, 0), 0.0);
  EXPECT_NEAR(phi.matrix(0, 1), -1.0, 1e-14);
}

TEST(Ptdf, ThreeBusRing) {
  const Grid g = load_case_json(three_bus_ring());
  const Ptdf phi = compute_ptdf(g);
  const Eigen::Vector3d p(1.0, -1.0, 0.0);
  const Eigen::VectorXd f = phi.matrix * p;
  EXPECT_NEAR(f[0], 2.0 / 3.0, 1e-14);   // 1 -> 2 directly
  EXPECT_NEAR(f[1], -1.0 / 3.0, 1e-14);  // 2 -> 3 carries the detour backwards
  EXPECT_NEAR(f[2], 1.0 / 3.0, 1e-14);   // 1 -> 3
}

TEST(Ptdf, UniformInjectionThroughProjectionGivesNoFlow) {
  const Grid g = load_case(data_path("cases/case3_beta.json"));
  const Eigen::MatrixXd proj = compute_ptdf(g).projected();
  const Eigen::VectorXd f = proj * Eigen::VectorXd::Constant(3, 2.5);
  EXPECT_LT(f.cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LT(proj.rowwise().sum().cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Ptdf, MatchesAngleFormulationOnRandomNetworks) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    testkit::RandomGridOptions o;
    o.n_bus = 2 + trial % 29;
    o.extra_lines = trial % 7;
    const Grid g = testkit::random_grid(rng, o);
    const Ptdf phi = compute_ptdf(g);
    for (int k = 0; k < 3; ++k) {
      const Eigen::VectorXd p = random_balanced(rng, g.n_bus());
      const Eigen::VectorXd diff = phi.matrix * p - angle_flows(g, p);
      EXPECT_LT(diff.cwiseAbs().maxCoeff(), 1e-8) << "N = " << g.n_bus();
    }
  }
}

TEST(Ptdf, SlackInvariantOnBalancedInjections) {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    testkit::RandomGridOptions o;
    o.n_bus = 3 + trial;
    const Grid g = testkit::random_grid(rng, o);
    const Eigen::VectorXd p = random_balanced(rng, g.n_bus());
    const Eigen::VectorXd a = compute_ptdf(g, 0).matrix * p;
    const Eigen::VectorXd b = compute_ptdf(g, g.n_bus() - 1).matrix * p;
    EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(Ptdf, SlackOutOfRange) {
  const Grid g = load_case(data_path("cases/case3_beta.json"));
  EXPECT_THROW(compute_ptdf(g, 3), CaseError);
}
