#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "ccopf/cones.hpp"
#include "ccopf/conic.hpp"

using namespace ccopf;
using Eigen::VectorXd;

namespace {

struct Fixture {
  std::string name;
  ConicProblem problem;
  nlohmann::json expect;
};

std::vector<Fixture> load_fixtures() {
  std::vector<Fixture> out;
  for (const auto& entry : std::filesystem::directory_iterator(CCOPF_FIXTURE_DIR "/conic")) {
    if (entry.path().extension() != ".json") continue;
    std::ifstream in(entry.path());
    const auto doc = nlohmann::json::parse(in);
    out.push_back({doc.at("name").get<std::string>(), conic_from_json(doc.at("problem")), doc.at("expect")});
  }
  std::sort(out.begin(), out.end(), [](const Fixture& a, const Fixture& b) { return a.name < b.name; });
  return out;
}

double inf_norm(const VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

// -b'y - h'z, the dual objective of min c'x, Ax = b, h - Gx in K.
double dual_objective(const ConicProblem& P, const Solution& s) {
  return -P.b.dot(s.y) - P.h.dot(s.z) + P.objective_offset;
}

bool in_cone(const ConicProblem& P, const VectorXd& v, double tol) {
  ConeSet K(P.cones);
  return K.min_eigenvalue(v) >= -tol;
}

SpMat dense_to_sparse(const Eigen::MatrixXd& M) { return M.sparseView(); }

struct KnownSolution {
  ConicProblem problem;
  double objective = 0.0;
};

// Picks a strictly complementary primal-dual pair first and builds data around it.
KnownSolution random_known(std::mt19937_64& rng, bool presolve_bait) {
  std::normal_distribution<double> z01;
  std::uniform_real_distribution<double> pos(0.2, 2.0);
  const int n = 8, p = 2;
  std::vector<Cone> cones{Cone::nonneg(4), Cone::soc(3), Cone::soc(4)};
  const int m = 11;
  VectorXd s = VectorXd::Zero(m), z = VectorXd::Zero(m);
  for (int r = 0; r < 4; ++r) (rng() % 2 ? s : z)[r] = pos(rng);
  int off = 4;
  for (int k = 1; k < 3; ++k) {
    const int d = static_cast<int>(cones[k].dim);
    VectorXd u(d - 1);
    for (int i = 0; i < d - 1; ++i) u[i] = z01(rng);
    u.normalize();
    switch (rng() % 3) {
      case 0:  // s interior
        s[off] = 2.0 + pos(rng);
        s.segment(off + 1, d - 1) = u;
        break;
      case 1:  // z interior
        z[off] = 2.0 + pos(rng);
        z.segment(off + 1, d - 1) = u;
        break;
      default: {  // both on the boundary, facing each other
        const double a = pos(rng), b = pos(rng);
        s[off] = a;
        s.segment(off + 1, d - 1) = a * u;
        z[off] = b;
        z.segment(off + 1, d - 1) = -b * u;
      }
    }
    off += d;
  }
  Eigen::MatrixXd A(p, n), G(m, n);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < n; ++j) A(i, j) = z01(rng);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) G(i, j) = z01(rng);
  VectorXd x(n), y(p);
  for (int j = 0; j < n; ++j) x[j] = z01(rng);
  for (int i = 0; i < p; ++i) y[i] = z01(rng);
  if (presolve_bait) {
    // A repeated row and a singleton row fixing x[3].
    Eigen::MatrixXd A2(p + 2, n);
    A2 << A, A.row(0), Eigen::RowVectorXd::Unit(n, 3);
    VectorXd y2(p + 2);
    y2 << y, 0.0, z01(rng);
    A = A2;
    y = y2;
  }
  KnownSolution out;
  ConicProblem& P = out.problem;
  P.A = dense_to_sparse(A);
  P.b = A * x;
  P.G = dense_to_sparse(G);
  P.h = s + G * x;
  P.c = -A.transpose() * y - G.transpose() * z;
  P.cones = cones;
  out.objective = P.c.dot(x);
  return out;
}

}  // namespace

TEST(Conic, FixtureConformance) {
  const auto fixtures = load_fixtures();
  ASSERT_GE(fixtures.size(), 10u);
  for (const Fixture& f : fixtures) {
    for (bool presolve_on : {true, false}) {
      SolverSettings st;
      st.presolve = presolve_on;
      const Solution s = solve(f.problem, st);
      const std::string status = f.expect.at("status").get<std::string>();
      ASSERT_EQ(to_string(s.status), status) << f.name << " " << s.message;
      if (status != "optimal") continue;
      const double obj = f.expect.at("objective").get<double>();
      EXPECT_NEAR(s.objective, obj, 1e-7 * (1.0 + std::abs(obj))) << f.name;
      // Reference points come from an interior-point code at 1e-10 and carry about sqrt(1e-10) along flat
      // directions of the objective.
      const auto x = f.expect.at("x").get<std::vector<double>>();
      for (size_t j = 0; j < x.size(); ++j) EXPECT_NEAR(s.x[j], x[j], 2e-5) << f.name << " x[" << j << "]";
      // Self-duality: primal and dual objectives agree.
      EXPECT_LE(std::abs(s.objective - dual_objective(f.problem, s)) / (1.0 + std::abs(s.objective)), 1e-6) << f.name;
      EXPECT_TRUE(in_cone(f.problem, s.s, 1e-8)) << f.name;
      EXPECT_TRUE(in_cone(f.problem, s.z, 1e-8)) << f.name;
    }
  }
}

TEST(Conic, AnalyticOptima) {
  for (const Fixture& f : load_fixtures()) {
    if (f.name == "lp_lower_bound") EXPECT_NEAR(solve(f.problem).x[0], 1.0, 1e-9);
    if (f.name == "soc_norm") EXPECT_NEAR(solve(f.problem).x[0], 5.0, 1e-9);
  }
}

TEST(Conic, InfeasibilityCertificate) {
  for (const Fixture& f : load_fixtures()) {
    if (f.name != "lp_infeasible") continue;
    SolverSettings st;
    st.presolve = false;
    const Solution s = solve(f.problem, st);
    ASSERT_EQ(s.status, SolveStatus::Infeasible);
    EXPECT_NEAR(f.problem.b.dot(s.y) + f.problem.h.dot(s.z), -1.0, 1e-8);
    const VectorXd r = VectorXd(f.problem.A.transpose() * s.y) + VectorXd(f.problem.G.transpose() * s.z);
    EXPECT_LT(inf_norm(r), 1e-7);
    EXPECT_TRUE(in_cone(f.problem, s.z, 1e-9));
  }
}

TEST(Conic, UnboundednessCertificate) {
  for (const Fixture& f : load_fixtures()) {
    if (f.name != "lp_unbounded") continue;
    SolverSettings st;
    st.presolve = false;
    const Solution s = solve(f.problem, st);
    ASSERT_EQ(s.status, SolveStatus::Unbounded);
    EXPECT_NEAR(f.problem.c.dot(s.x), -1.0, 1e-8);
    EXPECT_TRUE(in_cone(f.problem, VectorXd(-(f.problem.G * s.x)), 1e-9));
  }
}

TEST(Conic, PresolveReducesDuplicateAndFixed) {
  for (const Fixture& f : load_fixtures()) {
    if (f.name != "presolve_duplicate_and_fixed") continue;
    const PresolveResult pre = presolve(f.problem);
    EXPECT_GE(pre.report.dependent_rows, 1);
    EXPECT_GE(pre.report.singleton_rows, 1);
    EXPECT_LT(pre.report.n_after, pre.report.n_before);
    const Solution s = solve(f.problem);
    EXPECT_EQ(s.presolve.dependent_rows, pre.report.dependent_rows);
    // Duals of the two copies of the balance row together carry the full multiplier.
    EXPECT_NEAR(s.y[0] + s.y[1], -1.0, 1e-7);
  }
}

TEST(Conic, KnownSolutionsWithAndWithoutPresolve) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 30; ++trial) {
    const KnownSolution ks = random_known(rng, trial % 2 == 0);
    SolverSettings on, off;
    off.presolve = false;
    const Solution a = solve(ks.problem, on);
    const Solution b = solve(ks.problem, off);
    ASSERT_TRUE(a.optimal()) << trial << " " << a.message;
    ASSERT_TRUE(b.optimal()) << trial << " " << b.message;
    const double scale = 1.0 + std::abs(ks.objective);
    EXPECT_NEAR(a.objective, ks.objective, 1e-7 * scale) << trial;
    EXPECT_NEAR(b.objective, ks.objective, 1e-7 * scale) << trial;
    const KktResiduals r = kkt_residuals(ks.problem, a);
    EXPECT_LT(std::max({r.primal, r.dual, r.gap}), 1e-7) << trial;
  }
}

TEST(Conic, PolishDrivesResidualsToRoundoff) {
  for (const Fixture& f : load_fixtures()) {
    if (f.name.rfind("case3", 0) != 0) continue;
    SolverSettings st;
    st.polish = false;
    Solution s = solve(f.problem, st);
    ASSERT_TRUE(s.optimal());
    EXPECT_FALSE(s.polished);
    const Eigen::VectorXd rough = s.x;
    const KktResiduals before = kkt_residuals(f.problem, s);
    ASSERT_TRUE(polish(f.problem, s)) << f.name;
    const KktResiduals after = kkt_residuals(f.problem, s);
    EXPECT_LE(std::max({after.primal, after.dual, after.gap}), std::max({before.primal, before.dual, before.gap}));
    EXPECT_LT(std::max({after.primal, after.dual, after.gap}), 1e-12) << f.name;
    EXPECT_LT((s.x - rough).cwiseAbs().maxCoeff(), 1e-4) << f.name;  // sqrt of the solve tolerance
    const double obj = f.expect.at("objective").get<double>();
    EXPECT_NEAR(s.objective, obj, 1e-8 * (1.0 + std::abs(obj))) << f.name;
  }
}

TEST(Conic, JsonRoundTrip) {
  for (const Fixture& f : load_fixtures()) {
    const ConicProblem back = conic_from_json(to_json(f.problem));
    EXPECT_EQ(back.c, f.problem.c);
    EXPECT_EQ(back.h, f.problem.h);
    EXPECT_EQ(back.b, f.problem.b);
    EXPECT_EQ(Eigen::MatrixXd(back.G), Eigen::MatrixXd(f.problem.G));
    EXPECT_EQ(Eigen::MatrixXd(back.A), Eigen::MatrixXd(f.problem.A));
    ASSERT_EQ(back.cones.size(), f.problem.cones.size());
  }
}

TEST(Conic, CheckRejectsBadShapes) {
  ConicProblem P;
  P.c = VectorXd::Ones(2);
  P.A.resize(0, 2);
  P.G.resize(1, 2);
  P.h = VectorXd::Zero(2);
  P.cones = {Cone::nonneg(2)};
  EXPECT_THROW(P.check(), std::invalid_argument);
  EXPECT_THROW(conic_from_json(nlohmann::json::parse(R"({"c": [1], "G": {"rows": 1, "cols": 1, "triplets": [[0, 0, 1]]},
    "h": [0], "cones": [{"type": "psd", "dim": 1}]})")),
               std::invalid_argument);
}

TEST(Cones, NesterovToddScaling) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> z01;
  ConeSet K({Cone::nonneg(3), Cone::soc(4), Cone::soc(2)});
  for (int trial = 0; trial < 20; ++trial) {
    VectorXd s(K.dim()), z(K.dim());
    for (Eigen::Index i = 0; i < K.dim(); ++i) s[i] = z01(rng), z[i] = z01(rng);
    K.bring_to_cone(s);
    K.bring_to_cone(z);
    ASSERT_GT(K.min_eigenvalue(s), 0.0);
    ASSERT_TRUE(K.update_scaling(s, z));
    EXPECT_LT(inf_norm(K.apply_Winv(s) - K.lambda()), 1e-10);
    EXPECT_LT(inf_norm(K.apply_W(z) - K.lambda()), 1e-10);
    EXPECT_LT(inf_norm(K.apply_W(K.apply_Winv(s)) - s), 1e-10);
    // Jordan product and its inverse.
    const VectorXd v = K.product(K.lambda(), z);
    EXPECT_LT(inf_norm(K.divide(K.lambda(), v) - z), 1e-9);
    // A full step to the boundary lands there.
    VectorXd d(K.dim());
    for (Eigen::Index i = 0; i < K.dim(); ++i) d[i] = z01(rng);
    const double t = K.max_step(K.lambda(), d);
    if (std::isfinite(t)) EXPECT_NEAR(K.min_eigenvalue(VectorXd(K.lambda() + t * d)), 0.0, 1e-9);
  }
}

TEST(Cones, IdentityAndDegree) {
  ConeSet K({Cone::nonneg(2), Cone::soc(3)});
  EXPECT_EQ(K.degree(), 3.0);
  const VectorXd e = K.identity();
  EXPECT_NEAR(K.min_eigenvalue(e), 1.0, 1e-15);
  const VectorXd v = K.product(e, e);
  EXPECT_LT(inf_norm(v - e), 1e-15);
}
