#include "ccopf/policy.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>

#include <cmath>
#include <fstream>
#include <sstream>

namespace ccopf {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using nlohmann::json;

VectorXd Policy::evaluate(const Eigen::Ref<const VectorXd>& xi) const { return u0 + U * basis->psi(xi); }

VectorXd Policy::demand(const Eigen::Ref<const VectorXd>& xi) const { return d0 + D * basis->psi(xi); }

double Policy::coefficient_balance_residual() const {
  double r = std::abs(u0.sum() + d0.sum());
  for (Index l = 0; l < U.cols(); ++l) r = std::max(r, std::abs(U.col(l).sum() + D.col(l).sum()));
  return r;
}

Policy make_policy(const CcOpfProblem& problem, const CcOpfSolution& solution) {
  if (solution.u0.size() != problem.N() || solution.U.cols() != problem.L()) throw PolicyError("solution does not match the problem");
  Policy p;
  p.u0 = solution.u0;
  p.U = solution.U;
  p.basis = problem.demand.pce.basis;
  p.d0 = problem.demand.d0();
  p.D = problem.demand.D();
  p.germ_a = p.basis->germ_a();
  p.germ_B = p.basis->germ_B();
  p.bus_ids = problem.grid.bus_ids;
  p.source_ids = problem.demand.source_ids;
  p.objective = solution.objective;
  p.epsilon_gen = problem.chance.epsilon_gen;
  p.epsilon_line = problem.chance.epsilon_line;
  p.beta_gen = problem.chance.beta_gen();
  p.beta_line = problem.chance.beta_line();
  p.beta_rule = to_string(problem.chance.rule);
  return p;
}

GermRecovery recover_germ(const Policy& policy, const Eigen::Ref<const VectorXd>& d_tilde) {
  if (d_tilde.size() != policy.d0.size()) throw PolicyError("demand realization has the wrong dimension");
  const MatrixXd M = policy.D * policy.germ_B.asDiagonal();
  const VectorXd rhs = d_tilde - policy.d0 - policy.D * policy.germ_a;
  GermRecovery out;
  out.singular_values = Eigen::JacobiSVD<MatrixXd>(M).singularValues();
  Eigen::ColPivHouseholderQR<MatrixXd> qr(M);
  qr.setThreshold(kRankTolerance);
  if (qr.rank() < M.cols()) {
    std::ostringstream os;
    os << "D B is rank deficient (rank " << qr.rank() << " of " << M.cols() << "); singular values:";
    for (Index k = 0; k < out.singular_values.size(); ++k) os << ' ' << out.singular_values[k];
    throw PolicyError(os.str());
  }
  out.xi = qr.solve(rhs);
  out.residual = (M * out.xi - rhs).cwiseAbs().maxCoeff();
  const double scale = std::max(1.0, d_tilde.cwiseAbs().maxCoeff());
  if (out.residual > kRecoveryResidualTolerance * scale) {
    std::ostringstream os;
    os << "demand realization is not in the range of the model (residual " << out.residual << ")";
    throw PolicyError(os.str());
  }
  for (Index l = 0; l < out.xi.size(); ++l) {
    const GermComponent& c = policy.basis->components[l];
    const double slack = 1e-9 * std::max(1.0, std::abs(out.xi[l]));
    if (out.xi[l] < c.lo - slack || out.xi[l] > c.hi + slack) {
      out.in_support = false;
      std::ostringstream os;
      os << "xi[" << l << "] = " << out.xi[l] << " outside the support of " << c.describe();
      out.warnings.push_back(os.str());
    }
  }
  return out;
}

DemandCoordinatePolicy policy_in_demand_coordinates(const Policy& policy) {
  const Index L = policy.L();
  Eigen::ColPivHouseholderQR<MatrixXd> qr(policy.D.transpose());
  qr.setThreshold(kRankTolerance);
  if (qr.rank() < L) throw PolicyError("demand matrix D is rank deficient; no demand coordinates exist");
  DemandCoordinatePolicy out;
  for (Index k = 0; k < L; ++k) out.coordinates.push_back(qr.colsPermutation().indices()[k]);
  std::sort(out.coordinates.begin(), out.coordinates.end());
  MatrixXd SD(L, L);
  VectorXd Sd0(L);
  for (Index k = 0; k < L; ++k) {
    SD.row(k) = policy.D.row(out.coordinates[k]);
    Sd0[k] = policy.d0[out.coordinates[k]];
  }
  // psi = (S D)^-1 (S d - S d0).
  const Eigen::PartialPivLU<MatrixXd> lu(SD);
  out.slope = policy.U * lu.inverse();
  out.intercept = policy.u0 - out.slope * Sd0;
  return out;
}

double satisfaction_probability_closed_form(const Policy& policy, int bus, double bound, LimitSide side) {
  if (bus < 0 || bus >= policy.N()) throw PolicyError("bus index out of range");
  const auto row = policy.U.row(bus);
  const double scale = std::max(1.0, row.cwiseAbs().maxCoeff());
  int active = -1;
  for (Index l = 0; l < row.size(); ++l) {
    if (std::abs(row[l]) <= 1e-14 * scale) continue;
    if (active >= 0) throw PolicyError("u at this bus depends on several germ components; use Monte Carlo");
    active = static_cast<int>(l);
  }
  double p_le;  // P(u <= bound)
  if (active < 0) {
    const double u = policy.u0[bus], tol = 1e-12 * std::max(1.0, std::abs(bound));
    return side == LimitSide::Upper ? (u <= bound + tol ? 1.0 : 0.0) : (u >= bound - tol ? 1.0 : 0.0);
  } else {
    const GermComponent& c = policy.basis->components[active];
    // u = c0 + c1 xi.
    const double c0 = policy.u0[bus] + row[active] * c.psi_a;
    const double c1 = row[active] * c.psi_b;
    const double x = (bound - c0) / c1;
    p_le = c1 > 0.0 ? c.cdf(x) : 1.0 - c.cdf(x);
  }
  return side == LimitSide::Upper ? p_le : 1.0 - p_le;
}

json germ_spec_to_json(const GermSpec& spec) {
  json j;
  switch (spec.kind) {
    case GermKind::GaussianStandard:
      j["family"] = "gaussian";
      break;
    case GermKind::Uniform01:
      j["family"] = "uniform";
      break;
    case GermKind::Beta:
      j = {{"family", "beta"}, {"a", spec.a}, {"b", spec.b}};
      break;
    case GermKind::Gamma:
      j = {{"family", "gamma"}, {"p", spec.a}};
      break;
    case GermKind::Custom: {
      const CustomDensity& d = *spec.custom;
      j = {{"family", "custom"}, {"name", d.name}};
      if (d.tabulated()) {
        j["table"] = {{"x", d.table_x}, {"f", d.table_f}};
      } else if (d.name != "sine") {
        throw PolicyError("closed-form custom density '" + d.name + "' cannot be exported");
      }
      if (spec.mean) j["mean"] = *spec.mean;
      if (spec.variance) j["variance"] = *spec.variance;
      break;
    }
  }
  return j;
}

GermSpec germ_spec_from_json(const json& j) {
  const std::string family = j.at("family").get<std::string>();
  if (family == "gaussian") return GermSpec::gaussian();
  if (family == "uniform") return GermSpec::uniform();
  if (family == "beta") return GermSpec::beta(j.at("a").get<double>(), j.at("b").get<double>());
  if (family == "gamma") return GermSpec::gamma(j.at("p").get<double>());
  if (family == "custom") {
    CustomDensity d;
    if (j.contains("table"))
      d = CustomDensity::table(j["table"].at("x").get<std::vector<double>>(), j["table"].at("f").get<std::vector<double>>());
    else if (j.value("name", std::string()) == "sine")
      d = CustomDensity::sine();
    else
      throw PolicyError("custom germ needs a table or the name \"sine\"");
    GermSpec spec = GermSpec::from_density(std::move(d));
    if (j.contains("mean")) spec.mean = j["mean"].get<double>();
    if (j.contains("variance")) spec.variance = j["variance"].get<double>();
    return spec;
  }
  throw PolicyError("unknown germ family '" + family + "'");
}

namespace {

json matrix_rows(const MatrixXd& M) {
  json rows = json::array();
  for (Index i = 0; i < M.rows(); ++i) {
    json r = json::array();
    for (Index j = 0; j < M.cols(); ++j) r.push_back(M(i, j));
    rows.push_back(r);
  }
  return rows;
}

MatrixXd matrix_from_rows(const json& rows, Index cols) {
  MatrixXd M(rows.size(), cols);
  for (size_t i = 0; i < rows.size(); ++i) {
    if (static_cast<Index>(rows[i].size()) != cols) throw PolicyError("ragged matrix in policy file");
    for (Index j = 0; j < cols; ++j) M(i, j) = rows[i][j].get<double>();
  }
  return M;
}

std::vector<double> vec(const VectorXd& v) { return {v.data(), v.data() + v.size()}; }

VectorXd vec_from(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const VectorXd>(v.data(), static_cast<Index>(v.size()));
}

}  // namespace

json policy_to_json(const Policy& p) {
  json basis = json::array();
  for (const GermComponent& c : p.basis->components) {
    json b = germ_spec_to_json(c.spec);
    b["psi_a"] = c.psi_a;
    b["psi_b"] = c.psi_b;
    b["gamma1"] = c.gamma1;
    b["describe"] = c.describe();
    basis.push_back(b);
  }
  return {{"format", "ccopf-policy/1"},
          {"bus_ids", p.bus_ids},
          {"source_ids", p.source_ids},
          {"u0", vec(p.u0)},
          {"U", matrix_rows(p.U)},
          {"d0", vec(p.d0)},
          {"D", matrix_rows(p.D)},
          {"basis", basis},
          {"germ_map", {{"a", vec(p.germ_a)}, {"B", vec(p.germ_B)}}},
          {"objective", p.objective},
          {"epsilon_gen", p.epsilon_gen},
          {"epsilon_line", p.epsilon_line},
          {"beta_gen", p.beta_gen},
          {"beta_line", p.beta_line},
          {"beta_rule", p.beta_rule},
          {"config_hash", p.config_hash},
          {"seed", p.seed}};
}

Policy policy_from_json(const json& doc) {
  try {
    if (doc.value("format", std::string()) != "ccopf-policy/1") throw PolicyError("not a ccopf-policy/1 document");
    Policy p;
    p.bus_ids = doc.at("bus_ids").get<std::vector<long>>();
    p.source_ids = doc.value("source_ids", std::vector<std::string>());
    p.u0 = vec_from(doc.at("u0"));
    std::vector<GermComponent> comps;
    for (const json& b : doc.at("basis")) comps.push_back(build_germ(germ_spec_from_json(b)));
    const Index L = static_cast<Index>(comps.size());
    p.U = matrix_from_rows(doc.at("U"), L);
    p.d0 = vec_from(doc.at("d0"));
    p.D = matrix_from_rows(doc.at("D"), L);
    const Index N = p.u0.size();
    if (static_cast<Index>(p.bus_ids.size()) != N || p.U.rows() != N || p.d0.size() != N || p.D.rows() != N)
      throw PolicyError("policy arrays disagree on the number of buses");
    p.basis = std::make_shared<const MultivariateBasis>(tensorize(std::move(comps)));
    p.germ_a = p.basis->germ_a();
    p.germ_B = p.basis->germ_B();
    p.objective = doc.value("objective", 0.0);
    p.epsilon_gen = doc.value("epsilon_gen", 0.0);
    p.epsilon_line = doc.value("epsilon_line", 0.0);
    p.beta_gen = doc.value("beta_gen", 0.0);
    p.beta_line = doc.value("beta_line", 0.0);
    p.beta_rule = doc.value("beta_rule", std::string());
    p.config_hash = doc.value("config_hash", std::string());
    p.seed = doc.value("seed", std::uint64_t{0});
    return p;
  } catch (const json::exception& e) {
    throw PolicyError(std::string("malformed policy document: ") + e.what());
  } catch (const ModelError& e) {
    throw PolicyError(std::string("malformed policy document: ") + e.what());
  }
}

Policy load_policy_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw PolicyError("cannot open policy file " + path);
  try {
    return policy_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw PolicyError(path + ": " + e.what());
  }
}

}  // namespace ccopf
