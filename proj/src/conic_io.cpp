#include <stdexcept>

#include "ccopf/conic.hpp"

namespace ccopf {

using nlohmann::json;

namespace {

json matrix_json(const SpMat& M) {
  json trip = json::array();
  for (Eigen::Index j = 0; j < M.outerSize(); ++j)
    for (SpMat::InnerIterator it(M, j); it; ++it) trip.push_back({it.row(), it.col(), it.value()});
  return {{"rows", M.rows()}, {"cols", M.cols()}, {"triplets", trip}};
}

SpMat matrix_from(const json& j, Eigen::Index cols) {
  const Eigen::Index rows = j.at("rows").get<Eigen::Index>();
  if (j.at("cols").get<Eigen::Index>() != cols) throw std::invalid_argument("conic json: matrix column count mismatch");
  std::vector<Eigen::Triplet<double>> trip;
  for (const json& t : j.at("triplets")) {
    const auto r = t.at(0).get<Eigen::Index>(), c = t.at(1).get<Eigen::Index>();
    if (r < 0 || r >= rows || c < 0 || c >= cols) throw std::invalid_argument("conic json: triplet out of range");
    trip.emplace_back(r, c, t.at(2).get<double>());
  }
  SpMat M(rows, cols);
  M.setFromTriplets(trip.begin(), trip.end());
  return M;
}

Eigen::VectorXd vec_from(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<double> to_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

json to_json(const ConicProblem& P) {
  json cones = json::array();
  for (const Cone& k : P.cones) cones.push_back({{"type", k.kind == Cone::Kind::NonNeg ? "nonneg" : "soc"}, {"dim", k.dim}});
  json doc = {{"format", "ccopf-conic/1"},
              {"c", to_vec(P.c)},
              {"A", matrix_json(P.A)},
              {"b", to_vec(P.b)},
              {"G", matrix_json(P.G)},
              {"h", to_vec(P.h)},
              {"cones", cones},
              {"objective_offset", P.objective_offset}};
  if (!P.var_names.empty()) doc["var_names"] = P.var_names;
  return doc;
}

ConicProblem conic_from_json(const json& doc) {
  ConicProblem P;
  P.c = vec_from(doc.at("c"));
  const Eigen::Index n = P.c.size();
  if (doc.contains("A")) {
    P.A = matrix_from(doc["A"], n);
    P.b = vec_from(doc.at("b"));
  } else {
    P.A.resize(0, n);
    P.b.resize(0);
  }
  if (doc.contains("G")) {
    P.G = matrix_from(doc["G"], n);
    P.h = vec_from(doc.at("h"));
  } else {
    P.G.resize(0, n);
    P.h.resize(0);
  }
  for (const json& k : doc.value("cones", json::array())) {
    const std::string type = k.at("type").get<std::string>();
    const auto dim = k.at("dim").get<Eigen::Index>();
    if (type == "nonneg" || type == "l")
      P.cones.push_back(Cone::nonneg(dim));
    else if (type == "soc" || type == "q")
      P.cones.push_back(Cone::soc(dim));
    else
      throw std::invalid_argument("conic json: unknown cone type '" + type + "'");
  }
  P.objective_offset = doc.value("objective_offset", 0.0);
  if (doc.contains("var_names")) P.var_names = doc["var_names"].get<std::vector<std::string>>();
  P.check();
  return P;
}

}  // namespace ccopf
