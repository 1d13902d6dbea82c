#include "ccopf/grid.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <unordered_map>

namespace ccopf {

using nlohmann::json;

std::vector<int> Grid::generator_buses() const {
  std::vector<int> out;
  for (int i = 0; i < n_bus(); ++i)
    if (generators[i]) out.push_back(i);
  return out;
}

int Grid::n_generators() const { return static_cast<int>(generator_buses().size()); }

int Grid::bus_index(long id) const {
  for (int i = 0; i < n_bus(); ++i)
    if (bus_ids[i] == id) return i;
  throw CaseError("unknown bus id " + std::to_string(id));
}

int Grid::default_slack() const {
  if (slack_bus) return *slack_bus;
  for (int i = 0; i < n_bus(); ++i)
    if (generators[i]) return i;
  return 0;
}

namespace {

int find_root(std::vector<int>& parent, int i) {
  while (parent[i] != i) {
    parent[i] = parent[parent[i]];
    i = parent[i];
  }
  return i;
}

}  // namespace

void validate(const Grid& grid) {
  const int n = grid.n_bus();
  if (n == 0) throw CaseError("case has no buses");
  if (static_cast<int>(grid.nominal_demand.size()) != n || static_cast<int>(grid.generators.size()) != n)
    throw CaseError("per-bus arrays do not match the bus count");

  std::unordered_map<long, int> seen;
  for (int i = 0; i < n; ++i) {
    if (!seen.emplace(grid.bus_ids[i], i).second)
      throw CaseError("bus " + std::to_string(i) + ": duplicate id " + std::to_string(grid.bus_ids[i]));
    if (!std::isfinite(grid.nominal_demand[i]))
      throw CaseError("bus " + std::to_string(i) + ": non-finite demand");
  }

  for (int k = 0; k < grid.n_line(); ++k) {
    const Line& l = grid.lines[k];
    const std::string where = "line " + std::to_string(k) + ": ";
    if (l.from < 0 || l.from >= n || l.to < 0 || l.to >= n) throw CaseError(where + "endpoint out of range");
    if (l.from == l.to) throw CaseError(where + "self loop");
    if (!(l.reactance > 0.0) || !std::isfinite(l.reactance)) throw CaseError(where + "nonpositive reactance");
    if (std::isnan(l.p_lower) || std::isnan(l.p_upper) || l.p_lower > l.p_upper)
      throw CaseError(where + "inverted flow bounds");
  }

  for (int i = 0; i < n; ++i) {
    if (!grid.generators[i]) continue;
    const Generator& g = *grid.generators[i];
    const std::string where = "generator at bus " + std::to_string(i) + ": ";
    if (std::isnan(g.u_lower) || std::isnan(g.u_upper) || g.u_lower > g.u_upper)
      throw CaseError(where + "inverted bounds");
    if (!std::isfinite(g.cost_h) || !std::isfinite(g.cost_H)) throw CaseError(where + "non-finite cost");
    if (g.cost_H < 0.0) throw CaseError(where + "negative quadratic cost");
  }

  if (grid.slack_bus && (*grid.slack_bus < 0 || *grid.slack_bus >= n))
    throw CaseError("slack bus out of range");

  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  int components = n;
  for (const Line& l : grid.lines) {
    int a = find_root(parent, l.from), b = find_root(parent, l.to);
    if (a != b) {
      parent[a] = b;
      --components;
    }
  }
  if (components != 1) {
    for (int i = 0; i < n; ++i)
      if (find_root(parent, i) != find_root(parent, 0))
        throw CaseError("bus " + std::to_string(i) + ": disconnected graph");
  }
}

namespace {

double bound_or(const json& obj, const char* key, double fallback) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return fallback;
  if (!it->is_number()) throw CaseError(std::string("field '") + key + "' must be a number or null");
  return it->get<double>();
}

}  // namespace

Grid load_case_json(const json& doc) {
  if (!doc.is_object()) throw CaseError("case document must be a JSON object");
  for (const char* key : {"buses", "lines", "generators"})
    if (!doc.contains(key) || !doc[key].is_array()) throw CaseError(std::string("missing array '") + key + "'");

  Grid grid;
  grid.name = doc.value("name", std::string());
  const json& buses = doc["buses"];
  for (size_t i = 0; i < buses.size(); ++i) {
    const json& b = buses[i];
    if (!b.contains("id") || !b["id"].is_number_integer())
      throw CaseError("bus " + std::to_string(i) + ": missing integer 'id'");
    grid.bus_ids.push_back(b["id"].get<long>());
    grid.nominal_demand.push_back(bound_or(b, "demand_nominal", 0.0));
  }
  grid.generators.assign(grid.bus_ids.size(), std::nullopt);

  auto index_of = [&](const json& v, const std::string& where) {
    if (!v.is_number_integer()) throw CaseError(where + ": bus reference must be an integer id");
    try {
      return grid.bus_index(v.get<long>());
    } catch (const CaseError& e) {
      throw CaseError(where + ": " + e.what());
    }
  };

  const json& lines = doc["lines"];
  for (size_t k = 0; k < lines.size(); ++k) {
    const json& l = lines[k];
    const std::string where = "line " + std::to_string(k);
    if (!l.contains("from") || !l.contains("to") || !l.contains("reactance"))
      throw CaseError(where + ": needs 'from', 'to', 'reactance'");
    Line line;
    line.from = index_of(l["from"], where);
    line.to = index_of(l["to"], where);
    line.reactance = l["reactance"].get<double>();
    const double limit = bound_or(l, "limit", kInf);
    line.p_lower = bound_or(l, "p_lower", -limit);
    line.p_upper = bound_or(l, "p_upper", limit);
    grid.lines.push_back(line);
  }

  const json& gens = doc["generators"];
  for (size_t k = 0; k < gens.size(); ++k) {
    const json& g = gens[k];
    const std::string where = "generator " + std::to_string(k);
    if (!g.contains("bus")) throw CaseError(where + ": missing 'bus'");
    const int bus = index_of(g["bus"], where);
    if (grid.generators[bus]) throw CaseError(where + ": second generator at one bus");
    Generator gen;
    gen.u_lower = bound_or(g, "u_min", -kInf);
    gen.u_upper = bound_or(g, "u_max", kInf);
    gen.cost_h = bound_or(g, "cost_h", 0.0);
    gen.cost_H = bound_or(g, "cost_H_diag", 0.0);
    grid.generators[bus] = gen;
  }

  if (doc.contains("slack_bus") && !doc["slack_bus"].is_null()) grid.slack_bus = index_of(doc["slack_bus"], "slack_bus");

  validate(grid);
  return grid;
}

Grid load_case(const std::string& path, const MatpowerOptions& options) {
  std::ifstream in(path);
  if (!in) throw CaseError("cannot open case file " + path);
  if (path.size() > 2 && path.compare(path.size() - 2, 2, ".m") == 0) return load_matpower(in, options);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw CaseError(path + ": " + e.what());
  }
  return load_case_json(doc);
}

json case_to_json(const Grid& grid) {
  auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  json doc;
  if (!grid.name.empty()) doc["name"] = grid.name;
  doc["buses"] = json::array();
  for (int i = 0; i < grid.n_bus(); ++i)
    doc["buses"].push_back({{"id", grid.bus_ids[i]}, {"demand_nominal", grid.nominal_demand[i]}});
  doc["lines"] = json::array();
  for (const Line& l : grid.lines) {
    json jl = {{"from", grid.bus_ids[l.from]}, {"to", grid.bus_ids[l.to]}, {"reactance", l.reactance}};
    if (l.p_lower == -l.p_upper) {
      jl["limit"] = num(l.p_upper);
    } else {
      jl["p_lower"] = num(l.p_lower);
      jl["p_upper"] = num(l.p_upper);
    }
    doc["lines"].push_back(jl);
  }
  doc["generators"] = json::array();
  for (int i = 0; i < grid.n_bus(); ++i) {
    if (!grid.generators[i]) continue;
    const Generator& g = *grid.generators[i];
    doc["generators"].push_back({{"bus", grid.bus_ids[i]},
                                 {"u_min", num(g.u_lower)},
                                 {"u_max", num(g.u_upper)},
                                 {"cost_h", g.cost_h},
                                 {"cost_H_diag", g.cost_H}});
  }
  if (grid.slack_bus) doc["slack_bus"] = grid.bus_ids[*grid.slack_bus];
  return doc;
}

Eigen::MatrixXd Ptdf::projected() const {
  return matrix.colwise() - matrix.rowwise().mean();
}

Ptdf compute_ptdf(const Grid& grid, int slack_bus) {
  const int n = grid.n_bus();
  const int nl = grid.n_line();
  if (slack_bus < 0 || slack_bus >= n) throw CaseError("slack bus out of range");

  // Reduced nodal susceptance matrix: position r of a non-slack bus is its index minus one past the slack.
  auto reduced = [slack_bus](int bus) { return bus < slack_bus ? bus : bus - 1; };
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(n - 1, n - 1);
  Eigen::MatrixXd Bf = Eigen::MatrixXd::Zero(nl, n - 1);
  for (int k = 0; k < nl; ++k) {
    const Line& l = grid.lines[k];
    const double b = 1.0 / l.reactance;
    if (l.from != slack_bus) {
      B(reduced(l.from), reduced(l.from)) += b;
      Bf(k, reduced(l.from)) += b;
    }
    if (l.to != slack_bus) {
      B(reduced(l.to), reduced(l.to)) += b;
      Bf(k, reduced(l.to)) -= b;
    }
    if (l.from != slack_bus && l.to != slack_bus) {
      B(reduced(l.from), reduced(l.to)) -= b;
      B(reduced(l.to), reduced(l.from)) -= b;
    }
  }

  Ptdf out;
  out.slack_bus = slack_bus;
  out.matrix = Eigen::MatrixXd::Zero(nl, n);
  if (n == 1) return out;

  Eigen::LLT<Eigen::MatrixXd> llt(B);
  if (llt.info() != Eigen::Success) throw CaseError("singular reduced susceptance matrix (network disconnected)");
  const Eigen::MatrixXd sens = llt.solve(Bf.transpose()).transpose();  // Bf * B^-1
  for (int i = 0; i < n; ++i)
    if (i != slack_bus) out.matrix.col(i) = sens.col(reduced(i));
  return out;
}

}  // namespace ccopf
