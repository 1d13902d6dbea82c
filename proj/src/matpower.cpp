// MATPOWER .m subset: baseMVA, bus, gen, branch and gencost matrices.
#include <cmath>
#include <map>
#include <sstream>

#include "ccopf/grid.hpp"

namespace ccopf {

namespace {

using Table = std::vector<std::vector<double>>;

std::string strip_comments(std::istream& in) {
  std::string out, line;
  while (std::getline(in, line)) {
    const auto pct = line.find('%');
    if (pct != std::string::npos) line.erase(pct);
    out += line;
    out += '\n';
  }
  return out;
}

Table parse_matrix(const std::string& body) {
  Table rows;
  std::vector<double> row;
  std::string token;
  auto flush_token = [&] {
    if (token.empty()) return;
    try {
      row.push_back(std::stod(token));
    } catch (const std::exception&) {
      throw CaseError("matpower: cannot parse number '" + token + "'");
    }
    token.clear();
  };
  auto flush_row = [&] {
    flush_token();
    if (!row.empty()) rows.push_back(std::move(row));
    row.clear();
  };
  for (char ch : body) {
    if (ch == ';' || ch == '\n') {
      flush_row();
    } else if (ch == ' ' || ch == '\t' || ch == ',' || ch == '\r') {
      flush_token();
    } else {
      token += ch;
    }
  }
  flush_row();
  return rows;
}

std::map<std::string, Table> parse_tables(const std::string& text, double& base_mva) {
  std::map<std::string, Table> tables;
  base_mva = 100.0;
  size_t pos = 0;
  while ((pos = text.find("mpc.", pos)) != std::string::npos) {
    const size_t eq = text.find('=', pos);
    if (eq == std::string::npos) break;
    std::string name = text.substr(pos + 4, eq - pos - 4);
    name.erase(name.find_last_not_of(" \t") + 1);
    size_t start = text.find_first_not_of(" \t", eq + 1);
    if (start == std::string::npos) break;
    if (text[start] == '[') {
      const size_t end = text.find(']', start);
      if (end == std::string::npos) throw CaseError("matpower: unterminated matrix '" + name + "'");
      tables[name] = parse_matrix(text.substr(start + 1, end - start - 1));
      pos = end;
    } else {
      const size_t end = text.find_first_of(";\n", start);
      if (name == "baseMVA") base_mva = std::stod(text.substr(start, end - start));
      pos = end == std::string::npos ? text.size() : end;
    }
  }
  return tables;
}

const Table& require(const std::map<std::string, Table>& tables, const std::string& name, size_t min_cols) {
  auto it = tables.find(name);
  if (it == tables.end()) throw CaseError("matpower: missing mpc." + name);
  for (size_t r = 0; r < it->second.size(); ++r)
    if (it->second[r].size() < min_cols)
      throw CaseError("matpower: mpc." + name + " row " + std::to_string(r) + " has too few columns");
  return it->second;
}

}  // namespace

Grid load_matpower(std::istream& in, const MatpowerOptions& options) {
  double base = 100.0;
  const auto tables = parse_tables(strip_comments(in), base);
  const Table& bus = require(tables, "bus", 3);
  const Table& gen = require(tables, "gen", 10);
  const Table& branch = require(tables, "branch", 11);

  Grid grid;
  for (const auto& row : bus) {
    grid.bus_ids.push_back(static_cast<long>(row[0]));
    grid.nominal_demand.push_back(-row[2] / base);
    if (row[1] == 3.0 && !grid.slack_bus) grid.slack_bus = grid.n_bus() - 1;
  }
  grid.generators.assign(grid.bus_ids.size(), std::nullopt);
  std::map<long, int> index;
  for (int i = 0; i < grid.n_bus(); ++i) index[grid.bus_ids[i]] = i;
  auto lookup = [&](double id, const std::string& where) {
    auto it = index.find(static_cast<long>(id));
    if (it == index.end()) throw CaseError(where + ": unknown bus id " + std::to_string(static_cast<long>(id)));
    return it->second;
  };

  for (size_t k = 0; k < branch.size(); ++k) {
    const auto& row = branch[k];
    if (row[10] == 0.0) continue;
    const std::string where = "branch " + std::to_string(k);
    Line line;
    line.from = lookup(row[0], where);
    line.to = lookup(row[1], where);
    line.reactance = row[3];
    if (options.reactance == ReactancePolicy::Absolute) line.reactance = std::abs(line.reactance);
    if (!(line.reactance > 0.0)) throw CaseError("line " + std::to_string(grid.n_line()) + ": nonpositive reactance");
    if (row[5] > 0.0) {
      line.p_upper = row[5] / base;
      line.p_lower = -line.p_upper;
    }
    grid.lines.push_back(line);
  }

  const Table* gencost = nullptr;
  if (auto it = tables.find("gencost"); it != tables.end()) gencost = &it->second;

  for (size_t k = 0; k < gen.size(); ++k) {
    const auto& row = gen[k];
    if (row[7] <= 0.0) continue;
    const std::string where = "gen " + std::to_string(k);
    const int b = lookup(row[0], where);
    if (grid.generators[b]) throw CaseError(where + ": second generator at one bus");
    Generator g;
    g.u_upper = row[8] / base;
    g.u_lower = row[9] / base;
    if (gencost && k < gencost->size()) {
      const auto& c = (*gencost)[k];
      if (c.size() < 4 || c[0] != 2.0) throw CaseError(where + ": only polynomial gencost is supported");
      const int ncost = static_cast<int>(c[3]);
      if (ncost > 3 || static_cast<int>(c.size()) < 4 + ncost)
        throw CaseError(where + ": gencost must be at most quadratic");
      // Coefficients run from highest degree down to the constant.
      const double c2 = ncost == 3 ? c[4] : 0.0;
      const double c1 = ncost >= 2 ? c[4 + ncost - 2] : 0.0;
      g.cost_H = 2.0 * c2 * base * base;
      g.cost_h = c1 * base;
    }
    grid.generators[b] = g;
  }

  validate(grid);
  return grid;
}

}  // namespace ccopf
