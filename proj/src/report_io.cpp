#include <cstdio>
#include <iomanip>
#include <sstream>

#include "ccopf/validation.hpp"

namespace ccopf {

using nlohmann::json;

namespace {

std::vector<double> vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd vec_from(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::string side_name(LimitSide s) { return s == LimitSide::Upper ? "upper" : "lower"; }

std::string num(double v, int digits = 6) {
  std::ostringstream os;
  os << std::setprecision(digits) << v;
  return os.str();
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

json report_to_json(const ValidationReport& r) {
  json constraints = json::array();
  for (const ConstraintAudit& c : r.constraints) {
    json j = {{"name", c.name},     {"kind", c.kind},           {"index", c.index},
              {"side", side_name(c.side)}, {"bound", c.bound},  {"epsilon", c.epsilon},
              {"satisfied", c.satisfied},  {"frequency", c.frequency}, {"meets_target", c.meets_target()}};
    if (c.closed_form) j["closed_form"] = *c.closed_form;
    constraints.push_back(j);
  }
  json hist = json::array();
  for (const Histogram& h : r.histograms)
    hist.push_back({{"label", h.label}, {"lo", h.lo}, {"hi", h.hi}, {"counts", h.counts}, {"underflow", h.underflow}, {"overflow", h.overflow}});
  json doc = {{"format", "ccopf-report/1"},
              {"sample_count", r.sample_count},
              {"seed", r.seed},
              {"config_hash", r.config_hash},
              {"policy_objective", r.policy_objective},
              {"max_balance_residual", r.max_balance_residual},
              {"policy_feasible_samples", r.policy_feasible_samples},
              {"constraints", constraints},
              {"generator_buses", r.generator_bus_ids},
              {"policy_mean", vec(r.policy_mean)},
              {"policy_std", vec(r.policy_std)},
              {"policy_std_analytic", vec(r.policy_std_analytic)},
              {"histograms", hist}};
  if (r.hindsight) {
    const HindsightStats& h = *r.hindsight;
    doc["hindsight"] = {{"requested", h.requested},
                        {"solved", h.solved},
                        {"infeasible", h.infeasible},
                        {"failed", h.failed},
                        {"mean", vec(h.mean)},
                        {"std", vec(h.std)},
                        {"policy_mean", vec(h.policy_mean)},
                        {"policy_std", vec(h.policy_std)},
                        {"max_balance_residual", h.max_balance_residual},
                        {"compared", h.compared},
                        {"min_objective_gap", h.min_objective_gap},
                        {"dominance_violations", h.dominance_violations}};
    const StdComparison c = compare_std(r);
    doc["std_comparison"] = {{"norm1_policy", c.norm1_policy},     {"norm1_hindsight", c.norm1_hindsight},
                             {"norm1_gap", c.norm1_gap},           {"relative_gap", c.relative_gap},
                             {"inf_norm", c.inf_norm},             {"argmax_bus", c.argmax_bus_id}};
  }
  return doc;
}

ValidationReport report_from_json(const json& doc) {
  try {
    if (doc.value("format", std::string()) != "ccopf-report/1") throw PolicyError("not a ccopf-report/1 document");
    ValidationReport r;
    r.sample_count = doc.at("sample_count").get<long>();
    r.seed = doc.at("seed").get<std::uint64_t>();
    r.config_hash = doc.value("config_hash", std::string());
    r.policy_objective = doc.value("policy_objective", 0.0);
    r.max_balance_residual = doc.at("max_balance_residual").get<double>();
    r.policy_feasible_samples = doc.value("policy_feasible_samples", 0L);
    for (const json& j : doc.at("constraints")) {
      ConstraintAudit c;
      c.name = j.at("name").get<std::string>();
      c.kind = j.at("kind").get<std::string>();
      c.index = j.at("index").get<int>();
      c.side = j.at("side").get<std::string>() == "lower" ? LimitSide::Lower : LimitSide::Upper;
      c.bound = j.at("bound").get<double>();
      c.epsilon = j.at("epsilon").get<double>();
      c.satisfied = j.at("satisfied").get<long>();
      c.frequency = j.at("frequency").get<double>();
      if (j.contains("closed_form")) c.closed_form = j["closed_form"].get<double>();
      r.constraints.push_back(c);
    }
    r.generator_bus_ids = doc.at("generator_buses").get<std::vector<long>>();
    r.policy_mean = vec_from(doc.at("policy_mean"));
    r.policy_std = vec_from(doc.at("policy_std"));
    r.policy_std_analytic = vec_from(doc.at("policy_std_analytic"));
    for (const json& j : doc.value("histograms", json::array())) {
      Histogram h;
      h.label = j.at("label").get<std::string>();
      h.lo = j.at("lo").get<double>();
      h.hi = j.at("hi").get<double>();
      h.counts = j.at("counts").get<std::vector<long>>();
      h.underflow = j.value("underflow", 0L);
      h.overflow = j.value("overflow", 0L);
      r.histograms.push_back(std::move(h));
    }
    if (doc.contains("hindsight")) {
      const json& j = doc["hindsight"];
      HindsightStats h;
      h.requested = j.at("requested").get<long>();
      h.solved = j.at("solved").get<long>();
      h.infeasible = j.at("infeasible").get<long>();
      h.failed = j.at("failed").get<long>();
      h.mean = vec_from(j.at("mean"));
      h.std = vec_from(j.at("std"));
      h.policy_mean = vec_from(j.at("policy_mean"));
      h.policy_std = vec_from(j.at("policy_std"));
      h.max_balance_residual = j.at("max_balance_residual").get<double>();
      h.compared = j.at("compared").get<long>();
      h.min_objective_gap = j.at("min_objective_gap").get<double>();
      h.dominance_violations = j.at("dominance_violations").get<long>();
      r.hindsight = h;
    }
    return r;
  } catch (const json::exception& e) {
    throw PolicyError(std::string("malformed report: ") + e.what());
  }
}

std::string std_table_csv(const ValidationReport& r) {
  std::ostringstream os;
  os << std::setprecision(10);
  os << "bus_id,policy_mean,policy_std,policy_std_analytic";
  if (r.hindsight) os << ",hopf_mean,hopf_std,policy_std_same_samples";
  os << '\n';
  for (size_t a = 0; a < r.generator_bus_ids.size(); ++a) {
    os << r.generator_bus_ids[a] << ',' << r.policy_mean[a] << ',' << r.policy_std[a] << ',' << r.policy_std_analytic[a];
    if (r.hindsight) os << ',' << r.hindsight->mean[a] << ',' << r.hindsight->std[a] << ',' << r.hindsight->policy_std[a];
    os << '\n';
  }
  return os.str();
}

std::string constraints_csv(const ValidationReport& r) {
  std::ostringstream os;
  os << std::setprecision(10);
  os << "name,kind,index,side,bound,epsilon,satisfied,frequency,closed_form\n";
  for (const ConstraintAudit& c : r.constraints) {
    os << '"' << c.name << "\"," << c.kind << ',' << c.index << ',' << side_name(c.side) << ',' << c.bound << ','
       << c.epsilon << ',' << c.satisfied << ',' << c.frequency << ',';
    if (c.closed_form) os << *c.closed_form;
    os << '\n';
  }
  return os.str();
}

std::string histograms_csv(const ValidationReport& r) {
  std::ostringstream os;
  os << std::setprecision(10);
  os << "label,bin,left,right,count,density\n";
  for (const Histogram& h : r.histograms) {
    const int bins = static_cast<int>(h.counts.size());
    const double width = (h.hi - h.lo) / bins;
    for (int b = 0; b < bins; ++b) {
      const double density = r.sample_count > 0 ? h.counts[b] / (static_cast<double>(r.sample_count) * width) : 0.0;
      os << h.label << ',' << b << ',' << h.lo + b * width << ',' << h.lo + (b + 1) * width << ',' << h.counts[b] << ','
         << density << '\n';
    }
  }
  return os.str();
}

std::string report_markdown(const std::vector<ValidationReport>& reports, const std::vector<std::string>& labels) {
  if (reports.empty()) throw PolicyError("no reports to summarize");
  std::ostringstream os;
  for (size_t k = 0; k < reports.size(); ++k) {
    const ValidationReport& r = reports[k];
    os << "## " << (k < labels.size() ? labels[k] : "report " + std::to_string(k + 1)) << "\n\n";
    os << "- samples: " << r.sample_count << ", seed: " << r.seed;
    if (!r.config_hash.empty()) os << ", config: " << r.config_hash;
    os << "\n- expected cost from coefficients: " << num(r.policy_objective, 10) << "\n";
    os << "- max balance residual: " << num(r.max_balance_residual, 3) << "\n";

    bool all_met = true, all_one = true;
    for (const ConstraintAudit& c : r.constraints) {
      all_met = all_met && c.meets_target();
      all_one = all_one && c.satisfied == r.sample_count;
    }
    if (r.constraints.empty())
      os << "- no limits to audit\n";
    else if (all_one)
      os << "- all audited constraints satisfied with frequency 1.0000\n";
    else
      os << "- " << (all_met ? "every" : "not every") << " audited constraint meets its 1 - epsilon target\n";
    os << '\n';

    // Failing rows first, then the tightest ones, capped for large cases.
    std::vector<const ConstraintAudit*> rows;
    for (const ConstraintAudit& c : r.constraints) rows.push_back(&c);
    std::stable_sort(rows.begin(), rows.end(), [](const auto* a, const auto* b) { return a->frequency < b->frequency; });
    if (!rows.empty()) {
      os << "| constraint | frequency | target | closed form |\n|---|---|---|---|\n";
      const size_t shown = std::min<size_t>(rows.size(), 25);
      for (size_t q = 0; q < shown; ++q) {
        const ConstraintAudit& c = *rows[q];
        os << "| " << c.name << " | " << fixed(c.frequency, 4) << " | " << fixed(1.0 - c.epsilon, 4) << " | "
           << (c.closed_form ? fixed(*c.closed_form, 4) : std::string("-")) << " |\n";
      }
      if (rows.size() > shown) os << "\n" << rows.size() - shown << " more constraints, all with frequency >= " << fixed(rows[shown]->frequency, 4) << "\n";
      os << '\n';
    }

    if (r.hindsight) {
      const HindsightStats& h = *r.hindsight;
      const StdComparison c = compare_std(r);
      os << "hOPF: " << h.solved << " of " << h.requested << " samples solved (" << h.infeasible << " infeasible, " << h.failed
         << " failed); " << h.dominance_violations << " of " << h.compared << " compared samples where hOPF cost exceeds the policy's.\n\n";
      os << "| | value |\n|---|---|\n";
      os << "| ‖σ_ccopf‖₁ | " << fixed(c.norm1_policy, 4) << " |\n";
      os << "| ‖σ_hopf‖₁ | " << fixed(c.norm1_hindsight, 4) << " |\n";
      os << "| difference | " << fixed(c.norm1_gap, 4) << " |\n";
      os << "| ‖σ_hopf − σ_ccopf‖∞ | " << fixed(c.inf_norm, 4) << " (bus " << c.argmax_bus_id << ") |\n\n";
    }
  }
  return os.str();
}

}  // namespace ccopf
