// ccopf: solve, validate and report chance-constrained DC-OPF policies.
#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "ccopf/formulation.hpp"
#include "ccopf/policy.hpp"
#include "ccopf/validation.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ccopf;

namespace {

enum Exit { kOk = 0, kParse = 2, kInfeasible = 3, kSolver = 4 };

struct RunConfig {
  std::string case_path;
  json uncertainty;
  MatpowerOptions matpower;
  double eps_gen = 0.05;
  double eps_line = 0.05;
  std::string beta_rule = "robust";
  bool global_balancing = false;
  long samples = 20000;
  std::uint64_t seed = 1;
  bool hindsight = false;
  long hindsight_samples = 20000;
};

struct Overrides {
  std::optional<double> eps, eps_line;
  std::optional<std::string> beta_rule;
  std::optional<long> samples, hindsight_samples;
  std::optional<std::uint64_t> seed;
  bool hindsight = false;
  bool global_balancing = false;
};

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ModelError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ModelError(path + ": " + e.what());
  }
}

std::string resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? p : (base / path).lexically_normal().string();
}

// Either a run-config JSON with a "case" entry, or a case file followed by an uncertainty spec.
RunConfig load_config(const std::vector<std::string>& inputs, const Overrides& o) {
  RunConfig cfg;
  if (inputs.size() == 1) {
    const json doc = read_json(inputs[0]);
    if (!doc.is_object() || !doc.contains("case")) throw ModelError(inputs[0] + ": run config needs a \"case\" entry");
    const fs::path base = fs::path(inputs[0]).parent_path();
    cfg.case_path = resolve(base, doc["case"].get<std::string>());
    if (!doc.contains("uncertainty")) throw ModelError(inputs[0] + ": run config needs an \"uncertainty\" entry");
    const json& u = doc["uncertainty"];
    cfg.uncertainty = u.is_string() ? read_json(resolve(base, u.get<std::string>())) : u;
    if (doc.contains("epsilon")) {
      const json& e = doc["epsilon"];
      if (e.is_object()) {
        cfg.eps_gen = e.at("gen").get<double>();
        cfg.eps_line = e.at("line").get<double>();
      } else {
        cfg.eps_gen = cfg.eps_line = e.get<double>();
      }
    }
    if (cfg.uncertainty.is_object() && cfg.uncertainty.contains("beta_rule"))
      cfg.beta_rule = cfg.uncertainty["beta_rule"].get<std::string>();
    cfg.beta_rule = doc.value("beta_rule", cfg.beta_rule);
    cfg.global_balancing = doc.value("global_balancing", false);
    cfg.samples = doc.value("samples", cfg.samples);
    cfg.seed = doc.value("seed", cfg.seed);
    cfg.hindsight = doc.value("hindsight", false);
    cfg.hindsight_samples = doc.value("hindsight_samples", cfg.hindsight_samples);
    if (doc.contains("matpower") && doc["matpower"].value("reactance", std::string("reject")) == "absolute")
      cfg.matpower.reactance = ReactancePolicy::Absolute;
  } else if (inputs.size() == 2) {
    cfg.case_path = inputs[0];
    cfg.uncertainty = read_json(inputs[1]);
    if (cfg.uncertainty.is_object() && cfg.uncertainty.contains("beta_rule"))
      cfg.beta_rule = cfg.uncertainty["beta_rule"].get<std::string>();
  } else {
    throw ModelError("expected CONFIG.json or CASE UNCERTAINTY");
  }
  if (o.eps) cfg.eps_gen = cfg.eps_line = *o.eps;
  if (o.eps_line) cfg.eps_line = *o.eps_line;
  if (o.beta_rule) cfg.beta_rule = *o.beta_rule;
  if (o.samples) cfg.samples = *o.samples;
  if (o.seed) cfg.seed = *o.seed;
  if (o.hindsight_samples) cfg.hindsight_samples = *o.hindsight_samples;
  cfg.hindsight = cfg.hindsight || o.hindsight;
  cfg.global_balancing = cfg.global_balancing || o.global_balancing;
  return cfg;
}

std::string fnv1a(const std::string& text) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

struct Loaded {
  CcOpfProblem problem;
  std::string hash;
};

Loaded load_problem(const RunConfig& cfg) {
  Grid grid = load_case(cfg.case_path, cfg.matpower);
  const auto sources = load_uncertainty_spec(grid, cfg.uncertainty);
  DemandPce demand = assemble_demand(grid, sources);
  ChanceSpec chance{cfg.eps_gen, cfg.eps_line, parse_beta_rule(cfg.beta_rule)};
  FormulationOptions opt;
  opt.global_balancing = cfg.global_balancing;
  const json canonical = {{"case", case_to_json(grid)},   {"uncertainty", cfg.uncertainty}, {"eps_gen", cfg.eps_gen},
                          {"eps_line", cfg.eps_line},     {"beta_rule", cfg.beta_rule},     {"global_balancing", cfg.global_balancing}};
  Loaded out{make_problem(std::move(grid), std::move(demand), chance, opt), fnv1a(canonical.dump())};
  return out;
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

int cmd_solve(const RunConfig& cfg, const std::string& out_dir) {
  Loaded L = load_problem(cfg);
  const CcOpfProblem& P = L.problem;
  const CcOpfSolution sol = solve_ccopf(P);
  std::cout << std::setprecision(8);
  std::cout << "status      " << to_string(sol.solver.status) << "\n";
  std::cout << "iterations  " << sol.solver.iterations << (sol.solver.polished ? " (polished)" : "") << "\n";
  std::cout << "seconds     " << sol.solver.seconds << "\n";
  std::cout << "config      " << L.hash << "  seed " << cfg.seed << "\n";
  if (!sol.optimal()) {
    std::cerr << "ccopf: " << (sol.solver.message.empty() ? to_string(sol.solver.status) : sol.solver.message) << "\n";
    return sol.solver.status == SolveStatus::Infeasible ? kInfeasible : kSolver;
  }
  Policy policy = make_policy(P, sol);
  policy.config_hash = L.hash;
  policy.seed = cfg.seed;
  std::cout << "objective   " << sol.objective << "\n";
  std::cout << "beta        gen " << policy.beta_gen << "  line " << policy.beta_line << " (" << policy.beta_rule << ")\n";
  std::cout << "bus        u0            U\n";
  for (int i : P.grid.generator_buses()) {
    std::cout << std::left << std::setw(10) << P.grid.bus_ids[i] << ' ' << std::setw(13) << sol.u0[i];
    for (int l = 0; l < P.L(); ++l) std::cout << ' ' << sol.U(i, l);
    std::cout << std::right << "\n";
  }
  const fs::path dir(out_dir);
  write_file(dir / "policy.json", policy_to_json(policy).dump(2) + "\n");
  json summary = {{"status", to_string(sol.solver.status)},
                  {"objective", sol.objective},
                  {"iterations", sol.solver.iterations},
                  {"polished", sol.solver.polished},
                  {"seconds", sol.solver.seconds},
                  {"kkt", {{"primal", sol.solver.kkt.primal}, {"dual", sol.solver.kkt.dual}, {"gap", sol.solver.kkt.gap}}},
                  {"config_hash", L.hash},
                  {"seed", cfg.seed}};
  write_file(dir / "solve.json", summary.dump(2) + "\n");
  std::cout << "wrote       " << (dir / "policy.json").string() << "\n";
  return kOk;
}

// Policy and demand along the germ for single-source policies.
std::string policy_lines_csv(const Policy& p, const Grid& grid) {
  std::ostringstream os;
  os << std::setprecision(10);
  const GermComponent& c = p.basis->components[0];
  const double sd = std::sqrt(c.variance);
  const double lo = std::isfinite(c.lo) ? c.lo : c.mean - 4.0 * sd;
  const double hi = std::isfinite(c.hi) ? c.hi : c.mean + 4.0 * sd;
  std::vector<int> dbus;
  for (int i = 0; i < p.N(); ++i)
    if (p.D(i, 0) != 0.0) dbus.push_back(i);
  const std::vector<int> gens = grid.generator_buses();
  os << "xi";
  for (int i : dbus) os << ",d[" << grid.bus_ids[i] << "]";
  for (int i : gens) os << ",u[" << grid.bus_ids[i] << "]";
  os << '\n';
  constexpr int kPoints = 201;
  for (int k = 0; k < kPoints; ++k) {
    Eigen::VectorXd xi(1);
    xi[0] = lo + (hi - lo) * k / (kPoints - 1);
    const Eigen::VectorXd u = p.evaluate(xi), d = p.demand(xi);
    os << xi[0];
    for (int i : dbus) os << ',' << d[i];
    for (int i : gens) os << ',' << u[i];
    os << '\n';
  }
  return os.str();
}

int cmd_validate(const RunConfig& cfg, const std::string& policy_path, const std::string& out_dir, int threads) {
  Loaded L = load_problem(cfg);
  const Policy policy = load_policy_file(policy_path);
  if (!policy.config_hash.empty() && policy.config_hash != L.hash)
    std::cerr << "ccopf: warning: policy was solved for config " << policy.config_hash << ", validating against " << L.hash << "\n";
  AuditOptions opt;
  opt.samples = cfg.samples;
  opt.seed = cfg.seed;
  opt.hindsight = cfg.hindsight;
  opt.hindsight_samples = cfg.hindsight_samples;
  opt.threads = threads;
  ValidationReport rep = monte_carlo_audit(policy, L.problem, opt);
  rep.config_hash = L.hash;

  std::cout << std::setprecision(10);
  std::cout << "samples            " << rep.sample_count << "  seed " << rep.seed << "  config " << rep.config_hash << "\n";
  std::cout << "objective          " << rep.policy_objective << " (policy file: " << policy.objective << ", diff "
            << std::abs(rep.policy_objective - policy.objective) << ")\n";
  std::cout << "balance residual   " << rep.max_balance_residual << "\n";
  double worst = 1.0;
  std::string worst_name;
  for (const ConstraintAudit& c : rep.constraints)
    if (c.frequency < worst || worst_name.empty()) {
      worst = c.frequency;
      worst_name = c.name;
    }
  if (!rep.constraints.empty()) std::cout << "lowest frequency   " << worst << "  " << worst_name << "\n";
  // Only the uncertain rows; deterministic ones read 1.
  int shown = 0;
  for (const ConstraintAudit& c : rep.constraints)
    if (c.closed_form && *c.closed_form < 1.0 && shown++ < 8)
      std::cout << "closed form        " << c.name << "  " << *c.closed_form << " (sampled " << c.frequency << ")\n";
  if (rep.hindsight) {
    const HindsightStats& h = *rep.hindsight;
    const StdComparison s = compare_std(rep);
    std::cout << "hOPF               " << h.solved << "/" << h.requested << " solved, " << h.infeasible << " infeasible, "
              << h.failed << " failed, " << h.seconds << " s\n";
    std::cout << "hOPF dominance     min gap " << h.min_objective_gap << ", violations " << h.dominance_violations << "/" << h.compared << "\n";
    std::cout << "std 1-norms        ccopf " << s.norm1_policy << "  hopf " << s.norm1_hindsight << "  gap " << s.norm1_gap << "\n";
    std::cout << "std inf-norm       " << s.inf_norm << " at bus " << s.argmax_bus_id << "\n";
  }

  const fs::path dir(out_dir);
  write_file(dir / "report.json", report_to_json(rep).dump(2) + "\n");
  write_file(dir / "std.csv", std_table_csv(rep));
  write_file(dir / "constraints.csv", constraints_csv(rep));
  write_file(dir / "histograms.csv", histograms_csv(rep));
  if (policy.L() == 1) write_file(dir / "policy_lines.csv", policy_lines_csv(policy, L.problem.grid));
  std::cout << "wrote              " << (dir / "report.json").string() << "\n";
  return kOk;
}

int cmd_report(const std::vector<std::string>& files, const std::string& out) {
  if (files.empty()) throw ModelError("report needs at least one report file");
  std::vector<ValidationReport> reports;
  for (const auto& f : files) reports.push_back(report_from_json(read_json(f)));
  const std::string text = report_markdown(reports, files);
  if (out.empty())
    std::cout << text;
  else
    write_file(out, text);
  return kOk;
}

int cmd_convert(const std::string& in, const std::string& out, bool absolute) {
  MatpowerOptions opt;
  if (absolute) opt.reactance = ReactancePolicy::Absolute;
  const Grid grid = load_case(in, opt);
  const std::string text = case_to_json(grid).dump(2) + "\n";
  if (out.empty())
    std::cout << text;
  else
    write_file(out, text);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Chance-constrained DC optimal power flow with affine polynomial chaos policies"};
  app.require_subcommand(1);

  Overrides ov;
  std::vector<std::string> inputs;
  std::string out_dir = "out", policy_path, out_file;
  int threads = 0;
  bool absolute = false;
  std::vector<std::string> report_files;

  auto common = [&](CLI::App* sub) {
    sub->add_option("inputs", inputs, "CONFIG.json, or CASE and UNCERTAINTY files")->required()->expected(1, 2);
    sub->add_option("--eps", ov.eps, "violation probability for every chance constraint");
    sub->add_option("--eps-line", ov.eps_line, "violation probability for line constraints");
    sub->add_option("--beta-rule", ov.beta_rule, "robust, gaussian")->check(CLI::IsMember({"robust", "gaussian"}));
    sub->add_flag("--global-balancing", ov.global_balancing, "equal non-zero-order coefficients across generators");
    sub->add_option("--seed", ov.seed, "sampling seed");
    sub->add_option("--out", out_dir, "output directory");
  };
  CLI::App* solve_cmd = app.add_subcommand("solve", "solve the chance-constrained OPF and write the policy");
  common(solve_cmd);
  CLI::App* validate_cmd = app.add_subcommand("validate", "Monte Carlo audit of a policy, optionally against hOPF");
  common(validate_cmd);
  validate_cmd->add_option("--policy", policy_path, "policy JSON written by solve")->required();
  validate_cmd->add_option("--samples", ov.samples, "Monte Carlo samples")->check(CLI::PositiveNumber);
  validate_cmd->add_flag("--hopf", ov.hindsight, "also solve the in-hindsight OPF per sample");
  validate_cmd->add_option("--hopf-samples", ov.hindsight_samples, "hOPF samples (first of the audit set)");
  validate_cmd->add_option("--threads", threads, "worker threads (default: CCOPF_THREADS or all cores)");
  CLI::App* report_cmd = app.add_subcommand("report", "summarize report files as markdown");
  report_cmd->add_option("reports", report_files, "report.json files written by validate");
  report_cmd->add_option("--out", out_file, "write the summary here instead of stdout");
  CLI::App* convert_cmd = app.add_subcommand("convert", "convert a MATPOWER case to the JSON case format");
  std::string convert_in;
  convert_cmd->add_option("case", convert_in, "MATPOWER .m file")->required();
  convert_cmd->add_option("--out", out_file, "output JSON (default stdout)");
  convert_cmd->add_flag("--abs-reactance", absolute, "use |x| for negative reactances");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kParse;
  }

  try {
    if (*solve_cmd) return cmd_solve(load_config(inputs, ov), out_dir);
    if (*validate_cmd) return cmd_validate(load_config(inputs, ov), policy_path, out_dir, threads);
    if (*report_cmd) return cmd_report(report_files, out_file);
    if (*convert_cmd) return cmd_convert(convert_in, out_file, absolute);
  } catch (const CaseError& e) {
    std::cerr << "ccopf: case error: " << e.what() << "\n";
    return kParse;
  } catch (const ModelError& e) {
    std::cerr << "ccopf: " << e.what() << "\n";
    return kParse;
  } catch (const PolicyError& e) {
    std::cerr << "ccopf: " << e.what() << "\n";
    return kParse;
  } catch (const json::exception& e) {
    std::cerr << "ccopf: " << e.what() << "\n";
    return kParse;
  } catch (const std::exception& e) {
    std::cerr << "ccopf: " << e.what() << "\n";
    return kSolver;
  }
  return kOk;
}
