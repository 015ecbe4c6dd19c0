// occf: counterfactual extraction from moment relaxations of minimum-energy
// optimal control problems.
//
// Exit codes: 0 optimal, 1 usage or I/O error, 2 infeasible, 3 iteration limit.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "occf/occf.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitInfeasible = 2;
constexpr int kExitIterations = 3;

int exit_code(occf::SolveStatus s) {
  switch (s) {
    case occf::SolveStatus::optimal: return kExitOk;
    case occf::SolveStatus::infeasible:
    case occf::SolveStatus::unbounded_direction: return kExitInfeasible;
    case occf::SolveStatus::max_iterations: return kExitIterations;
  }
  return kExitUsage;
}

struct RunConfig {
  std::string model = "bergman-known";
  int order = 2;
  std::string mode = "known";
  std::string factual;
  std::size_t batch = 20;
  std::uint64_t seed = 1;
  std::string out;
  std::string method = "moment";
  std::string solver = "ipm";
  double tol_feas = 1e-7;
  double tol_gap = 1e-6;
  std::size_t max_iters = 0;  // 0 keeps the solver default
  std::string export_sdpa;
  std::size_t workers = 1;
  bool oracle = false;
  bool certificate = false;
  bool verbose = false;
};

json config_json(const RunConfig& c, const std::string& command) {
  return {{"command", command},     {"model", c.model},         {"order", c.order},
          {"mode", c.mode},         {"factual", c.factual},     {"batch", c.batch},
          {"seed", c.seed},         {"method", c.method},       {"solver", c.solver},
          {"tol_feas", c.tol_feas}, {"tol_gap", c.tol_gap},     {"max_iters", c.max_iters},
          {"workers", c.workers},   {"oracle", c.oracle},       {"certificate", c.certificate}};
}

void add_model_options(CLI::App* cmd, RunConfig& c) {
  cmd->add_option("--model", c.model, "preset name or model JSON path")->capture_default_str();
  cmd->add_option("--order", c.order, "relaxation order d")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--mode", c.mode, "known | uncertain")
      ->capture_default_str()
      ->check(CLI::IsMember({"known", "uncertain"}));
}

void add_solve_options(CLI::App* cmd, RunConfig& c) {
  add_model_options(cmd, c);
  cmd->add_option("--out", c.out, "run directory (default under $OCCF_OUTPUT_ROOT or ./runs)");
  cmd->add_option("--method", c.method, "moment | trajectory | both")
      ->capture_default_str()
      ->check(CLI::IsMember({"moment", "trajectory", "both"}));
  cmd->add_option("--solver", c.solver, "ipm | admm")->capture_default_str()->check(CLI::IsMember({"ipm", "admm"}));
  cmd->add_option("--tol-feas", c.tol_feas, "primal/dual feasibility tolerance")->capture_default_str();
  cmd->add_option("--tol-gap", c.tol_gap, "relative duality gap tolerance")->capture_default_str();
  cmd->add_option("--max-iters", c.max_iters, "solver iteration limit");
  cmd->add_option("--export-sdpa", c.export_sdpa, "also write the SDP in SDPA sparse format");
  cmd->add_flag("--oracle", c.oracle, "run the direct-method oracle beside the relaxation");
  cmd->add_flag("--certificate", c.certificate, "sample the dual inequalities");
  cmd->add_flag("--verbose", c.verbose, "echo the solver trace to stderr");
}

std::vector<double> parse_vector(const std::string& text) {
  std::vector<double> out;
  std::stringstream in(text);
  for (std::string cell; std::getline(in, cell, ',');) out.push_back(occf::parse_double(cell));
  return out;
}

occf::PipelineOptions pipeline_options(const RunConfig& c) {
  occf::PipelineOptions o;
  o.order = c.order;
  o.mode = occf::parse_mode(c.mode);
  o.method = occf::parse_method_choice(c.method);
  o.solver.method = c.solver == "admm" ? occf::SolverMethod::admm : occf::SolverMethod::interior_point;
  o.solver.tol_feas = c.tol_feas;
  o.solver.tol_gap = c.tol_gap;
  o.solver.trace = true;
  if (c.max_iters > 0) {
    o.solver.max_iterations = c.max_iters;
    o.solver.ipm_max_iterations = c.max_iters;
  }
  o.certificate = c.certificate;
  o.oracle = c.oracle;
  o.oracle_options.workers = c.workers;
  return o;
}

occf::OcpSpec load_model(const RunConfig& c) {
  occf::OcpSpec spec = occf::resolve_model(c.model);
  if (!c.factual.empty()) spec.factual = parse_vector(c.factual);
  return spec;
}

fs::path run_directory(const RunConfig& c, const std::string& command, const occf::OcpSpec& spec) {
  if (!c.out.empty()) return c.out;
  const char* root = std::getenv("OCCF_OUTPUT_ROOT");
  const fs::path base = root && *root ? fs::path(root) : fs::path("runs");
  return base / (command + "-" + spec.name + "-" + c.mode + "-d" + std::to_string(c.order));
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw occf::ConfigurationError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw occf::ConfigurationError("failed writing '" + path.string() + "'");
}

std::string join_lines(const std::vector<std::string>& lines) {
  std::string out;
  for (const auto& l : lines) out += l + "\n";
  return out;
}

int cmd_solve(const RunConfig& c) {
  const occf::OcpSpec spec = load_model(c);
  const auto options = pipeline_options(c);
  const auto inst = occf::prepare_instance(spec, options);
  const fs::path dir = run_directory(c, "solve", spec);
  fs::create_directories(dir);
  write_text(dir / "config.json", config_json(c, "solve").dump(2) + "\n");
  if (!c.export_sdpa.empty()) occf::write_sdpa_file(occf::to_conic(inst.relaxed), c.export_sdpa);

  const auto result = occf::run_instance(inst, options);
  if (c.verbose) std::cerr << join_lines(result.solve.trace);
  write_text(dir / "trace.txt", join_lines(result.solve.trace));
  write_text(dir / "result.json", occf::result_json(result, options).dump(2) + "\n");
  const auto pairs = result.pairs(options.method);
  write_text(dir / "pairs.csv", occf::pairs_csv(pairs));
  write_text(dir / "plot.csv", occf::plot_csv(pairs));
  if (result.trajectory) write_text(dir / "trajectory.csv", occf::trajectory_csv(*result.trajectory, inst));
  if (result.oracle) write_text(dir / "oracle.json", json(*result.oracle).dump(2) + "\n");

  std::cout << "status " << occf::to_string(result.solve.status) << "  p*_" << c.order << " = "
            << occf::format_double(result.solve.objective) << "\n";
  for (const auto& p : pairs) {
    std::cout << occf::to_string(p.method) << " x_cf =";
    for (double v : p.counterfactual) std::cout << ' ' << occf::format_double(v);
    std::cout << "  tau_s = " << occf::format_double(p.terminal_time) << "\n";
    for (const auto& w : p.warnings) std::cout << "  warning: " << w << "\n";
  }
  if (result.oracle)
    std::cout << "oracle cost " << occf::format_double(result.oracle->cost)
              << (result.oracle->feasible ? "" : " (infeasible)") << "\n";
  std::cout << "wrote " << dir.string() << "\n";
  return exit_code(result.solve.status);
}

int cmd_batch(const RunConfig& c) {
  if (c.batch == 0) throw occf::ConfigurationError("batch count must be at least 1");
  const occf::OcpSpec spec = load_model(c);
  const auto options = pipeline_options(c);
  const auto factuals = occf::sample_factuals(spec, c.batch, c.seed);
  const auto entries = occf::run_batch(spec, options, factuals, c.workers);

  const fs::path dir = run_directory(c, "batch", spec);
  fs::create_directories(dir);
  write_text(dir / "config.json", config_json(c, "batch").dump(2) + "\n");

  std::vector<occf::CounterfactualPair> pairs, moment_pairs;
  std::string trace;
  json failures = json::array();
  std::size_t converged = 0;
  for (const auto& e : entries) {
    trace += "# factual " + std::to_string(e.index) + "\n";
    if (!e.result) {
      failures.push_back({{"index", e.index}, {"factual", e.factual}, {"error", e.error}});
      continue;
    }
    trace += join_lines(e.result->solve.trace);
    if (!e.result->optimal()) {
      failures.push_back({{"index", e.index}, {"factual", e.factual},
                          {"error", "solver status " + occf::to_string(e.result->solve.status)}});
      continue;
    }
    ++converged;
    for (auto& p : e.result->pairs(options.method)) pairs.push_back(p);
    if (e.result->moment_pair) moment_pairs.push_back(*e.result->moment_pair);
  }
  write_text(dir / "trace.txt", trace);
  write_text(dir / "pairs.csv", occf::pairs_csv(pairs));
  write_text(dir / "plot.csv", occf::plot_csv(moment_pairs.empty() ? pairs : moment_pairs));

  json summary;
  summary["count"] = entries.size();
  summary["converged"] = converged;
  summary["failures"] = failures;
  const auto& plotted = moment_pairs.empty() ? pairs : moment_pairs;
  if (!plotted.empty()) {
    const auto cols = occf::plot_columns(plotted.front().state_names);
    std::vector<double> second;
    for (const auto& p : plotted) second.push_back(p.counterfactual[cols.second]);
    const double upper = std::max(30.0, 5.0 * std::ceil(*std::max_element(second.begin(), second.end()) / 5.0));
    summary["counterfactual_" + cols.second_label] = {
        {"q1", occf::quantile(second, 0.25)},
        {"median", occf::quantile(second, 0.5)},
        {"q3", occf::quantile(second, 0.75)},
        {"histogram", occf::to_json_summary(occf::histogram(second, 0.0, upper, static_cast<std::size_t>(upper / 5.0)))}};
  }
  write_text(dir / "summary.json", summary.dump(2) + "\n");
  std::cout << converged << " of " << entries.size() << " factuals converged; wrote " << dir.string() << "\n";
  return converged > 0 ? kExitOk : kExitUsage;
}

int cmd_export(const RunConfig& c) {
  if (c.export_sdpa.empty()) throw occf::ConfigurationError("--export-sdpa <file> is required");
  const occf::OcpSpec spec = load_model(c);
  const auto inst = occf::prepare_instance(spec, pipeline_options(c));
  const auto conic = occf::to_conic(inst.relaxed);
  occf::write_sdpa_file(conic, c.export_sdpa);
  std::cout << "wrote " << c.export_sdpa << " (" << conic.num_vars << " variables, "
            << conic.equalities.size() << " equalities, " << conic.blocks.size() << " blocks)\n";
  return kExitOk;
}

struct SimulateConfig {
  std::string law;
  bool reference_law = false;
  bool zero = false;
  double tau = -1.0;
  std::size_t steps = 4096;
};

// Control-law file: {"u": ["poly", ...]} or {"v": "poly"}, over the unit-box
// scaled variables (maximum-based scaling, unit horizon).
occf::ControlLaw read_law(const std::string& path, const occf::OcpSpec& scaled) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw occf::ConfigurationError("cannot open control law '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw occf::ParseError(std::string("control law: ") + e.what());
  }
  if (j.contains("v"))
    return occf::recover_control_law(occf::parse_polynomial(j.at("v").get<std::string>(), scaled.space), scaled);
  if (!j.contains("u")) throw occf::ConfigurationError("control law file needs \"u\" or \"v\"");
  std::vector<occf::Polynomial> u;
  for (const auto& text : j.at("u")) u.push_back(occf::parse_polynomial(text.get<std::string>(), scaled.space));
  return occf::control_law_from(std::move(u), scaled);
}

int cmd_simulate(const RunConfig& c, const SimulateConfig& s) {
  occf::OcpSpec spec = load_model(c);
  const auto scaled = occf::scale_to_unit_box(spec, false);
  const occf::OcpSpec sim = occf::pin_parameters(scaled.spec);
  occf::ControlLaw law;
  if (s.reference_law)
    law = occf::control_law_from({occf::reference_control_law(sim.space)}, sim);
  else if (s.zero)
    law = occf::zero_control_law(sim);
  else if (!s.law.empty())
    law = read_law(s.law, sim);
  else
    throw occf::ConfigurationError("simulate needs --law <file>, --reference-law or --zero");
  const double tau = s.tau < 0.0 ? 1.0 : s.tau / scaled.scaling.seconds_per_scaled_unit;
  occf::SimulationOptions opts;
  opts.steps = s.steps;
  const auto traj = occf::simulate_closed_loop(sim, law, sim.factual, tau, opts);

  occf::PreparedInstance view;
  view.scaled = scaled;
  view.relaxed_spec = sim;
  const fs::path dir = run_directory(c, "simulate", spec);
  fs::create_directories(dir);
  write_text(dir / "trajectory.csv", occf::trajectory_csv(traj, view));
  const auto pair = occf::trajectory_pair(traj, sim, scaled.scaling, 0.0, 0);
  json j = pair;
  j["entered_terminal_set"] = traj.terminal_entry_time.has_value();
  if (traj.terminal_entry_time) {
    j["terminal_entry_s"] = scaled.scaling.unscale_time_seconds(*traj.terminal_entry_time);
    j["cost_at_entry"] = *traj.cost_at_entry;
  }
  j["endpoint_in_terminal_set"] = sim.terminal.contains(sim.full_point(traj.endpoint()));
  write_text(dir / "simulation.json", j.dump(2) + "\n");
  std::cout << "endpoint";
  for (double v : pair.counterfactual) std::cout << ' ' << occf::format_double(v);
  std::cout << "  cost " << occf::format_double(traj.cost)
            << (j["endpoint_in_terminal_set"].get<bool>() ? "  (in XT)" : "  (outside XT)") << "\n";
  if (traj.terminal_entry_time)
    std::cout << "entered XT at " << occf::format_double(j["terminal_entry_s"].get<double>())
              << " s with cost " << occf::format_double(*traj.cost_at_entry) << "\n";
  for (const auto& w : pair.warnings) std::cout << "  warning: " << w << "\n";
  return kExitOk;
}

int cmd_dump(const RunConfig& c) {
  const occf::OcpSpec spec = load_model(c);
  const std::string text = occf::model_to_json(spec).dump(2) + "\n";
  if (c.out.empty())
    std::cout << text;
  else
    write_text(c.out, text);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Counterfactuals from moment relaxations of minimum-energy optimal control"};
  app.require_subcommand(1);
  RunConfig c;
  SimulateConfig s;

  auto* solve = app.add_subcommand("solve", "solve one factual");
  add_solve_options(solve, c);
  solve->add_option("--factual", c.factual, "comma-separated factual state");

  auto* batch = app.add_subcommand("batch", "solve seeded factual samples over X0");
  add_solve_options(batch, c);
  batch->add_option("--batch", c.batch, "number of factuals")->capture_default_str();
  batch->add_option("--seed", c.seed, "sampling seed")->capture_default_str();
  batch->add_option("--workers", c.workers, "concurrent pipelines")->capture_default_str();

  auto* exp = app.add_subcommand("export-sdpa", "write the relaxation in SDPA sparse format");
  add_model_options(exp, c);
  exp->add_option("--factual", c.factual, "comma-separated factual state");
  exp->add_option("--export-sdpa", c.export_sdpa, "output file")->required();

  auto* sim = app.add_subcommand("simulate", "closed-loop simulation of a control law");
  sim->add_option("--model", c.model, "preset name or model JSON path")->capture_default_str();
  sim->add_option("--factual", c.factual, "comma-separated factual state");
  sim->add_option("--out", c.out, "run directory");
  sim->add_option("--law", s.law, "control law JSON (scaled variables)");
  sim->add_flag("--reference-law", s.reference_law, "use the reference affine d=2 feedback of the glucose-insulin model");
  sim->add_flag("--zero", s.zero, "u = 0");
  sim->add_option("--tau", s.tau, "simulated span in seconds (default: horizon)");
  sim->add_option("--steps", s.steps, "RK4 steps")->capture_default_str();

  auto* dump = app.add_subcommand("dump-model", "print a model as JSON");
  dump->add_option("--model", c.model, "preset name or model JSON path")->capture_default_str();
  dump->add_option("--out", c.out, "output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*solve) return cmd_solve(c);
    if (*batch) return cmd_batch(c);
    if (*exp) return cmd_export(c);
    if (*sim) return cmd_simulate(c, s);
    if (*dump) return cmd_dump(c);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
