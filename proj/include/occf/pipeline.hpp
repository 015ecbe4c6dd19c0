#pragma once

// End-to-end runs: scale, pin or extend, assemble, solve, extract.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "occf/extraction.hpp"
#include "occf/model_io.hpp"
#include "occf/models.hpp"
#include "occf/moments.hpp"
#include "occf/ocp.hpp"
#include "occf/oracle.hpp"
#include "occf/solver.hpp"

namespace occf {

enum class Mode { known, uncertain };

inline std::string to_string(Mode m) { return m == Mode::known ? "known" : "uncertain"; }

inline Mode parse_mode(std::string_view text) {
  if (text == "known") return Mode::known;
  if (text == "uncertain") return Mode::uncertain;
  throw ConfigurationError("mode must be 'known' or 'uncertain', got '" + std::string(text) + "'");
}

enum class MethodChoice { moment, trajectory, both };

inline std::string to_string(MethodChoice m) {
  switch (m) {
    case MethodChoice::moment: return "moment";
    case MethodChoice::trajectory: return "trajectory";
    case MethodChoice::both: return "both";
  }
  return "moment";
}

inline MethodChoice parse_method_choice(std::string_view text) {
  if (text == "moment") return MethodChoice::moment;
  if (text == "trajectory") return MethodChoice::trajectory;
  if (text == "both") return MethodChoice::both;
  throw ConfigurationError("method must be moment, trajectory or both, got '" + std::string(text) + "'");
}

struct PipelineOptions {
  int order = 2;
  Mode mode = Mode::known;
  MethodChoice method = MethodChoice::moment;
  SolverConfig solver;
  AssemblyOptions assembly;
  ExtractionOptions extraction;
  SimulationOptions simulation;
  bool certificate = false;
  std::size_t certificate_samples = 10000;
  bool oracle = false;
  DirectOptions oracle_options;
};

/// Smallest order whose moment matrices cover every set constraint and the dynamics.
inline int minimum_order(const OcpSpec& spec) {
  int deg = 1;
  for (const auto* set : {&spec.initial, &spec.path, &spec.terminal, &spec.control_set})
    deg = std::max(deg, set->max_degree());
  return (deg + 1) / 2;
}

/// Model by preset name or JSON file path.
inline OcpSpec resolve_model(const std::string& source) {
  if (auto p = preset(source)) return *p;
  return load_model_file(source);
}

struct PreparedInstance {
  OcpSpec model;         ///< physical units, factual applied
  ScaledOcp scaled;      ///< numerical-range scaling, parameters untouched
  OcpSpec relaxed_spec;  ///< scaled and pinned (known) or extended (uncertain)
  RelaxedProblem relaxed;
};

inline PreparedInstance prepare_instance(const OcpSpec& model, const PipelineOptions& options,
                                         std::optional<std::vector<double>> factual = std::nullopt) {
  PreparedInstance out;
  out.model = model;
  if (factual) out.model.factual = *factual;
  const auto report = validate(out.model);
  if (!report.ok()) {
    std::string msg = "model '" + out.model.name + "' is invalid:";
    for (const auto& v : report.violations) msg += " " + v + ";";
    throw ConfigurationError(msg);
  }
  if (options.order < minimum_order(out.model))
    throw ConfigurationError("relaxation order " + std::to_string(options.order) +
                             " is below the minimum " + std::to_string(minimum_order(out.model)));
  if (options.mode == Mode::uncertain && out.model.parameter_box.empty())
    throw ConfigurationError("uncertain mode needs a model with a parameter box");
  out.scaled = scale_to_unit_box(out.model, true);
  if (options.mode == Mode::uncertain) {
    out.relaxed_spec = extend_with_parameters(out.scaled.spec);
    out.relaxed = assemble_uncertain(out.relaxed_spec, options.order, options.assembly);
  } else {
    out.relaxed_spec = pin_parameters(out.scaled.spec);
    out.relaxed = assemble_known(out.relaxed_spec, options.order, options.assembly);
  }
  return out;
}

struct PipelineResult {
  SolverResult solve;
  AssemblyReport assembly;
  std::size_t num_vars = 0;
  std::size_t num_equalities = 0;
  std::size_t num_blocks = 0;
  std::optional<CounterfactualPair> moment_pair;
  std::optional<CounterfactualPair> trajectory_pair;
  std::optional<Trajectory> trajectory;
  std::optional<DualSolution> dual;
  std::optional<CertificateReport> certificate;
  std::optional<DirectSolution> oracle;
  std::vector<std::string> warnings;
  double seconds = 0.0;

  bool optimal() const { return solve.status == SolveStatus::optimal; }

  /// Pairs in the order moment, trajectory, limited to what `method` asked for.
  std::vector<CounterfactualPair> pairs(MethodChoice method) const {
    std::vector<CounterfactualPair> out;
    if (method != MethodChoice::trajectory && moment_pair) out.push_back(*moment_pair);
    if (method != MethodChoice::moment && trajectory_pair) out.push_back(*trajectory_pair);
    return out;
  }
};

/// Scaled initial point for closed-loop simulation: the factual, and in the
/// uncertain case the parameter values read off the terminal measure.
inline std::vector<double> simulation_start(const PreparedInstance& inst, const CounterfactualPair& pair) {
  std::vector<double> x0 = inst.relaxed_spec.factual;
  const std::size_t physical = inst.relaxed_spec.physical_state_count();
  for (std::size_t k = 0; k < pair.parameters.size() && physical + k < x0.size(); ++k) {
    const std::size_t var = inst.relaxed_spec.states[physical + k];
    const auto& box = (*inst.relaxed_spec.space)[var];
    x0[physical + k] =
        std::clamp(inst.scaled.scaling.maps[var].inverse(pair.parameters[k]), box.lower, box.upper);
  }
  return x0;
}

/// Scaled spec the oracle sees: the known instance, or the uncertain one with
/// parameters pinned at the extracted values (any parameter choice in the box
/// yields a feasible upper bound).
inline OcpSpec oracle_spec(const PreparedInstance& inst, const std::optional<CounterfactualPair>& pair,
                           Mode mode) {
  if (mode == Mode::known) return inst.relaxed_spec;
  OcpSpec spec = inst.scaled.spec;
  if (pair) {
    const auto x0 = simulation_start(inst, *pair);
    const std::size_t physical = inst.relaxed_spec.physical_state_count();
    for (std::size_t k = physical; k < x0.size(); ++k)
      spec.parameter_values[(*spec.space)[inst.relaxed_spec.states[k]].name] = x0[k];
  }
  return pin_parameters(spec);
}

inline PipelineResult run_instance(const PreparedInstance& inst, const PipelineOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  PipelineResult out;
  out.assembly = inst.relaxed.report;
  const ConicProblem conic = to_conic(inst.relaxed);
  out.num_vars = conic.num_vars;
  out.num_equalities = conic.equalities.size();
  out.num_blocks = conic.blocks.size();
  out.solve = solve(conic, options.solver);

  if (out.optimal()) {
    out.moment_pair = extract_counterfactual_moments(inst.relaxed, out.solve, inst.scaled.scaling,
                                                     options.extraction);
    const bool need_dual = options.method != MethodChoice::moment || options.certificate;
    if (need_dual) {
      try {
        out.dual = extract_dual_polynomial(inst.relaxed, out.solve);
      } catch (const UnavailableDualError& e) {
        out.warnings.push_back(e.what());
      }
    }
    if (out.dual && options.method != MethodChoice::moment) {
      const ControlLaw law = recover_control_law(out.dual->v, inst.relaxed_spec);
      const double tau = scaled_terminal_time(*out.moment_pair, inst.scaled.scaling);
      out.trajectory = simulate_closed_loop(inst.relaxed_spec, law, simulation_start(inst, *out.moment_pair),
                                            tau, options.simulation);
      out.trajectory_pair = occf::trajectory_pair(*out.trajectory, inst.relaxed_spec, inst.scaled.scaling,
                                                  out.solve.objective, options.order);
    }
    if (out.dual && options.certificate)
      out.certificate = verify_dual_certificate(out.dual->v, out.dual->bound, inst.relaxed_spec,
                                                options.certificate_samples);
  }
  if (options.oracle) out.oracle = solve_direct(oracle_spec(inst, out.moment_pair, options.mode),
                                                options.oracle_options);
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

inline PipelineResult run_pipeline(const OcpSpec& model, const PipelineOptions& options,
                                   std::optional<std::vector<double>> factual = std::nullopt) {
  return run_instance(prepare_instance(model, options, std::move(factual)), options);
}

// ---------------------------------------------------------------------------
// Batch

struct BatchEntry {
  std::size_t index = 0;
  std::vector<double> factual;
  std::optional<PipelineResult> result;
  std::string error;  ///< set when the pipeline threw
};

/// Runs every factual through the pipeline on up to `workers` threads. Entries
/// keep the order of `factuals` and failures are recorded per entry.
inline std::vector<BatchEntry> run_batch(const OcpSpec& model, const PipelineOptions& options,
                                         const std::vector<std::vector<double>>& factuals,
                                         std::size_t workers = 1) {
  std::vector<BatchEntry> entries(factuals.size());
  for (std::size_t i = 0; i < factuals.size(); ++i) {
    entries[i].index = i;
    entries[i].factual = factuals[i];
  }
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < entries.size();) {
      try {
        entries[i].result = run_pipeline(model, options, entries[i].factual);
      } catch (const std::exception& e) {
        entries[i].error = e.what();
      }
    }
  };
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(entries.size(), 1));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  return entries;
}

// ---------------------------------------------------------------------------
// Summaries

/// Linear-interpolation quantile of unsorted data, q in [0,1].
inline double quantile(std::vector<double> data, double q) {
  if (data.empty()) throw ConfigurationError("quantile of an empty sample");
  std::sort(data.begin(), data.end());
  const double pos = q * static_cast<double>(data.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, data.size() - 1);
  return data[lo] + (pos - static_cast<double>(lo)) * (data[hi] - data[lo]);
}

struct Histogram {
  double lower = 0.0;
  double width = 1.0;
  std::vector<std::size_t> counts;
};

inline Histogram histogram(const std::vector<double>& data, double lower, double upper, std::size_t bins) {
  if (!(upper > lower) || bins == 0) throw ConfigurationError("histogram needs a nonempty range");
  Histogram h{lower, (upper - lower) / static_cast<double>(bins), std::vector<std::size_t>(bins, 0)};
  for (double v : data) {
    auto k = static_cast<long long>(std::floor((v - lower) / h.width));
    k = std::clamp<long long>(k, 0, static_cast<long long>(bins) - 1);
    ++h.counts[static_cast<std::size_t>(k)];
  }
  return h;
}

inline nlohmann::json to_json_summary(const Histogram& h) {
  nlohmann::json bins = nlohmann::json::array();
  for (std::size_t k = 0; k < h.counts.size(); ++k)
    bins.push_back({{"lower", h.lower + h.width * static_cast<double>(k)},
                    {"upper", h.lower + h.width * static_cast<double>(k + 1)},
                    {"count", h.counts[k]}});
  return bins;
}

inline nlohmann::json solver_json(const SolverResult& r) {
  nlohmann::json j;
  j["status"] = to_string(r.status);
  j["method"] = to_string(r.method);
  j["objective"] = r.objective;
  j["dual_objective"] = r.dual_objective;
  j["primal_residual"] = r.primal_residual;
  j["dual_residual"] = r.dual_residual;
  j["min_block_eigenvalue"] = r.min_block_eigenvalue;
  j["duality_gap"] = r.duality_gap;
  j["iterations"] = r.iterations;
  j["seconds"] = r.seconds;
  j["rows_original"] = r.preprocessing.original_rows;
  j["rows_dropped_zero"] = r.preprocessing.zero_rows.size();
  j["rows_dropped_dependent"] = r.preprocessing.dependent_rows.size();
  return j;
}

inline nlohmann::json certificate_json(const CertificateReport& c) {
  auto check = [](const CertificateCheck& k) {
    return nlohmann::json{{"condition", k.condition}, {"worst_slack", k.worst}, {"location", k.location},
                          {"samples", k.samples}, {"violations", k.violations}};
  };
  return {{"initial", check(c.initial)}, {"hjb", check(c.hjb)}, {"terminal", check(c.terminal)},
          {"tolerance", c.tolerance}, {"passed", c.passed()}};
}

inline nlohmann::json result_json(const PipelineResult& r, const PipelineOptions& options) {
  nlohmann::json j;
  j["order"] = options.order;
  j["mode"] = to_string(options.mode);
  j["solver"] = solver_json(r.solve);
  j["p_star"] = r.solve.objective;
  j["problem"] = {{"variables", r.num_vars}, {"equalities", r.num_equalities}, {"blocks", r.num_blocks},
                  {"liouville_rows", r.assembly.liouville_rows},
                  {"skipped_tests", r.assembly.skipped_tests},
                  {"time_dependent_tests", r.assembly.time_dependent_tests},
                  {"notes", r.assembly.notes}};
  j["pairs"] = nlohmann::json::array();
  for (const auto& p : r.pairs(options.method)) j["pairs"].push_back(p);
  if (r.moment_pair) {
    j["x_cf"] = r.moment_pair->counterfactual;
    j["tau_s"] = r.moment_pair->terminal_time;
    j["atomicity_ratio"] = r.moment_pair->atomicity.ratio;
  }
  if (r.dual) j["dual"] = {{"terms", r.dual->terms()}, {"bound", r.dual->bound}, {"v", to_string(r.dual->v)}};
  if (r.certificate) j["certificate"] = certificate_json(*r.certificate);
  if (r.oracle) j["oracle"] = *r.oracle;
  j["warnings"] = r.warnings;
  j["seconds"] = r.seconds;
  return j;
}

// ---------------------------------------------------------------------------
// CSV exports

/// t_s, physical states in original units, controls.
inline std::string trajectory_csv(const Trajectory& traj, const PreparedInstance& inst) {
  const auto& spec = inst.relaxed_spec;
  const auto& original = *inst.scaled.scaling.original;
  const std::size_t physical = spec.physical_state_count();
  std::string out = "t_s";
  for (std::size_t i = 0; i < physical; ++i) out += "," + original[spec.states[i]].name;
  for (std::size_t c : spec.controls) out += "," + original[c].name;
  out += "\n";
  for (std::size_t k = 0; k < traj.time.size(); ++k) {
    out += format_double(inst.scaled.scaling.unscale_time_seconds(traj.time[k]));
    for (std::size_t i = 0; i < physical; ++i)
      out += "," + format_double(inst.scaled.scaling.maps[spec.states[i]].forward(traj.state[k][i]));
    for (std::size_t j = 0; j < spec.controls.size(); ++j)
      out += "," + format_double(k < traj.control.size() ? traj.control[k][j] : 0.0);
    out += "\n";
  }
  return out;
}

/// Phase-plane columns: the first and last physical state. The glucose-insulin
/// state names x1/x3 are labelled G and I.
struct PlotColumns {
  std::size_t first = 0;
  std::size_t second = 0;
  std::string first_label;
  std::string second_label;
};

inline PlotColumns plot_columns(const std::vector<std::string>& names) {
  if (names.empty()) throw ConfigurationError("no states to plot");
  PlotColumns c{0, names.size() - 1, names.front(), names.back()};
  if (names.size() == 3 && names[0] == "x1" && names[2] == "x3") {
    c.first_label = "G";
    c.second_label = "I";
  }
  return c;
}

inline std::string plot_csv(const std::vector<CounterfactualPair>& pairs) {
  if (pairs.empty()) return "";
  const PlotColumns c = plot_columns(pairs.front().state_names);
  std::string out = c.first_label + "_f," + c.second_label + "_f," + c.first_label + "_cf," +
                    c.second_label + "_cf\n";
  for (const auto& p : pairs)
    out += format_double(p.factual[c.first]) + "," + format_double(p.factual[c.second]) + "," +
           format_double(p.counterfactual[c.first]) + "," + format_double(p.counterfactual[c.second]) + "\n";
  return out;
}

inline std::string pairs_csv(const std::vector<CounterfactualPair>& pairs) {
  if (pairs.empty()) return "";
  std::string out = csv_header(pairs.front()) + "\n";
  for (const auto& p : pairs) out += csv_row(p) + "\n";
  return out;
}

}  // namespace occf
