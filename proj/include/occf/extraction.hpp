#pragma once

// From relaxation output to counterfactuals: terminal-moment readout, the dual
// value function and its feedback law, closed-loop replay, and sampled audits
// of the dual inequalities.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <boost/random/sobol.hpp>
#include <nlohmann/json.hpp>

#include "occf/conic.hpp"
#include "occf/format.hpp"
#include "occf/moments.hpp"
#include "occf/ocp.hpp"

namespace occf {

enum class ExtractionMethod { moment, trajectory };

inline std::string to_string(ExtractionMethod m) {
  return m == ExtractionMethod::moment ? "moment" : "trajectory";
}

inline ExtractionMethod parse_extraction_method(std::string_view text) {
  if (text == "moment") return ExtractionMethod::moment;
  if (text == "trajectory") return ExtractionMethod::trajectory;
  throw ConfigurationError("unknown extraction method '" + std::string(text) + "'");
}

inline constexpr double kSingleAtomRatio = 1e-3;

struct AtomicityRecord {
  std::vector<double> singular_values;  ///< mass-normalized terminal moment matrix, descending
  double ratio = 0.0;                   ///< sigma_2 / sigma_1
  bool single_atom = true;
};

inline AtomicityRecord atomicity(const Eigen::MatrixXd& moment_matrix,
                                 double threshold = kSingleAtomRatio) {
  AtomicityRecord rec;
  if (moment_matrix.rows() == 0) return rec;
  const Eigen::VectorXd ev = eigenvalues(moment_matrix);
  for (Eigen::Index i = 0; i < ev.size(); ++i) rec.singular_values.push_back(std::abs(ev[i]));
  std::sort(rec.singular_values.rbegin(), rec.singular_values.rend());
  if (rec.singular_values.size() > 1 && rec.singular_values[0] > 0.0)
    rec.ratio = rec.singular_values[1] / rec.singular_values[0];
  rec.single_atom = rec.ratio < threshold;
  return rec;
}

struct CounterfactualPair {
  std::vector<std::string> state_names;
  std::vector<double> factual;         ///< original units
  std::vector<double> counterfactual;  ///< original units
  double terminal_time = 0.0;          ///< seconds
  double cost_bound = 0.0;             ///< relaxation value, integral of u^2 over scaled time
  int order = 0;
  double mass_of_terminal = 0.0;
  AtomicityRecord atomicity;
  ExtractionMethod method = ExtractionMethod::moment;
  std::vector<std::string> parameter_names;
  std::vector<double> parameters;  ///< uncertain case, original units
  std::optional<double> achieved_cost;  ///< closed-loop cost, trajectory method
  std::vector<std::string> warnings;
};

// CSV layout: f_<state>..., cf_<state>..., tau_s, cost_bound, order,
// atomicity_ratio, method, p_<parameter>...

inline std::string csv_header(const CounterfactualPair& pair) {
  std::ostringstream os;
  for (const auto& n : pair.state_names) os << "f_" << n << ",";
  for (const auto& n : pair.state_names) os << "cf_" << n << ",";
  os << "tau_s,cost_bound,order,atomicity_ratio,method";
  for (const auto& n : pair.parameter_names) os << ",p_" << n;
  return os.str();
}

inline std::string csv_row(const CounterfactualPair& pair) {
  std::ostringstream os;
  for (double v : pair.factual) os << format_double(v) << ",";
  for (double v : pair.counterfactual) os << format_double(v) << ",";
  os << format_double(pair.terminal_time) << "," << format_double(pair.cost_bound) << ","
     << pair.order << "," << format_double(pair.atomicity.ratio) << "," << to_string(pair.method);
  for (double v : pair.parameters) os << "," << format_double(v);
  return os.str();
}

namespace detail {

inline std::vector<std::string> split_csv(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.emplace_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos
                                                                         : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  if (!out.empty() && !out.back().empty() && out.back().back() == '\r') out.back().pop_back();
  return out;
}

}  // namespace detail

/// Rebuilds the CSV-carried fields of a pair from a header line and a data row.
inline CounterfactualPair parse_csv_row(std::string_view header, std::string_view row,
                                        std::size_t line = 0) {
  const auto names = detail::split_csv(header);
  const auto cells = detail::split_csv(row);
  if (names.size() != cells.size())
    throw ParseError("expected " + std::to_string(names.size()) + " fields, found " +
                         std::to_string(cells.size()),
                     line);
  CounterfactualPair pair;
  bool have_method = false;
  for (std::size_t i = 0; i < names.size(); ++i) {
    const std::string& n = names[i];
    const std::string& c = cells[i];
    if (n.rfind("f_", 0) == 0) {
      pair.state_names.push_back(n.substr(2));
      pair.factual.push_back(parse_double(c, line));
    } else if (n.rfind("cf_", 0) == 0) {
      pair.counterfactual.push_back(parse_double(c, line));
    } else if (n.rfind("p_", 0) == 0) {
      pair.parameter_names.push_back(n.substr(2));
      pair.parameters.push_back(parse_double(c, line));
    } else if (n == "tau_s") {
      pair.terminal_time = parse_double(c, line);
    } else if (n == "cost_bound") {
      pair.cost_bound = parse_double(c, line);
    } else if (n == "order") {
      pair.order = static_cast<int>(parse_double(c, line));
    } else if (n == "atomicity_ratio") {
      pair.atomicity.ratio = parse_double(c, line);
      pair.atomicity.single_atom = pair.atomicity.ratio < kSingleAtomRatio;
    } else if (n == "method") {
      try {
        pair.method = parse_extraction_method(c);
      } catch (const ConfigurationError& e) {
        throw ParseError(e.what(), line);
      }
      have_method = true;
    } else {
      throw ParseError("unknown column '" + n + "'", line);
    }
  }
  if (!have_method || pair.counterfactual.size() != pair.factual.size())
    throw ParseError("pair row is missing columns", line);
  return pair;
}

inline void to_json(nlohmann::json& j, const AtomicityRecord& a) {
  j = nlohmann::json{{"singular_values", a.singular_values}, {"ratio", a.ratio},
                     {"single_atom", a.single_atom}};
}

inline void from_json(const nlohmann::json& j, AtomicityRecord& a) {
  j.at("singular_values").get_to(a.singular_values);
  j.at("ratio").get_to(a.ratio);
  j.at("single_atom").get_to(a.single_atom);
}

inline void to_json(nlohmann::json& j, const CounterfactualPair& p) {
  j = nlohmann::json{{"state_names", p.state_names},
                     {"factual", p.factual},
                     {"counterfactual", p.counterfactual},
                     {"terminal_time_s", p.terminal_time},
                     {"cost_bound", p.cost_bound},
                     {"order", p.order},
                     {"mass_of_terminal", p.mass_of_terminal},
                     {"atomicity", p.atomicity},
                     {"method", to_string(p.method)},
                     {"parameter_names", p.parameter_names},
                     {"parameters", p.parameters},
                     {"warnings", p.warnings}};
  j["achieved_cost"] = p.achieved_cost ? nlohmann::json(*p.achieved_cost) : nlohmann::json(nullptr);
}

inline void from_json(const nlohmann::json& j, CounterfactualPair& p) {
  j.at("state_names").get_to(p.state_names);
  j.at("factual").get_to(p.factual);
  j.at("counterfactual").get_to(p.counterfactual);
  j.at("terminal_time_s").get_to(p.terminal_time);
  j.at("cost_bound").get_to(p.cost_bound);
  j.at("order").get_to(p.order);
  j.at("mass_of_terminal").get_to(p.mass_of_terminal);
  j.at("atomicity").get_to(p.atomicity);
  p.method = parse_extraction_method(j.at("method").get<std::string>());
  j.at("parameter_names").get_to(p.parameter_names);
  j.at("parameters").get_to(p.parameters);
  j.at("warnings").get_to(p.warnings);
  if (j.contains("achieved_cost") && !j["achieved_cost"].is_null())
    p.achieved_cost = j["achieved_cost"].get<double>();
  else
    p.achieved_cost.reset();
}

struct ExtractionOptions {
  double mass_tolerance = 1e-3;
  double time_consistency_tolerance = 1e-3;
  double atom_threshold = kSingleAtomRatio;
};

/// Numeric value of a moment-matrix spec at the moment vector y.
inline Eigen::MatrixXd evaluate_moment_matrix(const MomentMatrixSpec& spec, std::span<const double> y) {
  const auto n = static_cast<Eigen::Index>(spec.side());
  Eigen::MatrixXd m(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i; j < n; ++j) {
      double v = 0.0;
      for (const auto& [var, coef] : spec.entry(static_cast<std::size_t>(i), static_cast<std::size_t>(j)))
        v += coef * y[var];
      m(i, j) = m(j, i) = v;
    }
  return m;
}

/// Counterfactual from the first moments of the terminal measure. The problem
/// is the scaled relaxation and `scaling` maps it back to original units.
inline CounterfactualPair extract_counterfactual_moments(const RelaxedProblem& problem,
                                                         const SolverResult& result,
                                                         const ScalingInfo& scaling,
                                                         const ExtractionOptions& options = {}) {
  if (result.status != SolveStatus::optimal)
    throw ExtractionError("cannot extract a counterfactual from a " + to_string(result.status) +
                          " solve");
  const std::span<const double> y(result.primal);
  const auto& term = problem.terminal_moments();
  const auto& original = *scaling.original;
  CounterfactualPair pair;
  pair.order = problem.order;
  pair.cost_bound = result.objective;
  pair.method = ExtractionMethod::moment;
  const double mass = y[term.global(problem.one())];
  pair.mass_of_terminal = mass;
  if (!(std::abs(mass - 1.0) <= options.mass_tolerance))
    pair.warnings.push_back("terminal mass " + format_double(mass) + " differs from 1");
  const double denom = mass > 0.0 ? mass : 1.0;

  const std::size_t physical = problem.states.size() - problem.extended_parameters;
  for (std::size_t i = 0; i < problem.states.size(); ++i) {
    const std::size_t var = problem.states[i];
    const double scaled = y[term.global(problem.unit(var))] / denom;
    const double value = scaling.maps[var].forward(scaled);
    if (i < physical) {
      pair.state_names.push_back(original[var].name);
      pair.counterfactual.push_back(value);
      pair.factual.push_back(scaling.maps[var].forward(problem.factual.at(i)));
    } else {
      pair.parameter_names.push_back(original[var].name);
      pair.parameters.push_back(value);
    }
  }

  const double occupation_mass = y[problem.occupation_moments().global(problem.one())];
  double tau = occupation_mass;
  if (problem.time && problem.report.time_dependent_tests) {
    tau = y[term.global(problem.unit(*problem.time))] / denom;
    if (std::abs(tau - occupation_mass) > options.time_consistency_tolerance)
      pair.warnings.push_back("terminal time moment " + format_double(tau) +
                              " disagrees with occupation mass " + format_double(occupation_mass));
  } else {
    pair.warnings.push_back("terminal time read from the occupation mass (no time-dependent tests)");
  }
  if (tau < -1e-6 || tau > 1.0 + 1e-6)
    pair.warnings.push_back("terminal time " + format_double(tau) + " outside the horizon; clamped");
  tau = std::clamp(tau, 0.0, 1.0);
  pair.terminal_time = scaling.unscale_time_seconds(tau);

  const MomentMatrixSpec mm =
      build_moment_matrix_spec(term, problem.terminal, problem.order, problem.space);
  pair.atomicity = atomicity(evaluate_moment_matrix(mm, y) / denom, options.atom_threshold);
  return pair;
}

/// Scaled terminal time (fraction of the horizon) carried by a pair.
inline double scaled_terminal_time(const CounterfactualPair& pair, const ScalingInfo& scaling) {
  return pair.terminal_time / scaling.seconds_per_scaled_unit;
}

struct DualSolution {
  Polynomial v;          ///< over the scaled space; depends on t when time tests are used
  double bound = 0.0;    ///< v(0, x_f) (known) or gamma (uncertain)
  bool uncertain = false;
  std::size_t terms() const { return v.terms().size(); }
};

/// v = sum of Liouville-row multipliers times their test monomials.
inline DualSolution extract_dual_polynomial(const RelaxedProblem& problem, const SolverResult& result) {
  if (result.status != SolveStatus::optimal)
    throw ExtractionError("dual polynomial needs an optimal solve, got " + to_string(result.status));
  if (result.equality_duals.size() != problem.equalities.size())
    throw UnavailableDualError(
        "equality multipliers are unavailable; export the problem with export-sdpa and solve it "
        "with an external SDP solver to recover them");
  DualSolution out;
  out.v = Polynomial(problem.space);
  out.uncertain = problem.initial.has_value();
  for (std::size_t r = 0; r < problem.equalities.size(); ++r) {
    const auto& row = problem.equalities[r];
    const double nu = result.equality_duals[r];
    if (row.test && nu != 0.0) out.v.add_term(*row.test, nu);
    else if (!row.test && out.uncertain) out.bound = nu;
  }
  if (!out.uncertain) {
    std::vector<double> point(problem.space->size(), 0.0);
    for (std::size_t i = 0; i < problem.states.size(); ++i) point[problem.states[i]] = problem.factual[i];
    out.bound = out.v.evaluate(point);
  }
  return out;
}

struct ControlLaw {
  std::vector<Polynomial> u;  ///< one per control, over the scaled space
  Polynomial v;
};

/// u*_j = -1/2 sum_i dv/dx_i g_ij.
inline ControlLaw recover_control_law(const Polynomial& v, const OcpSpec& spec) {
  if (!same_space(v.space(), spec.space))
    throw StructuralError("value function and problem use different variable spaces");
  ControlLaw law{std::vector<Polynomial>(spec.controls.size(), Polynomial(spec.space)), v};
  for (std::size_t i = 0; i < spec.states.size(); ++i) {
    const Polynomial dv = partial_derivative(v, spec.states[i]);
    if (dv.is_zero()) continue;
    for (std::size_t j = 0; j < spec.controls.size(); ++j)
      if (!spec.input[i][j].is_zero()) law.u[j] += -0.5 * dv * spec.input[i][j];
  }
  return law;
}

/// Feedback given directly as polynomials (for instance a published law).
inline ControlLaw control_law_from(std::vector<Polynomial> u, const OcpSpec& spec) {
  if (u.size() != spec.controls.size()) throw StructuralError("one polynomial per control expected");
  for (const auto& p : u)
    if (!same_space(p.space(), spec.space)) throw StructuralError("control law over a foreign space");
  return ControlLaw{std::move(u), Polynomial(spec.space)};
}

inline ControlLaw zero_control_law(const OcpSpec& spec) {
  return ControlLaw{std::vector<Polynomial>(spec.controls.size(), Polynomial(spec.space)),
                    Polynomial(spec.space)};
}

struct SimulationOptions {
  std::size_t steps = 4096;
  bool saturate = true;
  double set_tolerance = 1e-9;
};

struct Trajectory {
  std::vector<double> time;                   ///< scaled time
  std::vector<std::vector<double>> state;     ///< scaled states, one row per sample
  std::vector<std::vector<double>> control;
  double cost = 0.0;                          ///< integral of sum u_j^2 over scaled time
  std::size_t saturated_steps = 0;
  std::optional<double> exit_time;            ///< first sample outside X (integration stops)
  std::optional<double> terminal_entry_time;  ///< first sample inside XT
  std::optional<double> cost_at_entry;        ///< accumulated cost at that sample
  bool completed() const { return !exit_time.has_value(); }
  const std::vector<double>& endpoint() const { return state.back(); }
};

/// Fixed-step RK4 of the closed loop from x0 (scaled, full state) over [0, tau]
/// in scaled time. The cost is integrated as an extra state.
inline Trajectory simulate_closed_loop(const OcpSpec& spec, const ControlLaw& law,
                                       std::span<const double> x0, double tau,
                                       const SimulationOptions& options = {}) {
  if (!(tau >= 0.0 && tau <= spec.horizon * (1.0 + 1e-12)))
    throw ConfigurationError("simulation time must lie in [0, T]");
  if (options.steps == 0) throw ConfigurationError("simulation needs at least one step");
  const std::size_t n = spec.states.size();
  const std::size_t m = spec.controls.size();
  if (x0.size() != n) throw StructuralError("initial state has the wrong dimension");
  if (law.u.size() != m) throw StructuralError("control law has the wrong dimension");
  std::vector<double> lo(m), hi(m);
  for (std::size_t j = 0; j < m; ++j) {
    lo[j] = (*spec.space)[spec.controls[j]].lower;
    hi[j] = (*spec.space)[spec.controls[j]].upper;
  }

  Trajectory traj;
  bool saturated_now = false;
  auto control_at = [&](std::span<const double> x, double s) {
    const auto point = spec.full_point(x, {}, s);
    std::vector<double> u(m);
    for (std::size_t j = 0; j < m; ++j) {
      u[j] = law.u[j].evaluate(point);
      if (options.saturate && (u[j] < lo[j] || u[j] > hi[j])) {
        u[j] = std::clamp(u[j], lo[j], hi[j]);
        saturated_now = true;
      }
    }
    return u;
  };
  // Augmented right-hand side: (f(x, u), sum u^2).
  auto rhs = [&](const std::vector<double>& z, double s) {
    const std::span<const double> x(z.data(), n);
    const auto u = control_at(x, s);
    auto f = spec.evaluate_field(x, u, s);
    double c = 0.0;
    for (double uj : u) c += uj * uj;
    f.push_back(c);
    return f;
  };
  auto record = [&](const std::vector<double>& z, double s) {
    const std::span<const double> x(z.data(), n);
    traj.time.push_back(s);
    traj.state.emplace_back(x.begin(), x.end());
    traj.control.push_back(control_at(x, s));
    const auto point = spec.full_point(x, {}, s);
    if (!traj.terminal_entry_time && spec.terminal.contains(point, options.set_tolerance)) {
      traj.terminal_entry_time = s;
      traj.cost_at_entry = z[n];
    }
    if (!spec.path.contains(point, options.set_tolerance)) traj.exit_time = s;
  };

  std::vector<double> z(x0.begin(), x0.end());
  z.push_back(0.0);
  record(z, 0.0);
  const double h = tau / static_cast<double>(options.steps);
  std::vector<double> tmp(n + 1);
  for (std::size_t k = 0; k < options.steps && !traj.exit_time; ++k) {
    const double s = h * static_cast<double>(k);
    saturated_now = false;
    const auto k1 = rhs(z, s);
    for (std::size_t i = 0; i <= n; ++i) tmp[i] = z[i] + 0.5 * h * k1[i];
    const auto k2 = rhs(tmp, s + 0.5 * h);
    for (std::size_t i = 0; i <= n; ++i) tmp[i] = z[i] + 0.5 * h * k2[i];
    const auto k3 = rhs(tmp, s + 0.5 * h);
    for (std::size_t i = 0; i <= n; ++i) tmp[i] = z[i] + h * k3[i];
    const auto k4 = rhs(tmp, s + h);
    for (std::size_t i = 0; i <= n; ++i) z[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    if (saturated_now) ++traj.saturated_steps;
    record(z, k + 1 == options.steps ? tau : s + h);
  }
  traj.cost = z[n];
  return traj;
}

/// Pair whose counterfactual is the closed-loop endpoint.
inline CounterfactualPair trajectory_pair(const Trajectory& traj, const OcpSpec& scaled_spec,
                                          const ScalingInfo& scaling, double cost_bound, int order) {
  CounterfactualPair pair;
  pair.method = ExtractionMethod::trajectory;
  pair.order = order;
  pair.cost_bound = cost_bound;
  pair.mass_of_terminal = 1.0;
  pair.achieved_cost = traj.cost;
  pair.terminal_time = scaling.unscale_time_seconds(traj.time.back());
  const auto& original = *scaling.original;
  const std::size_t physical = scaled_spec.physical_state_count();
  for (std::size_t i = 0; i < scaled_spec.states.size(); ++i) {
    const std::size_t var = scaled_spec.states[i];
    const double start = scaling.maps[var].forward(traj.state.front()[i]);
    const double end = scaling.maps[var].forward(traj.state.back()[i]);
    if (i < physical) {
      pair.state_names.push_back(original[var].name);
      pair.factual.push_back(start);
      pair.counterfactual.push_back(end);
    } else {
      pair.parameter_names.push_back(original[var].name);
      pair.parameters.push_back(end);
    }
  }
  if (traj.exit_time)
    pair.warnings.push_back("trajectory left X at scaled time " + format_double(*traj.exit_time));
  if (traj.saturated_steps > 0)
    pair.warnings.push_back("control saturated on " + std::to_string(traj.saturated_steps) + " steps");
  if (!traj.terminal_entry_time) pair.warnings.push_back("trajectory never entered XT");
  return pair;
}

struct CertificateCheck {
  std::string condition;
  double worst = std::numeric_limits<double>::infinity();  ///< smallest slack found
  std::vector<double> location;                            ///< scaled point of the worst slack
  std::size_t samples = 0;
  std::size_t violations = 0;  ///< samples with slack below -tolerance
};

struct CertificateReport {
  CertificateCheck initial;   ///< v(0, x) - bound on the initial support
  CertificateCheck hjb;       ///< min over U of u^2 + L_f v on [0,1] x X
  CertificateCheck terminal;  ///< -v on [0,1] x XT
  double tolerance = 1e-5;

  double worst() const { return std::min({initial.worst, hjb.worst, terminal.worst}); }
  bool passed() const { return worst() > -tolerance; }
};

namespace detail {

/// Sobol points on the variable-bound box of `vars` (scaled space).
class BoxSampler {
 public:
  BoxSampler(const VarSpace& space, std::vector<std::size_t> vars)
      : vars_(std::move(vars)), engine_(static_cast<unsigned>(std::max<std::size_t>(vars_.size(), 1))) {
    for (std::size_t v : vars_) bounds_.emplace_back(space[v].lower, space[v].upper);
  }

  void next(std::vector<double>& point) {
    for (std::size_t k = 0; k < std::max<std::size_t>(vars_.size(), 1); ++k) {
      const double u = std::ldexp(static_cast<double>(engine_()), -64);
      if (k < vars_.size())
        point[vars_[k]] = bounds_[k].first + (bounds_[k].second - bounds_[k].first) * u;
    }
  }

 private:
  std::vector<std::size_t> vars_;
  std::vector<std::pair<double, double>> bounds_;
  boost::random::sobol engine_;
};

inline void note_slack(CertificateCheck& check, double slack, const std::vector<double>& point,
                       double tol) {
  ++check.samples;
  if (slack < -tol) ++check.violations;
  if (slack < check.worst) {
    check.worst = slack;
    check.location = point;
  }
}

}  // namespace detail

/// Samples the dual inequalities of the relaxation on the scaled problem:
/// bound <= v(0, x) on the initial support ({x_f}, or {x_f} x Sigma when
/// parameters are extended), min_u u^2 + L_f v >= 0 on [0,1] x X x Sigma, and
/// v <= 0 on [0,1] x XT. The minimum over u uses the box form of U.
inline CertificateReport verify_dual_certificate(const Polynomial& v, double bound, const OcpSpec& spec,
                                                 std::size_t samples = 10000, double tolerance = 1e-5) {
  if (!same_space(v.space(), spec.space))
    throw StructuralError("value function and problem use different variable spaces");
  const auto& space = *spec.space;
  CertificateReport report;
  report.tolerance = tolerance;
  report.initial.condition = "v(0,x) >= bound on the initial support";
  report.hjb.condition = "min_u u^2 + L_f v >= 0 on [0,1] x X";
  report.terminal.condition = "v <= 0 on [0,1] x XT";

  const VectorField drift_field{spec.states, spec.drift};
  const Polynomial lh = lie_derivative(v, drift_field, spec.space->time_index().has_value());
  std::vector<Polynomial> b(spec.controls.size(), Polynomial(spec.space));
  for (std::size_t i = 0; i < spec.states.size(); ++i) {
    const Polynomial dv = partial_derivative(v, spec.states[i]);
    if (dv.is_zero()) continue;
    for (std::size_t j = 0; j < spec.controls.size(); ++j)
      if (!spec.input[i][j].is_zero()) b[j] += dv * spec.input[i][j];
  }

  const std::size_t physical = spec.physical_state_count();
  std::vector<std::size_t> params(spec.states.begin() + static_cast<std::ptrdiff_t>(physical),
                                  spec.states.end());
  std::vector<double> point = spec.full_point(spec.factual);
  if (params.empty()) {
    detail::note_slack(report.initial, v.evaluate(point) - bound, point, tolerance);
  } else {
    detail::BoxSampler sampler(space, params);
    for (std::size_t k = 0; k < samples; ++k) {
      sampler.next(point);
      if (!spec.initial.contains(point, 1e-9)) continue;
      detail::note_slack(report.initial, v.evaluate(point) - bound, point, tolerance);
    }
  }

  std::vector<std::size_t> sampled = spec.states;
  if (auto t = space.time_index()) sampled.insert(sampled.begin(), *t);
  {
    detail::BoxSampler sampler(space, sampled);
    std::vector<double> p(space.size(), 0.0);
    for (std::size_t k = 0; k < samples; ++k) {
      sampler.next(p);
      if (!spec.path.contains(p, 1e-9)) continue;
      double slack = lh.evaluate(p);
      for (std::size_t j = 0; j < spec.controls.size(); ++j) {
        const double bj = b[j].evaluate(p);
        const std::size_t c = spec.controls[j];
        const double u = std::clamp(-0.5 * bj, space[c].lower, space[c].upper);
        slack += u * u + bj * u;
      }
      detail::note_slack(report.hjb, slack, p, tolerance);
    }
  }
  {
    detail::BoxSampler sampler(space, sampled);
    std::vector<double> p(space.size(), 0.0);
    const std::size_t max_draws = 1000 * samples;
    for (std::size_t k = 0; k < max_draws && report.terminal.samples < samples; ++k) {
      sampler.next(p);
      if (!spec.terminal.contains(p, 1e-9) || !spec.path.contains(p, 1e-9)) continue;
      detail::note_slack(report.terminal, -v.evaluate(p), p, tolerance);
    }
  }
  return report;
}

}  // namespace occf
