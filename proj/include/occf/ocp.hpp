#pragma once

// Free-terminal-time minimum-energy optimal control problems with
// input-affine polynomial dynamics  x' = h(x) + g(x) u  and semialgebraic
// initial, path, terminal and control sets.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "occf/polynomial.hpp"

namespace occf {

/// {x | w_k(x) >= 0 for all k}. An empty inequality list is the whole space.
struct SemialgebraicSet {
  VarSpacePtr space;
  std::vector<Polynomial> inequalities;

  double min_value(std::span<const double> point) const {
    double worst = std::numeric_limits<double>::infinity();
    for (const auto& w : inequalities) worst = std::min(worst, w.evaluate(point));
    return worst;
  }

  bool contains(std::span<const double> point, double tol = 1e-9) const {
    return min_value(point) >= -tol;
  }

  int max_degree() const {
    int d = 0;
    for (const auto& w : inequalities) d = std::max(d, w.degree());
    return d;
  }
};

/// (x - lower)(upper - x) >= 0, a single quadratic constraint per interval.
inline Polynomial interval_constraint(const VarSpacePtr& space, std::size_t var, double lower,
                                      double upper) {
  const Polynomial x = Polynomial::variable(space, var);
  return (x - Polynomial::constant(space, lower)) * (Polynomial::constant(space, upper) - x);
}

inline SemialgebraicSet box_set(const VarSpacePtr& space, const std::vector<std::size_t>& vars) {
  SemialgebraicSet set{space, {}};
  for (std::size_t v : vars)
    set.inequalities.push_back(interval_constraint(space, v, (*space)[v].lower, (*space)[v].upper));
  return set;
}

struct ParameterBound {
  std::string name;
  double lower = 0.0;
  double upper = 0.0;
};

inline Polynomial energy_cost(const VarSpacePtr& space, const std::vector<std::size_t>& controls) {
  Polynomial cost(space);
  for (std::size_t c : controls) {
    const Polynomial u = Polynomial::variable(space, c);
    cost += u * u;
  }
  return cost;
}

struct OcpSpec {
  std::string name;
  VarSpacePtr space;
  /// Ordered state variables; after parameter extension the trailing
  /// `extended_parameters` entries are the uncertain parameters.
  std::vector<std::size_t> states;
  std::vector<std::size_t> controls;
  std::vector<Polynomial> drift;                ///< h, one entry per state
  std::vector<std::vector<Polynomial>> input;   ///< g[state][control]
  SemialgebraicSet initial;                     ///< X0
  SemialgebraicSet path;                        ///< X
  SemialgebraicSet terminal;                    ///< XT
  SemialgebraicSet control_set;                 ///< U
  double horizon = 1.0;                         ///< T in model time units
  double time_unit_seconds = 1.0;
  Polynomial running_cost;
  Polynomial terminal_cost;
  std::vector<double> factual;
  std::map<std::string, double> parameter_values;
  std::vector<ParameterBound> parameter_box;
  std::size_t extended_parameters = 0;
  /// Per-state sampling interval for batch factuals; empty means the state scale box.
  std::vector<std::pair<double, double>> sample_box;
  /// Reject X0/XT overlap instead of reporting it as a warning.
  bool assume_disjoint = false;
  bool assume_terminal_in_path = true;
  int max_dynamics_degree = 8;
  /// Optional per-variable width used by scale_to_unit_box in place of
  /// (upper - lower). A variable whose reachable range is much narrower than
  /// its box is better conditioned in the relaxation with a matching width.
  std::map<std::string, double> numerical_ranges;

  std::size_t state_count() const { return states.size(); }
  std::size_t control_count() const { return controls.size(); }
  std::size_t physical_state_count() const { return states.size() - extended_parameters; }

  double horizon_seconds() const { return horizon * time_unit_seconds; }

  /// f_i = h_i + sum_j g_ij u_j as a vector field over the states.
  VectorField field() const {
    VectorField f{states, {}};
    for (std::size_t i = 0; i < states.size(); ++i) {
      Polynomial fi = drift.at(i);
      for (std::size_t j = 0; j < controls.size(); ++j)
        fi += input.at(i).at(j) * Polynomial::variable(space, controls[j]);
      f.rhs.push_back(std::move(fi));
    }
    return f;
  }

  int field_degree() const {
    int d = 0;
    for (const auto& fi : field().rhs) d = std::max(d, fi.degree());
    return d;
  }

  /// Full variable-space point from a state vector, optional controls and time.
  /// Pinned parameters take their nominal values.
  std::vector<double> full_point(std::span<const double> state,
                                 std::span<const double> control = {}, double t = 0.0) const {
    std::vector<double> point(space->size(), 0.0);
    for (const auto& [name, value] : parameter_values)
      if (auto i = space->find(name)) point[*i] = value;
    if (auto ti = space->time_index()) point[*ti] = t;
    for (std::size_t i = 0; i < states.size() && i < state.size(); ++i) point[states[i]] = state[i];
    for (std::size_t j = 0; j < controls.size() && j < control.size(); ++j)
      point[controls[j]] = control[j];
    return point;
  }

  std::vector<double> evaluate_field(std::span<const double> state,
                                     std::span<const double> control, double t = 0.0) const {
    const auto point = full_point(state, control, t);
    std::vector<double> out(states.size());
    for (std::size_t i = 0; i < states.size(); ++i) {
      double v = drift[i].evaluate(point);
      for (std::size_t j = 0; j < controls.size(); ++j)
        if (!input[i][j].is_zero()) v += input[i][j].evaluate(point) * control[j];
      out[i] = v;
    }
    return out;
  }
};

struct ValidationReport {
  std::vector<std::string> violations;
  std::vector<std::string> warnings;

  bool ok() const { return violations.empty(); }
};

namespace detail {

inline std::uint64_t splitmix(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Uniform double in [0,1) with a platform-independent bit recipe.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline bool uses_only(const Polynomial& p, const std::vector<bool>& allowed) {
  for (std::size_t i = 0; i < allowed.size(); ++i)
    if (!allowed[i] && p.depends_on(i)) return false;
  return true;
}

}  // namespace detail

inline ValidationReport validate(const OcpSpec& spec) {
  ValidationReport report;
  auto& bad = report.violations;
  const auto& space = *spec.space;
  const std::size_t n = spec.states.size();
  const std::size_t m = spec.controls.size();

  if (!(spec.horizon > 0.0)) bad.push_back("horizon must be positive");
  if (!(spec.time_unit_seconds > 0.0)) bad.push_back("time unit must be positive");
  if (n == 0) bad.push_back("no state variables");
  if (spec.drift.size() != n) bad.push_back("drift has wrong number of entries");
  if (spec.input.size() != n) {
    bad.push_back("input matrix has wrong number of rows");
  } else {
    for (const auto& row : spec.input)
      if (row.size() != m) bad.push_back("input matrix has wrong number of columns");
  }
  if (!bad.empty()) return report;

  std::vector<bool> state_or_param(space.size(), false);
  std::vector<bool> control_only(space.size(), false);
  for (std::size_t s : spec.states) state_or_param[s] = true;
  for (std::size_t i = 0; i < space.size(); ++i)
    if (space[i].role == VarRole::parameter) state_or_param[i] = true;
  for (std::size_t c : spec.controls) control_only[c] = true;

  for (std::size_t i = 0; i < n; ++i) {
    const std::string who = space[spec.states[i]].name;
    if (!detail::uses_only(spec.drift[i], state_or_param))
      bad.push_back("drift of " + who + " depends on time or control (not input-affine)");
    if (spec.drift[i].degree() > spec.max_dynamics_degree)
      bad.push_back("drift of " + who + " exceeds the dynamics degree bound");
    for (std::size_t j = 0; j < m; ++j) {
      if (!detail::uses_only(spec.input[i][j], state_or_param))
        bad.push_back("input gain of " + who + " depends on time or control");
      if (spec.input[i][j].degree() + 1 > spec.max_dynamics_degree)
        bad.push_back("input gain of " + who + " exceeds the dynamics degree bound");
    }
  }

  // Parameters the dynamics use must either be pinned or be part of the state.
  for (std::size_t v = 0; v < space.size(); ++v) {
    if (space[v].role != VarRole::parameter) continue;
    if (std::find(spec.states.begin(), spec.states.end(), v) != spec.states.end()) continue;
    bool used = false;
    for (std::size_t i = 0; i < n; ++i) {
      used = used || spec.drift[i].depends_on(v);
      for (const auto& g : spec.input[i]) used = used || g.depends_on(v);
    }
    if (used && !spec.parameter_values.contains(space[v].name))
      bad.push_back("parameter " + space[v].name + " has no nominal value");
  }

  const Polynomial expected_cost = energy_cost(spec.space, spec.controls);
  if (!(spec.running_cost == expected_cost)) bad.push_back("running cost must be sum of u_j^2");
  if (!spec.terminal_cost.is_zero()) bad.push_back("terminal cost must be zero");

  for (const auto* set : {&spec.initial, &spec.path, &spec.terminal})
    for (const auto& w : set->inequalities)
      if (!detail::uses_only(w, state_or_param))
        bad.push_back("state set constraint depends on time or control: " + to_string(w));
  for (const auto& w : spec.control_set.inequalities)
    if (!detail::uses_only(w, control_only))
      bad.push_back("control set constraint depends on non-control variables: " + to_string(w));

  // Boundedness of U: far probes along each control axis must leave the set.
  std::vector<double> mid_state(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& var = space[spec.states[i]];
    mid_state[i] = 0.5 * (var.lower + var.upper);
  }
  for (std::size_t j = 0; j < m; ++j) {
    const auto& var = space[spec.controls[j]];
    const double reach = 1e6 * (1.0 + std::abs(var.lower) + std::abs(var.upper));
    for (double sign : {-1.0, 1.0}) {
      std::vector<double> u(m);
      for (std::size_t k = 0; k < m; ++k)
        u[k] = 0.5 * (space[spec.controls[k]].lower + space[spec.controls[k]].upper);
      u[j] = sign * reach;
      if (spec.control_set.contains(spec.full_point(mid_state, u))) {
        bad.push_back("control set unbounded along " + var.name);
        break;
      }
    }
  }

  if (spec.factual.size() != n) {
    bad.push_back("factual has dimension " + std::to_string(spec.factual.size()) + ", expected " +
                  std::to_string(n));
  } else if (!spec.initial.contains(spec.full_point(spec.factual))) {
    bad.push_back("factual not in X0");
  }

  // Sampled set relations over the state scale box.
  std::mt19937_64 rng(0x5eed);
  bool containment_broken = false;
  bool overlap = false;
  std::vector<double> x(n);
  for (int s = 0; s < 4000 && !(containment_broken && overlap); ++s) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto& var = space[spec.states[i]];
      x[i] = var.lower + (var.upper - var.lower) * detail::uniform01(rng);
    }
    const auto point = spec.full_point(x);
    const bool in_terminal = spec.terminal.contains(point);
    if (in_terminal && !spec.path.contains(point)) containment_broken = true;
    if (in_terminal && spec.initial.contains(point)) overlap = true;
  }
  if (containment_broken && spec.assume_terminal_in_path) bad.push_back("XT not contained in X");
  if (overlap) {
    if (spec.assume_disjoint)
      bad.push_back("X0 and XT overlap");
    else
      report.warnings.push_back("X0 and XT overlap on sampled points");
  }

  for (const auto& pb : spec.parameter_box) {
    if (!space.find(pb.name)) bad.push_back("parameter box names unknown variable " + pb.name);
    if (pb.lower > pb.upper) bad.push_back("parameter box for " + pb.name + " is empty");
  }
  return report;
}

/// Affine change of variables mapping the problem onto the unit box with unit horizon.
struct ScalingInfo {
  VarSpacePtr original;
  VarSpacePtr scaled;
  std::vector<AffineMap> maps;  ///< original = maps[i].forward(scaled)
  std::vector<std::size_t> states;
  double time_scale = 1.0;             ///< horizon, in model time units
  double seconds_per_scaled_unit = 1.0;

  std::vector<double> scale_state(std::span<const double> x) const {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = maps[states[i]].inverse(x[i]);
    return out;
  }

  std::vector<double> unscale_state(std::span<const double> x_hat) const {
    std::vector<double> out(x_hat.size());
    for (std::size_t i = 0; i < x_hat.size(); ++i) out[i] = maps[states[i]].forward(x_hat[i]);
    return out;
  }

  double unscale_time_seconds(double s) const { return s * seconds_per_scaled_unit; }
};

struct ScaledOcp {
  OcpSpec spec;
  ScalingInfo scaling;
};

/// Maps states, parameters and time onto [0,1] and multiplies the dynamics by
/// the horizon. Controls are left unchanged so the running cost keeps its
/// meaning. With `use_numerical_ranges`, a variable with a declared numerical
/// range r is divided by r instead, so its box becomes [0, width/r].
inline ScaledOcp scale_to_unit_box(const OcpSpec& spec, bool use_numerical_ranges = false) {
  const auto& space = *spec.space;
  std::vector<Variable> vars = space.variables();
  std::vector<AffineMap> maps(vars.size());
  for (std::size_t i = 0; i < vars.size(); ++i) {
    auto& v = vars[i];
    if (!std::isfinite(v.lower) || !std::isfinite(v.upper))
      throw StructuralError("variable '" + v.name + "' has no finite scale bounds");
    if (v.role == VarRole::control) continue;
    if (v.role == VarRole::time) {
      if (v.lower != 0.0) throw StructuralError("time variable must start at 0");
      maps[i] = AffineMap{spec.horizon, 0.0};
      v.lower = 0.0;
      v.upper = 1.0;
    } else {
      double width = v.upper - v.lower;
      if (auto it = spec.numerical_ranges.find(v.name);
          use_numerical_ranges && it != spec.numerical_ranges.end()) {
        if (!(it->second > 0.0)) throw StructuralError("numerical range of '" + v.name + "' must be positive");
        width = it->second;
      }
      maps[i] = AffineMap{width, v.lower};
      v.upper = (v.upper - v.lower) / width;
      v.lower = 0.0;
    }
  }
  auto scaled_space = make_space(std::move(vars));
  auto sub = [&](const Polynomial& p) { return affine_substitute(p, maps, scaled_space); };
  auto sub_set = [&](const SemialgebraicSet& s) {
    SemialgebraicSet out{scaled_space, {}};
    for (const auto& w : s.inequalities) out.inequalities.push_back(sub(w));
    return out;
  };

  OcpSpec out = spec;
  out.space = scaled_space;
  for (std::size_t i = 0; i < spec.states.size(); ++i) {
    const double factor = spec.horizon / maps[spec.states[i]].scale;
    out.drift[i] = sub(spec.drift[i]) * factor;
    for (std::size_t j = 0; j < spec.controls.size(); ++j)
      out.input[i][j] = sub(spec.input[i][j]) * factor;
  }
  out.initial = sub_set(spec.initial);
  out.path = sub_set(spec.path);
  out.terminal = sub_set(spec.terminal);
  out.control_set = sub_set(spec.control_set);
  out.running_cost = sub(spec.running_cost);
  out.terminal_cost = sub(spec.terminal_cost);
  out.horizon = 1.0;
  out.time_unit_seconds = spec.horizon * spec.time_unit_seconds;
  out.numerical_ranges.clear();
  for (std::size_t i = 0; i < spec.factual.size(); ++i)
    out.factual[i] = maps[spec.states[i]].inverse(spec.factual[i]);
  for (auto& [name, value] : out.parameter_values) value = maps[space.index_of(name)].inverse(value);
  for (auto& pb : out.parameter_box) {
    const auto& map = maps[space.index_of(pb.name)];
    pb.lower = map.inverse(pb.lower);
    pb.upper = map.inverse(pb.upper);
  }
  for (std::size_t i = 0; i < out.sample_box.size(); ++i) {
    const auto& map = maps[spec.states[i]];
    out.sample_box[i] = {map.inverse(spec.sample_box[i].first),
                         map.inverse(spec.sample_box[i].second)};
  }

  ScalingInfo info;
  info.original = spec.space;
  info.scaled = scaled_space;
  info.maps = std::move(maps);
  info.states = spec.states;
  info.time_scale = spec.horizon;
  info.seconds_per_scaled_unit = spec.horizon * spec.time_unit_seconds;
  return {std::move(out), std::move(info)};
}

/// Substitutes the nominal value of every parameter that is not part of the state.
inline OcpSpec pin_parameters(const OcpSpec& spec) {
  OcpSpec out = spec;
  for (std::size_t v = 0; v < spec.space->size(); ++v) {
    if ((*spec.space)[v].role != VarRole::parameter) continue;
    if (std::find(spec.states.begin(), spec.states.end(), v) != spec.states.end()) continue;
    auto it = spec.parameter_values.find((*spec.space)[v].name);
    auto pin = [&](Polynomial& p) {
      if (!p.depends_on(v)) return;
      if (it == spec.parameter_values.end())
        throw StructuralError("parameter " + (*spec.space)[v].name + " has no nominal value");
      p = substitute_value(p, v, it->second);
    };
    for (auto& h : out.drift) pin(h);
    for (auto& row : out.input)
      for (auto& g : row) pin(g);
    for (auto* set : {&out.initial, &out.path, &out.terminal})
      for (auto& w : set->inequalities) pin(w);
  }
  return out;
}

/// Appends the boxed parameters to the state with zero dynamics. The initial
/// set becomes {factual} x box, and the path and terminal sets are crossed with the box.
inline OcpSpec extend_with_parameters(const OcpSpec& spec) {
  if (spec.parameter_box.empty()) throw StructuralError("no uncertain parameters to extend with");
  OcpSpec out = spec;
  const auto& space = spec.space;
  const std::size_t n = spec.states.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Polynomial xi = Polynomial::variable(space, spec.states[i]);
    const Polynomial d = xi - Polynomial::constant(space, spec.factual.at(i));
    if (i == 0) out.initial.inequalities.clear();
    out.initial.inequalities.push_back(-(d * d));
  }
  for (const auto& pb : spec.parameter_box) {
    const std::size_t v = space->index_of(pb.name);
    if ((*space)[v].role != VarRole::parameter)
      throw StructuralError("'" + pb.name + "' is not a parameter");
    bool used = false;
    for (std::size_t i = 0; i < n; ++i) {
      used = used || spec.drift[i].depends_on(v);
      for (const auto& g : spec.input[i]) used = used || g.depends_on(v);
    }
    if (!used) throw StructuralError("parameter '" + pb.name + "' does not appear in the dynamics");
    out.states.push_back(v);
    out.drift.push_back(Polynomial(space));
    out.input.push_back(std::vector<Polynomial>(spec.controls.size(), Polynomial(space)));
    const Polynomial box = interval_constraint(space, v, pb.lower, pb.upper);
    out.initial.inequalities.push_back(box);
    out.path.inequalities.push_back(box);
    out.terminal.inequalities.push_back(box);
    auto nominal = spec.parameter_values.find(pb.name);
    out.factual.push_back(nominal != spec.parameter_values.end() ? nominal->second
                                                                  : 0.5 * (pb.lower + pb.upper));
    out.parameter_values.erase(pb.name);
    if (!out.sample_box.empty()) out.sample_box.emplace_back(pb.lower, pb.upper);
    ++out.extended_parameters;
  }
  return pin_parameters(out);
}

/// Seeded uniform draws of physical states over the sampling box (or the X0
/// scale box when none is declared), rejecting points outside X0.
inline std::vector<std::vector<double>> sample_factuals(const OcpSpec& spec, std::size_t count,
                                                        std::uint64_t seed) {
  const std::size_t n = spec.physical_state_count();
  std::vector<std::pair<double, double>> box(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (i < spec.sample_box.size())
      box[i] = spec.sample_box[i];
    else
      box[i] = {(*spec.space)[spec.states[i]].lower, (*spec.space)[spec.states[i]].upper};
  }
  std::mt19937_64 rng(detail::splitmix(seed));
  std::vector<std::vector<double>> out;
  std::size_t attempts = 0;
  while (out.size() < count) {
    if (++attempts > 1000 * (count + 1))
      throw ConfigurationError("cannot sample factuals inside X0 from the sampling box");
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i)
      x[i] = box[i].first + (box[i].second - box[i].first) * detail::uniform01(rng);
    std::vector<double> full = x;
    for (std::size_t i = n; i < spec.states.size(); ++i) full.push_back(spec.factual.at(i));
    if (spec.initial.contains(spec.full_point(full))) out.push_back(std::move(x));
  }
  return out;
}

}  // namespace occf
