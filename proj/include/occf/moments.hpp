#pragma once

// Truncated moment relaxation of the occupation-measure LP.
//
// Decision measures:
//   occupation  mu    on [0,1] x X x U        variables (t, kappa, u)
//   terminal    mu_T  on [0,1] x XT           variables (t, kappa)
//   initial     mu_0  on {x_f} x Sigma        variables (zeta), uncertain case only
// Liouville rows, one per test monomial phi = t^b kappa^a:
//   <phi, mu_T> - <L_f phi, mu> - <phi(0, .), mu_0> = 0
// In the known case mu_0 is the Dirac at the factual and its moments become
// right-hand sides.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "occf/ocp.hpp"

namespace occf {

/// Sparse linear form over the global decision vector: (index, coefficient), sorted, merged.
using SparseCombo = std::vector<std::pair<std::size_t, double>>;

inline void normalize_combo(SparseCombo& combo) {
  std::sort(combo.begin(), combo.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  SparseCombo merged;
  for (const auto& [i, v] : combo) {
    if (!merged.empty() && merged.back().first == i)
      merged.back().second += v;
    else
      merged.emplace_back(i, v);
  }
  std::erase_if(merged, [](const auto& e) { return e.second == 0.0; });
  combo = std::move(merged);
}

namespace detail {

inline void append_exponents(std::vector<std::vector<int>>& out, std::vector<int>& current,
                             std::size_t pos, int remaining) {
  if (pos + 1 == current.size()) {
    current[pos] = remaining;
    out.push_back(current);
    return;
  }
  for (int e = remaining; e >= 0; --e) {
    current[pos] = e;
    append_exponents(out, current, pos + 1, remaining - e);
  }
  current[pos] = 0;
}

}  // namespace detail

/// All monomials of total degree <= degree in nvars variables, graded lexicographic.
inline std::vector<Monomial> monomial_basis(std::size_t nvars, int degree) {
  if (degree < 0) throw ConfigurationError("basis degree must be nonnegative");
  std::vector<Monomial> out;
  if (nvars == 0) {
    out.emplace_back(0);
    return out;
  }
  std::vector<int> current(nvars, 0);
  for (int k = 0; k <= degree; ++k) {
    std::vector<std::vector<int>> level;
    detail::append_exponents(level, current, 0, k);
    for (auto& e : level) out.emplace_back(std::move(e));
  }
  return out;
}

/// Basis over a subset of a larger space, embedded with zero exponents elsewhere.
inline std::vector<Monomial> monomial_basis(std::size_t dim, const std::vector<std::size_t>& vars,
                                            int degree) {
  std::vector<Monomial> out;
  for (const auto& local : monomial_basis(vars.size(), degree)) {
    Monomial m(dim);
    for (std::size_t i = 0; i < vars.size(); ++i) m.exponents[vars[i]] = local.size() ? local[i] : 0;
    out.push_back(std::move(m));
  }
  return out;
}

inline std::size_t binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0;
  std::size_t r = 1;
  for (std::size_t i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

/// Moment vector of one measure: basis up to degree 2d and its slot in the decision vector.
struct MeasureMoments {
  std::string name;
  std::vector<std::size_t> vars;
  int max_degree = 0;
  std::vector<Monomial> basis;
  std::map<Monomial, std::size_t, GrlexLess> position;
  std::size_t offset = 0;

  MeasureMoments() = default;
  MeasureMoments(std::string n, std::size_t dim, std::vector<std::size_t> v, int degree,
                 std::size_t off)
      : name(std::move(n)), vars(std::move(v)), max_degree(degree), offset(off) {
    basis = monomial_basis(dim, vars, degree);
    for (std::size_t i = 0; i < basis.size(); ++i) position.emplace(basis[i], i);
  }

  std::size_t size() const { return basis.size(); }

  std::optional<std::size_t> local(const Monomial& m) const {
    auto it = position.find(m);
    if (it == position.end()) return std::nullopt;
    return it->second;
  }

  /// Global decision index of moment m.
  std::size_t global(const Monomial& m) const {
    auto it = position.find(m);
    if (it == position.end())
      throw ConfigurationError("moment outside the truncation of measure " + name);
    return offset + it->second;
  }
};

/// PSD block M_{d-d_k}(w y): entry (i,j) is sum_gamma w_gamma y[gamma + rows_i + rows_j].
struct MomentMatrixSpec {
  std::size_t measure = 0;
  std::string label;
  std::vector<Monomial> rows;
  Polynomial multiplier;
  std::vector<SparseCombo> upper;  ///< row-major upper triangle, i <= j

  std::size_t side() const { return rows.size(); }

  const SparseCombo& entry(std::size_t i, std::size_t j) const {
    if (i > j) std::swap(i, j);
    const std::size_t n = rows.size();
    return upper[i * n - i * (i + 1) / 2 + j];
  }
};

/// Moment matrix of `measure` at order d (multiplier 1).
inline MomentMatrixSpec build_moment_matrix_spec(const MeasureMoments& measure,
                                                 std::size_t measure_id, int d,
                                                 const VarSpacePtr& space,
                                                 std::string label = {}) {
  MomentMatrixSpec spec;
  spec.measure = measure_id;
  spec.label = label.empty() ? "M_" + std::to_string(d) + "(" + measure.name + ")" : label;
  spec.rows = monomial_basis(space->size(), measure.vars, d);
  spec.multiplier = Polynomial::constant(space, 1.0);
  const std::size_t n = spec.rows.size();
  spec.upper.reserve(n * (n + 1) / 2);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j)
      spec.upper.push_back({{measure.global(spec.rows[i] * spec.rows[j]), 1.0}});
  return spec;
}

/// Localizing matrices for every inequality of `set`; multipliers are
/// normalized to unit max coefficient. Constant inequalities are skipped when
/// nonnegative (and rejected when negative).
inline std::vector<MomentMatrixSpec> build_localizing_specs(const MeasureMoments& measure,
                                                            std::size_t measure_id,
                                                            const std::vector<Polynomial>& set,
                                                            int d, const std::string& set_name) {
  std::vector<MomentMatrixSpec> out;
  for (std::size_t k = 0; k < set.size(); ++k) {
    const Polynomial& w = set[k];
    if (w.degree() == 0) {
      if (w.is_zero() || w.terms().begin()->second >= 0.0) continue;
      throw ConfigurationError(set_name + " constraint " + std::to_string(k) +
                               " is a negative constant: the set is empty");
    }
    const int dk = (w.degree() + 1) / 2;
    if (d < dk)
      throw ConfigurationError("relaxation order " + std::to_string(d) + " is below ceil(deg/2)=" +
                               std::to_string(dk) + " for " + set_name + " constraint '" +
                               to_string(w) + "'");
    const Polynomial normalized = w * (1.0 / w.max_abs_coefficient());
    MomentMatrixSpec spec;
    spec.measure = measure_id;
    spec.label = "M_" + std::to_string(d - dk) + "(w" + std::to_string(k) + " " + measure.name +
                 ")[" + set_name + "]";
    spec.rows = monomial_basis(w.space()->size(), measure.vars, d - dk);
    spec.multiplier = normalized;
    const std::size_t n = spec.rows.size();
    spec.upper.reserve(n * (n + 1) / 2);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i; j < n; ++j) {
        const Monomial base = spec.rows[i] * spec.rows[j];
        SparseCombo combo;
        for (const auto& [gamma, c] : normalized.terms())
          combo.emplace_back(measure.global(base * gamma), c);
        normalize_combo(combo);
        spec.upper.push_back(std::move(combo));
      }
    }
    out.push_back(std::move(spec));
  }
  return out;
}

struct EqualityRow {
  SparseCombo coeffs;
  double rhs = 0.0;
  std::string label;
  std::optional<Monomial> test;  ///< Liouville test monomial, if this is a Liouville row
};

struct AssemblyOptions {
  /// Include t^b kappa^a test functions (needed to read tau off the terminal measure).
  bool time_dependent_tests = true;
  /// Optional extra cap on the total degree of test monomials.
  std::optional<int> test_degree_cap;
};

struct AssemblyReport {
  std::size_t liouville_rows = 0;
  std::size_t skipped_tests = 0;  ///< tests whose L_f exceeds degree 2d
  bool time_dependent_tests = true;
  std::vector<std::string> notes;
};

struct RelaxedProblem {
  int order = 0;
  VarSpacePtr space;
  std::vector<std::size_t> states;
  std::vector<std::size_t> controls;
  std::optional<std::size_t> time;
  std::size_t extended_parameters = 0;
  std::vector<double> factual;  ///< scaled factual (physical part pinned in mu_0)

  std::vector<MeasureMoments> measures;
  std::size_t occupation = 0;
  std::size_t terminal = 1;
  std::optional<std::size_t> initial;
  std::size_t num_vars = 0;

  std::vector<EqualityRow> equalities;
  std::vector<MomentMatrixSpec> blocks;
  SparseCombo objective;
  AssemblyReport report;

  const MeasureMoments& occupation_moments() const { return measures[occupation]; }
  const MeasureMoments& terminal_moments() const { return measures[terminal]; }

  double moment(std::span<const double> y, std::size_t measure, const Monomial& m) const {
    return y[measures[measure].global(m)];
  }

  Monomial unit(std::size_t var) const {
    Monomial m(space->size());
    m.exponents[var] = 1;
    return m;
  }

  Monomial one() const { return Monomial(space->size()); }
};

namespace detail {

/// Known-case initial side: phi(0, x_f). Uncertain case: x_f^a * y0[zeta^b] when phi is time-free.
struct InitialSide {
  const RelaxedProblem& problem;
  const std::vector<std::size_t>& physical;  // pinned state variables
  const std::vector<double>& pinned;         // their values

  /// Adds -<phi(0,.), mu_0> to the row (moved to rhs in the known case).
  void apply(const Monomial& phi, EqualityRow& row) const {
    if (problem.time && phi[*problem.time] > 0) return;
    double factor = 1.0;
    Monomial rest = phi;
    for (std::size_t i = 0; i < physical.size(); ++i) {
      factor *= std::pow(pinned[i], phi[physical[i]]);
      rest.exponents[physical[i]] = 0;
    }
    if (!problem.initial) {
      row.rhs += factor;
      return;
    }
    if (factor != 0.0)
      row.coeffs.emplace_back(problem.measures[*problem.initial].global(rest), -factor);
  }
};

inline RelaxedProblem assemble(const OcpSpec& spec, int d, const AssemblyOptions& options,
                               bool uncertain) {
  if (d < 1) throw ConfigurationError("relaxation order must be at least 1");
  const auto& space = spec.space;
  const std::size_t dim = space->size();
  RelaxedProblem problem;
  problem.order = d;
  problem.space = space;
  problem.states = spec.states;
  problem.controls = spec.controls;
  problem.time = space->time_index();
  problem.extended_parameters = spec.extended_parameters;
  problem.factual = spec.factual;
  problem.report.time_dependent_tests = options.time_dependent_tests && problem.time.has_value();

  std::vector<std::size_t> occupation_vars, terminal_vars;
  if (problem.time) {
    occupation_vars.push_back(*problem.time);
    terminal_vars.push_back(*problem.time);
  }
  for (std::size_t s : spec.states) {
    occupation_vars.push_back(s);
    terminal_vars.push_back(s);
  }
  for (std::size_t c : spec.controls) occupation_vars.push_back(c);
  std::sort(occupation_vars.begin(), occupation_vars.end());
  std::sort(terminal_vars.begin(), terminal_vars.end());

  const int D = 2 * d;
  problem.measures.emplace_back("occupation", dim, occupation_vars, D, 0);
  problem.occupation = 0;
  problem.measures.emplace_back("terminal", dim, terminal_vars, D, problem.measures[0].size());
  problem.terminal = 1;

  const std::size_t physical_count = spec.states.size() - spec.extended_parameters;
  std::vector<std::size_t> physical(spec.states.begin(),
                                    spec.states.begin() + static_cast<std::ptrdiff_t>(physical_count));
  std::vector<double> pinned(spec.factual.begin(),
                             spec.factual.begin() + static_cast<std::ptrdiff_t>(physical_count));
  if (uncertain) {
    std::vector<std::size_t> zeta(spec.states.begin() + static_cast<std::ptrdiff_t>(physical_count),
                                  spec.states.end());
    std::sort(zeta.begin(), zeta.end());
    const std::size_t off = problem.measures[0].size() + problem.measures[1].size();
    problem.measures.emplace_back("initial", dim, zeta, D, off);
    problem.initial = 2;
  }
  problem.num_vars = 0;
  for (const auto& m : problem.measures) problem.num_vars += m.size();

  // Support constraints.
  std::vector<Polynomial> time_box;
  if (problem.time)
    time_box.push_back(interval_constraint(space, *problem.time, (*space)[*problem.time].lower,
                                           (*space)[*problem.time].upper));
  auto add_blocks = [&](std::size_t id, const std::vector<std::vector<Polynomial>>& sets,
                        const std::vector<std::string>& names) {
    const auto& meas = problem.measures[id];
    problem.blocks.push_back(build_moment_matrix_spec(meas, id, d, space));
    for (std::size_t s = 0; s < sets.size(); ++s) {
      auto loc = build_localizing_specs(meas, id, sets[s], d, names[s]);
      for (auto& b : loc) problem.blocks.push_back(std::move(b));
    }
  };
  add_blocks(problem.occupation,
             {time_box, spec.path.inequalities, spec.control_set.inequalities},
             {"time", "X", "U"});
  add_blocks(problem.terminal, {time_box, spec.path.inequalities, spec.terminal.inequalities},
             {"time", "X", "XT"});
  if (uncertain) {
    std::vector<Polynomial> pinned_initial;
    for (const auto& w : spec.initial.inequalities) {
      Polynomial r = w;
      for (std::size_t i = 0; i < physical.size(); ++i) r = substitute_value(r, physical[i], pinned[i]);
      pinned_initial.push_back(std::move(r));
    }
    add_blocks(*problem.initial, {pinned_initial}, {"X0"});
  }

  // Objective: moment of sum_j u_j^2 under the occupation measure.
  const auto& occ = problem.measures[problem.occupation];
  for (std::size_t c : spec.controls) {
    Monomial m(dim);
    m.exponents[c] = 2;
    problem.objective.emplace_back(occ.global(m), 1.0);
  }
  normalize_combo(problem.objective);

  // Liouville rows.
  const VectorField field = spec.field();
  const bool with_time = problem.report.time_dependent_tests;
  std::vector<std::size_t> test_vars = spec.states;
  if (with_time) test_vars.push_back(*problem.time);
  std::sort(test_vars.begin(), test_vars.end());
  int test_degree = D;
  if (options.test_degree_cap) test_degree = std::min(test_degree, *options.test_degree_cap);
  const InitialSide initial{problem, physical, pinned};
  const auto& term = problem.measures[problem.terminal];
  for (const auto& phi : monomial_basis(dim, test_vars, test_degree)) {
    const Polynomial test = Polynomial::monomial(space, phi);
    const Polynomial lf = lie_derivative(test, field, with_time);
    if (lf.degree() > D) {
      ++problem.report.skipped_tests;
      continue;
    }
    EqualityRow row;
    row.test = phi;
    row.label = "liouville[" + monomial_to_string(phi, *space) + "]";
    row.coeffs.emplace_back(term.global(phi), 1.0);
    for (const auto& [m, c] : lf.terms()) row.coeffs.emplace_back(occ.global(m), -c);
    initial.apply(phi, row);
    normalize_combo(row.coeffs);
    problem.equalities.push_back(std::move(row));
  }
  problem.report.liouville_rows = problem.equalities.size();
  if (problem.report.skipped_tests > 0)
    problem.report.notes.push_back(std::to_string(problem.report.skipped_tests) +
                                   " test functions dropped: L_f exceeds degree " +
                                   std::to_string(D));
  problem.report.notes.push_back(with_time ? "time-dependent test functions included"
                                           : "time-free test functions only");

  if (uncertain) {
    EqualityRow mass;
    mass.label = "mass(initial)";
    mass.coeffs.emplace_back(problem.measures[*problem.initial].global(problem.one()), 1.0);
    mass.rhs = 1.0;
    problem.equalities.push_back(std::move(mass));
  }
  return problem;
}

}  // namespace detail

/// Liouville rows only, for a spec whose factual is pinned (known case).
inline std::vector<EqualityRow> assemble_liouville(const OcpSpec& scaled_spec, int d,
                                                   const AssemblyOptions& options = {}) {
  return detail::assemble(scaled_spec, d, options, false).equalities;
}

/// Known system: mu_0 is the Dirac at the factual.
inline RelaxedProblem assemble_known(const OcpSpec& scaled_spec, int d,
                                     const AssemblyOptions& options = {}) {
  if (scaled_spec.extended_parameters != 0)
    throw ConfigurationError("assemble_known expects a spec without extended parameters");
  return detail::assemble(scaled_spec, d, options, false);
}

/// Uncertain system over the extended state: mu_0 is a decision measure of unit
/// mass on {x_f} x Sigma.
inline RelaxedProblem assemble_uncertain(const OcpSpec& scaled_extended_spec, int d,
                                         const AssemblyOptions& options = {}) {
  if (scaled_extended_spec.extended_parameters == 0)
    throw ConfigurationError("assemble_uncertain expects a parameter-extended spec");
  return detail::assemble(scaled_extended_spec, d, options, true);
}

}  // namespace occf
