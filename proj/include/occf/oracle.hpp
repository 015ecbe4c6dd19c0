#pragma once

// Direct-method baseline: piecewise-constant controls, RK4 simulation and a
// penalized projected-gradient search. Produces feasible upper bounds for the
// relaxation values.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <future>
#include <limits>
#include <random>
#include <vector>

#include <nlohmann/json.hpp>

#include "occf/ocp.hpp"

namespace occf {

namespace detail {

/// Flat term list for repeated evaluation.
class CompiledPolynomial {
 public:
  CompiledPolynomial() = default;
  explicit CompiledPolynomial(const Polynomial& p) {
    for (const auto& [mono, coef] : p.terms()) {
      Term t{coef, {}};
      for (std::size_t v = 0; v < mono.exponents.size(); ++v)
        if (mono.exponents[v] > 0) t.factors.emplace_back(v, mono.exponents[v]);
      terms_.push_back(std::move(t));
    }
  }

  double operator()(const std::vector<double>& point) const {
    double sum = 0.0;
    for (const auto& t : terms_) {
      double v = t.coef;
      for (const auto& [var, e] : t.factors) {
        const double x = point[var];
        double p = x;
        for (int k = 1; k < e; ++k) p *= x;
        v *= p;
      }
      sum += v;
    }
    return sum;
  }

  bool empty() const { return terms_.empty(); }

 private:
  struct Term {
    double coef;
    std::vector<std::pair<std::size_t, int>> factors;
  };
  std::vector<Term> terms_;
};

}  // namespace detail

struct DirectOptions {
  std::size_t intervals = 64;
  std::size_t restarts = 16;
  std::uint64_t seed = 1;
  std::size_t substeps = 4;           ///< RK4 steps per control interval
  double initial_penalty = 10.0;
  double penalty_growth = 10.0;
  double max_penalty = 1e8;
  double feasibility_tol = 1e-6;
  std::size_t max_iterations = 300;   ///< projected-gradient iterations, first round
  std::size_t round_iterations = 60;  ///< later rounds start from the previous round
  double fd_step = 1e-7;
  std::size_t workers = 1;
};

struct DirectSolution {
  std::vector<std::vector<double>> control;  ///< intervals x controls
  double cost = std::numeric_limits<double>::infinity();
  std::vector<double> terminal_state;        ///< scaled, at the entry time
  std::size_t terminal_index = 0;            ///< grid index of first XT entry
  double terminal_time = 0.0;                ///< scaled
  bool feasible = false;
  double violation = std::numeric_limits<double>::infinity();  ///< least distance to XT on the grid
  double penalty = 0.0;
  std::size_t restart = 0;
};

inline void to_json(nlohmann::json& j, const DirectSolution& s) {
  j = nlohmann::json{{"control", s.control},
                     {"cost", s.cost},
                     {"terminal_state", s.terminal_state},
                     {"terminal_index", s.terminal_index},
                     {"terminal_time", s.terminal_time},
                     {"feasible", s.feasible},
                     {"violation", s.violation},
                     {"penalty", s.penalty},
                     {"restart", s.restart}};
}

namespace detail {

class DirectProblem {
 public:
  DirectProblem(const OcpSpec& spec, const DirectOptions& opt) : spec_(spec), opt_(opt) {
    n_ = spec.states.size();
    m_ = spec.controls.size();
    const VectorField f = spec.field();
    for (const auto& fi : f.rhs) field_.emplace_back(fi);
    auto compile = [&](const SemialgebraicSet& set, std::vector<Constraint>& out) {
      for (const auto& w : set.inequalities) {
        Constraint c{CompiledPolynomial(w), {}};
        for (std::size_t s : spec.states) c.gradient.emplace_back(partial_derivative(w, s));
        out.push_back(std::move(c));
      }
    };
    compile(spec.terminal, terminal_);
    compile(spec.path, path_);
    for (std::size_t j = 0; j < m_; ++j) {
      lo_.push_back((*spec.space)[spec.controls[j]].lower);
      hi_.push_back((*spec.space)[spec.controls[j]].upper);
    }
    base_ = spec.full_point(spec.factual);
    dt_ = spec.horizon / static_cast<double>(opt.intervals);
  }

  std::size_t dim() const { return opt_.intervals * m_; }
  double lower(std::size_t k) const { return lo_[k % m_]; }
  double upper(std::size_t k) const { return hi_[k % m_]; }

  /// Grid states x_0..x_N for the flattened control vector.
  std::vector<std::vector<double>> simulate(const std::vector<double>& u) const {
    std::vector<std::vector<double>> grid;
    grid.reserve(opt_.intervals + 1);
    std::vector<double> point = base_;
    std::vector<double> x(spec_.factual.begin(), spec_.factual.end());
    grid.push_back(x);
    const double h = dt_ / static_cast<double>(opt_.substeps);
    std::vector<double> k1(n_), k2(n_), k3(n_), k4(n_), tmp(n_);
    auto eval = [&](const std::vector<double>& state, double t, std::vector<double>& out) {
      for (std::size_t i = 0; i < n_; ++i) point[spec_.states[i]] = state[i];
      if (auto ti = spec_.space->time_index()) point[*ti] = t;
      for (std::size_t i = 0; i < n_; ++i) out[i] = field_[i](point);
    };
    for (std::size_t k = 0; k < opt_.intervals; ++k) {
      for (std::size_t j = 0; j < m_; ++j) point[spec_.controls[j]] = u[k * m_ + j];
      for (std::size_t s = 0; s < opt_.substeps; ++s) {
        const double t = dt_ * static_cast<double>(k) + h * static_cast<double>(s);
        eval(x, t, k1);
        for (std::size_t i = 0; i < n_; ++i) tmp[i] = x[i] + 0.5 * h * k1[i];
        eval(tmp, t + 0.5 * h, k2);
        for (std::size_t i = 0; i < n_; ++i) tmp[i] = x[i] + 0.5 * h * k2[i];
        eval(tmp, t + 0.5 * h, k3);
        for (std::size_t i = 0; i < n_; ++i) tmp[i] = x[i] + h * k3[i];
        eval(tmp, t + h, k4);
        for (std::size_t i = 0; i < n_; ++i) x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
      }
      grid.push_back(x);
    }
    return grid;
  }

  /// sum_k max(0, -w_k / |grad w_k|)^2, a first-order squared distance to the
  /// terminal (or path) set in scaled state units.
  double violation(const std::vector<double>& x, bool path = false) const {
    std::vector<double> point = base_;
    for (std::size_t i = 0; i < n_; ++i) point[spec_.states[i]] = x[i];
    double v = 0.0;
    for (const auto& c : path ? path_ : terminal_) {
      const double d = c.distance(point);
      if (d < 0.0) v += d * d;
    }
    return v;
  }

  bool inside(const std::vector<double>& x, bool path = false) const {
    std::vector<double> point = base_;
    for (std::size_t i = 0; i < n_; ++i) point[spec_.states[i]] = x[i];
    for (const auto& c : path ? path_ : terminal_)
      if (c.distance(point) < -opt_.feasibility_tol) return false;
    return true;
  }

  double energy(const std::vector<double>& u, std::size_t intervals) const {
    double c = 0.0;
    for (std::size_t k = 0; k < intervals * m_; ++k) c += u[k] * u[k];
    return c * dt_;
  }

  double objective(const std::vector<double>& u, double penalty) const {
    const auto grid = simulate(u);
    double best = std::numeric_limits<double>::infinity(), path = 0.0;
    for (const auto& x : grid) {
      best = std::min(best, violation(x));
      path += violation(x, true);
    }
    return energy(u, opt_.intervals) + penalty * (best + path);
  }

  DirectSolution finish(std::vector<double> u) const {
    DirectSolution sol;
    const auto grid = simulate(u);
    for (const auto& x : grid) sol.violation = std::min(sol.violation, std::sqrt(violation(x)));
    for (std::size_t k = 0; k < grid.size(); ++k) {
      if (!inside(grid[k], true)) break;
      if (!inside(grid[k])) continue;
      sol.feasible = true;
      sol.terminal_index = k;
      sol.terminal_time = dt_ * static_cast<double>(k);
      sol.terminal_state = grid[k];
      for (std::size_t i = k * m_; i < u.size(); ++i) u[i] = 0.0;
      sol.cost = energy(u, k);
      break;
    }
    if (!sol.feasible) sol.terminal_state = grid.back();
    sol.control.assign(opt_.intervals, std::vector<double>(m_));
    for (std::size_t k = 0; k < opt_.intervals; ++k)
      for (std::size_t j = 0; j < m_; ++j) sol.control[k][j] = u[k * m_ + j];
    return sol;
  }

  double project(std::size_t k, double v) const { return std::clamp(v, lower(k), upper(k)); }

 private:
  struct Constraint {
    CompiledPolynomial w;
    std::vector<CompiledPolynomial> gradient;

    double distance(const std::vector<double>& point) const {
      const double value = w(point);
      if (value >= 0.0) return value;
      double g2 = 0.0;
      for (const auto& g : gradient) {
        const double gi = g(point);
        g2 += gi * gi;
      }
      return g2 > 0.0 ? value / std::sqrt(g2) : value;
    }
  };

  const OcpSpec& spec_;
  DirectOptions opt_;
  std::size_t n_ = 0, m_ = 0;
  std::vector<CompiledPolynomial> field_;
  std::vector<Constraint> terminal_, path_;
  std::vector<double> lo_, hi_, base_;
  double dt_ = 0.0;
};

/// Forward-difference gradient, stepping inward at the upper bound.
inline std::vector<double> fd_gradient(const DirectProblem& prob, const std::vector<double>& u,
                                       double f0, double penalty, double step) {
  std::vector<double> g(u.size());
  std::vector<double> w = u;
  for (std::size_t k = 0; k < u.size(); ++k) {
    const double h = u[k] + step > prob.upper(k) ? -step : step;
    w[k] = u[k] + h;
    g[k] = (prob.objective(w, penalty) - f0) / h;
    w[k] = u[k];
  }
  return g;
}

/// Projected gradient with Barzilai-Borwein trial steps and Armijo backtracking.
inline void projected_descent(const DirectProblem& prob, std::vector<double>& u, double penalty,
                              std::size_t iterations, double fd_step) {
  double f = prob.objective(u, penalty);
  std::vector<double> g = fd_gradient(prob, u, f, penalty, fd_step);
  double alpha = 1.0 / std::max(1.0, penalty);
  std::vector<double> trial(u.size());
  for (std::size_t it = 0; it < iterations; ++it) {
    bool accepted = false;
    double step = alpha;
    double f_new = f;
    for (int bt = 0; bt < 40; ++bt) {
      double decrease = 0.0;
      for (std::size_t k = 0; k < u.size(); ++k) {
        trial[k] = prob.project(k, u[k] - step * g[k]);
        decrease += g[k] * (u[k] - trial[k]);
      }
      if (decrease <= 0.0) break;
      f_new = prob.objective(trial, penalty);
      if (f_new <= f - 1e-4 * decrease) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    const std::vector<double> g_new = fd_gradient(prob, trial, f_new, penalty, fd_step);
    double ss = 0.0, sy = 0.0;
    for (std::size_t k = 0; k < u.size(); ++k) {
      const double s = trial[k] - u[k];
      ss += s * s;
      sy += s * (g_new[k] - g[k]);
    }
    const bool small = std::abs(f - f_new) <= 1e-14 * (1.0 + std::abs(f));
    u = trial;
    g = g_new;
    f = f_new;
    if (small) break;
    alpha = sy > 0.0 ? std::clamp(ss / sy, 1e-12, 1e6) : step * 4.0;
  }
}

}  // namespace detail

/// Penalized direct search on the scaled problem from its factual. Restart r
/// starts from a uniform random control grid drawn from seed and r; restart 0
/// starts from the zero control.
inline DirectSolution solve_direct(const OcpSpec& spec, const DirectOptions& options = {}) {
  if (options.intervals == 0 || options.restarts == 0 || options.substeps == 0)
    throw ConfigurationError("direct search needs positive intervals, restarts and substeps");
  if (spec.factual.size() != spec.states.size())
    throw StructuralError("factual has the wrong dimension");
  const detail::DirectProblem prob(spec, options);

  auto run = [&](std::size_t r) {
    std::uint64_t s = options.seed + 0x9e3779b97f4a7c15ull * (r + 1);
    std::mt19937_64 rng(detail::splitmix(s));
    std::vector<double> u(prob.dim(), 0.0);
    if (r > 0)
      for (std::size_t k = 0; k < u.size(); ++k)
        u[k] = prob.lower(k) + (prob.upper(k) - prob.lower(k)) * detail::uniform01(rng);
    double penalty = options.initial_penalty;
    DirectSolution sol;
    for (std::size_t round = 0;; ++round) {
      detail::projected_descent(prob, u, penalty,
                                round == 0 ? options.max_iterations : options.round_iterations,
                                options.fd_step);
      sol = prob.finish(u);
      sol.penalty = penalty;
      if (sol.feasible || penalty >= options.max_penalty) break;
      penalty = std::min(penalty * options.penalty_growth, options.max_penalty);
    }
    sol.restart = r;
    return sol;
  };

  std::vector<DirectSolution> all(options.restarts);
  if (options.workers > 1) {
    for (std::size_t begin = 0; begin < options.restarts; begin += options.workers) {
      std::vector<std::future<DirectSolution>> jobs;
      const std::size_t end = std::min(options.restarts, begin + options.workers);
      for (std::size_t r = begin; r < end; ++r) jobs.push_back(std::async(std::launch::async, run, r));
      for (std::size_t r = begin; r < end; ++r) all[r] = jobs[r - begin].get();
    }
  } else {
    for (std::size_t r = 0; r < options.restarts; ++r) all[r] = run(r);
  }

  // Feasible minimum, ties to the lower restart index; else the least violation.
  const DirectSolution* best = nullptr;
  for (const auto& sol : all) {
    if (!best) {
      best = &sol;
      continue;
    }
    if (sol.feasible != best->feasible) {
      if (sol.feasible) best = &sol;
      continue;
    }
    if (sol.feasible ? sol.cost < best->cost : sol.violation < best->violation) best = &sol;
  }
  return *best;
}

/// Relaxation lower bound against a feasible direct cost.
inline bool verify_bound(double relaxation_value, double oracle_cost, double slack = 1e-5) {
  return relaxation_value <= oracle_cost + slack;
}

}  // namespace occf
