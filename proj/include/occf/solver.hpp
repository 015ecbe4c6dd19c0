#pragma once

#include "occf/admm.hpp"
#include "occf/ipm.hpp"

namespace occf {

/// Solves the conic problem with the configured method. Deterministic for a
/// fixed problem and configuration.
inline SolverResult solve(const ConicProblem& problem, const SolverConfig& config = {}) {
  problem.validate();
  if (!(config.tol_feas > 0 && config.tol_gap > 0 && config.tol_psd > 0))
    throw ConfigurationError("solver tolerances must be positive");
  if (config.check_interval == 0) throw ConfigurationError("check interval must be positive");
  if (!(config.alpha > 0.0 && config.alpha < 2.0))
    throw ConfigurationError("over-relaxation must lie in (0, 2)");
  if (!(config.ipm_step_fraction > 0.0 && config.ipm_step_fraction < 1.0))
    throw ConfigurationError("interior-point step fraction must lie in (0, 1)");
  const detail::ProblemData data(problem, config);
  // A zero row with nonzero right-hand side has no solution.
  for (std::size_t r : data.preprocessing.zero_rows) {
    if (std::abs(problem.equalities[r].rhs) > config.tol_feas) {
      SolverResult result;
      result.method = config.method;
      result.status = SolveStatus::infeasible;
      result.preprocessing = data.preprocessing;
      result.primal.assign(problem.num_vars, 0.0);
      result.equality_duals.assign(problem.equalities.size(), 0.0);
      return result;
    }
  }
  if (config.method == SolverMethod::admm) return detail::AdmmWorkspace(data, config).run();
  return detail::InteriorPointWorkspace(data, config).run();
}

}  // namespace occf
