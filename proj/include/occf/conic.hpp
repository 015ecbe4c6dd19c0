#pragma once

// Solver-neutral conic form, PSD projection and the pieces shared by the solvers.
//
//   minimize   c'y
//   subject to A y = b
//              S_k(y) = sum_i y_i F_{k,i} + F_{k,0}  PSD for every block k
//
// Dual: maximize b'nu - sum_k <Z_k, F_{k,0}>  s.t.  A'nu + sum_k F_k*(Z_k) = c, Z_k PSD.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseQR>
#include <lapacke.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "occf/errors.hpp"
#include "occf/format.hpp"
#include "occf/moments.hpp"

namespace occf {

inline constexpr std::size_t kConstantTerm = std::numeric_limits<std::size_t>::max();

struct BlockEntry {
  std::size_t i = 0;  ///< row, i <= j
  std::size_t j = 0;
  std::size_t var = kConstantTerm;  ///< decision index, or kConstantTerm for F_0
  double value = 0.0;

  friend bool operator==(const BlockEntry&, const BlockEntry&) = default;
};

struct ConeBlock {
  std::size_t side = 0;
  std::string label;
  std::vector<BlockEntry> entries;
};

struct LinearRow {
  SparseCombo coeffs;
  double rhs = 0.0;
  std::string label;
};

struct ConicProblem {
  std::size_t num_vars = 0;
  std::vector<double> objective;
  std::vector<LinearRow> equalities;
  std::vector<ConeBlock> blocks;

  /// Sorts block entries by (var, i, j) with the constant term first; merges duplicates.
  void canonicalize() {
    for (auto& block : blocks) {
      for (auto& e : block.entries)
        if (e.i > e.j) std::swap(e.i, e.j);
      auto key = [](const BlockEntry& e) {
        const std::size_t v = e.var == kConstantTerm ? 0 : e.var + 1;
        return std::tuple(v, e.i, e.j);
      };
      std::stable_sort(block.entries.begin(), block.entries.end(),
                       [&](const BlockEntry& a, const BlockEntry& b) { return key(a) < key(b); });
      std::vector<BlockEntry> merged;
      for (const auto& e : block.entries) {
        if (!merged.empty() && key(merged.back()) == key(e))
          merged.back().value += e.value;
        else
          merged.push_back(e);
      }
      std::erase_if(merged, [](const BlockEntry& e) { return e.value == 0.0; });
      block.entries = std::move(merged);
    }
    for (auto& row : equalities) normalize_combo(row.coeffs);
  }

  void validate() const {
    if (objective.size() != num_vars)
      throw StructuralError("objective has " + std::to_string(objective.size()) +
                            " entries for " + std::to_string(num_vars) + " variables");
    for (std::size_t r = 0; r < equalities.size(); ++r)
      for (const auto& [idx, v] : equalities[r].coeffs)
        if (idx >= num_vars)
          throw StructuralError("equality " + std::to_string(r) + " references variable " +
                                std::to_string(idx));
    for (std::size_t k = 0; k < blocks.size(); ++k) {
      if (blocks[k].side == 0) throw StructuralError("block " + std::to_string(k) + " is empty");
      for (const auto& e : blocks[k].entries) {
        if (e.i >= blocks[k].side || e.j >= blocks[k].side)
          throw StructuralError("block " + std::to_string(k) + " entry outside its side");
        if (e.var != kConstantTerm && e.var >= num_vars)
          throw StructuralError("block " + std::to_string(k) + " references variable " +
                                std::to_string(e.var));
      }
    }
  }
};

inline ConicProblem to_conic(const RelaxedProblem& relaxed) {
  ConicProblem out;
  out.num_vars = relaxed.num_vars;
  out.objective.assign(relaxed.num_vars, 0.0);
  for (const auto& [i, v] : relaxed.objective) out.objective[i] += v;
  for (const auto& row : relaxed.equalities) out.equalities.push_back({row.coeffs, row.rhs, row.label});
  for (const auto& spec : relaxed.blocks) {
    ConeBlock block;
    block.side = spec.side();
    block.label = spec.label;
    const std::size_t n = spec.side();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i; j < n; ++j)
        for (const auto& [var, v] : spec.entry(i, j)) block.entries.push_back({i, j, var, v});
    out.blocks.push_back(std::move(block));
  }
  out.canonicalize();
  return out;
}

// ---------------------------------------------------------------------------
// PSD projection

namespace detail {

/// Eigenpairs of a symmetric matrix with eigenvalues in (lo, hi]. `a` is overwritten.
inline void eigen_range(Eigen::MatrixXd& a, double lo, double hi, Eigen::VectorXd& values,
                        Eigen::MatrixXd& vectors) {
  const lapack_int n = static_cast<lapack_int>(a.rows());
  lapack_int found = 0;
  Eigen::VectorXd w(n);
  Eigen::MatrixXd z(n, std::max<lapack_int>(n, 1));
  std::vector<lapack_int> support(2 * static_cast<std::size_t>(std::max<lapack_int>(n, 1)));
  const lapack_int info =
      LAPACKE_dsyevr(LAPACK_COL_MAJOR, 'V', 'V', 'L', n, a.data(), n, lo, hi, 0, 0, 0.0, &found,
                     w.data(), z.data(), n, support.data());
  if (info != 0)
    throw NumericalError("symmetric eigensolver failed to converge (info " +
                         std::to_string(info) + ")");
  values = w.head(found);
  vectors = z.leftCols(found);
}

}  // namespace detail

/// Smallest eigenvalue of a symmetric matrix.
inline double min_eigenvalue(const Eigen::MatrixXd& m) {
  if (m.rows() == 0) return 0.0;
  Eigen::MatrixXd a = m;
  const lapack_int n = static_cast<lapack_int>(a.rows());
  lapack_int found = 0;
  Eigen::VectorXd w(n);
  double z = 0.0;
  lapack_int support[2];
  const lapack_int info = LAPACKE_dsyevr(LAPACK_COL_MAJOR, 'N', 'I', 'L', n, a.data(), n, 0.0,
                                         0.0, 1, 1, 0.0, &found, w.data(), &z, 1, support);
  if (info != 0) throw NumericalError("symmetric eigensolver failed to converge");
  return w[0];
}

inline Eigen::VectorXd eigenvalues(const Eigen::MatrixXd& m) {
  Eigen::MatrixXd a = m;
  const lapack_int n = static_cast<lapack_int>(a.rows());
  Eigen::VectorXd w(n);
  if (n == 0) return w;
  const lapack_int info = LAPACKE_dsyev(LAPACK_COL_MAJOR, 'N', 'L', n, a.data(), n, w.data());
  if (info != 0) throw NumericalError("symmetric eigensolver failed to converge");
  return w;
}

/// Nearest PSD matrix in Frobenius norm. `negative_hint` selects which side of
/// the spectrum to compute (true: compute the negative part and subtract).
inline Eigen::MatrixXd project_psd(const Eigen::MatrixXd& m, bool negative_hint = false,
                                   std::size_t* positive_count = nullptr) {
  if (m.rows() != m.cols()) throw StructuralError("project_psd needs a square matrix");
  const Eigen::Index n = m.rows();
  if (n == 0) return m;
  Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  if (!sym.allFinite()) throw NumericalError("project_psd received non-finite entries");
  const double bound = sym.norm() + 1.0;
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;
  Eigen::MatrixXd work = sym;
  if (negative_hint) {
    detail::eigen_range(work, -bound, 0.0, values, vectors);
    if (positive_count) *positive_count = static_cast<std::size_t>(n - values.size());
    Eigen::MatrixXd out = sym;
    if (values.size() > 0) out.noalias() -= vectors * values.asDiagonal() * vectors.transpose();
    return 0.5 * (out + out.transpose());
  }
  detail::eigen_range(work, 0.0, bound, values, vectors);
  if (positive_count) *positive_count = static_cast<std::size_t>(values.size());
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, n);
  if (values.size() > 0) out.noalias() = vectors * values.asDiagonal() * vectors.transpose();
  return 0.5 * (out + out.transpose());
}

// ---------------------------------------------------------------------------
// Solver

enum class SolveStatus { optimal, infeasible, unbounded_direction, max_iterations };

inline std::string to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::infeasible: return "infeasible";
    case SolveStatus::unbounded_direction: return "unbounded-direction";
    case SolveStatus::max_iterations: return "max-iterations";
  }
  return "unknown";
}

enum class SolverMethod { interior_point, admm };

inline std::string to_string(SolverMethod m) {
  return m == SolverMethod::admm ? "admm" : "interior-point";
}

struct SolverConfig {
  SolverMethod method = SolverMethod::interior_point;
  double tol_feas = 1e-7;
  double tol_psd = 1e-8;
  double tol_gap = 1e-6;
  std::size_t max_iterations = 200000;  ///< ADMM iterations
  std::size_t ipm_max_iterations = 150;
  double ipm_step_fraction = 0.95;
  double time_limit_seconds = 0.0;  ///< 0 disables
  double alpha = 1.6;               ///< over-relaxation
  double rho = 0.1;
  double sigma = 1e-6;
  bool adaptive_rho = true;
  std::size_t check_interval = 25;
  double divergence_threshold = 1e8;
  double certificate_tol = 1e-7;
  int equilibration_passes = 15;
  double drop_row_norm = 1e-12;
  double rank_threshold = 1e-10;
  bool trace = false;
  std::size_t trace_interval = 250;
};

struct PreprocessReport {
  std::size_t original_rows = 0;
  std::vector<std::size_t> zero_rows;       ///< dropped by norm
  std::vector<std::size_t> dependent_rows;  ///< dropped by rank-revealing QR
  std::size_t kept_rows = 0;
};

struct SolverResult {
  SolveStatus status = SolveStatus::max_iterations;
  SolverMethod method = SolverMethod::interior_point;
  std::vector<double> primal;
  std::vector<double> equality_duals;     ///< one per original row; dropped rows get 0
  std::vector<Eigen::MatrixXd> block_duals;
  double objective = 0.0;       ///< primal c'y
  double dual_objective = 0.0;  ///< b'nu - <Z, F_0>
  double primal_residual = 0.0;  ///< max of equality and cone residuals, relative
  double dual_residual = 0.0;    ///< ||c - A'nu - F*(Z)||_inf / (1 + ||c||_inf)
  double min_block_eigenvalue = 0.0;
  double duality_gap = 0.0;  ///< |p - d| / (1 + |p| + |d|)
  std::size_t iterations = 0;
  double seconds = 0.0;
  PreprocessReport preprocessing;
  std::vector<std::string> trace;
};

namespace detail {

using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

struct SvecLayout {
  std::vector<std::size_t> offset;  ///< start of each block in the stacked svec
  std::vector<std::size_t> side;
  std::size_t total = 0;

  explicit SvecLayout(const std::vector<ConeBlock>& blocks) {
    for (const auto& b : blocks) {
      offset.push_back(total);
      side.push_back(b.side);
      total += b.side * (b.side + 1) / 2;
    }
  }

  std::size_t index(std::size_t k, std::size_t i, std::size_t j) const {
    if (i > j) std::swap(i, j);
    const std::size_t n = side[k];
    return offset[k] + i * n - i * (i + 1) / 2 + j;
  }
};

inline Eigen::MatrixXd svec_unpack(const Eigen::VectorXd& s, const SvecLayout& layout,
                                   std::size_t k) {
  const std::size_t n = layout.side[k];
  Eigen::MatrixXd m(n, n);
  std::size_t p = layout.offset[k];
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  for (std::size_t i = 0; i < n; ++i) {
    m(i, i) = s[p++];
    for (std::size_t j = i + 1; j < n; ++j) m(i, j) = m(j, i) = s[p++] * inv_sqrt2;
  }
  return m;
}

inline void svec_pack(const Eigen::MatrixXd& m, const SvecLayout& layout, std::size_t k,
                      Eigen::VectorXd& s) {
  const std::size_t n = layout.side[k];
  std::size_t p = layout.offset[k];
  constexpr double sqrt2 = 1.41421356237309504880;
  for (std::size_t i = 0; i < n; ++i) {
    s[p++] = m(i, i);
    for (std::size_t j = i + 1; j < n; ++j) s[p++] = m(i, j) * sqrt2;
  }
}

/// Stacked svec operator M and constant m0 such that svec(S(y)) = M y + m0.
inline void build_cone_operator(const ConicProblem& p, const SvecLayout& layout, SpMat& m,
                                Eigen::VectorXd& m0) {
  std::vector<Triplet> triplets;
  m0 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(layout.total));
  constexpr double sqrt2 = 1.41421356237309504880;
  for (std::size_t k = 0; k < p.blocks.size(); ++k) {
    for (const auto& e : p.blocks[k].entries) {
      const double w = e.i == e.j ? 1.0 : sqrt2;
      const std::size_t row = layout.index(k, e.i, e.j);
      if (e.var == kConstantTerm)
        m0[static_cast<Eigen::Index>(row)] += w * e.value;
      else
        triplets.emplace_back(static_cast<int>(row), static_cast<int>(e.var), w * e.value);
    }
  }
  m.resize(static_cast<Eigen::Index>(layout.total), static_cast<Eigen::Index>(p.num_vars));
  m.setFromTriplets(triplets.begin(), triplets.end());
  m.makeCompressed();
}

inline SpMat build_equality_matrix(const ConicProblem& p, const std::vector<std::size_t>& rows) {
  std::vector<Triplet> triplets;
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (const auto& [idx, v] : p.equalities[rows[r]].coeffs)
      triplets.emplace_back(static_cast<int>(r), static_cast<int>(idx), v);
  SpMat a(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(p.num_vars));
  a.setFromTriplets(triplets.begin(), triplets.end());
  a.makeCompressed();
  return a;
}

inline double inf_norm(const Eigen::VectorXd& v) { return v.size() ? v.lpNorm<Eigen::Infinity>() : 0.0; }

/// Drops zero rows and linearly dependent rows (column-pivoted QR of A').
inline std::vector<std::size_t> preprocess_rows(const ConicProblem& p, const SolverConfig& cfg,
                                                PreprocessReport& report) {
  report.original_rows = p.equalities.size();
  std::vector<std::size_t> candidates;
  for (std::size_t r = 0; r < p.equalities.size(); ++r) {
    double norm2 = 0.0;
    for (const auto& [idx, v] : p.equalities[r].coeffs) norm2 += v * v;
    if (std::sqrt(norm2) < cfg.drop_row_norm)
      report.zero_rows.push_back(r);
    else
      candidates.push_back(r);
  }
  if (candidates.empty()) {
    report.kept_rows = 0;
    return candidates;
  }
  SpMat a = build_equality_matrix(p, candidates);
  SpMat at = a.transpose();
  at.makeCompressed();
  Eigen::SparseQR<SpMat, Eigen::COLAMDOrdering<int>> qr;
  qr.setPivotThreshold(cfg.rank_threshold);
  qr.compute(at);
  if (qr.info() != Eigen::Success) throw NumericalError("rank-revealing QR of the equalities failed");
  const Eigen::Index rank = qr.rank();
  const auto& perm = qr.colsPermutation().indices();
  std::vector<char> keep(candidates.size(), 0);
  for (Eigen::Index i = 0; i < rank; ++i) keep[static_cast<std::size_t>(perm[i])] = 1;
  std::vector<std::size_t> kept;
  for (std::size_t r = 0; r < candidates.size(); ++r) {
    if (keep[r])
      kept.push_back(candidates[r]);
    else
      report.dependent_rows.push_back(candidates[r]);
  }
  report.kept_rows = kept.size();
  return kept;
}


/// Matrices shared by both methods, in the caller's units.
struct ProblemData {
  const ConicProblem& problem;
  SvecLayout layout;
  PreprocessReport preprocessing;
  std::vector<std::size_t> rows;  ///< kept equality rows
  SpMat a_full, a, m;
  Eigen::VectorXd b_full, b, c, m0;

  ProblemData(const ConicProblem& p, const SolverConfig& cfg) : problem(p), layout(p.blocks) {
    rows = preprocess_rows(p, cfg, preprocessing);
    std::vector<std::size_t> all(p.equalities.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    a_full = build_equality_matrix(p, all);
    a = build_equality_matrix(p, rows);
    b_full.resize(static_cast<Eigen::Index>(all.size()));
    for (std::size_t r = 0; r < all.size(); ++r) b_full[static_cast<Eigen::Index>(r)] = p.equalities[r].rhs;
    b.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r)
      b[static_cast<Eigen::Index>(r)] = p.equalities[rows[r]].rhs;
    c = Eigen::Map<const Eigen::VectorXd>(p.objective.data(), static_cast<Eigen::Index>(p.num_vars));
    build_cone_operator(p, layout, m, m0);
  }

  /// Expands multipliers of the kept rows to all rows (dropped rows get 0).
  Eigen::VectorXd expand_duals(const Eigen::VectorXd& kept) const {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(b_full.size());
    for (std::size_t r = 0; r < rows.size(); ++r)
      out[static_cast<Eigen::Index>(rows[r])] = kept[static_cast<Eigen::Index>(r)];
    return out;
  }

  double min_block_eigenvalue(const Eigen::VectorXd& svec) const {
    double lo = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < layout.side.size(); ++k)
      lo = std::min(lo, min_eigenvalue(svec_unpack(svec, layout, k)));
    return layout.side.empty() ? 0.0 : lo;
  }
};

struct SolutionMetrics {
  double primal_eq = 0, primal_cone = 0, dual = 0, gap = 0, pobj = 0, dobj = 0;
  double min_eig = 0;
  bool converged = false;
};

/// Residuals of (y, s, Z, nu) with nu indexed by all rows; s is the cone iterate
/// (equal to S(y) for an exactly feasible point).
inline SolutionMetrics solution_metrics(const ProblemData& data, const SolverConfig& cfg,
                                        const Eigen::VectorXd& y, const Eigen::VectorXd& s,
                                        const Eigen::VectorXd& z, const Eigen::VectorXd& nu) {
  SolutionMetrics met;
  met.primal_eq = inf_norm(data.a_full * y - data.b_full) / (1.0 + inf_norm(data.b_full));
  const Eigen::VectorXd sy = data.m * y + data.m0;
  met.primal_cone = inf_norm(sy - s) / (1.0 + std::max(inf_norm(sy), inf_norm(s)));
  const Eigen::VectorXd stat = data.c - data.m.transpose() * z - data.a_full.transpose() * nu;
  met.dual = inf_norm(stat) / (1.0 + inf_norm(data.c));
  met.pobj = data.c.dot(y);
  met.dobj = data.b_full.dot(nu) - data.m0.dot(z);
  met.gap = std::abs(met.pobj - met.dobj) / (1.0 + std::abs(met.pobj) + std::abs(met.dobj));
  met.converged = met.primal_eq < cfg.tol_feas && met.primal_cone < cfg.tol_feas &&
                  met.dual < cfg.tol_feas && met.gap < cfg.tol_gap;
  if (met.converged) {
    met.min_eig = data.min_block_eigenvalue(sy);
    met.converged = met.min_eig > -cfg.tol_psd;
  }
  return met;
}

inline std::string trace_text(std::size_t it, const SolutionMetrics& met, double step_or_rho,
                              const char* step_name) {
  std::ostringstream os;
  os << "iter " << it << " pobj " << format_double(met.pobj) << " dobj " << format_double(met.dobj)
     << " res_eq " << format_double(met.primal_eq) << " res_cone " << format_double(met.primal_cone)
     << " res_dual " << format_double(met.dual) << " gap " << format_double(met.gap) << " "
     << step_name << " " << format_double(step_or_rho);
  return os.str();
}

/// Copies a final iterate into the result record.
inline void fill_result(SolverResult& out, const ProblemData& data, const SolverConfig& cfg,
                        const Eigen::VectorXd& y, const Eigen::VectorXd& s,
                        const Eigen::VectorXd& z, const Eigen::VectorXd& nu_all) {
  out.primal.assign(y.data(), y.data() + y.size());
  out.equality_duals.assign(nu_all.data(), nu_all.data() + nu_all.size());
  out.block_duals.clear();
  for (std::size_t k = 0; k < data.layout.side.size(); ++k)
    out.block_duals.push_back(svec_unpack(z, data.layout, k));
  const SolutionMetrics met = solution_metrics(data, cfg, y, s, z, nu_all);
  out.objective = met.pobj;
  out.dual_objective = met.dobj;
  out.primal_residual = std::max(met.primal_eq, met.primal_cone);
  out.dual_residual = met.dual;
  out.duality_gap = met.gap;
  out.min_block_eigenvalue = data.min_block_eigenvalue(data.m * y + data.m0);
  out.preprocessing = data.preprocessing;
}

}  // namespace detail

}  // namespace occf
