#pragma once

// Primal-dual interior-point solver: infeasible start, HKM search direction,
// Mehrotra predictor-corrector. Each Newton step factors the dense Schur
// matrix bordered by the equality rows. A run that stops early returns the
// best iterate seen.

#include <algorithm>
#include <chrono>
#include <limits>
#include <optional>

#include "occf/conic.hpp"

namespace occf::detail {

/// Block coefficient matrices grouped by decision variable, both triangles listed.
struct BlockCoefficients {
  std::size_t side = 0;
  std::vector<std::size_t> vars;   ///< global indices, ascending
  std::vector<std::size_t> start;  ///< entry range of vars[i] is [start[i], start[i+1])
  std::vector<int> row, col;
  std::vector<double> value;
  Eigen::MatrixXd constant;
};

inline BlockCoefficients group_block(const ConeBlock& block) {
  BlockCoefficients out;
  out.side = block.side;
  const auto n = static_cast<Eigen::Index>(block.side);
  out.constant = Eigen::MatrixXd::Zero(n, n);
  std::vector<const BlockEntry*> entries;
  for (const auto& e : block.entries) {
    if (e.var == kConstantTerm) {
      out.constant(static_cast<Eigen::Index>(e.i), static_cast<Eigen::Index>(e.j)) += e.value;
      if (e.i != e.j)
        out.constant(static_cast<Eigen::Index>(e.j), static_cast<Eigen::Index>(e.i)) += e.value;
    } else {
      entries.push_back(&e);
    }
  }
  std::stable_sort(entries.begin(), entries.end(),
                   [](const BlockEntry* a, const BlockEntry* b) { return a->var < b->var; });
  for (const BlockEntry* e : entries) {
    if (out.vars.empty() || out.vars.back() != e->var) {
      out.vars.push_back(e->var);
      out.start.push_back(out.row.size());
    }
    out.row.push_back(static_cast<int>(e->i));
    out.col.push_back(static_cast<int>(e->j));
    out.value.push_back(e->value);
    if (e->i != e->j) {
      out.row.push_back(static_cast<int>(e->j));
      out.col.push_back(static_cast<int>(e->i));
      out.value.push_back(e->value);
    }
  }
  out.start.push_back(out.row.size());
  return out;
}

/// Cholesky factor (lower) in place; returns false when not positive definite.
inline bool cholesky_in_place(Eigen::MatrixXd& a) {
  const lapack_int n = static_cast<lapack_int>(a.rows());
  if (n == 0) return true;
  return LAPACKE_dpotrf(LAPACK_COL_MAJOR, 'L', n, a.data(), n) == 0;
}

/// Solves L L' X = B in place given the factor from cholesky_in_place.
inline void cholesky_solve(const Eigen::MatrixXd& factor, Eigen::MatrixXd& b) {
  const lapack_int n = static_cast<lapack_int>(factor.rows());
  if (n == 0 || b.cols() == 0) return;
  const lapack_int info = LAPACKE_dpotrs(LAPACK_COL_MAJOR, 'L', n, static_cast<lapack_int>(b.cols()),
                                         factor.data(), n, b.data(), n);
  if (info != 0) throw NumericalError("triangular solve failed");
}

inline void cholesky_solve(const Eigen::MatrixXd& factor, Eigen::VectorXd& b) {
  Eigen::Map<Eigen::MatrixXd> view(b.data(), b.size(), 1);
  Eigen::MatrixXd tmp = view;
  cholesky_solve(factor, tmp);
  b = tmp.col(0);
}

/// Symmetric indefinite factorization of the equilibrated saddle system
/// [D H D, D A' E; E A D, 0] used for Newton steps with equality rows.
struct ScaledKkt {
  Eigen::MatrixXd factor;
  std::vector<lapack_int> pivots;
  Eigen::VectorXd d, e;
  Eigen::Index n = 0, m = 0;

  bool compute(const Eigen::MatrixXd& h, const Eigen::MatrixXd& a) {
    n = h.rows();
    m = a.rows();
    d.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double v = h(i, i);
      d[i] = v > 0.0 && std::isfinite(v) ? 1.0 / std::sqrt(v) : 1.0;
    }
    const Eigen::MatrixXd ad = a * d.asDiagonal();
    e.resize(m);
    for (Eigen::Index r = 0; r < m; ++r) {
      const double nr = ad.row(r).norm();
      e[r] = nr > 0.0 ? 1.0 / nr : 1.0;
    }
    const Eigen::Index total = n + m;
    double reg = 0.0;
    for (int attempt = 0; attempt < 6; ++attempt) {
      factor = Eigen::MatrixXd::Zero(total, total);
      factor.topLeftCorner(n, n) = d.asDiagonal() * h * d.asDiagonal();
      factor.topLeftCorner(n, n).diagonal().array() += reg;
      factor.bottomLeftCorner(m, n) = e.asDiagonal() * ad;
      factor.bottomRightCorner(m, m).diagonal().array() -= reg;
      pivots.assign(static_cast<std::size_t>(total), 0);
      if (total == 0) return true;
      const auto nn = static_cast<lapack_int>(total);
      if (LAPACKE_dsytrf(LAPACK_COL_MAJOR, 'L', nn, factor.data(), nn, pivots.data()) == 0) return true;
      reg = reg > 0.0 ? reg * 100.0 : 1e-14;
    }
    return false;
  }

  /// Solves H dy + A' w = g, A dy = r.
  void solve(const Eigen::VectorXd& g, const Eigen::VectorXd& r, Eigen::VectorXd& dy,
             Eigen::VectorXd& w) const {
    Eigen::VectorXd x(n + m);
    x.head(n) = d.cwiseProduct(g);
    x.tail(m) = e.cwiseProduct(r);
    if (n + m > 0) {
      const auto nn = static_cast<lapack_int>(n + m);
      if (LAPACKE_dsytrs(LAPACK_COL_MAJOR, 'L', nn, 1, factor.data(), nn, pivots.data(), x.data(), nn) != 0)
        throw NumericalError("saddle-point solve failed");
    }
    dy = d.cwiseProduct(x.head(n));
    w = e.cwiseProduct(x.tail(m));
  }
};

/// Largest step t with X + t dX PSD (infinity when dX keeps X PSD for all t).
inline double max_step(const Eigen::MatrixXd& x_factor, const Eigen::MatrixXd& dx) {
  const Eigen::Index n = dx.rows();
  if (n == 0) return std::numeric_limits<double>::infinity();
  // L^{-1} dX L^{-T}
  Eigen::MatrixXd w = dx;
  const auto l = x_factor.triangularView<Eigen::Lower>();
  l.solveInPlace(w);
  Eigen::MatrixXd wt = w.transpose();
  l.solveInPlace(wt);
  const double lo = min_eigenvalue(0.5 * (wt + wt.transpose()));
  return lo >= 0.0 ? std::numeric_limits<double>::infinity() : -1.0 / lo;
}

class InteriorPointWorkspace {
 public:
  InteriorPointWorkspace(const ProblemData& data, const SolverConfig& cfg) : data_(data), cfg_(cfg) {
    for (const auto& block : data.problem.blocks) blocks_.push_back(group_block(block));
    n_ = data.c.size();
    m_ = data.a.rows();
    a_dense_ = Eigen::MatrixXd(data.a);
  }

  SolverResult run() {
    const auto start = std::chrono::steady_clock::now();
    SolverResult result;
    result.method = SolverMethod::interior_point;
    const std::size_t nb = blocks_.size();
    y_ = Eigen::VectorXd::Zero(n_);
    nu_ = Eigen::VectorXd::Zero(m_);
    s_.resize(nb);
    z_.resize(nb);
    std::size_t total_side = 0;
    for (std::size_t k = 0; k < nb; ++k) {
      const auto p = static_cast<Eigen::Index>(blocks_[k].side);
      s_[k] = Eigen::MatrixXd::Identity(p, p);
      z_[k] = Eigen::MatrixXd::Identity(p, p);
      total_side += blocks_[k].side;
    }

    std::size_t it = 0;
    int stalled = 0, worse = 0;
    double best_score = std::numeric_limits<double>::infinity();
    std::optional<Iterate> best;
    for (it = 0; it < cfg_.ipm_max_iterations; ++it) {
      const SolutionMetrics met = metrics();
      if (cfg_.trace) result.trace.push_back(trace_text(it, met, last_step_, "step"));
      if (met.converged) {
        result.status = SolveStatus::optimal;
        break;
      }
      const double score = std::max({met.primal_eq / cfg_.tol_feas, met.primal_cone / cfg_.tol_feas,
                                     met.dual / cfg_.tol_feas, met.gap / cfg_.tol_gap});
      if (score < best_score) {
        best_score = score;
        best = Iterate{y_, nu_, s_, z_};
        worse = 0;
      } else if (score > 1e3 * best_score && ++worse >= 8) {
        break;
      }
      if (diverging(met, result)) break;
      if (cfg_.time_limit_seconds > 0.0 &&
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() >
              cfg_.time_limit_seconds)
        break;

      double mu = 0.0;
      for (std::size_t k = 0; k < nb; ++k) mu += (s_[k].cwiseProduct(z_[k])).sum();
      mu /= static_cast<double>(std::max<std::size_t>(total_side, 1));

      // Residuals.
      std::vector<Eigen::MatrixXd> rs(nb);
      for (std::size_t k = 0; k < nb; ++k) rs[k] = apply_block(k, y_, true) - s_[k];
      const Eigen::VectorXd rp = data_.b - data_.a * y_;
      const Eigen::VectorXd rd = data_.c - adjoint(z_) - data_.a.transpose() * nu_;

      prepare();
      if (!factor_ok_) {
        if (cfg_.trace) result.trace.push_back("newton system singular at iteration " + std::to_string(it));
        break;
      }

      // Predictor.
      std::vector<Eigen::MatrixXd> target(nb);
      for (std::size_t k = 0; k < nb; ++k) target[k] = Eigen::MatrixXd::Zero(s_[k].rows(), s_[k].cols());
      Direction aff = direction(target, rs, rp, rd);
      const double ap_aff = std::min(1.0, step_length(s_chol_, aff.ds));
      const double ad_aff = std::min(1.0, step_length_z(aff.dz));
      double mu_aff = 0.0;
      for (std::size_t k = 0; k < nb; ++k)
        mu_aff += ((s_[k] + ap_aff * aff.ds[k]).cwiseProduct(z_[k] + ad_aff * aff.dz[k])).sum();
      mu_aff /= static_cast<double>(std::max<std::size_t>(total_side, 1));
      const double sigma = std::clamp(std::pow(std::max(mu_aff, 0.0) / std::max(mu, 1e-300), 3.0), 0.0, 1.0);

      // Corrector.
      for (std::size_t k = 0; k < nb; ++k) {
        const auto p = s_[k].rows();
        target[k] = sigma * mu * Eigen::MatrixXd::Identity(p, p) - aff.dz[k] * aff.ds[k];
      }
      Direction dir = direction(target, rs, rp, rd);
      const double ap = std::min(1.0, cfg_.ipm_step_fraction * step_length(s_chol_, dir.ds));
      const double ad = std::min(1.0, cfg_.ipm_step_fraction * step_length_z(dir.dz));
      if (!std::isfinite(ap) || !std::isfinite(ad) || !dir.dy.allFinite())
        throw NumericalError("non-finite search direction at iteration " + std::to_string(it));
      y_ += ap * dir.dy;
      for (std::size_t k = 0; k < nb; ++k) {
        s_[k] += ap * dir.ds[k];
        s_[k] = 0.5 * (s_[k] + s_[k].transpose()).eval();
        z_[k] += ad * dir.dz[k];
        z_[k] = 0.5 * (z_[k] + z_[k].transpose()).eval();
      }
      nu_ += ad * dir.dnu;
      last_step_ = std::min(ap, ad);
      stalled = last_step_ < 1e-8 ? stalled + 1 : 0;
      if (stalled >= 5) break;
    }
    result.iterations = it;
    if (result.status == SolveStatus::max_iterations && best) {
      y_ = best->y;
      nu_ = best->nu;
      s_ = best->s;
      z_ = best->z;
    }
    fill_result(result, data_, cfg_, y_, svec_of(s_), svec_of(z_), data_.expand_duals(nu_));
    result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
  }

 private:
  struct Iterate {
    Eigen::VectorXd y, nu;
    std::vector<Eigen::MatrixXd> s, z;
  };

  struct Direction {
    Eigen::VectorXd dy, dnu;
    std::vector<Eigen::MatrixXd> ds, dz;
  };

  /// sum_i v_i F_i (+ F_0 when requested) for block k.
  Eigen::MatrixXd apply_block(std::size_t k, const Eigen::VectorXd& v, bool with_constant) const {
    const auto& b = blocks_[k];
    Eigen::MatrixXd out = with_constant ? b.constant
                                        : Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(b.side),
                                                                static_cast<Eigen::Index>(b.side));
    for (std::size_t i = 0; i < b.vars.size(); ++i) {
      const double vi = v[static_cast<Eigen::Index>(b.vars[i])];
      if (vi == 0.0) continue;
      for (std::size_t e = b.start[i]; e < b.start[i + 1]; ++e) out(b.row[e], b.col[e]) += vi * b.value[e];
    }
    return out;
  }

  /// (tr(F_i R))_i summed over blocks, for arbitrary square R.
  Eigen::VectorXd adjoint(const std::vector<Eigen::MatrixXd>& r) const {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(n_);
    for (std::size_t k = 0; k < blocks_.size(); ++k) {
      const auto& b = blocks_[k];
      for (std::size_t i = 0; i < b.vars.size(); ++i) {
        double acc = 0.0;
        for (std::size_t e = b.start[i]; e < b.start[i + 1]; ++e) acc += b.value[e] * r[k](b.col[e], b.row[e]);
        out[static_cast<Eigen::Index>(b.vars[i])] += acc;
      }
    }
    return out;
  }

  Eigen::VectorXd svec_of(const std::vector<Eigen::MatrixXd>& mats) const {
    Eigen::VectorXd out(static_cast<Eigen::Index>(data_.layout.total));
    for (std::size_t k = 0; k < mats.size(); ++k) svec_pack(mats[k], data_.layout, k, out);
    return out;
  }

  SolutionMetrics metrics() const {
    return solution_metrics(data_, cfg_, y_, svec_of(s_), svec_of(z_), data_.expand_duals(nu_));
  }

  bool diverging(const SolutionMetrics& met, SolverResult& result) const {
    const double scale = 1.0 + inf_norm(data_.c);
    double zmax = inf_norm(nu_);
    for (const auto& z : z_) zmax = std::max(zmax, z.cwiseAbs().maxCoeff());
    if (zmax / scale > cfg_.divergence_threshold && met.dobj > 0.0 && met.dual < 1e-6) {
      result.status = SolveStatus::infeasible;
      return true;
    }
    if (inf_norm(y_) > cfg_.divergence_threshold && met.pobj < 0.0 && met.primal_eq < 1e-6) {
      result.status = SolveStatus::unbounded_direction;
      return true;
    }
    return false;
  }

  // Factorizations shared by predictor and corrector.
  void prepare() {
    const std::size_t nb = blocks_.size();
    s_chol_.resize(nb);
    s_inv_.resize(nb);
    for (std::size_t k = 0; k < nb; ++k) {
      s_chol_[k] = s_[k];
      if (!cholesky_in_place(s_chol_[k])) {
        factor_ok_ = false;
        return;
      }
      s_chol_[k].triangularView<Eigen::StrictlyUpper>().setZero();
      s_inv_[k] = Eigen::MatrixXd::Identity(s_[k].rows(), s_[k].cols());
      cholesky_solve(s_chol_[k], s_inv_[k]);
      s_inv_[k] = 0.5 * (s_inv_[k] + s_inv_[k].transpose()).eval();
    }
    z_chol_.resize(nb);
    for (std::size_t k = 0; k < nb; ++k) {
      z_chol_[k] = z_[k];
      if (!cholesky_in_place(z_chol_[k])) {
        factor_ok_ = false;
        return;
      }
      z_chol_[k].triangularView<Eigen::StrictlyUpper>().setZero();
    }

    // H_ij = sum_k tr(F_i Z F_j S^{-1}).
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n_, n_);
    for (std::size_t k = 0; k < nb; ++k) accumulate_schur(k, h);
    h = 0.5 * (h + h.transpose()).eval();
    factor_ok_ = kkt_.compute(h, a_dense_);
  }

  void accumulate_schur(std::size_t k, Eigen::MatrixXd& h) const {
    const auto& b = blocks_[k];
    const auto p = static_cast<Eigen::Index>(b.side);
    const Eigen::MatrixXd& z = z_[k];
    const Eigen::MatrixXd& sinv = s_inv_[k];
    std::vector<Eigen::Index> rows_used;
    std::vector<Eigen::Index> slot(static_cast<std::size_t>(p), -1);
    Eigen::MatrixXd t, gathered, prod(p, p);
    for (std::size_t i = 0; i < b.vars.size(); ++i) {
      // T = F_i Z restricted to its nonzero rows; P = S^{-1} F_i Z.
      rows_used.clear();
      for (std::size_t e = b.start[i]; e < b.start[i + 1]; ++e) {
        const Eigen::Index r = b.row[e];
        if (slot[static_cast<std::size_t>(r)] < 0) {
          slot[static_cast<std::size_t>(r)] = static_cast<Eigen::Index>(rows_used.size());
          rows_used.push_back(r);
        }
      }
      const auto nr = static_cast<Eigen::Index>(rows_used.size());
      t = Eigen::MatrixXd::Zero(nr, p);
      for (std::size_t e = b.start[i]; e < b.start[i + 1]; ++e)
        t.row(slot[static_cast<std::size_t>(b.row[e])]) += b.value[e] * z.row(b.col[e]);
      gathered.resize(p, nr);
      for (Eigen::Index r = 0; r < nr; ++r) gathered.col(r) = sinv.col(rows_used[static_cast<std::size_t>(r)]);
      prod.noalias() = gathered * t;
      for (Eigen::Index r : rows_used) slot[static_cast<std::size_t>(r)] = -1;
      const auto gi = static_cast<Eigen::Index>(b.vars[i]);
      for (std::size_t j = 0; j < b.vars.size(); ++j) {
        double acc = 0.0;
        for (std::size_t e = b.start[j]; e < b.start[j + 1]; ++e) acc += b.value[e] * prod(b.col[e], b.row[e]);
        h(gi, static_cast<Eigen::Index>(b.vars[j])) += acc;
      }
    }
  }

  // Solves H dy - A' dnu = g, A dy = r with the cached factorization.
  void solve_schur(const Eigen::VectorXd& g, const Eigen::VectorXd& r, Eigen::VectorXd& dy,
                   Eigen::VectorXd& dnu) const {
    kkt_.solve(g, r, dy, dnu);
    dnu = -dnu;
  }

  void complete(Direction& d, const std::vector<Eigen::MatrixXd>& target,
                const std::vector<Eigen::MatrixXd>& rs) const {
    const std::size_t nb = blocks_.size();
    d.ds.resize(nb);
    d.dz.resize(nb);
    for (std::size_t k = 0; k < nb; ++k) {
      d.ds[k] = apply_block(k, d.dy, false) + rs[k];
      Eigen::MatrixXd dz = (target[k] - z_[k] * d.ds[k]) * s_inv_[k] - z_[k];
      d.dz[k] = 0.5 * (dz + dz.transpose());
    }
  }

  // Newton direction for Z S + dZ S + Z dS = target, dS = F(dy) + rs, with
  // refinement against the operator form of the dual equation.
  Direction direction(const std::vector<Eigen::MatrixXd>& target, const std::vector<Eigen::MatrixXd>& rs,
                      const Eigen::VectorXd& rp, const Eigen::VectorXd& rd) const {
    const std::size_t nb = blocks_.size();
    std::vector<Eigen::MatrixXd> r(nb);
    for (std::size_t k = 0; k < nb; ++k) r[k] = (target[k] - z_[k] * rs[k]) * s_inv_[k];
    const Eigen::VectorXd g = adjoint(r) - adjoint(z_) - rd;
    Direction d;
    solve_schur(g, rp, d.dy, d.dnu);
    complete(d, target, rs);
    const double scale = 1.0 + inf_norm(rd) + inf_norm(rp);
    for (int pass = 0; pass < kRefinementPasses; ++pass) {
      const Eigen::VectorXd r1 = rd - adjoint(d.dz) - data_.a.transpose() * d.dnu;
      const Eigen::VectorXd r2 = rp - data_.a * d.dy;
      if (std::max(inf_norm(r1), inf_norm(r2)) < 1e-15 * scale) break;
      Eigen::VectorXd cy, cnu;
      solve_schur(-r1, r2, cy, cnu);
      d.dy += cy;
      if (m_ > 0) d.dnu += cnu;
      complete(d, target, rs);
    }
    return d;
  }

  double step_length(const std::vector<Eigen::MatrixXd>& factors, const std::vector<Eigen::MatrixXd>& dx) const {
    double step = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < dx.size(); ++k) step = std::min(step, max_step(factors[k], dx[k]));
    return step;
  }

  double step_length_z(const std::vector<Eigen::MatrixXd>& dz) const { return step_length(z_chol_, dz); }

  static constexpr int kRefinementPasses = 3;

  const ProblemData& data_;
  SolverConfig cfg_;
  std::vector<BlockCoefficients> blocks_;
  Eigen::Index n_ = 0, m_ = 0;
  Eigen::MatrixXd a_dense_;
  Eigen::VectorXd y_, nu_;
  std::vector<Eigen::MatrixXd> s_, z_, s_chol_, s_inv_, z_chol_;
  ScaledKkt kkt_;
  bool factor_ok_ = true;
  double last_step_ = 0.0;
};

}  // namespace occf::detail
