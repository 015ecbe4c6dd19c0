#pragma once

// Operator-splitting solver: alternating projection onto the affine set (cached
// quasi-definite factorization) and onto the PSD blocks (eigendecomposition),
// with over-relaxation and scaled dual updates.

#include <chrono>

#include "occf/conic.hpp"

namespace occf::detail {

class AdmmWorkspace {
 public:
  AdmmWorkspace(const ProblemData& data, const SolverConfig& cfg) : data_(data), cfg_(cfg) {
    equilibrate();
    negative_hint_.assign(data.layout.side.size(), false);
  }

  SolverResult run() {
    const auto start = std::chrono::steady_clock::now();
    const Eigen::Index n = c_.size();
    const Eigen::Index ns = m0_.size();
    const Eigen::Index m = a_.rows();
    y_ = Eigen::VectorXd::Zero(n);
    s_ = Eigen::VectorXd::Zero(ns);
    w_ = Eigen::VectorXd::Zero(ns);
    nu_ = Eigen::VectorXd::Zero(m);
    rho_ = cfg_.rho;
    factorize(true);

    Eigen::VectorXd prev_z = Eigen::VectorXd::Zero(ns), prev_nu = Eigen::VectorXd::Zero(m);
    Eigen::VectorXd prev_y = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd rhs(n + m), sol(n + m), v(ns), vrel(ns), target(ns);
    SolverResult result;
    result.method = SolverMethod::admm;
    std::size_t it = 0;
    for (it = 1; it <= cfg_.max_iterations; ++it) {
      rhs.head(n) = -c_ + cfg_.sigma * y_ - rho_ * (mt_ * (m0_ - s_ + w_));
      rhs.tail(m) = b_;
      solve_kkt(rhs, sol);
      y_ = sol.head(n);
      nu_ = sol.tail(m);
      v.noalias() = m_ * y_;
      v += m0_;
      vrel = cfg_.alpha * v + (1.0 - cfg_.alpha) * s_;
      target = vrel + w_;
      project_cone(target, s_);
      w_ += vrel - s_;

      if (!y_.allFinite() || !w_.allFinite()) {
        std::ostringstream os;
        os << "non-finite iterate at iteration " << it << " (rho " << format_double(rho_) << ")";
        for (const auto& line : result.trace) os << "\n" << line;
        throw NumericalError(os.str());
      }
      if (it % cfg_.check_interval != 0 && it != cfg_.max_iterations) continue;

      const SolutionMetrics met = metrics();
      if (cfg_.trace && (it % cfg_.trace_interval == 0 || it == cfg_.check_interval))
        result.trace.push_back(trace_text(it, met, rho_, "rho"));
      if (met.converged) {
        result.status = SolveStatus::optimal;
        break;
      }
      if (dual_diverges(prev_z, prev_nu)) {
        result.status = SolveStatus::infeasible;
        break;
      }
      if (primal_diverges(prev_y)) {
        result.status = SolveStatus::unbounded_direction;
        break;
      }
      if (cfg_.time_limit_seconds > 0.0 &&
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() >
              cfg_.time_limit_seconds)
        break;
      if (cfg_.adaptive_rho) adapt_rho();
    }
    result.iterations = std::min(it, cfg_.max_iterations);
    fill_result(result, data_, cfg_, unscaled_y(), unscaled_s(), unscaled_z(), unscaled_nu());
    result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (cfg_.trace) result.trace.push_back(trace_text(result.iterations, metrics(), rho_, "rho"));
    return result;
  }

 private:
  // y = D yhat; equality rows scaled by E; each PSD block by one positive scalar
  // (a congruence, so the cone is preserved); the cost by a scalar.
  void equilibrate() {
    const auto& layout = data_.layout;
    const Eigen::Index n = data_.c.size();
    d_ = Eigen::VectorXd::Ones(n);
    e_ = Eigen::VectorXd::Ones(data_.a.rows());
    Eigen::VectorXd block_scale = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(layout.side.size()));
    std::vector<Eigen::Index> row_block(layout.total);
    for (std::size_t k = 0; k < layout.side.size(); ++k)
      for (std::size_t r = 0; r < layout.side[k] * (layout.side[k] + 1) / 2; ++r)
        row_block[layout.offset[k] + r] = static_cast<Eigen::Index>(k);
    SpMat a = data_.a, mm = data_.m;
    for (int pass = 0; pass < cfg_.equilibration_passes; ++pass) {
      Eigen::VectorXd col = Eigen::VectorXd::Zero(n);
      Eigen::VectorXd row = Eigen::VectorXd::Zero(a.rows());
      Eigen::VectorXd blk = Eigen::VectorXd::Zero(block_scale.size());
      for (Eigen::Index j = 0; j < a.outerSize(); ++j)
        for (SpMat::InnerIterator itr(a, j); itr; ++itr) {
          col[j] = std::max(col[j], std::abs(itr.value()));
          row[itr.row()] = std::max(row[itr.row()], std::abs(itr.value()));
        }
      for (Eigen::Index j = 0; j < mm.outerSize(); ++j)
        for (SpMat::InnerIterator itr(mm, j); itr; ++itr) {
          col[j] = std::max(col[j], std::abs(itr.value()));
          const Eigen::Index k = row_block[static_cast<std::size_t>(itr.row())];
          blk[k] = std::max(blk[k], std::abs(itr.value()));
        }
      auto fix = [](double x) { return x > 1e-8 ? 1.0 / std::sqrt(x) : 1.0; };
      const Eigen::VectorXd dc = col.unaryExpr(fix), dr = row.unaryExpr(fix), db = blk.unaryExpr(fix);
      d_ = d_.cwiseProduct(dc);
      e_ = e_.cwiseProduct(dr);
      block_scale = block_scale.cwiseProduct(db);
      a = dr.asDiagonal() * a * dc.asDiagonal();
      Eigen::VectorXd rs(mm.rows());
      for (Eigen::Index r = 0; r < mm.rows(); ++r) rs[r] = db[row_block[static_cast<std::size_t>(r)]];
      mm = rs.asDiagonal() * mm * dc.asDiagonal();
    }
    row_scale_.resize(data_.m.rows());
    for (Eigen::Index r = 0; r < data_.m.rows(); ++r)
      row_scale_[r] = block_scale[row_block[static_cast<std::size_t>(r)]];
    a_ = a;
    m_ = mm;
    m0_ = row_scale_.cwiseProduct(data_.m0);
    b_ = e_.cwiseProduct(data_.b);
    c_ = d_.cwiseProduct(data_.c);
    cost_scale_ = 1.0 / std::max(1.0, inf_norm(c_));
    c_ *= cost_scale_;
    mt_ = m_.transpose();
    at_ = a_.transpose();
    mtm_ = mt_ * m_;
  }

  Eigen::VectorXd unscaled_y() const { return d_.cwiseProduct(y_); }
  Eigen::VectorXd unscaled_s() const { return s_.cwiseQuotient(row_scale_); }
  Eigen::VectorXd unscaled_z() const {
    return (-rho_ / cost_scale_) * row_scale_.cwiseProduct(w_);
  }
  Eigen::VectorXd unscaled_nu() const {
    return data_.expand_duals((-1.0 / cost_scale_) * e_.cwiseProduct(nu_));
  }

  SolutionMetrics metrics() const {
    return solution_metrics(data_, cfg_, unscaled_y(), unscaled_s(), unscaled_z(), unscaled_nu());
  }

  void factorize(bool analyze) {
    const Eigen::Index n = c_.size();
    const Eigen::Index m = a_.rows();
    std::vector<Triplet> t;
    t.reserve(static_cast<std::size_t>(mtm_.nonZeros() + a_.nonZeros() + n + m));
    for (Eigen::Index j = 0; j < mtm_.outerSize(); ++j)
      for (SpMat::InnerIterator itr(mtm_, j); itr; ++itr)
        if (itr.row() >= j)
          t.emplace_back(static_cast<int>(itr.row()), static_cast<int>(j), rho_ * itr.value());
    for (Eigen::Index i = 0; i < n; ++i) t.emplace_back(static_cast<int>(i), static_cast<int>(i), cfg_.sigma);
    for (Eigen::Index j = 0; j < a_.outerSize(); ++j)
      for (SpMat::InnerIterator itr(a_, j); itr; ++itr)
        t.emplace_back(static_cast<int>(n + itr.row()), static_cast<int>(j), itr.value());
    for (Eigen::Index i = 0; i < m; ++i)
      t.emplace_back(static_cast<int>(n + i), static_cast<int>(n + i), -kRegularization);
    kkt_.resize(n + m, n + m);
    kkt_.setFromTriplets(t.begin(), t.end());
    kkt_.makeCompressed();
    if (analyze) ldlt_.analyzePattern(kkt_);
    ldlt_.factorize(kkt_);
    if (ldlt_.info() != Eigen::Success) throw NumericalError("KKT factorization failed");
  }

  // [[P, A'],[A, 0]] x = r through the regularized factorization plus refinement.
  void solve_kkt(const Eigen::VectorXd& r, Eigen::VectorXd& x) {
    const Eigen::Index n = c_.size();
    const Eigen::Index m = a_.rows();
    x = ldlt_.solve(r);
    Eigen::VectorXd res(r.size());
    for (int k = 0; k < kRefinementSteps; ++k) {
      res.head(n) = r.head(n) - (rho_ * (mtm_ * x.head(n)) + cfg_.sigma * x.head(n) + at_ * x.tail(m));
      res.tail(m) = r.tail(m) - a_ * x.head(n);
      x += ldlt_.solve(res);
    }
  }

  void project_cone(const Eigen::VectorXd& in, Eigen::VectorXd& out) {
    const auto& layout = data_.layout;
    out.resize(in.size());
    for (std::size_t k = 0; k < layout.side.size(); ++k) {
      std::size_t positives = 0;
      const Eigen::MatrixXd proj =
          project_psd(svec_unpack(in, layout, k), negative_hint_[k], &positives);
      negative_hint_[k] = 2 * positives > layout.side[k];
      svec_pack(proj, layout, k, out);
    }
  }

  // Dual increments approaching a Farkas direction once the dual iterate has
  // grown past the divergence threshold.
  bool dual_diverges(Eigen::VectorXd& prev_z, Eigen::VectorXd& prev_nu) const {
    const Eigen::VectorXd z = -rho_ * w_;
    const Eigen::VectorXd nup = -nu_;
    Eigen::VectorXd dz = z - prev_z, dnu = nup - prev_nu;
    prev_z = z;
    prev_nu = nup;
    const double scale = std::max(inf_norm(dz), inf_norm(dnu));
    const double growth = std::max(inf_norm(z), inf_norm(nup)) / (1.0 + inf_norm(c_));
    if (!(scale > 0.0) || growth < cfg_.divergence_threshold) return false;
    dz /= scale;
    dnu /= scale;
    return inf_norm(mt_ * dz + at_ * dnu) < 1e-3 && b_.dot(dnu) - m0_.dot(dz) > 0.0;
  }

  bool primal_diverges(Eigen::VectorXd& prev_y) {
    Eigen::VectorXd dy = y_ - prev_y;
    prev_y = y_;
    const double scale = inf_norm(dy);
    if (!(scale > 0.0) || inf_norm(y_) < cfg_.divergence_threshold) return false;
    dy /= scale;
    if (c_.dot(dy) >= -cfg_.certificate_tol || inf_norm(a_ * dy) > 1e-6) return false;
    Eigen::VectorXd md = m_ * dy, proj;
    project_cone(md, proj);
    return inf_norm(md - proj) < 1e-6;
  }

  void adapt_rho() {
    const Eigen::VectorXd v = m_ * y_ + m0_;
    const double rp = std::max(inf_norm(a_ * y_ - b_), inf_norm(v - s_));
    const double rp_den = std::max({inf_norm(a_ * y_), inf_norm(b_), inf_norm(v), inf_norm(s_), 1e-12});
    const Eigen::VectorXd mw = rho_ * (mt_ * w_);
    const Eigen::VectorXd an = at_ * nu_;
    const double rd = inf_norm(c_ + mw + an);
    const double rd_den = std::max({inf_norm(c_), inf_norm(mw), inf_norm(an), 1e-12});
    if (rp <= 0.0 || rd <= 0.0) return;
    const double ratio = std::sqrt((rp / rp_den) / (rd / rd_den));
    if (ratio < 5.0 && ratio > 0.2) return;
    const double next = std::clamp(rho_ * ratio, 1e-6, 1e6);
    if (next == rho_) return;
    w_ *= rho_ / next;
    rho_ = next;
    factorize(false);
  }

  static constexpr double kRegularization = 1e-9;
  static constexpr int kRefinementSteps = 2;

  const ProblemData& data_;
  SolverConfig cfg_;
  SpMat a_, at_, m_, mt_, mtm_, kkt_;
  Eigen::VectorXd b_, c_, m0_, d_, e_, row_scale_;
  double cost_scale_ = 1.0;
  Eigen::VectorXd y_, s_, w_, nu_;
  double rho_ = 0.1;
  std::vector<bool> negative_hint_;
  Eigen::SimplicialLDLT<SpMat, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt_;
};

}  // namespace occf::detail
