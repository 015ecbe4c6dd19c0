// Acceptance run: one PASS/FAIL line per criterion.
//
//   acceptance                 all criteria
//   acceptance --criterion 4   one criterion
//
// Exit status is 0 when every selected criterion passes.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "occf/occf.hpp"

using namespace occf;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

constexpr std::uint64_t kSeed = 1;
constexpr double kGlucoseLow = 80.0;
constexpr double kGlucoseSafe = 126.0;
constexpr double kSetSlack = 1e-3;  // mg/dl, first-moment rounding

// Solves are shared between criteria when all of them run.
class Instances {
 public:
  const PipelineResult& bergman(Mode mode, int d) {
    const auto key = std::pair(mode, d);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    PipelineOptions o;
    o.order = d;
    o.mode = mode;
    o.oracle = true;
    return cache_.emplace(key, run_pipeline(mode == Mode::known ? bergman_known() : bergman_uncertain(), o))
        .first->second;
  }

 private:
  std::map<std::pair<Mode, int>, PipelineResult> cache_;
};

Instances instances;

Outcome criterion_1() {
  const auto start = Clock::now();
  PipelineOptions o;
  o.order = 3;
  o.oracle = true;
  const auto r = run_pipeline(double_integrator(0.2, 0.5, 1.0, 1.0), o);
  const double elapsed = seconds_since(start);
  if (!r.optimal()) return {false, "solver status " + to_string(r.solve.status)};
  const double p = r.solve.objective;
  const double j = r.oracle->cost;
  const double x = r.moment_pair->counterfactual[0];
  const bool bound = p >= 0.09 * 0.90 && p <= 0.09 + 1e-4;
  const bool oracle = r.oracle->feasible && j >= 0.09 - 1e-6 && j <= 0.09 * 1.02;
  const bool cf = std::abs(x - 0.5) <= 1e-2;
  return {bound && oracle && cf && elapsed < 30.0,
          "p*_3=" + fmt(p, 8) + " oracle=" + fmt(j, 8) + " x_cf=" + fmt(x, 8) + " t=" + fmt(elapsed, 3) + "s"};
}

Outcome criterion_2() {
  const auto start = Clock::now();
  std::vector<double> p;
  for (int d : {2, 3, 4}) {
    const auto& r = instances.bergman(Mode::known, d);
    if (!r.optimal()) return {false, "d=" + std::to_string(d) + " status " + to_string(r.solve.status)};
    p.push_back(r.solve.objective);
  }
  const double elapsed = seconds_since(start);
  const bool ok = p[0] <= p[1] + 1e-6 && p[1] <= p[2] + 1e-6;
  return {ok && elapsed < 600.0, "p*_2=" + fmt(p[0], 8) + " p*_3=" + fmt(p[1], 8) + " p*_4=" + fmt(p[2], 8) +
                                     " t=" + fmt(elapsed, 3) + "s"};
}

Outcome criterion_3() {
  std::ostringstream detail;
  bool ok = true;
  auto check = [&](const std::string& name, const PipelineResult& r) {
    const bool good = r.optimal() && r.oracle && r.oracle->feasible &&
                      verify_bound(r.solve.objective, r.oracle->cost, 1e-5);
    ok = ok && good;
    detail << name << ":" << fmt(r.solve.objective, 7) << "<=" << (r.oracle ? fmt(r.oracle->cost, 7) : "-")
           << (good ? "" : "!") << " ";
  };
  PipelineOptions o;
  o.order = 3;
  o.oracle = true;
  check("di", run_pipeline(double_integrator(0.2, 0.5, 1.0, 1.0), o));
  for (int d : {2, 3, 4}) check("known" + std::to_string(d), instances.bergman(Mode::known, d));
  for (int d : {2, 3}) check("uncertain" + std::to_string(d), instances.bergman(Mode::uncertain, d));
  return {ok, detail.str()};
}

struct BatchStats {
  std::size_t converged = 0;
  std::vector<CounterfactualPair> pairs;
};

BatchStats batch(const OcpSpec& model, Mode mode, int d, std::size_t count) {
  PipelineOptions o;
  o.order = d;
  o.mode = mode;
  BatchStats s;
  for (const auto& e : run_batch(model, o, sample_factuals(bergman_known(), count, kSeed), 1)) {
    if (!e.result || !e.result->optimal()) continue;
    ++s.converged;
    s.pairs.push_back(*e.result->moment_pair);
  }
  return s;
}

Outcome criterion_4() {
  const auto start = Clock::now();
  const auto s = batch(bergman_known(), Mode::known, 4, 20);
  std::size_t inside = 0, near = 0;
  for (const auto& p : s.pairs) {
    const double g = p.counterfactual[0];
    inside += g >= kGlucoseLow - kSetSlack && g <= kGlucoseSafe + kSetSlack;
    near += g >= kGlucoseSafe - 10.0;
  }
  const bool ok = s.converged > 0 && inside == s.pairs.size();
  return {ok, std::to_string(s.converged) + "/20 converged, " + std::to_string(inside) + " in XT, " +
                  fmt(s.converged ? 100.0 * near / s.converged : 0.0, 4) + "% within 10 mg/dl of 126, t=" +
                  fmt(seconds_since(start), 4) + "s"};
}

struct Iqr {
  double q1 = 0, q3 = 0;
  double mid() const { return 0.5 * (q1 + q3); }
};

Iqr insulin_iqr(const BatchStats& s) {
  std::vector<double> insulin;
  for (const auto& p : s.pairs) insulin.push_back(p.counterfactual[2]);
  if (insulin.empty()) return {};
  return {quantile(insulin, 0.25), quantile(insulin, 0.75)};
}

std::vector<int> dense_orders;

Outcome criterion_5() {
  const std::size_t count = 50;
  std::ostringstream detail;
  bool ok = !dense_orders.empty();
  auto compare = [&](int d, bool counts) {
    const auto known = batch(bergman_known(), Mode::known, d, count);
    const auto robust = batch(bergman_uncertain(), Mode::uncertain, d, count);
    const Iqr a = insulin_iqr(known), b = insulin_iqr(robust);
    const bool shifted = !known.pairs.empty() && !robust.pairs.empty() && b.mid() < a.mid();
    if (counts) ok = ok && shifted;
    detail << "d=" << d << (counts ? "" : " (surrogate, not counted)") << ": known I IQR [" << fmt(a.q1, 4) << ","
           << fmt(a.q3, 4) << "] n=" << known.converged << ", uncertain [" << fmt(b.q1, 4) << "," << fmt(b.q3, 4)
           << "] n=" << robust.converged << ", midpoint " << (shifted ? "shifts down" : "does not shift down")
           << "; ";
  };
  if (dense_orders.empty()) {
    compare(2, false);
    detail << "NOT ATTAINED: the d=4 and d=6 batches of 50 are beyond this machine "
              "(uncertain d=4 takes minutes per factual; d=6 has tens of thousands of moments); "
              "rerun with --dense-orders 4,6";
  } else {
    for (int d : dense_orders) compare(d, true);
  }
  return {ok, detail.str()};
}

Outcome criterion_6() {
  const auto scaled = scale_to_unit_box(bergman_known(), false);
  const OcpSpec sim = pin_parameters(scaled.spec);
  const auto law = control_law_from({reference_control_law(sim.space)}, sim);
  SimulationOptions so;
  so.steps = 8192;
  const auto traj = simulate_closed_loop(sim, law, sim.factual, 1.0, so);
  const bool reached = traj.terminal_entry_time.has_value();
  const std::size_t ref_v = reference_value_function(sim.space).terms().size();
  const std::size_t ref_u = reference_control_law(sim.space).terms().size();

  PipelineOptions o;
  o.order = 2;
  o.method = MethodChoice::trajectory;
  o.assembly.time_dependent_tests = false;
  o.assembly.test_degree_cap = 2;
  const auto inst = prepare_instance(bergman_known(), o);
  const auto r = run_instance(inst, o);
  std::size_t own_v = 0, own_u = 0;
  int own_u_degree = -1;
  if (r.dual) {
    own_v = r.dual->terms();
    const auto u = recover_control_law(r.dual->v, inst.relaxed_spec).u[0];
    own_u = u.terms().size();
    own_u_degree = u.degree();
  }
  const bool structure = ref_v == 10 && ref_u == 4 && own_v == 10 && own_u == 4 && own_u_degree == 1;
  std::string detail = reached ? "reference law enters XT at " +
                                     fmt(scaled.scaling.unscale_time_seconds(*traj.terminal_entry_time), 6) +
                                     " s, integral u^2 at entry " + fmt(*traj.cost_at_entry, 6) +
                                     " (over the horizon " + fmt(traj.cost, 6) + ")"
                               : "reference law never enters XT";
  detail += "; support: reference v " + std::to_string(ref_v) + " / u " + std::to_string(ref_u) + ", solver v " +
            std::to_string(own_v) + " / u " + std::to_string(own_u);
  return {reached && structure, detail};
}

Outcome criterion_7() {
  const auto start = Clock::now();
  const int d = 3;
  const std::size_t count = 10;
  PipelineOptions known, robust;
  known.order = robust.order = d;
  robust.mode = Mode::uncertain;
  const auto factuals = sample_factuals(bergman_known(), count, kSeed);
  const auto a = run_batch(bergman_known(), known, factuals, 1);
  const auto b = run_batch(bergman_uncertain(), robust, factuals, 1);
  double sum_known = 0.0, sum_robust = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < count; ++i) {
    if (!a[i].result || !a[i].result->optimal() || !b[i].result || !b[i].result->optimal()) continue;
    sum_known += kGlucoseSafe - a[i].result->moment_pair->counterfactual[0];
    sum_robust += kGlucoseSafe - b[i].result->moment_pair->counterfactual[0];
    ++pairs;
  }
  if (pairs == 0) return {false, "no matched pair converged"};
  const double mk = sum_known / pairs, mr = sum_robust / pairs;
  return {mr >= mk - 1.0, "d=" + std::to_string(d) + ", " + std::to_string(pairs) +
                              " matched pairs: mean distance from G=126 known " + fmt(mk, 5) + ", robust " +
                              fmt(mr, 5) + " mg/dl, t=" + fmt(seconds_since(start), 4) + "s"};
}

// --- criterion 8 -----------------------------------------------------------

std::vector<double> dirac_moments(const RelaxedProblem& p, const std::vector<double>& point) {
  std::vector<double> y(p.num_vars, 0.0);
  for (const auto& meas : p.measures)
    for (std::size_t b = 0; b < meas.size(); ++b)
      y[meas.offset + b] = Polynomial::monomial(p.space, meas.basis[b]).evaluate(point);
  return y;
}

double liouville_residual(const PreparedInstance& inst) {
  const auto& spec = inst.relaxed_spec;
  const auto& p = inst.relaxed;
  const auto t = Polynomial::variable(spec.space, *spec.space->time_index());
  const auto law = control_law_from({Polynomial::constant(spec.space, 0.4) + 0.3 * t}, spec);
  SimulationOptions so;
  so.steps = 10000;
  so.saturate = false;
  const auto traj = simulate_closed_loop(spec, law, spec.factual, 0.6, so);
  std::vector<double> y(p.num_vars, 0.0);
  std::vector<std::vector<double>> pts;
  for (std::size_t k = 0; k < traj.time.size(); ++k)
    pts.push_back(spec.full_point(traj.state[k], traj.control[k], traj.time[k]));
  const auto& occ = p.occupation_moments();
  for (std::size_t b = 0; b < occ.size(); ++b) {
    const Polynomial m = Polynomial::monomial(p.space, occ.basis[b]);
    double acc = 0.0;
    for (std::size_t k = 0; k + 1 < pts.size(); ++k)
      acc += 0.5 * (traj.time[k + 1] - traj.time[k]) * (m.evaluate(pts[k]) + m.evaluate(pts[k + 1]));
    y[occ.offset + b] = acc;
  }
  const auto& term = p.terminal_moments();
  for (std::size_t b = 0; b < term.size(); ++b)
    y[term.offset + b] = Polynomial::monomial(p.space, term.basis[b]).evaluate(pts.back());
  double worst = 0.0;
  for (const auto& row : p.equalities) {
    double v = 0.0, scale = std::abs(row.rhs);
    for (const auto& [i, c] : row.coeffs) {
      v += c * y[i];
      scale += std::abs(c * y[i]);
    }
    worst = std::max(worst, std::abs(v - row.rhs) / std::max(scale, 1.0));
  }
  return worst;
}

Outcome criterion_8() {
  const auto start = Clock::now();
  std::vector<std::string> failed;
  auto expect = [&](bool ok, const std::string& what) {
    if (!ok) failed.push_back(what);
  };

  PipelineOptions k2;
  k2.order = 2;
  PipelineOptions u2 = k2;
  u2.mode = Mode::uncertain;
  PipelineOptions di = k2;
  di.order = 3;
  const auto known = prepare_instance(bergman_known(), k2);
  const auto robust = prepare_instance(bergman_uncertain(), u2);
  const auto dint = prepare_instance(double_integrator(0.2, 0.5, 1.0, 1.0), di);

  // Dirac moment matrices are PSD and rank one.
  for (const auto* inst : {&known, &robust}) {
    std::vector<double> point(inst->relaxed.space->size(), 0.0);
    for (std::size_t v = 0; v < point.size(); ++v) point[v] = 0.1 + 0.07 * static_cast<double>(v);
    const auto y = dirac_moments(inst->relaxed, point);
    for (const auto& block : inst->relaxed.blocks) {
      if (block.multiplier.degree() > 0) continue;
      const auto m = evaluate_moment_matrix(block, y);
      expect(min_eigenvalue(m) > -1e-9 * m.norm() && atomicity(m).ratio < 1e-9, "dirac " + block.label);
    }
  }
  const double residual = liouville_residual(known);
  expect(residual < 1e-4, "liouville residual " + fmt(residual));

  // SDPA round trip, weak duality and certificates.
  for (const auto* inst : {&dint, &known, &robust}) {
    const auto conic = to_conic(inst->relaxed);
    expect(same_coefficients(import_sdpa(export_sdpa(conic)), conic), "sdpa " + inst->model.name);
    PipelineOptions o = inst == &dint ? di : inst == &known ? k2 : u2;
    o.certificate = true;
    const auto r = run_instance(*inst, o);
    expect(r.optimal(), "solve " + inst->model.name);
    expect(r.solve.dual_objective <= r.solve.objective + 1e-6 * (1.0 + std::abs(r.solve.objective)),
           "weak duality " + inst->model.name);
    expect(r.certificate && r.certificate->worst() > -1e-5, "certificate " + inst->model.name);
  }

  // Seeded batches are byte-identical.
  const auto factuals = sample_factuals(bergman_known(), 4, kSeed);
  auto csv = [&](std::size_t workers) {
    std::vector<CounterfactualPair> pairs;
    for (const auto& e : run_batch(bergman_known(), k2, factuals, workers))
      if (e.result && e.result->moment_pair) pairs.push_back(*e.result->moment_pair);
    return pairs_csv(pairs);
  };
  const std::string first = csv(1);
  expect(first == csv(1) && first == csv(2), "determinism");

  const double elapsed = seconds_since(start);
  expect(elapsed < 120.0, "runtime");
  std::string detail = "liouville residual " + fmt(residual, 3) + ", t=" + fmt(elapsed, 3) + "s";
  for (const auto& f : failed) detail += "; failed: " + f;
  return {failed.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  int only = 0;
  app.add_option("--criterion", only, "run a single criterion (1-8)")->check(CLI::Range(1, 8));
  app.add_option("--dense-orders", dense_orders, "orders for the 50-factual insulin comparison")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::function<Outcome()>> criteria{criterion_1, criterion_2, criterion_3, criterion_4,
                                                       criterion_5, criterion_6, criterion_7, criterion_8};
  bool all = true;
  for (int i = 1; i <= 8; ++i) {
    if (only != 0 && i != only) continue;
    Outcome out;
    try {
      out = criteria[i - 1]();
    } catch (const std::exception& e) {
      out = {false, std::string("error: ") + e.what()};
    }
    all = all && out.pass;
    std::cout << "criterion " << i << ": " << (out.pass ? "PASS" : "FAIL") << "  " << out.detail << std::endl;
  }
  return all ? 0 : 1;
}
