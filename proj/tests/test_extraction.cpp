#include <cmath>

#include <gtest/gtest.h>

#include "occf/extraction.hpp"
#include "occf/models.hpp"
#include "occf/pipeline.hpp"

using namespace occf;

namespace {

PipelineOptions options(int d, Mode mode = Mode::known, MethodChoice method = MethodChoice::moment) {
  PipelineOptions o;
  o.order = d;
  o.mode = mode;
  o.method = method;
  return o;
}

}  // namespace

TEST(Moments, ZeroDynamicsFactualIsItsOwnCounterfactual) {
  const auto r = run_pipeline(zero_dynamics_toy(0.6), options(2));
  ASSERT_TRUE(r.optimal());
  EXPECT_NEAR(r.solve.objective, 0.0, 1e-6);
  ASSERT_TRUE(r.moment_pair);
  EXPECT_NEAR(r.moment_pair->counterfactual[0], 0.6, 1e-5);
  EXPECT_NEAR(r.moment_pair->mass_of_terminal, 1.0, 1e-6);
}

TEST(Moments, DoubleIntegratorReachesTheNearEdge) {
  const auto r = run_pipeline(double_integrator(0.2, 0.5, 1.0, 1.0), options(3));
  ASSERT_TRUE(r.optimal());
  const auto& pair = *r.moment_pair;
  EXPECT_NEAR(pair.counterfactual[0], 0.5, 1e-4);
  EXPECT_DOUBLE_EQ(pair.factual[0], 0.2);
  EXPECT_NEAR(pair.terminal_time, 1.0, 1e-3);
  EXPECT_TRUE(pair.atomicity.single_atom);
  EXPECT_EQ(pair.order, 3);
  EXPECT_EQ(pair.state_names, std::vector<std::string>{"x"});
}

TEST(Moments, BergmanCounterfactualLiesInTheTarget) {
  const auto r = run_pipeline(bergman_known(), options(2));
  ASSERT_TRUE(r.optimal());
  const auto& pair = *r.moment_pair;
  EXPECT_EQ(pair.factual, (std::vector<double>{250.0, 0.0, 0.0}));
  EXPECT_GE(pair.counterfactual[0], 80.0 - 1e-3);
  EXPECT_LE(pair.counterfactual[0], 126.0 + 1e-3);
  EXPECT_GT(pair.terminal_time, 0.0);
  EXPECT_LE(pair.terminal_time, 4800.0 + 1e-6);
  EXPECT_DOUBLE_EQ(pair.cost_bound, r.solve.objective);
}

TEST(Moments, UnscalingMatchesTheTerminalMoments) {
  PipelineOptions o = options(2);
  const auto inst = prepare_instance(bergman_known(), o);
  const auto r = run_instance(inst, o);
  ASSERT_TRUE(r.optimal());
  const auto& p = inst.relaxed;
  const double mass = p.moment(r.solve.primal, p.terminal, p.one());
  for (std::size_t i = 0; i < p.states.size(); ++i) {
    const double scaled = p.moment(r.solve.primal, p.terminal, p.unit(p.states[i])) / mass;
    EXPECT_NEAR(r.moment_pair->counterfactual[i], inst.scaled.scaling.maps[p.states[i]].forward(scaled), 1e-9);
  }
  const double t = p.moment(r.solve.primal, p.terminal, p.unit(*p.time)) / mass;
  EXPECT_NEAR(r.moment_pair->terminal_time, t * 4800.0, 1e-6);
}

TEST(Moments, UncertainParametersStayInTheBox) {
  const auto r = run_pipeline(bergman_uncertain(), options(2, Mode::uncertain));
  ASSERT_TRUE(r.optimal());
  const auto& pair = *r.moment_pair;
  ASSERT_EQ(pair.parameter_names, (std::vector<std::string>{"p2", "p3"}));
  EXPECT_GE(pair.parameters[0], 0.049 - 1e-7);
  EXPECT_LE(pair.parameters[0], 0.051 + 1e-7);
  EXPECT_GE(pair.parameters[1], 2.7e-5 - 1e-10);
  EXPECT_LE(pair.parameters[1], 3e-5 + 1e-10);
  EXPECT_EQ(pair.counterfactual.size(), 3u);
}

TEST(ExtractionErrors, NonOptimalSolveIsRejected) {
  PipelineOptions o = options(2);
  const auto inst = prepare_instance(double_integrator(), o);
  SolverResult bad;
  bad.status = SolveStatus::max_iterations;
  EXPECT_THROW(extract_counterfactual_moments(inst.relaxed, bad, inst.scaled.scaling), ExtractionError);
  EXPECT_THROW(extract_dual_polynomial(inst.relaxed, bad), ExtractionError);
  SolverResult no_duals;
  no_duals.status = SolveStatus::optimal;
  no_duals.primal.assign(inst.relaxed.num_vars, 0.0);
  EXPECT_THROW(extract_dual_polynomial(inst.relaxed, no_duals), UnavailableDualError);
}

TEST(ControlLaw, GradientTimesInputGain) {
  const auto spec = double_integrator();
  const auto x = Polynomial::variable(spec.space, "x");
  const auto t = Polynomial::variable(spec.space, "t");
  EXPECT_EQ(recover_control_law(x * x, spec).u[0], -1.0 * x);
  EXPECT_EQ(recover_control_law(t * x, spec).u[0], -0.5 * t);
  EXPECT_TRUE(recover_control_law(t * t, spec).u[0].is_zero());
  const auto bergman = scale_to_unit_box(bergman_known()).spec;
  const auto x1 = Polynomial::variable(bergman.space, "x1");
  // Glucose has no input channel.
  EXPECT_TRUE(recover_control_law(x1 * x1, bergman).u[0].is_zero());
}

TEST(Simulation, ZeroControlMatchesTheClosedForm) {
  BergmanParams bp;
  bp.factual = {250.0, 0.0, 20.0};
  PipelineOptions o = options(2);
  const auto inst = prepare_instance(bergman_known(bp), o);
  SimulationOptions so;
  so.steps = 8000;
  const double tau = 0.25;  // 20 of the 80 minutes
  const auto traj = simulate_closed_loop(inst.relaxed_spec, zero_control_law(inst.relaxed_spec),
                                         inst.relaxed_spec.factual, tau, so);
  ASSERT_TRUE(traj.completed());
  EXPECT_DOUBLE_EQ(traj.cost, 0.0);
  const auto pair = trajectory_pair(traj, inst.relaxed_spec, inst.scaled.scaling, 0.0, 2);
  const double t = 20.0;
  const double x3 = 20.0 * std::exp(-bp.n * t);
  const double x2 = bp.p3 * 20.0 * (std::exp(-bp.n * t) - std::exp(-bp.p2 * t)) / (bp.p2 - bp.n);
  EXPECT_NEAR(pair.terminal_time, 1200.0, 1e-9);
  EXPECT_NEAR(pair.counterfactual[2], x3, 1e-8);
  EXPECT_NEAR(pair.counterfactual[1], x2, 1e-10);
  EXPECT_NEAR(pair.factual[2], 20.0, 1e-12);
}

TEST(Simulation, HalvingTheStepChangesTheEndpointLittle) {
  PipelineOptions o = options(2, Mode::known, MethodChoice::trajectory);
  const auto inst = prepare_instance(bergman_known(), o);
  const auto r = run_instance(inst, o);
  ASSERT_TRUE(r.dual);
  const auto law = recover_control_law(r.dual->v, inst.relaxed_spec);
  SimulationOptions a, b;
  a.steps = 4096;
  b.steps = 8192;
  const double tau = scaled_terminal_time(*r.moment_pair, inst.scaled.scaling);
  const auto ta = simulate_closed_loop(inst.relaxed_spec, law, inst.relaxed_spec.factual, tau, a);
  const auto tb = simulate_closed_loop(inst.relaxed_spec, law, inst.relaxed_spec.factual, tau, b);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_LT(std::abs(ta.endpoint()[i] - tb.endpoint()[i]), 1e-6);
  EXPECT_LT(std::abs(ta.cost - tb.cost), 1e-6);
}

TEST(Simulation, InvalidHorizonIsRejected) {
  const auto spec = double_integrator();
  const std::vector<double> x0{0.2};
  EXPECT_THROW(simulate_closed_loop(spec, zero_control_law(spec), x0, 1.5), ConfigurationError);
  SimulationOptions none;
  none.steps = 0;
  EXPECT_THROW(simulate_closed_loop(spec, zero_control_law(spec), x0, 0.5, none), ConfigurationError);
}

TEST(Trajectory, DoubleIntegratorFeedbackTracksTheOptimum) {
  const auto r = run_pipeline(double_integrator(0.2, 0.5, 1.0, 1.0), options(3, Mode::known, MethodChoice::both));
  ASSERT_TRUE(r.trajectory_pair);
  const auto& pair = *r.trajectory_pair;
  ASSERT_TRUE(pair.achieved_cost);
  EXPECT_NEAR(*pair.achieved_cost, 0.09, 5e-3);
  EXPECT_NEAR(pair.counterfactual[0], 0.5, 5e-3);
  EXPECT_EQ(r.pairs(MethodChoice::both).size(), 2u);
  EXPECT_EQ(r.pairs(MethodChoice::moment).size(), 1u);
  // A closed loop that reaches the target pays at least the relaxation value.
  if (r.trajectory->cost_at_entry)
    EXPECT_GE(*r.trajectory->cost_at_entry, r.solve.objective - 1e-6);
  else
    EXPECT_FALSE(pair.warnings.empty());
}

TEST(Trajectory, FeasibleControlsPayAtLeastTheBound) {
  PipelineOptions o = options(3);
  const auto inst = prepare_instance(double_integrator(0.2, 0.5, 1.0, 1.0), o);
  const auto r = run_instance(inst, o);
  ASSERT_TRUE(r.optimal());
  const auto& spec = inst.relaxed_spec;
  for (double u : {0.3, 0.45, 0.8}) {
    const auto law = control_law_from({Polynomial::constant(spec.space, u)}, spec);
    const auto traj = simulate_closed_loop(spec, law, spec.factual, 1.0);
    ASSERT_TRUE(traj.cost_at_entry) << u;
    EXPECT_GE(*traj.cost_at_entry, r.solve.objective - 1e-6) << u;
  }
}

TEST(Trajectory, BergmanClosedLoopStaysAdmissible) {
  const auto r = run_pipeline(bergman_known(), options(2, Mode::known, MethodChoice::trajectory));
  ASSERT_TRUE(r.trajectory_pair);
  ASSERT_TRUE(r.trajectory_pair->achieved_cost);
  EXPECT_TRUE(r.trajectory->completed());
  EXPECT_EQ(r.trajectory_pair->method, ExtractionMethod::trajectory);
  EXPECT_LT(r.trajectory_pair->counterfactual[0], 250.0);
  if (r.trajectory->cost_at_entry)
    EXPECT_GE(*r.trajectory->cost_at_entry, r.solve.objective - 1e-6);
}

TEST(Certificate, DoubleIntegratorPassesAndCorruptionIsFlagged) {
  PipelineOptions o = options(3);
  o.certificate = true;
  o.certificate_samples = 4000;
  const auto inst = prepare_instance(double_integrator(), o);
  const auto r = run_instance(inst, o);
  ASSERT_TRUE(r.certificate);
  EXPECT_TRUE(r.certificate->passed()) << r.certificate->worst();
  EXPECT_NEAR(r.dual->bound, 0.09, 1e-4);
  const auto corrupted = r.dual->v + Polynomial::constant(inst.relaxed_spec.space, 10.0);
  const auto bad = verify_dual_certificate(corrupted, r.dual->bound, inst.relaxed_spec, 4000);
  EXPECT_FALSE(bad.passed());
  EXPECT_GT(bad.terminal.violations, 0u);
  EXPECT_LT(bad.terminal.worst, -9.0);
}

TEST(Certificate, BergmanDualIsNearlyValid) {
  PipelineOptions o = options(2);
  o.certificate = true;
  o.certificate_samples = 4000;
  const auto r = run_pipeline(bergman_known(), o);
  ASSERT_TRUE(r.certificate);
  EXPECT_GT(r.certificate->hjb.samples, 0u);
  EXPECT_GT(r.certificate->terminal.samples, 0u);
  EXPECT_NEAR(r.dual->bound, r.solve.objective, 1e-4);
}

TEST(DualStructure, TimeFreeQuadraticValueFunction) {
  PipelineOptions o = options(2);
  o.assembly.time_dependent_tests = false;
  o.assembly.test_degree_cap = 2;
  const auto inst = prepare_instance(bergman_known(), o);
  const auto r = run_instance(inst, PipelineOptions{o});
  const auto dual = extract_dual_polynomial(inst.relaxed, r.solve);
  EXPECT_LE(dual.v.degree(), 2);
  EXPECT_FALSE(dual.v.depends_on(*inst.relaxed.time));
  EXPECT_LE(dual.terms(), 10u);
  const auto law = recover_control_law(dual.v, inst.relaxed_spec);
  EXPECT_LE(law.u[0].terms().size(), 4u);
  EXPECT_LE(law.u[0].degree(), 1);
  EXPECT_EQ(inst.relaxed.equalities.size(), 10u);
}

TEST(Serialization, CsvAndJsonRoundTrip) {
  const auto r = run_pipeline(bergman_uncertain(), options(2, Mode::uncertain));
  ASSERT_TRUE(r.moment_pair);
  const auto& pair = *r.moment_pair;
  const auto back = parse_csv_row(csv_header(pair), csv_row(pair));
  EXPECT_EQ(back.factual, pair.factual);
  EXPECT_EQ(back.counterfactual, pair.counterfactual);
  EXPECT_EQ(back.parameters, pair.parameters);
  EXPECT_EQ(back.terminal_time, pair.terminal_time);
  EXPECT_EQ(back.cost_bound, pair.cost_bound);
  EXPECT_EQ(csv_row(back), csv_row(pair));

  nlohmann::json j = pair;
  const auto again = j.get<CounterfactualPair>();
  EXPECT_EQ(again.counterfactual, pair.counterfactual);
  EXPECT_EQ(again.parameter_names, pair.parameter_names);
  EXPECT_EQ(again.atomicity.singular_values, pair.atomicity.singular_values);
  EXPECT_EQ(nlohmann::json(again), j);
}

TEST(Serialization, MalformedCsvIsRejected) {
  CounterfactualPair pair;
  pair.state_names = {"x"};
  pair.factual = {0.2};
  pair.counterfactual = {0.5};
  const auto header = csv_header(pair);
  EXPECT_THROW(parse_csv_row(header, "0.2,0.5,1"), ParseError);
  EXPECT_THROW(parse_csv_row(header, "0.2,abc,1,0.09,3,0,moment"), ParseError);
}

TEST(Atomicity, RatioOfSingularValues) {
  Eigen::MatrixXd dirac(2, 2);
  dirac << 1, 0.5, 0.5, 0.25;
  EXPECT_TRUE(atomicity(dirac).single_atom);
  Eigen::MatrixXd two(2, 2);
  two << 1, 0.5, 0.5, 0.5;  // equal mixture of atoms at 0 and 1
  const auto rec = atomicity(two);
  EXPECT_FALSE(rec.single_atom);
  EXPECT_GT(rec.ratio, 0.1);
  EXPECT_GE(rec.singular_values[0], rec.singular_values[1]);
}
