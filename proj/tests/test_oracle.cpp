#include <cmath>

#include <gtest/gtest.h>

#include "occf/models.hpp"
#include "occf/oracle.hpp"
#include "occf/pipeline.hpp"

using namespace occf;

namespace {

OcpSpec scaled_di(double x_f = 0.2) { return pin_parameters(scale_to_unit_box(double_integrator(x_f)).spec); }

DirectOptions quick(std::size_t intervals = 32, std::size_t restarts = 4) {
  DirectOptions o;
  o.intervals = intervals;
  o.restarts = restarts;
  return o;
}

}  // namespace

TEST(Direct, DoubleIntegratorNearTheAnalyticCost) {
  const auto sol = solve_direct(scaled_di(), quick());
  ASSERT_TRUE(sol.feasible);
  EXPECT_NEAR(sol.cost, 0.09, 0.02 * 0.09);
  // Piecewise-constant controls are admissible, so the cost cannot beat the optimum.
  EXPECT_GE(sol.cost, 0.09 - 1e-6);
  EXPECT_NEAR(sol.terminal_state[0], 0.5, 1e-3);
  EXPECT_EQ(sol.control.size(), 32u);
}

TEST(Direct, FactualInTheTargetCostsNothing) {
  const auto sol = solve_direct(scaled_di(0.7), quick());
  ASSERT_TRUE(sol.feasible);
  EXPECT_DOUBLE_EQ(sol.cost, 0.0);
  EXPECT_EQ(sol.terminal_index, 0u);
  EXPECT_DOUBLE_EQ(sol.terminal_time, 0.0);
}

TEST(Direct, RefiningTheGridKeepsTheCostClose) {
  const auto coarse = solve_direct(scaled_di(), quick(16));
  const auto fine = solve_direct(scaled_di(), quick(64));
  ASSERT_TRUE(coarse.feasible);
  ASSERT_TRUE(fine.feasible);
  EXPECT_LT(std::abs(fine.cost - coarse.cost), 0.005);
  EXPECT_GE(fine.cost, 0.09 - 1e-6);
}

TEST(Direct, SeededAndThreadIndependent) {
  auto o = quick(24, 6);
  const auto a = solve_direct(scaled_di(), o);
  const auto b = solve_direct(scaled_di(), o);
  o.workers = 3;
  const auto c = solve_direct(scaled_di(), o);
  EXPECT_EQ(a.control, b.control);
  EXPECT_EQ(a.cost, b.cost);
  EXPECT_EQ(a.control, c.control);
  EXPECT_EQ(a.restart, c.restart);
}

TEST(Direct, RejectsDegenerateOptions) {
  auto o = quick();
  o.intervals = 0;
  EXPECT_THROW(solve_direct(scaled_di(), o), ConfigurationError);
  auto spec = scaled_di();
  spec.factual.push_back(0.0);
  EXPECT_THROW(solve_direct(spec, quick()), StructuralError);
}

TEST(Sandwich, VerifyBoundArithmetic) {
  EXPECT_TRUE(verify_bound(0.09, 0.0900001));
  EXPECT_TRUE(verify_bound(0.090004, 0.09));
  EXPECT_FALSE(verify_bound(0.1, 0.09));
  EXPECT_FALSE(verify_bound(0.09 + 1e-4, 0.09, 1e-5));
}

TEST(Sandwich, BergmanKnownRelaxationIsBelowTheDirectCost) {
  PipelineOptions o;
  o.order = 2;
  o.oracle = true;
  o.oracle_options = quick(48, 6);
  const auto r = run_pipeline(bergman_known(), o);
  ASSERT_TRUE(r.optimal());
  ASSERT_TRUE(r.oracle);
  ASSERT_TRUE(r.oracle->feasible);
  EXPECT_TRUE(verify_bound(r.solve.objective, r.oracle->cost));
  // The gap at this order is small.
  EXPECT_LT((r.oracle->cost - r.solve.objective) / r.oracle->cost, 0.05);
  // An inflated relaxation value is caught.
  EXPECT_FALSE(verify_bound(r.oracle->cost * 1.1, r.oracle->cost));
}

TEST(Sandwich, BergmanUncertainRelaxationIsBelowThePinnedDirectCost) {
  PipelineOptions o;
  o.order = 2;
  o.mode = Mode::uncertain;
  o.oracle = true;
  o.oracle_options = quick(48, 6);
  const auto r = run_pipeline(bergman_uncertain(), o);
  ASSERT_TRUE(r.optimal());
  ASSERT_TRUE(r.oracle && r.oracle->feasible);
  EXPECT_TRUE(verify_bound(r.solve.objective, r.oracle->cost));
}

TEST(Sandwich, JsonCarriesTheDirectSolution) {
  const auto sol = solve_direct(scaled_di(), quick(8, 2));
  const nlohmann::json j = sol;
  EXPECT_EQ(j.at("feasible").get<bool>(), sol.feasible);
  EXPECT_EQ(j.at("control").size(), 8u);
  EXPECT_DOUBLE_EQ(j.at("cost").get<double>(), sol.cost);
}
