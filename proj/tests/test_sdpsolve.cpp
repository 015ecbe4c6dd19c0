#include <cmath>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "occf/models.hpp"
#include "occf/pipeline.hpp"
#include "occf/sdpa.hpp"
#include "occf/solver.hpp"

using namespace occf;

namespace {

// min y  s.t.  [y] >= 0, y = 1.
ConicProblem scalar_toy(double rhs) {
  ConicProblem p;
  p.num_vars = 1;
  p.objective = {1.0};
  p.blocks.push_back({1, "y", {{0, 0, 0, 1.0}}});
  p.equalities.push_back({{{0, 1.0}}, rhs, "fix"});
  return p;
}

// Second moment of a probability measure on [1, 2]: variables y0, y1, y2.
ConicProblem interval_moment_toy() {
  ConicProblem p;
  p.num_vars = 3;
  p.objective = {0.0, 0.0, 1.0};
  p.blocks.push_back({2, "M1", {{0, 0, 0, 1.0}, {0, 1, 1, 1.0}, {1, 1, 2, 1.0}}});
  // (a - 1)(2 - a) = -a^2 + 3a - 2
  p.blocks.push_back({1, "loc", {{0, 0, 0, -2.0}, {0, 0, 1, 3.0}, {0, 0, 2, -1.0}}});
  p.equalities.push_back({{{0, 1.0}}, 1.0, "mass"});
  return p;
}

ConicProblem bergman_conic(int d) {
  PipelineOptions o;
  o.order = d;
  return to_conic(prepare_instance(bergman_known(), o).relaxed);
}

ConicProblem di_conic() {
  PipelineOptions o;
  o.order = 3;
  return to_conic(prepare_instance(double_integrator(), o).relaxed);
}

std::size_t line_count(const std::string& s) {
  std::size_t n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

}  // namespace

TEST(Solver, ScalarToy) {
  const auto r = solve(scalar_toy(1.0));
  ASSERT_EQ(r.status, SolveStatus::optimal);
  EXPECT_NEAR(r.primal[0], 1.0, 1e-7);
  EXPECT_NEAR(r.objective, 1.0, 1e-7);
}

TEST(Solver, SecondMomentOnInterval) {
  const auto r = solve(interval_moment_toy());
  ASSERT_EQ(r.status, SolveStatus::optimal);
  EXPECT_NEAR(r.objective, 1.0, 1e-6);
  EXPECT_NEAR(r.primal[1], 1.0, 1e-5);
}

TEST(Solver, AdmmAgreesOnTheInterval) {
  SolverConfig cfg;
  cfg.method = SolverMethod::admm;
  const auto r = solve(interval_moment_toy(), cfg);
  ASSERT_EQ(r.status, SolveStatus::optimal);
  EXPECT_EQ(r.method, SolverMethod::admm);
  EXPECT_NEAR(r.objective, 1.0, 1e-4);
}

TEST(Solver, NegativeFixIsInfeasible) {
  const auto r = solve(scalar_toy(-1.0));
  EXPECT_EQ(r.status, SolveStatus::infeasible);
}

TEST(Solver, RejectsBadConfiguration) {
  SolverConfig cfg;
  cfg.tol_feas = 0.0;
  EXPECT_THROW(solve(scalar_toy(1.0), cfg), ConfigurationError);
  ConicProblem bad = scalar_toy(1.0);
  bad.objective.push_back(0.0);
  EXPECT_THROW(solve(bad), StructuralError);
}

TEST(Solver, WeakDualityOnTheDoubleIntegrator) {
  const auto r = solve(di_conic());
  ASSERT_EQ(r.status, SolveStatus::optimal);
  EXPECT_LE(r.dual_objective, r.objective + 1e-6);
  EXPECT_LT(r.duality_gap, 1e-5);
  EXPECT_LT(r.primal_residual, 1e-6);
  EXPECT_GT(r.min_block_eigenvalue, -1e-7);
  EXPECT_NEAR(r.objective, 0.09, 1e-4);
}

TEST(Solver, BitwiseDeterministic) {
  const auto p = bergman_conic(2);
  const auto a = solve(p);
  const auto b = solve(p);
  EXPECT_EQ(a.primal, b.primal);
  EXPECT_EQ(a.equality_duals, b.equality_duals);
  EXPECT_EQ(a.iterations, b.iterations);
}

TEST(ProjectPsd, Examples) {
  Eigen::MatrixXd m(2, 2);
  m << 1, 0, 0, -1;
  Eigen::MatrixXd expected(2, 2);
  expected << 1, 0, 0, 0;
  EXPECT_TRUE(project_psd(m).isApprox(expected));
  EXPECT_TRUE(project_psd(m, true).isApprox(expected));
  Eigen::MatrixXd psd(2, 2);
  psd << 2, 1, 1, 2;
  EXPECT_TRUE(project_psd(psd).isApprox(psd));
  EXPECT_TRUE(project_psd(-psd).isZero(1e-12));
  Eigen::MatrixXd rect(2, 3);
  EXPECT_THROW(project_psd(rect), StructuralError);
}

TEST(Sdpa, ScalarConeIsFiveLines) {
  ConicProblem p;
  p.num_vars = 1;
  p.objective = {1.0};
  p.blocks.push_back({1, "y", {{0, 0, 0, 1.0}}});
  const std::string text = export_sdpa(p);
  EXPECT_EQ(text, "1\n1\n1\n1\n1 1 1 1 1\n");
  EXPECT_EQ(line_count(text), 5u);
  EXPECT_TRUE(same_coefficients(import_sdpa(text), p));
}

TEST(Sdpa, ConstantTermChangesSign) {
  // [y - 1] >= 0 is written with F_0 = 1.
  ConicProblem p;
  p.num_vars = 1;
  p.objective = {1.0};
  p.blocks.push_back({1, "shifted", {{0, 0, kConstantTerm, -1.0}, {0, 0, 0, 1.0}}});
  const auto text = export_sdpa(p);
  EXPECT_EQ(text, "1\n1\n1\n1\n0 1 1 1 1\n1 1 1 1 1\n");
  const auto r = solve(import_sdpa(text));
  ASSERT_EQ(r.status, SolveStatus::optimal);
  EXPECT_NEAR(r.objective, 1.0, 1e-6);
  EXPECT_NE(export_sdpa(interval_moment_toy()).find(std::string(kSdpaEqualityHint) + " 3\n"),
            std::string::npos);
}

TEST(Sdpa, RoundTripDoubleIntegrator) {
  const auto p = di_conic();
  const auto back = import_sdpa(export_sdpa(p));
  EXPECT_TRUE(same_coefficients(back, p));
  EXPECT_EQ(export_sdpa(back), export_sdpa(p));
}

TEST(Sdpa, RoundTripBergman) {
  const auto p = bergman_conic(2);
  const auto back = import_sdpa(export_sdpa(p));
  EXPECT_TRUE(same_coefficients(back, p));
  const auto a = solve(p);
  const auto b = solve(back);
  ASSERT_EQ(b.status, SolveStatus::optimal);
  EXPECT_NEAR(a.objective, b.objective, 1e-9);
}

TEST(Sdpa, FileRoundTrip) {
  const auto p = interval_moment_toy();
  const std::string path = ::testing::TempDir() + "occf_toy.dat-s";
  write_sdpa_file(p, path);
  EXPECT_TRUE(same_coefficients(read_sdpa_file(path), p));
  EXPECT_THROW(read_sdpa_file(path + ".missing"), ConfigurationError);
}

TEST(Sdpa, WithoutTheHintEqualitiesStayCones) {
  const std::string text = "1\n1\n-2\n1\n1 1 1 1 1\n1 1 2 2 -1\n0 1 1 1 1\n0 1 2 2 -1\n";
  const auto p = import_sdpa(text);
  EXPECT_TRUE(p.equalities.empty());
  ASSERT_EQ(p.blocks.size(), 2u);
  EXPECT_EQ(p.blocks[0].side, 1u);
  const auto r = solve(p);
  ASSERT_EQ(r.status, SolveStatus::optimal);
  EXPECT_NEAR(r.primal[0], 1.0, 1e-6);
}

TEST(Sdpa, OutOfRangeBlockReportsItsLine) {
  const std::string text = "* comment\n1\n1\n2\n1.0\n1 1 1 1 1\n1 2 1 1 1\n";
  try {
    import_sdpa(text);
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 7u);
  }
}

TEST(Sdpa, MalformedInputIsRejected) {
  EXPECT_THROW(import_sdpa(""), ParseError);
  EXPECT_THROW(import_sdpa("1\n1\n2\n1\n1 1 3 1 1\n"), ParseError);
  EXPECT_THROW(import_sdpa("1\n1\n2\n1\n2 1 1 1 1\n"), ParseError);
  EXPECT_THROW(import_sdpa("1\n1\n2\n1\n1 1 1 1\n"), ParseError);
  // Equality block whose pair is not mirrored.
  EXPECT_THROW(import_sdpa("*occf-equalities 1\n1\n1\n-2\n1\n1 1 1 1 1\n1 1 2 2 -2\n"), ParseError);
}

TEST(Sdpa, AcceptsSeparatorPunctuation) {
  const auto p = import_sdpa("1\n1\n{1}\n(1.0)\n1,1,1,1,1\n");
  ASSERT_EQ(p.blocks.size(), 1u);
  EXPECT_DOUBLE_EQ(p.objective[0], 1.0);
}
