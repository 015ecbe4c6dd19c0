#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "occf/polynomial.hpp"

using namespace occf;

namespace {

VarSpacePtr xyz() {
  return make_space({{"x1", VarRole::state, "", 0, 1}, {"x2", VarRole::state, "", 0, 1},
                     {"x3", VarRole::state, "", 0, 1}});
}

Polynomial random_poly(const VarSpacePtr& s, std::mt19937_64& rng, int degree, int terms) {
  std::uniform_int_distribution<int> e(0, degree);
  std::uniform_real_distribution<double> c(-2.0, 2.0);
  Polynomial p(s);
  for (int k = 0; k < terms; ++k) {
    Monomial m(s->size());
    for (auto& x : m.exponents) x = e(rng) / 2;
    p.add_term(m, c(rng));
  }
  return p;
}

double rel(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

}  // namespace

TEST(Polynomial, AddCancelsAndMerges) {
  auto s = xyz();
  const auto x1 = Polynomial::variable(s, "x1"), x2 = Polynomial::variable(s, "x2");
  const auto one = Polynomial::constant(s, 1.0);
  EXPECT_EQ((x1 + one) + (-x1), one);
  EXPECT_EQ(x1 + Polynomial(s), x1);
  EXPECT_EQ(2.0 * x1 * x2 + 3.0 * x1 * x2, 5.0 * x1 * x2);
  EXPECT_TRUE((x1 - x1).is_zero());
  EXPECT_TRUE((x1 - x1).terms().empty());
}

TEST(Polynomial, MultiplyExpands) {
  auto s = xyz();
  const auto x1 = Polynomial::variable(s, "x1"), x2 = Polynomial::variable(s, "x2");
  const auto one = Polynomial::constant(s, 1.0);
  Monomial m(3);
  m.exponents = {1, 1, 0};
  EXPECT_EQ(x1 * x2, Polynomial::monomial(s, m));
  EXPECT_EQ((x1 + one) * (x1 + one), x1 * x1 + 2.0 * x1 + one);
  EXPECT_TRUE((x1 * Polynomial(s)).is_zero());
  EXPECT_EQ((x1 * x1 + x2).degree() + (x1 * x2 * x2).degree(), ((x1 * x1 + x2) * (x1 * x2 * x2)).degree());
}

TEST(Polynomial, MismatchedSpacesAreRejected) {
  auto a = xyz();
  auto b = make_space({{"y", VarRole::state, "", 0, 1}});
  EXPECT_THROW(Polynomial::variable(a, 0) + Polynomial::variable(b, 0), StructuralError);
  EXPECT_THROW(Polynomial::variable(a, 0) * Polynomial::variable(b, 0), StructuralError);
}

TEST(Polynomial, PartialDerivative) {
  auto s = xyz();
  const auto x1 = Polynomial::variable(s, "x1"), x3 = Polynomial::variable(s, "x3");
  EXPECT_EQ(partial_derivative(x1 * x1 * x3, "x1"), 2.0 * x1 * x3);
  EXPECT_TRUE(partial_derivative(Polynomial::constant(s, 4.0), "x1").is_zero());
  EXPECT_TRUE(partial_derivative(Polynomial::variable(s, "x2"), "x1").is_zero());
  EXPECT_THROW(partial_derivative(x1, "nope"), StructuralError);
}

TEST(Polynomial, LieDerivative) {
  auto s = make_space({{"t", VarRole::time, "", 0, 1}, {"x", VarRole::state, "", 0, 1},
                       {"u", VarRole::control, "", -1, 1}});
  const auto t = Polynomial::variable(s, "t"), x = Polynomial::variable(s, "x"), u = Polynomial::variable(s, "u");
  const VectorField f{{1}, {u}};
  EXPECT_EQ(lie_derivative(x * x, f, false), 2.0 * x * u);
  EXPECT_TRUE(lie_derivative(Polynomial::constant(s, 3.0), f, true).is_zero());
  EXPECT_EQ(lie_derivative(t * x, f, true), x + t * u);
  EXPECT_EQ(lie_derivative(t * x, f, false), t * u);
  EXPECT_THROW(lie_derivative(x, VectorField{{1, 2}, {u}}, false), StructuralError);
}

TEST(Polynomial, LieDerivativeIsLinear) {
  auto s = xyz();
  std::mt19937_64 rng(7);
  const VectorField f{{0, 1, 2}, {random_poly(s, rng, 4, 5), random_poly(s, rng, 4, 5), random_poly(s, rng, 4, 5)}};
  const auto v = random_poly(s, rng, 6, 8), w = random_poly(s, rng, 6, 8);
  const auto lhs = lie_derivative(2.5 * v - 0.75 * w, f, false);
  const auto rhs = 2.5 * lie_derivative(v, f, false) - 0.75 * lie_derivative(w, f, false);
  for (const auto& [m, c] : (lhs - rhs).terms()) EXPECT_NEAR(c, 0.0, 1e-12) << to_string(lhs - rhs);
}

TEST(Polynomial, ParameterWithZeroFieldHasZeroLieDerivative) {
  auto s = make_space({{"x", VarRole::state, "", 0, 1}, {"p", VarRole::parameter, "", 0, 1}});
  const auto x = Polynomial::variable(s, "x"), p = Polynomial::variable(s, "p");
  const VectorField f{{0, 1}, {-1.0 * p * x, Polynomial(s)}};
  EXPECT_TRUE(lie_derivative(p, f, false).is_zero());
}

TEST(Polynomial, Evaluate) {
  auto s = make_space({{"x1", VarRole::state, "", 0, 1}, {"x2", VarRole::state, "", 0, 1}});
  const auto x1 = Polynomial::variable(s, "x1"), x2 = Polynomial::variable(s, "x2");
  const std::vector<double> p{2.0, 3.0};
  EXPECT_DOUBLE_EQ((x1 * x1 + x2).evaluate(p), 7.0);
  EXPECT_DOUBLE_EQ(Polynomial(s).evaluate(p), 0.0);
  const std::vector<double> wrong{1.0};
  EXPECT_THROW(x1.evaluate(wrong), StructuralError);
}

TEST(Polynomial, RingAxiomsPointwise) {
  auto s = xyz();
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> pt(-1.5, 1.5);
  for (int trial = 0; trial < 5; ++trial) {
    const auto a = random_poly(s, rng, 4, 6), b = random_poly(s, rng, 4, 6), c = random_poly(s, rng, 4, 6);
    const auto assoc_l = (a * b) * c, assoc_r = a * (b * c);
    const auto dist_l = a * (b + c), dist_r = a * b + a * c;
    for (int k = 0; k < 20; ++k) {
      const std::vector<double> v{pt(rng), pt(rng), pt(rng)};
      EXPECT_LT(rel(assoc_l.evaluate(v), assoc_r.evaluate(v)), 1e-10);
      EXPECT_LT(rel(dist_l.evaluate(v), dist_r.evaluate(v)), 1e-10);
      EXPECT_LT(rel((a + b).evaluate(v), a.evaluate(v) + b.evaluate(v)), 1e-12);
    }
  }
}

TEST(Polynomial, CoefficientThresholdDropsResidue) {
  auto s = xyz();
  const auto x1 = Polynomial::variable(s, "x1");
  const auto p = x1 * (1.0 + 1e-15) - x1;
  EXPECT_TRUE(p.is_zero());
}

TEST(Polynomial, AffineSubstitute) {
  auto s = xyz();
  const auto x1 = Polynomial::variable(s, "x1");
  std::vector<AffineMap> maps{{600.0, 0.0}, {1.0, 0.0}, {100.0, 0.0}};
  EXPECT_EQ(affine_substitute(x1, maps), 600.0 * x1);
  std::vector<AffineMap> identity(3);
  EXPECT_EQ(affine_substitute(x1 * x1 + x1, identity), x1 * x1 + x1);
  std::vector<AffineMap> short_map(2);
  EXPECT_THROW(affine_substitute(x1, short_map), StructuralError);
}

TEST(Polynomial, AffineSubstituteMatchesValuesAndRoundTrips) {
  auto s = xyz();
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> pt(0.0, 1.0);
  const auto p = random_poly(s, rng, 6, 10);
  std::vector<AffineMap> maps{{600.0, 10.0}, {0.05, -0.01}, {100.0, 2.0}};
  std::vector<AffineMap> inverse;
  for (const auto& m : maps) inverse.push_back({1.0 / m.scale, -m.offset / m.scale});
  const auto q = affine_substitute(p, maps);
  EXPECT_EQ(q.degree(), p.degree());
  const auto back = affine_substitute(q, inverse);
  for (int k = 0; k < 50; ++k) {
    const std::vector<double> h{pt(rng), pt(rng), pt(rng)};
    std::vector<double> x(3);
    for (int i = 0; i < 3; ++i) x[i] = maps[i].forward(h[i]);
    EXPECT_LT(rel(q.evaluate(h), p.evaluate(x)), 1e-10);
    EXPECT_LT(rel(back.evaluate(x), p.evaluate(x)), 1e-10);
  }
}

TEST(Polynomial, TextRoundTrip) {
  auto s = xyz();
  const auto p = parse_polynomial("-0.05*x2 + 2.85e-5*x3", s);
  EXPECT_DOUBLE_EQ(p.coefficient(Monomial(std::vector<int>{0, 1, 0})), -0.05);
  EXPECT_DOUBLE_EQ(p.coefficient(Monomial(std::vector<int>{0, 0, 1})), 2.85e-5);
  std::mt19937_64 rng(5);
  for (int k = 0; k < 10; ++k) {
    const auto q = random_poly(s, rng, 6, 7);
    EXPECT_EQ(parse_polynomial(to_string(q), s), q) << to_string(q);
  }
  EXPECT_EQ(parse_polynomial("x1^2*x3 - 3", s),
            Polynomial::variable(s, 0) * Polynomial::variable(s, 0) * Polynomial::variable(s, 2) -
                Polynomial::constant(s, 3.0));
}

TEST(Polynomial, ParserRejectsUnknownNames) {
  auto s = xyz();
  EXPECT_THROW(parse_polynomial("2*y", s), ParseError);
  EXPECT_THROW(parse_polynomial("2*", s), ParseError);
}

TEST(VarSpace, RejectsDuplicatesAndBadBounds) {
  EXPECT_THROW(make_space({{"x", VarRole::state, "", 0, 1}, {"x", VarRole::state, "", 0, 1}}), StructuralError);
  EXPECT_THROW(make_space({{"x", VarRole::state, "", 1, 1}}), StructuralError);
  EXPECT_THROW(make_space({{"t", VarRole::time, "", 0, 1}, {"s", VarRole::time, "", 0, 1}}), StructuralError);
}
