#pragma once

// Sparse multivariate polynomials over a declared variable space.
//
// Monomials are exponent vectors with one entry per variable of the space
// and are kept in graded lexicographic order everywhere: lower total degree
// first, ties broken so that a larger exponent on an earlier variable comes
// first (1, a, b, a^2, ab, b^2, ...). Moment indexing downstream relies on
// this order being global.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "occf/errors.hpp"
#include "occf/format.hpp"

namespace occf {

enum class VarRole { time, state, control, parameter };

inline std::string to_string(VarRole role) {
  switch (role) {
    case VarRole::time: return "time";
    case VarRole::state: return "state";
    case VarRole::control: return "control";
    case VarRole::parameter: return "parameter";
  }
  return "state";
}

inline VarRole parse_role(std::string_view text) {
  if (text == "time") return VarRole::time;
  if (text == "state") return VarRole::state;
  if (text == "control") return VarRole::control;
  if (text == "parameter") return VarRole::parameter;
  throw ParseError("unknown variable role '" + std::string(text) + "'");
}

struct Variable {
  std::string name;
  VarRole role = VarRole::state;
  std::string unit;
  double lower = 0.0;
  double upper = 1.0;

  friend bool operator==(const Variable&, const Variable&) = default;
};

class VarSpace {
 public:
  explicit VarSpace(std::vector<Variable> variables) : variables_(std::move(variables)) {
    int time_count = 0;
    for (std::size_t i = 0; i < variables_.size(); ++i) {
      const auto& v = variables_[i];
      if (v.name.empty()) throw StructuralError("variable with empty name");
      if (!(v.lower < v.upper))
        throw StructuralError("variable '" + v.name + "' needs lower < upper scale bounds");
      for (std::size_t j = 0; j < i; ++j)
        if (variables_[j].name == v.name)
          throw StructuralError("duplicate variable name '" + v.name + "'");
      if (v.role == VarRole::time) ++time_count;
    }
    if (time_count > 1) throw StructuralError("at most one time variable is allowed");
  }

  std::size_t size() const noexcept { return variables_.size(); }
  const Variable& operator[](std::size_t i) const { return variables_.at(i); }
  const std::vector<Variable>& variables() const noexcept { return variables_; }

  std::optional<std::size_t> find(std::string_view name) const {
    for (std::size_t i = 0; i < variables_.size(); ++i)
      if (variables_[i].name == name) return i;
    return std::nullopt;
  }

  std::size_t index_of(std::string_view name) const {
    if (auto i = find(name)) return *i;
    throw StructuralError("unknown variable '" + std::string(name) + "'");
  }

  std::optional<std::size_t> time_index() const {
    for (std::size_t i = 0; i < variables_.size(); ++i)
      if (variables_[i].role == VarRole::time) return i;
    return std::nullopt;
  }

  std::vector<std::size_t> indices_with_role(VarRole role) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < variables_.size(); ++i)
      if (variables_[i].role == role) out.push_back(i);
    return out;
  }

  friend bool operator==(const VarSpace&, const VarSpace&) = default;

 private:
  std::vector<Variable> variables_;
};

using VarSpacePtr = std::shared_ptr<const VarSpace>;

inline VarSpacePtr make_space(std::vector<Variable> variables) {
  return std::make_shared<const VarSpace>(std::move(variables));
}

inline bool same_space(const VarSpacePtr& a, const VarSpacePtr& b) {
  return a == b || (a && b && *a == *b);
}

struct Monomial {
  std::vector<int> exponents;

  Monomial() = default;
  explicit Monomial(std::size_t nvars) : exponents(nvars, 0) {}
  explicit Monomial(std::vector<int> e) : exponents(std::move(e)) {}

  std::size_t size() const noexcept { return exponents.size(); }
  int operator[](std::size_t i) const { return exponents[i]; }

  int degree() const {
    int d = 0;
    for (int e : exponents) d += e;
    return d;
  }

  friend Monomial operator*(const Monomial& a, const Monomial& b) {
    if (a.size() != b.size()) throw StructuralError("monomial dimension mismatch");
    Monomial out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out.exponents[i] = a[i] + b[i];
    return out;
  }

  friend bool operator==(const Monomial&, const Monomial&) = default;
};

/// Graded lexicographic order.
struct GrlexLess {
  bool operator()(const Monomial& a, const Monomial& b) const {
    const int da = a.degree();
    const int db = b.degree();
    if (da != db) return da < db;
    return std::lexicographical_compare(b.exponents.begin(), b.exponents.end(),
                                        a.exponents.begin(), a.exponents.end());
  }
};

inline constexpr double kCoefficientThreshold = 1e-14;

class Polynomial {
 public:
  using Terms = std::map<Monomial, double, GrlexLess>;

  Polynomial() = default;
  explicit Polynomial(VarSpacePtr space) : space_(std::move(space)) {
    if (!space_) throw StructuralError("polynomial needs a variable space");
  }

  static Polynomial constant(VarSpacePtr space, double value) {
    Polynomial p(std::move(space));
    p.add_term(Monomial(p.space_->size()), value);
    return p;
  }

  static Polynomial variable(VarSpacePtr space, std::size_t index, double coeff = 1.0) {
    Polynomial p(std::move(space));
    if (index >= p.space_->size()) throw StructuralError("variable index out of range");
    Monomial m(p.space_->size());
    m.exponents[index] = 1;
    p.add_term(m, coeff);
    return p;
  }

  static Polynomial variable(VarSpacePtr space, std::string_view name, double coeff = 1.0) {
    const std::size_t index = space->index_of(name);
    return variable(std::move(space), index, coeff);
  }

  static Polynomial monomial(VarSpacePtr space, Monomial m, double coeff = 1.0) {
    Polynomial p(std::move(space));
    if (m.size() != p.space_->size()) throw StructuralError("monomial dimension mismatch");
    p.add_term(std::move(m), coeff);
    return p;
  }

  const VarSpacePtr& space() const noexcept { return space_; }
  const Terms& terms() const noexcept { return terms_; }
  bool is_zero() const noexcept { return terms_.empty(); }
  std::size_t term_count() const noexcept { return terms_.size(); }

  /// Total degree; 0 for the zero polynomial.
  int degree() const { return terms_.empty() ? 0 : terms_.rbegin()->first.degree(); }

  int degree_in(std::size_t var) const {
    int d = 0;
    for (const auto& [m, c] : terms_) d = std::max(d, m[var]);
    return d;
  }

  bool depends_on(std::size_t var) const { return degree_in(var) > 0; }

  double coefficient(const Monomial& m) const {
    auto it = terms_.find(m);
    return it == terms_.end() ? 0.0 : it->second;
  }

  double max_abs_coefficient() const {
    double out = 0.0;
    for (const auto& [m, c] : terms_) out = std::max(out, std::abs(c));
    return out;
  }

  /// Accumulates coeff into monomial m, dropping the entry if it cancels.
  void add_term(const Monomial& m, double coeff) {
    if (m.size() != space_->size()) throw StructuralError("monomial dimension mismatch");
    if (coeff == 0.0) return;
    auto [it, inserted] = terms_.try_emplace(m, coeff);
    if (!inserted) it->second += coeff;
    if (std::abs(it->second) < kCoefficientThreshold) terms_.erase(it);
  }

  double evaluate(std::span<const double> point) const {
    if (point.size() != space_->size())
      throw StructuralError("evaluation point has dimension " + std::to_string(point.size()) +
                            ", expected " + std::to_string(space_->size()));
    double sum = 0.0;
    for (const auto& [m, c] : terms_) {
      double term = c;
      for (std::size_t i = 0; i < m.size(); ++i)
        for (int k = 0; k < m[i]; ++k) term *= point[i];
      sum += term;
    }
    return sum;
  }

  Polynomial& operator+=(const Polynomial& q) {
    check_same(q);
    for (const auto& [m, c] : q.terms_) add_term(m, c);
    return *this;
  }

  Polynomial& operator-=(const Polynomial& q) {
    check_same(q);
    for (const auto& [m, c] : q.terms_) add_term(m, -c);
    return *this;
  }

  Polynomial& operator*=(double s) {
    if (s == 0.0) {
      terms_.clear();
      return *this;
    }
    for (auto it = terms_.begin(); it != terms_.end();) {
      it->second *= s;
      if (std::abs(it->second) < kCoefficientThreshold)
        it = terms_.erase(it);
      else
        ++it;
    }
    return *this;
  }

  friend Polynomial operator+(Polynomial p, const Polynomial& q) { return p += q; }
  friend Polynomial operator-(Polynomial p, const Polynomial& q) { return p -= q; }
  friend Polynomial operator*(Polynomial p, double s) { return p *= s; }
  friend Polynomial operator*(double s, Polynomial p) { return p *= s; }
  friend Polynomial operator-(Polynomial p) { return p *= -1.0; }

  friend Polynomial operator*(const Polynomial& p, const Polynomial& q) {
    p.check_same(q);
    Polynomial out(p.space_);
    for (const auto& [mp, cp] : p.terms_)
      for (const auto& [mq, cq] : q.terms_) out.add_term(mp * mq, cp * cq);
    return out;
  }

  Polynomial& operator*=(const Polynomial& q) { return *this = *this * q; }

  friend bool operator==(const Polynomial& a, const Polynomial& b) {
    return same_space(a.space_, b.space_) && a.terms_ == b.terms_;
  }

 private:
  void check_same(const Polynomial& q) const {
    if (!same_space(space_, q.space_))
      throw StructuralError("polynomials live on different variable spaces");
  }

  VarSpacePtr space_;
  Terms terms_;
};

inline Polynomial add(const Polynomial& p, const Polynomial& q) { return p + q; }
inline Polynomial mul(const Polynomial& p, const Polynomial& q) { return p * q; }

inline Polynomial power(const Polynomial& p, int k) {
  Polynomial out = Polynomial::constant(p.space(), 1.0);
  for (int i = 0; i < k; ++i) out *= p;
  return out;
}

inline Polynomial partial_derivative(const Polynomial& p, std::size_t var) {
  if (var >= p.space()->size()) throw StructuralError("variable index out of range");
  Polynomial out(p.space());
  for (const auto& [m, c] : p.terms()) {
    if (m[var] == 0) continue;
    Monomial d = m;
    d.exponents[var] -= 1;
    out.add_term(d, c * m[var]);
  }
  return out;
}

inline Polynomial partial_derivative(const Polynomial& p, std::string_view name) {
  return partial_derivative(p, p.space()->index_of(name));
}

/// Right-hand side of an ODE over a subset of the variables: d(vars[i])/dt = rhs[i].
struct VectorField {
  std::vector<std::size_t> vars;
  std::vector<Polynomial> rhs;
};

/// L_f v = sum_i dv/dvars[i] * rhs[i], plus dv/dt when include_time is set.
inline Polynomial lie_derivative(const Polynomial& v, const VectorField& field, bool include_time) {
  if (field.vars.size() != field.rhs.size())
    throw StructuralError("vector field has " + std::to_string(field.vars.size()) +
                          " variables but " + std::to_string(field.rhs.size()) + " entries");
  Polynomial out(v.space());
  for (std::size_t i = 0; i < field.vars.size(); ++i) {
    if (!same_space(field.rhs[i].space(), v.space()))
      throw StructuralError("vector field and function live on different variable spaces");
    if (!v.depends_on(field.vars[i]) || field.rhs[i].is_zero()) continue;
    out += partial_derivative(v, field.vars[i]) * field.rhs[i];
  }
  if (include_time) {
    auto t = v.space()->time_index();
    if (!t) throw StructuralError("time derivative requested on a space without a time variable");
    out += partial_derivative(v, *t);
  }
  return out;
}

/// Original variable = scale * new variable + offset.
struct AffineMap {
  double scale = 1.0;
  double offset = 0.0;

  double forward(double hatted) const { return scale * hatted + offset; }
  double inverse(double original) const { return (original - offset) / scale; }
};

/// Rewrites p(x) as a polynomial in x_hat where x_i = maps[i].scale * x_hat_i + maps[i].offset.
/// The result lives on `target` (defaults to p's own space) which must have the same dimension.
inline Polynomial affine_substitute(const Polynomial& p, std::span<const AffineMap> maps,
                                    VarSpacePtr target = nullptr) {
  const std::size_t n = p.space()->size();
  if (maps.size() != n)
    throw StructuralError("affine map covers " + std::to_string(maps.size()) + " of " +
                          std::to_string(n) + " variables");
  if (!target) target = p.space();
  if (target->size() != n) throw StructuralError("target space dimension mismatch");

  // expansions[i][k] = coefficients of (a x + b)^k in powers of x.
  std::vector<std::vector<std::vector<double>>> expansions(n);
  for (const auto& [m, c] : p.terms()) {
    for (std::size_t i = 0; i < n; ++i) {
      auto& e = expansions[i];
      if (e.empty()) e.push_back({1.0});
      while (static_cast<int>(e.size()) <= m[i]) {
        const auto& prev = e.back();
        std::vector<double> next(prev.size() + 1, 0.0);
        for (std::size_t j = 0; j < prev.size(); ++j) {
          next[j] += prev[j] * maps[i].offset;
          next[j + 1] += prev[j] * maps[i].scale;
        }
        e.push_back(std::move(next));
      }
    }
  }

  Polynomial out(target);
  Monomial cursor(n);
  for (const auto& [m, c] : p.terms()) {
    // Walk the cartesian product of the per-variable expansions.
    std::vector<std::size_t> idx(n, 0);
    while (true) {
      double coeff = c;
      for (std::size_t i = 0; i < n; ++i) {
        coeff *= expansions[i][m[i]][idx[i]];
        cursor.exponents[i] = static_cast<int>(idx[i]);
      }
      out.add_term(cursor, coeff);
      std::size_t i = 0;
      for (; i < n; ++i) {
        if (idx[i] < static_cast<std::size_t>(m[i])) {
          ++idx[i];
          break;
        }
        idx[i] = 0;
      }
      if (i == n) break;
    }
  }
  return out;
}

/// Replaces variable `var` by a numeric value.
inline Polynomial substitute_value(const Polynomial& p, std::size_t var, double value) {
  Polynomial out(p.space());
  for (const auto& [m, c] : p.terms()) {
    Monomial r = m;
    r.exponents[var] = 0;
    out.add_term(r, c * std::pow(value, m[var]));
  }
  return out;
}

/// Carries p onto another space by variable name; every variable p uses must exist there.
inline Polynomial rebase(const Polynomial& p, const VarSpacePtr& target) {
  if (same_space(p.space(), target)) return p;
  std::vector<std::size_t> where(p.space()->size());
  for (std::size_t i = 0; i < where.size(); ++i) {
    if (!p.depends_on(i)) continue;
    where[i] = target->index_of((*p.space())[i].name);
  }
  Polynomial out(target);
  for (const auto& [m, c] : p.terms()) {
    Monomial r(target->size());
    for (std::size_t i = 0; i < m.size(); ++i)
      if (m[i] > 0) r.exponents[where[i]] = m[i];
    out.add_term(r, c);
  }
  return out;
}

inline std::string monomial_to_string(const Monomial& m, const VarSpace& space) {
  std::string out;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m[i] == 0) continue;
    if (!out.empty()) out += "*";
    out += space[i].name;
    if (m[i] > 1) out += "^" + std::to_string(m[i]);
  }
  return out.empty() ? "1" : out;
}

/// Text form `c*x1^2*x3 + ...`; parse_polynomial reads it back exactly.
inline std::string to_string(const Polynomial& p) {
  if (p.is_zero()) return "0";
  std::string out;
  bool first = true;
  for (const auto& [m, c] : p.terms()) {
    double mag = c;
    if (!first) {
      out += c < 0 ? " - " : " + ";
      mag = std::abs(c);
    }
    out += format_double(mag);
    if (m.degree() > 0) out += "*" + monomial_to_string(m, *p.space());
    first = false;
  }
  return out;
}

namespace detail {

class PolynomialParser {
 public:
  PolynomialParser(std::string_view text, VarSpacePtr space) : text_(text), space_(std::move(space)) {}

  Polynomial parse() {
    Polynomial out(space_);
    skip_ws();
    if (pos_ == text_.size()) throw ParseError("empty polynomial text");
    bool first = true;
    while (true) {
      skip_ws();
      if (pos_ == text_.size()) break;
      double sign = 1.0;
      if (peek() == '+' || peek() == '-') {
        sign = peek() == '-' ? -1.0 : 1.0;
        ++pos_;
      } else if (!first) {
        fail("expected '+' or '-'");
      }
      parse_term(out, sign);
      first = false;
    }
    return out;
  }

 private:
  void parse_term(Polynomial& out, double sign) {
    double coeff = sign;
    Monomial m(space_->size());
    while (true) {
      skip_ws();
      if (pos_ == text_.size()) fail("dangling operator");
      const char ch = peek();
      if (std::isdigit(static_cast<unsigned char>(ch)) || ch == '.') {
        coeff *= parse_number();
      } else if (std::isalpha(static_cast<unsigned char>(ch)) || ch == '_') {
        const std::size_t var = space_->find(parse_name()).value_or(space_->size());
        if (var == space_->size()) fail("unknown variable");
        int e = 1;
        skip_ws();
        if (pos_ < text_.size() && peek() == '^') {
          ++pos_;
          skip_ws();
          const double raw = parse_number();
          if (raw != std::floor(raw) || raw > 1000) fail("exponent must be a nonnegative integer");
          e = static_cast<int>(raw);
        }
        m.exponents[var] += e;
      } else {
        fail(std::string("unexpected character '") + ch + "'");
      }
      skip_ws();
      if (pos_ < text_.size() && peek() == '*') {
        ++pos_;
        continue;
      }
      break;
    }
    out.add_term(m, coeff);
  }

  double parse_number() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isdigit(static_cast<unsigned char>(peek())) || peek() == '.'))
      ++pos_;
    if (pos_ < text_.size() && (peek() == 'e' || peek() == 'E')) {
      std::size_t look = pos_ + 1;
      if (look < text_.size() && (text_[look] == '+' || text_[look] == '-')) ++look;
      if (look < text_.size() && std::isdigit(static_cast<unsigned char>(text_[look]))) {
        pos_ = look;
        while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(peek()))) ++pos_;
      }
    }
    return parse_double(text_.substr(start, pos_ - start));
  }

  std::string_view parse_name() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_'))
      ++pos_;
    return text_.substr(start, pos_ - start);
  }

  char peek() const { return text_[pos_]; }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError(what + " at offset " + std::to_string(pos_) + " in '" + std::string(text_) +
                     "'");
  }

  std::string_view text_;
  VarSpacePtr space_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline Polynomial parse_polynomial(std::string_view text, const VarSpacePtr& space) {
  return detail::PolynomialParser(text, space).parse();
}

}  // namespace occf
