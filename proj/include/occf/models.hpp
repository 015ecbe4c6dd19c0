#pragma once

// Preset problem instances.

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "occf/ocp.hpp"

namespace occf {

/// Bergman minimal model constants. Rates are per minute.
///
/// p2 and p3 default to the midpoints of the uncertainty intervals. G_b is the
/// customary basal glucose. p1, n and p4 are placeholders for a diabetic
/// subject (low glucose effectiveness, no endogenous insulin) and should be
/// overridden with literature values for scientific use.
struct BergmanParams {
  double p1 = 0.005;
  double p2 = 0.05;
  double p3 = 2.85e-5;
  double p4 = 5.88;
  double n = 0.0926;
  double Gb = 90.0;
  double x1_max = 600.0;
  double x2_max = 1.0;
  double x3_max = 100.0;
  double u_max = 1.0;            ///< physical insulin infusion bound (uU/ml/min)
  /// Width used for x2 inside the relaxation. Remote insulin stays below about
  /// 0.04 over the horizon, far inside [0, x2_max]; 0 keeps x2_max.
  double x2_numerical_range = 0.05;
  double horizon_minutes = 80.0;  ///< 4800 s

  double p2_lower = 0.049, p2_upper = 0.051;
  double p3_lower = 2.7e-5, p3_upper = 3e-5;

  double g_lower = 80.0;    ///< XT lower glucose bound (mg/dl)
  double g_safe = 126.0;    ///< diabetic threshold
  double g_upper = 260.0;   ///< X0 upper glucose bound
  double i0_upper = 30.0;   ///< X0 upper serum insulin bound

  std::vector<double> factual{250.0, 0.0, 0.0};

  double horizon_seconds() const { return horizon_minutes * 60.0; }

  void check() const {
    for (auto [name, v] : {std::pair{"p1", p1}, {"p2", p2}, {"p3", p3}, {"p4", p4}, {"n", n},
                           {"Gb", Gb}, {"x1_max", x1_max}, {"x2_max", x2_max},
                           {"x3_max", x3_max}, {"u_max", u_max}, {"horizon", horizon_minutes}})
      if (!(v > 0.0) || !std::isfinite(v))
        throw ConfigurationError(std::string("Bergman parameter ") + name + " must be positive");
    if (!(p2_lower <= p2_upper) || !(p3_lower <= p3_upper) || p2_lower <= 0.0 || p3_lower <= 0.0)
      throw ConfigurationError("Bergman uncertainty intervals must be positive and ordered");
    if (x2_numerical_range < 0.0) throw ConfigurationError("x2 numerical range must be nonnegative");
    if (!(g_lower < g_safe && g_safe <= g_upper && g_upper <= x1_max))
      throw ConfigurationError("Bergman glucose thresholds must be ordered within [0, x1_max]");
    if (factual.size() != 3) throw ConfigurationError("Bergman factual needs three components");
  }
};

namespace detail {

inline OcpSpec bergman_spec(const BergmanParams& p, bool symbolic_parameters) {
  p.check();
  std::vector<Variable> vars{
      {"t", VarRole::time, "min", 0.0, p.horizon_minutes},
      {"x1", VarRole::state, "mg/dl", 0.0, p.x1_max},
      {"x2", VarRole::state, "uU/ml", 0.0, p.x2_max},
      {"x3", VarRole::state, "uU/ml", 0.0, p.x3_max},
      {"u", VarRole::control, "uU/ml/min", 0.0, p.u_max},
  };
  if (symbolic_parameters) {
    // Degenerate intervals still need a nonempty scale range.
    // The floor is relative so scaled coefficients stay above the drop threshold.
    const double w2 = std::max(p.p2_upper - p.p2_lower, 1e-6 * p.p2_lower);
    const double w3 = std::max(p.p3_upper - p.p3_lower, 1e-6 * p.p3_lower);
    vars.push_back({"p2", VarRole::parameter, "1/min", p.p2_lower, p.p2_lower + w2});
    vars.push_back({"p3", VarRole::parameter, "ml/(uU*min^2)", p.p3_lower, p.p3_lower + w3});
  }
  auto space = make_space(std::move(vars));
  auto c = [&](double v) { return Polynomial::constant(space, v); };
  auto var = [&](const char* name) { return Polynomial::variable(space, name); };
  const Polynomial x1 = var("x1"), x2 = var("x2"), x3 = var("x3");
  const Polynomial p2 = symbolic_parameters ? var("p2") : c(p.p2);
  const Polynomial p3 = symbolic_parameters ? var("p3") : c(p.p3);

  OcpSpec spec;
  spec.name = symbolic_parameters ? "bergman-uncertain" : "bergman-known";
  spec.space = space;
  spec.states = {space->index_of("x1"), space->index_of("x2"), space->index_of("x3")};
  spec.controls = {space->index_of("u")};
  spec.drift = {-p.p1 * x1 - x2 * x1 + c(p.p1 * p.Gb), -1.0 * p2 * x2 + p3 * x3, -p.n * x3};
  spec.input = {{Polynomial(space)}, {Polynomial(space)}, {c(p.p4)}};
  spec.initial = SemialgebraicSet{
      space,
      {interval_constraint(space, spec.states[0], p.g_safe, p.g_upper),
       interval_constraint(space, spec.states[2], 0.0, p.i0_upper)}};
  spec.path = box_set(space, spec.states);
  spec.terminal =
      SemialgebraicSet{space, {interval_constraint(space, spec.states[0], p.g_lower, p.g_safe)}};
  spec.control_set = box_set(space, spec.controls);
  spec.horizon = p.horizon_minutes;
  spec.time_unit_seconds = 60.0;
  spec.running_cost = energy_cost(space, spec.controls);
  spec.terminal_cost = Polynomial(space);
  spec.factual = p.factual;
  spec.sample_box = {{p.g_safe, p.g_upper}, {0.0, 0.0}, {0.0, p.i0_upper}};
  if (p.x2_numerical_range > 0.0) spec.numerical_ranges["x2"] = p.x2_numerical_range;
  if (symbolic_parameters) {
    spec.parameter_values = {{"p2", 0.5 * (p.p2_lower + p.p2_upper)},
                             {"p3", 0.5 * (p.p3_lower + p.p3_upper)}};
    spec.parameter_box = {{"p2", p.p2_lower, p.p2_upper}, {"p3", p.p3_lower, p.p3_upper}};
  }
  return spec;
}

}  // namespace detail

/// Bergman model with all rates fixed. Factual (250, 0, 0) by default.
inline OcpSpec bergman_known(const BergmanParams& params = {}) {
  return detail::bergman_spec(params, false);
}

/// Bergman model with p2 and p3 symbolic over their uncertainty box; nominal
/// values at the interval midpoints.
inline OcpSpec bergman_uncertain(const BergmanParams& params = {}) {
  return detail::bergman_spec(params, true);
}

/// x' = u on [0,1] with U = [-1,1], X0 = [0, target_lower], XT = [target_lower, target_upper].
/// The minimum energy to reach the target from x_f < target_lower in time T is
/// (target_lower - x_f)^2 / T.
inline OcpSpec double_integrator(double x_f = 0.2, double target_lower = 0.5,
                                 double target_upper = 1.0, double horizon = 1.0) {
  if (!(0.0 <= target_lower && target_lower < target_upper && target_upper <= 1.0))
    throw ConfigurationError("target interval must lie within [0,1]");
  if (!(horizon > 0.0)) throw ConfigurationError("horizon must be positive");
  auto space = make_space({{"t", VarRole::time, "s", 0.0, horizon},
                           {"x", VarRole::state, "", 0.0, 1.0},
                           {"u", VarRole::control, "", -1.0, 1.0}});
  OcpSpec spec;
  spec.name = "double-integrator";
  spec.space = space;
  spec.states = {1};
  spec.controls = {2};
  spec.drift = {Polynomial(space)};
  spec.input = {{Polynomial::constant(space, 1.0)}};
  const double x0_upper = std::max(target_lower, x_f);
  spec.initial = SemialgebraicSet{space, {interval_constraint(space, 1, 0.0, x0_upper)}};
  spec.path = box_set(space, spec.states);
  spec.terminal = SemialgebraicSet{space, {interval_constraint(space, 1, target_lower, target_upper)}};
  spec.control_set = box_set(space, spec.controls);
  spec.horizon = horizon;
  spec.time_unit_seconds = 1.0;
  spec.running_cost = energy_cost(space, spec.controls);
  spec.terminal_cost = Polynomial(space);
  spec.factual = {x_f};
  spec.sample_box = {{0.0, x0_upper}};
  return spec;
}

/// Analytic optimum of the double integrator preset.
inline double double_integrator_optimum(double x_f, double target_lower, double target_upper,
                                        double horizon) {
  if (x_f >= target_lower && x_f <= target_upper) return 0.0;
  const double b = x_f < target_lower ? target_lower : target_upper;
  return (b - x_f) * (b - x_f) / horizon;
}

/// x' = 0 on [0,1] with a control that has no effect, U = [-1,1]. Every factual
/// in XT has zero cost and reaches the target at any time.
inline OcpSpec zero_dynamics_toy(double x_f = 0.6, double target_lower = 0.5,
                                 double target_upper = 1.0, double horizon = 1.0) {
  OcpSpec spec = double_integrator(x_f, target_lower, target_upper, horizon);
  spec.name = "zero-dynamics";
  spec.input = {{Polynomial(spec.space)}};
  spec.initial = SemialgebraicSet{spec.space, {interval_constraint(spec.space, 1, 0.0, 1.0)}};
  spec.sample_box = {{0.0, 1.0}};
  return spec;
}

/// Reference d = 2 value-function coefficients for the factual (250, 0, 0) in
/// the order 1, x1, x2, x3, x1^2, x1 x2, x1 x3, x2^2, x2 x3, x3^2. Scaled states
/// use maximum-based scaling (x_i / x_i,max) without numerical ranges.
inline constexpr double kReferenceValueCoefficients[10] = {
    -2.7308, 18.7159, -353.7267, 0.6326, -27.9368, 82.6978, -2.0188, -755356.4616, -318.4366, -0.48977};
/// Reference affine feedback u = g1 + g2 x1 + g3 x2 + g4 x3 in the same scaled states.
inline constexpr double kReferenceFeedbackGains[4] = {-1.4879, 4.7483, 748.9628, 2.3039};

/// Reference value function over the named scaled states x1, x2, x3 of `space`.
inline Polynomial reference_value_function(const VarSpacePtr& space) {
  const Polynomial one = Polynomial::constant(space, 1.0);
  const Polynomial x1 = Polynomial::variable(space, "x1");
  const Polynomial x2 = Polynomial::variable(space, "x2");
  const Polynomial x3 = Polynomial::variable(space, "x3");
  const Polynomial basis[10] = {one, x1, x2, x3, x1 * x1, x1 * x2, x1 * x3, x2 * x2, x2 * x3, x3 * x3};
  Polynomial v(space);
  for (int i = 0; i < 10; ++i) v += kReferenceValueCoefficients[i] * basis[i];
  return v;
}

inline Polynomial reference_control_law(const VarSpacePtr& space) {
  return Polynomial::constant(space, kReferenceFeedbackGains[0]) +
         kReferenceFeedbackGains[1] * Polynomial::variable(space, "x1") +
         kReferenceFeedbackGains[2] * Polynomial::variable(space, "x2") +
         kReferenceFeedbackGains[3] * Polynomial::variable(space, "x3");
}

inline std::vector<std::string> preset_names() {
  return {"bergman-known", "bergman-uncertain", "double-integrator", "zero-dynamics"};
}

inline std::optional<OcpSpec> preset(const std::string& name) {
  if (name == "bergman-known") return bergman_known();
  if (name == "bergman-uncertain") return bergman_uncertain();
  if (name == "double-integrator") return double_integrator();
  if (name == "zero-dynamics") return zero_dynamics_toy();
  return std::nullopt;
}

}  // namespace occf
