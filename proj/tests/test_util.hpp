#pragma once

#include <functional>
#include <vector>

#include "occf/ocp.hpp"

namespace occf::test_support {

/// Open-loop RK4 of spec's field with control u(t), t in model time units.
inline std::vector<std::vector<double>> rk4(const OcpSpec& spec, std::vector<double> x, double t_end,
                                            std::size_t steps,
                                            const std::function<std::vector<double>(double)>& u) {
  std::vector<std::vector<double>> path{x};
  const double h = t_end / static_cast<double>(steps);
  const std::size_t n = x.size();
  auto add = [&](const std::vector<double>& a, const std::vector<double>& k, double s) {
    std::vector<double> r(n);
    for (std::size_t i = 0; i < n; ++i) r[i] = a[i] + s * k[i];
    return r;
  };
  for (std::size_t k = 0; k < steps; ++k) {
    const double t = h * static_cast<double>(k);
    const auto k1 = spec.evaluate_field(x, u(t), t);
    const auto k2 = spec.evaluate_field(add(x, k1, h / 2), u(t + h / 2), t + h / 2);
    const auto k3 = spec.evaluate_field(add(x, k2, h / 2), u(t + h / 2), t + h / 2);
    const auto k4 = spec.evaluate_field(add(x, k3, h), u(t + h), t + h);
    for (std::size_t i = 0; i < n; ++i) x[i] += h / 6 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
    path.push_back(x);
  }
  return path;
}

}  // namespace occf::test_support
