#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "kgdp/core.hpp"
#include "kgdp/rng.hpp"

namespace kgdp::testing {

// Random candidate set over M alternatives given directly by its value table.
inline CandidateSet random_values_set(Rng& rng, std::size_t l, std::size_t m, double spread = 3.0,
                                      bool random_weights = true) {
  std::normal_distribution<double> value(0.0, spread);
  std::normal_distribution<double> logw(0.0, 1.5);
  std::vector<std::vector<double>> rows(l, std::vector<double>(m));
  for (auto& row : rows)
    for (double& v : row) v = value(rng);
  std::vector<double> lw(l, 0.0);
  if (random_weights)
    for (double& w : lw) w = logw(rng);
  return CandidateSet::from_values(rows, lw);
}

inline double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Composite trapezoid rule on [a, b] with n intervals.
template <typename F>
double trapezoid(F&& f, double a, double b, std::size_t n) {
  const double h = (b - a) / static_cast<double>(n);
  double s = 0.5 * (f(a) + f(b));
  for (std::size_t i = 1; i < n; ++i) s += f(a + h * static_cast<double>(i));
  return s * h;
}

inline double normal_pdf(double y, double mean, double sigma) {
  const double z = (y - mean) / sigma;
  return std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * M_PI));
}

}  // namespace kgdp::testing

namespace kgdp::testing {

// f(x; theta) = theta_0 + theta_1 * x_0, a cheap model for unit tests.
inline ModelSpec line_model() {
  ModelSpec m;
  m.name = "line";
  m.dimension = 2;
  m.evaluate = [](std::span<const double> th, std::span<const double> x) { return th[0] + th[1] * x[0]; };
  return m;
}

inline AlternativeSet line_alternatives(std::size_t m) {
  std::vector<std::vector<double>> f;
  for (std::size_t i = 0; i < m; ++i) f.push_back({static_cast<double>(i)});
  return AlternativeSet(f);
}

}  // namespace kgdp::testing
