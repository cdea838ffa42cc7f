#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "kgdp/error.hpp"

namespace kgdp {

// Nodes and weights of the physicists' Gauss-Hermite rule,
// integral f(t) exp(-t^2) dt ~= sum_k w_k f(t_k), nodes ascending.
// Weights sum to sqrt(pi).
struct GaussHermiteRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

namespace detail {

// Golub-Welsch: the nodes are the eigenvalues of the symmetric tridiagonal
// Jacobi matrix of the Hermite recurrence, and w_k = sqrt(pi) v_{0k}^2.
// Unlike Newton iteration on the recurrence this stays accurate when the
// outer weights underflow at high order.
inline GaussHermiteRule compute_gauss_hermite(int n) {
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd sub(std::max(n - 1, 0));
  for (int k = 1; k < n; ++k) sub[k - 1] = std::sqrt(0.5 * k);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig;
  eig.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
  if (eig.info() != Eigen::Success) throw Error("Gauss-Hermite eigenvalue problem did not converge");
  GaussHermiteRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  const double sqrt_pi = std::sqrt(std::numbers::pi);
  for (int k = 0; k < n; ++k) {
    const double v = eig.eigenvectors()(0, k);
    rule.nodes[k] = eig.eigenvalues()[k];
    rule.weights[k] = sqrt_pi * v * v;
  }
  // exact symmetry
  for (int k = 0; k < n / 2; ++k) {
    const double t = 0.5 * (rule.nodes[n - 1 - k] - rule.nodes[k]);
    const double w = 0.5 * (rule.weights[k] + rule.weights[n - 1 - k]);
    rule.nodes[k] = -t;
    rule.nodes[n - 1 - k] = t;
    rule.weights[k] = rule.weights[n - 1 - k] = w;
  }
  if (n % 2 == 1) rule.nodes[n / 2] = 0.0;
  return rule;
}

}  // namespace detail

// Rules are cached per order; the returned reference stays valid for the
// lifetime of the program.
inline const GaussHermiteRule& gauss_hermite(int order) {
  if (order < 1 || order > 512)
    throw Error("Gauss-Hermite order must be in [1, 512], got " + std::to_string(order));
  static std::mutex mu;
  static std::map<int, std::unique_ptr<GaussHermiteRule>> cache;
  std::lock_guard lock(mu);
  auto& slot = cache[order];
  if (!slot) slot = std::make_unique<GaussHermiteRule>(detail::compute_gauss_hermite(order));
  return *slot;
}

// E[g(W)] for W ~ N(0, sigma^2) as a weighted node list: nodes sigma*sqrt(2)*t_k,
// weights w_k / sqrt(pi) (these sum to one).
struct NormalExpectationRule {
  std::vector<double> offsets;
  std::vector<double> weights;
};

inline NormalExpectationRule normal_expectation_rule(int order, double sigma) {
  const auto& gh = gauss_hermite(order);
  NormalExpectationRule r;
  r.offsets.resize(gh.nodes.size());
  r.weights.resize(gh.nodes.size());
  const double scale = std::numbers::sqrt2 * sigma;
  const double inv_sqrt_pi = 1.0 / std::sqrt(std::numbers::pi);
  for (std::size_t k = 0; k < gh.nodes.size(); ++k) {
    r.offsets[k] = scale * gh.nodes[k];
    r.weights[k] = gh.weights[k] * inv_sqrt_pi;
  }
  return r;
}

}  // namespace kgdp
