#pragma once

// The asymmetric unimodal test family
//
//   f(x) = sum_i eta1_i E[min(x_i, (D - s_i)^+)] - sum_i eta2_i x_i,
//   s_i = x_1 + ... + x_{i-1},  D ~ U(mu - h, mu + h),
//
// with theta = (mu, eta2_1, ..., eta2_k), prior boxes and pool generation,
// and the registry through which other models plug in.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kgdp/core.hpp"
#include "kgdp/rng.hpp"

namespace kgdp {

struct AsymmetricUnimodalSpec {
  std::size_t k = 1;
  std::vector<double> eta1{10.0};
  double demand_halfwidth = 5.0;

  std::size_t theta_dimension() const { return k + 1; }

  void validate() const {
    if (k == 0) throw Error("benchmark dimension k must be >= 1");
    if (eta1.size() != k) throw Error("eta1 must have exactly k entries");
    for (double e : eta1)
      if (!(e > 0.0) || !std::isfinite(e)) throw Error("eta1 entries must be positive");
    if (!(demand_halfwidth > 0.0) || !std::isfinite(demand_halfwidth))
      throw Error("degenerate demand support: demand_halfwidth must be positive");
  }
};

namespace detail {

// integral_{-inf}^{t} min(x, z^+) dz
inline double clipped_ramp_integral(double t, double x) {
  if (t <= 0.0) return 0.0;
  if (t <= x) return 0.5 * t * t;
  return 0.5 * x * x + x * (t - x);
}

}  // namespace detail

// E[min(x, (D - s)^+)] for D ~ U(lo, hi), x >= 0.
inline double expected_clipped_sales(double x, double s, double lo, double hi) {
  if (!(hi > lo)) throw Error("degenerate demand support");
  if (x <= 0.0) return 0.0;
  return (detail::clipped_ramp_integral(hi - s, x) - detail::clipped_ramp_integral(lo - s, x)) /
         (hi - lo);
}

inline double asym_eval(const AsymmetricUnimodalSpec& spec, std::span<const double> theta,
                        std::span<const double> x) {
  if (theta.size() != spec.theta_dimension())
    throw Error("theta must have k+1 entries (mean of D, then eta2)");
  if (x.size() != spec.k) throw Error("x must have k entries");
  const double lo = theta[0] - spec.demand_halfwidth;
  const double hi = theta[0] + spec.demand_halfwidth;
  double f = 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < spec.k; ++i) {
    if (x[i] < 0.0) throw Error("benchmark alternatives must be nonnegative");
    f += spec.eta1[i] * expected_clipped_sales(x[i], s, lo, hi) - theta[i + 1] * x[i];
    s += x[i];
  }
  return f;
}

struct MonteCarloEstimate {
  double mean = 0.0;
  double stderr_ = 0.0;
};

// Brute-force estimate of the same expectation by sampling D.
inline MonteCarloEstimate asym_eval_mc_oracle(const AsymmetricUnimodalSpec& spec,
                                              std::span<const double> theta,
                                              std::span<const double> x, std::size_t samples,
                                              std::uint64_t seed) {
  if (samples < 2) throw Error("Monte Carlo oracle needs at least two samples");
  Rng rng(seed);
  std::uniform_real_distribution<double> demand(theta[0] - spec.demand_halfwidth,
                                                theta[0] + spec.demand_halfwidth);
  double linear = 0.0;
  for (std::size_t i = 0; i < spec.k; ++i) linear += theta[i + 1] * x[i];
  double mean = 0.0;
  double m2 = 0.0;
  for (std::size_t n = 1; n <= samples; ++n) {
    const double d = demand(rng);
    double v = 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < spec.k; ++i) {
      v += spec.eta1[i] * std::min(x[i], std::max(d - s, 0.0));
      s += x[i];
    }
    v -= linear;
    const double delta = v - mean;
    mean += delta / static_cast<double>(n);
    m2 += delta * (v - mean);
  }
  const double var = m2 / static_cast<double>(samples - 1);
  return {mean, std::sqrt(var / static_cast<double>(samples))};
}

inline ModelSpec make_asymmetric_unimodal_model(AsymmetricUnimodalSpec spec) {
  spec.validate();
  ModelSpec m;
  m.name = "asymmetric_unimodal";
  m.dimension = spec.theta_dimension();
  m.evaluate = [spec = std::move(spec)](std::span<const double> theta, std::span<const double> x) {
    return asym_eval(spec, theta, x);
  };
  return m;
}

// Independent uniform prior over a box, and the pool size drawn from it.
struct PriorSpec {
  std::vector<double> lower;
  std::vector<double> upper;
  std::size_t pool_size = 10000;  // K
  std::uint64_t seed = 1;

  void validate() const {
    if (lower.empty() || lower.size() != upper.size())
      throw Error("prior lower and upper bounds must be non-empty and of equal length");
    for (std::size_t i = 0; i < lower.size(); ++i)
      if (!(lower[i] < upper[i])) throw Error("prior lower bound must be < upper bound in dimension " +
                                              std::to_string(i));
    if (pool_size == 0) throw Error("pool size K must be >= 1");
  }
};

inline ParameterPool make_pool(const PriorSpec& prior, std::size_t candidate_count = 0) {
  prior.validate();
  if (prior.pool_size < candidate_count)
    throw Error("pool size K (" + std::to_string(prior.pool_size) + ") must be >= L (" +
                std::to_string(candidate_count) + ")");
  const std::size_t d = prior.lower.size();
  Rng rng = substream(prior.seed, Stream::kPool);
  std::vector<double> data(prior.pool_size * d);
  for (std::size_t k = 0; k < prior.pool_size; ++k)
    for (std::size_t i = 0; i < d; ++i)
      data[k * d + i] = std::uniform_real_distribution<double>(prior.lower[i], prior.upper[i])(rng);
  return ParameterPool(d, std::move(data));
}

// Cartesian grid with `points` per axis over a box, last axis fastest.
inline AlternativeSet grid_alternatives(const std::vector<double>& lower,
                                        const std::vector<double>& upper, std::size_t points) {
  if (lower.empty() || lower.size() != upper.size()) throw Error("grid bounds length mismatch");
  if (points < 1) throw Error("grid needs at least one point per axis");
  const std::size_t k = lower.size();
  std::size_t total = 1;
  for (std::size_t i = 0; i < k; ++i) total *= points;
  std::vector<std::vector<double>> feats;
  feats.reserve(total);
  std::vector<std::size_t> digit(k, 0);
  for (std::size_t n = 0; n < total; ++n) {
    std::vector<double> x(k);
    for (std::size_t i = 0; i < k; ++i) {
      const double t = points == 1 ? 0.0 : static_cast<double>(digit[i]) / (points - 1);
      x[i] = lower[i] + t * (upper[i] - lower[i]);
    }
    feats.push_back(std::move(x));
    for (std::size_t i = k; i-- > 0;) {
      if (++digit[i] < points) break;
      digit[i] = 0;
    }
  }
  return AlternativeSet(std::move(feats));
}

// Named model factories. A factory receives the model's "params" object
// and returns the evaluable model; it must reject unknown keys.
class ModelRegistry {
 public:
  using Factory = std::function<ModelSpec(const nlohmann::json& params)>;

  static ModelRegistry& instance() {
    static ModelRegistry registry;
    return registry;
  }

  void add(const std::string& name, Factory factory) {
    std::lock_guard lock(mu_);
    factories_[name] = std::move(factory);
  }

  bool contains(const std::string& name) const {
    std::lock_guard lock(mu_);
    return factories_.count(name) != 0;
  }

  ModelSpec create(const std::string& name, const nlohmann::json& params) const {
    Factory f;
    {
      std::lock_guard lock(mu_);
      auto it = factories_.find(name);
      if (it == factories_.end()) throw Error("unknown model '" + name + "' (registered: " + names() + ")");
      f = it->second;
    }
    return f(params);
  }

  std::string names() const {
    std::string out;
    for (const auto& [n, _] : factories_) out += (out.empty() ? "" : ", ") + n;
    return out;
  }

 private:
  ModelRegistry() {
    factories_["asymmetric_unimodal"] = [](const nlohmann::json& p) {
      return make_asymmetric_unimodal_model(parse_asymmetric_unimodal(p));
    };
  }

  static AsymmetricUnimodalSpec parse_asymmetric_unimodal(const nlohmann::json& p) {
    if (!p.is_object()) throw Error("model params must be an object");
    for (const auto& [key, _] : p.items())
      if (key != "k" && key != "eta1" && key != "demand_halfwidth")
        throw Error("unknown model parameter '" + key + "' (valid: k, eta1, demand_halfwidth)");
    AsymmetricUnimodalSpec s;
    s.k = p.value("k", std::size_t{1});
    if (p.contains("eta1")) {
      s.eta1 = p.at("eta1").get<std::vector<double>>();
    } else {
      // default: decreasing margins 10, 8, 6, ...
      s.eta1.clear();
      for (std::size_t i = 0; i < s.k; ++i) s.eta1.push_back(10.0 - 2.0 * static_cast<double>(i));
    }
    s.demand_halfwidth = p.value("demand_halfwidth", 5.0);
    s.validate();
    return s;
  }

  mutable std::mutex mu_;
  std::map<std::string, Factory> factories_;
};

}  // namespace kgdp
