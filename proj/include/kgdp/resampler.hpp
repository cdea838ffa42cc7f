#pragma once

// Replacement of improbable candidates by likely members of the large pool.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "kgdp/belief.hpp"
#include "kgdp/core.hpp"
#include "kgdp/rng.hpp"

namespace kgdp {

struct ResampleConfig {
  int n_resamp = 5;
  double epsilon = 1e-3;
  std::size_t small_pool_size = 50;  // R
  std::size_t min_removal = 1;
  int max_iterations = 25;

  static std::size_t default_small_pool_size(std::size_t pool_size) {
    return std::min(pool_size, std::max<std::size_t>(50, pool_size / 1000));
  }

  void validate(std::size_t pool_size, std::size_t candidate_count) const {
    if (n_resamp < 1) throw Error("n_resamp must be >= 1");
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw Error("epsilon must lie in (0, 1)");
    if (small_pool_size > pool_size) throw Error("R must not exceed K (R <= K)");
    if (small_pool_size < candidate_count) throw Error("R must be at least L (R >= L)");
    if (min_removal < 1) throw Error("min_removal must be >= 1");
    if (min_removal > candidate_count) throw Error("min_removal must not exceed L");
    if (max_iterations < 1) throw Error("max_iterations must be >= 1");
  }
};

// `step` is the number of measurements taken so far (n+1 after the
// (n+1)-th observation).
inline bool should_resample(std::size_t step, const CandidateSet& cs, const ResampleConfig& cfg) {
  if (cfg.n_resamp > 0 && step % static_cast<std::size_t>(cfg.n_resamp) == 0) return true;
  const double log_eps = std::log(cfg.epsilon);
  std::size_t low = 0;
  for (double lw : cs.log_weights())
    if (lw < log_eps) ++low;
  return 2 * low > cs.size();
}

// Every candidate with weight <= epsilon; if there is none, the
// min_removal least probable (lower index first on ties).
inline std::vector<std::size_t> removal_set(const CandidateSet& cs, const ResampleConfig& cfg) {
  const double log_eps = std::log(cfg.epsilon);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < cs.size(); ++i)
    if (cs.log_weight(i) <= log_eps) out.push_back(i);
  if (!out.empty()) return out;
  std::vector<std::size_t> order(cs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return cs.log_weight(a) < cs.log_weight(b); });
  const std::size_t n = std::min(cfg.min_removal, cs.size());
  out.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n));
  std::sort(out.begin(), out.end());
  return out;
}

struct SmallPool {
  std::vector<std::size_t> members;     // pool indices, ascending MSE
  std::vector<double> log_likelihoods;  // per member
  double mse_threshold = 0.0;           // MSE of the R-th member
};

inline SmallPool build_small_pool(const ResidualAccumulator& acc, std::size_t r,
                                  const NoiseModel& noise) {
  if (acc.count() == 0) throw Error("small pool needs a non-empty history");
  if (r == 0 || r > acc.pool_size()) throw Error("small pool size must lie in [1, K]");
  std::vector<std::size_t> idx(acc.pool_size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const auto& sums = acc.sums();
  auto less = [&](std::size_t a, std::size_t b) {
    return sums[a] < sums[b] || (sums[a] == sums[b] && a < b);
  };
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(r), idx.end(), less);
  SmallPool pool;
  pool.members.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(r));
  pool.log_likelihoods.reserve(r);
  for (std::size_t k : pool.members) pool.log_likelihoods.push_back(-sums[k] / (2.0 * noise.variance()));
  pool.mse_threshold = acc.mse(pool.members.back());
  return pool;
}

// Draws `count` distinct positions of `log_weights` with the law of
// successive draws proportional to the remaining weights (Gumbel top-k).
// Positions are returned in draw order. Zero-weight positions are only
// used once every positive-weight position has been drawn, in random order.
inline std::vector<std::size_t> weighted_sample_positions(std::span<const double> log_weights,
                                                          std::size_t count, Rng& rng) {
  if (count > log_weights.size())
    throw Error("cannot draw " + std::to_string(count) + " items from " +
                std::to_string(log_weights.size()) + " without replacement");
  const bool any_finite = std::any_of(log_weights.begin(), log_weights.end(),
                                      [](double d) { return d != kNegInf; });
  if (!any_finite && count > 0) throw Error("degenerate weights: every log weight is -inf");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  struct Key {
    bool finite;
    double key;
    std::size_t pos;
  };
  std::vector<Key> keys(log_weights.size());
  for (std::size_t i = 0; i < log_weights.size(); ++i) {
    double u = unit(rng);
    while (u <= 0.0) u = unit(rng);
    const double gumbel = -std::log(-std::log(u));
    const bool finite = log_weights[i] != kNegInf;
    keys[i] = {finite, finite ? log_weights[i] + gumbel : gumbel, i};
  }
  auto greater = [](const Key& a, const Key& b) {
    if (a.finite != b.finite) return a.finite;
    if (a.key != b.key) return a.key > b.key;
    return a.pos < b.pos;
  };
  std::partial_sort(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(count), keys.end(),
                    greater);
  std::vector<std::size_t> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = keys[i].pos;
  return out;
}

template <typename T>
std::vector<T> weighted_sample_without_replacement(std::span<const T> items,
                                                   std::span<const double> log_weights,
                                                   std::size_t count, Rng& rng) {
  if (items.size() != log_weights.size()) throw Error("items and weights differ in length");
  std::vector<T> out;
  out.reserve(count);
  for (std::size_t pos : weighted_sample_positions(log_weights, count, rng)) out.push_back(items[pos]);
  return out;
}

struct ResampleOutcome {
  CandidateSet candidates;
  int iterations = 0;
  // The iteration cap was hit with candidates still at or below epsilon.
  bool capped = false;
  std::vector<std::size_t> drawn;  // pool indices drawn, all passes
};

struct PoolView {
  const ParameterPool& pool;
  const ResidualAccumulator& residuals;
};

// Remove, redraw from the small pool, and reweight from the full history
// until no candidate is at or below epsilon.
inline ResampleOutcome resample(const CandidateSet& cs, PoolView pool, const MeasurementHistory& hist,
                                const ResampleConfig& cfg, const ModelSpec& model,
                                const AlternativeSet& alts, const NoiseModel& noise, Rng& rng) {
  if (pool.residuals.count() != hist.size())
    throw Error("pool residuals are out of step with the history");
  const SmallPool small = build_small_pool(pool.residuals, cfg.small_pool_size, noise);
  const double log_eps = std::log(cfg.epsilon);

  ResampleOutcome out;
  out.candidates = cs;
  std::vector<std::size_t> removal = removal_set(cs, cfg);
  for (int it = 1; it <= cfg.max_iterations; ++it) {
    const CandidateSet& cur = out.candidates;
    std::vector<bool> drop(cur.size(), false);
    for (std::size_t i : removal) drop[i] = true;
    std::vector<ParameterVector> next;
    std::vector<std::ptrdiff_t> next_idx;
    for (std::size_t i = 0; i < cur.size(); ++i) {
      if (drop[i]) continue;
      next.push_back(cur.candidate(i));
      next_idx.push_back(cur.pool_index(i));
    }
    const auto picks = weighted_sample_positions(small.log_likelihoods, removal.size(), rng);
    for (std::size_t pos : picks) {
      const std::size_t k = small.members[pos];
      next.push_back(pool.pool.at(k));
      next_idx.push_back(static_cast<std::ptrdiff_t>(k));
      out.drawn.push_back(k);
    }
    out.candidates = batch_update(std::move(next), hist, model, alts, noise, std::move(next_idx));
    out.iterations = it;

    removal.clear();
    for (std::size_t i = 0; i < out.candidates.size(); ++i)
      if (out.candidates.log_weight(i) <= log_eps) removal.push_back(i);
    if (removal.empty()) return out;
  }
  out.capped = true;
  return out;
}

}  // namespace kgdp
