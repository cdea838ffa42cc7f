#pragma once

// Domain types shared by the whole library: alternatives, parameter
// vectors, the model interface, the weighted candidate set and the
// measurement history.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "kgdp/error.hpp"

namespace kgdp {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

namespace detail {

inline bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double d) { return std::isfinite(d); });
}

}  // namespace detail

struct Alternative {
  std::size_t index = 0;
  std::vector<double> features;
};

// The finite design space. Indices are assigned 0..M-1 in order.
class AlternativeSet {
 public:
  AlternativeSet() = default;

  explicit AlternativeSet(std::vector<std::vector<double>> features) {
    if (features.empty()) throw Error("alternative set must not be empty");
    alts_.reserve(features.size());
    for (std::size_t m = 0; m < features.size(); ++m) {
      if (!detail::all_finite(features[m]))
        throw Error("alternative " + std::to_string(m) + " has non-finite features");
      alts_.push_back({m, std::move(features[m])});
    }
  }

  std::size_t size() const noexcept { return alts_.size(); }
  bool empty() const noexcept { return alts_.empty(); }
  const Alternative& operator[](std::size_t m) const { return alts_[m]; }
  const Alternative& at(std::size_t m) const {
    if (m >= alts_.size()) throw Error("alternative index " + std::to_string(m) + " out of range");
    return alts_[m];
  }
  auto begin() const noexcept { return alts_.begin(); }
  auto end() const noexcept { return alts_.end(); }

 private:
  std::vector<Alternative> alts_;
};

// A point theta in parameter space.
class ParameterVector {
 public:
  ParameterVector() = default;
  ParameterVector(std::initializer_list<double> v) : ParameterVector(std::vector<double>(v)) {}
  explicit ParameterVector(std::vector<double> values) : values_(std::move(values)) {
    if (!detail::all_finite(values_)) throw Error("parameter vector has non-finite entries");
  }

  std::size_t size() const noexcept { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  std::span<const double> span() const noexcept { return values_; }
  const std::vector<double>& values() const noexcept { return values_; }

  friend bool operator==(const ParameterVector&, const ParameterVector&) = default;

 private:
  std::vector<double> values_;
};

// f(x; theta). `evaluate` must be pure.
struct ModelSpec {
  using Evaluate = std::function<double(std::span<const double> theta, std::span<const double> x)>;

  std::string name;
  std::size_t dimension = 0;
  Evaluate evaluate;

  double operator()(std::span<const double> theta, const Alternative& x) const {
    return evaluate(theta, x.features);
  }
  double operator()(const ParameterVector& theta, const Alternative& x) const {
    return evaluate(theta.span(), x.features);
  }
};

// Known measurement noise, W ~ N(0, sigma^2).
class NoiseModel {
 public:
  explicit NoiseModel(double sigma) : sigma_(sigma) {
    if (!(sigma > 0.0) || !std::isfinite(sigma))
      throw Error("noise sigma must be positive and finite, got " + std::to_string(sigma));
  }
  double sigma() const noexcept { return sigma_; }
  double variance() const noexcept { return sigma_ * sigma_; }

 private:
  double sigma_;
};

struct Measurement {
  std::size_t alt = 0;
  double y = 0.0;

  friend bool operator==(const Measurement&, const Measurement&) = default;
};

class MeasurementHistory {
 public:
  MeasurementHistory() = default;
  explicit MeasurementHistory(std::vector<Measurement> entries) : entries_(std::move(entries)) {}

  void push_back(Measurement m) { entries_.push_back(m); }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  const Measurement& operator[](std::size_t j) const { return entries_[j]; }
  auto begin() const noexcept { return entries_.begin(); }
  auto end() const noexcept { return entries_.end(); }
  const std::vector<Measurement>& entries() const noexcept { return entries_; }

  void validate(std::size_t alternative_count) const {
    for (std::size_t j = 0; j < entries_.size(); ++j) {
      if (entries_[j].alt >= alternative_count)
        throw Error("history entry " + std::to_string(j) + " refers to alternative " +
                    std::to_string(entries_[j].alt) + " of " + std::to_string(alternative_count));
      if (!std::isfinite(entries_[j].y))
        throw Error("history entry " + std::to_string(j) + " has a non-finite observation");
    }
  }

  friend bool operator==(const MeasurementHistory&, const MeasurementHistory&) = default;

 private:
  std::vector<Measurement> entries_;
};

// The large pool: K parameter vectors stored row-major.
class ParameterPool {
 public:
  ParameterPool() = default;
  ParameterPool(std::size_t dimension, std::vector<double> data)
      : dimension_(dimension), data_(std::move(data)) {
    if (dimension_ == 0 || data_.size() % dimension_ != 0)
      throw Error("pool data is not a whole number of parameter vectors");
  }

  std::size_t size() const noexcept { return dimension_ == 0 ? 0 : data_.size() / dimension_; }
  std::size_t dimension() const noexcept { return dimension_; }
  std::span<const double> row(std::size_t k) const {
    return std::span<const double>(data_).subspan(k * dimension_, dimension_);
  }
  ParameterVector at(std::size_t k) const {
    if (k >= size()) throw Error("pool index " + std::to_string(k) + " out of range");
    auto r = row(k);
    return ParameterVector(std::vector<double>(r.begin(), r.end()));
  }

 private:
  std::size_t dimension_ = 0;
  std::vector<double> data_;
};

// Stable log-sum-exp; -inf when every entry is -inf.
inline double log_sum_exp(std::span<const double> v) {
  double hi = kNegInf;
  for (double d : v) hi = std::max(hi, d);
  if (hi == kNegInf) return kNegInf;
  double acc = 0.0;
  for (double d : v) acc += std::exp(d - hi);
  return hi + std::log(acc);
}

inline std::vector<double> normalize_log_weights(std::span<const double> log_w) {
  for (double d : log_w) {
    if (std::isnan(d) || d == std::numeric_limits<double>::infinity())
      throw Error("log weights must be finite or -inf");
  }
  const double z = log_sum_exp(log_w);
  if (z == kNegInf) throw Error("degenerate weights: every log weight is -inf");
  std::vector<double> out(log_w.begin(), log_w.end());
  // Already normalized up to rounding: leave untouched, so that
  // normalizing twice (e.g. a persisted, reloaded belief) is exact.
  if (std::abs(z) <= 64.0 * std::numeric_limits<double>::epsilon()) return out;
  for (double& d : out) d -= z;
  return out;
}

// L weighted candidates with f(x; theta_i) cached over every alternative.
// The parameter block is shared between copies; only the weights differ
// after an update.
class CandidateSet {
 public:
  static constexpr std::ptrdiff_t kNoPoolIndex = -1;

  CandidateSet() = default;

  // Uniform weights. `pool_indices` is either empty or one entry per
  // candidate (kNoPoolIndex for candidates that do not come from a pool).
  static CandidateSet uniform(std::vector<ParameterVector> candidates, const ModelSpec& model,
                              const AlternativeSet& alts,
                              std::vector<std::ptrdiff_t> pool_indices = {}) {
    std::vector<double> lw(candidates.size(), 0.0);
    return with_weights(std::move(candidates), model, alts, std::move(pool_indices), std::move(lw));
  }

  static CandidateSet with_weights(std::vector<ParameterVector> candidates, const ModelSpec& model,
                                   const AlternativeSet& alts,
                                   std::vector<std::ptrdiff_t> pool_indices,
                                   std::vector<double> log_weights) {
    if (candidates.empty()) throw Error("candidate set must not be empty");
    const std::size_t l = candidates.size();
    const std::size_t m = alts.size();
    std::vector<double> values(l * m);
    for (std::size_t i = 0; i < l; ++i) {
      if (model.dimension != 0 && candidates[i].size() != model.dimension)
        throw Error("candidate " + std::to_string(i) + " has dimension " +
                    std::to_string(candidates[i].size()) + ", model expects " +
                    std::to_string(model.dimension));
      for (std::size_t a = 0; a < m; ++a) {
        const double v = model(candidates[i], alts[a]);
        if (!std::isfinite(v))
          throw Error("model returned a non-finite value for candidate " + std::to_string(i) +
                      " at alternative " + std::to_string(a));
        values[i * m + a] = v;
      }
    }
    return from_parts(std::move(candidates), std::move(pool_indices), m, std::move(values),
                      std::move(log_weights));
  }

  // Synthetic set defined directly by its value table (rows = candidates).
  // Candidate i is represented by the parameter vector {i}.
  static CandidateSet from_values(const std::vector<std::vector<double>>& rows,
                                  std::vector<double> log_weights = {}) {
    if (rows.empty()) throw Error("candidate set must not be empty");
    const std::size_t m = rows.front().size();
    std::vector<ParameterVector> cands;
    std::vector<double> values;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != m) throw Error("ragged value table");
      cands.emplace_back(std::vector<double>{static_cast<double>(i)});
      values.insert(values.end(), rows[i].begin(), rows[i].end());
    }
    if (log_weights.empty()) log_weights.assign(rows.size(), 0.0);
    return from_parts(std::move(cands), {}, m, std::move(values), std::move(log_weights));
  }

  // Same candidates, new unnormalized log weights.
  CandidateSet reweighted(std::span<const double> log_weights) const {
    if (log_weights.size() != size()) throw Error("log weight vector has the wrong length");
    CandidateSet out;
    out.block_ = block_;
    out.set_log_posterior(std::vector<double>(log_weights.begin(), log_weights.end()));
    return out;
  }

  std::size_t size() const noexcept { return log_weights_.size(); }
  std::size_t alternative_count() const noexcept { return block_ ? block_->alternatives : 0; }

  const ParameterVector& candidate(std::size_t i) const { return block_->candidates.at(i); }
  const std::vector<ParameterVector>& candidates() const { return block_->candidates; }
  std::ptrdiff_t pool_index(std::size_t i) const { return block_->pool_indices.at(i); }
  const std::vector<std::ptrdiff_t>& pool_indices() const { return block_->pool_indices; }

  // Updates accumulate into the unnormalized log posterior and normalize
  // once per step, so a chain of updates rounds like a single batch sum.
  const std::vector<double>& log_posterior() const noexcept { return log_posterior_; }
  const std::vector<double>& log_weights() const noexcept { return log_weights_; }
  double log_weight(std::size_t i) const { return log_weights_.at(i); }
  double weight(std::size_t i) const { return std::exp(log_weights_.at(i)); }
  std::vector<double> weights() const {
    std::vector<double> w(log_weights_.size());
    std::transform(log_weights_.begin(), log_weights_.end(), w.begin(),
                   [](double d) { return std::exp(d); });
    return w;
  }

  // f(x_m; theta_i)
  double value(std::size_t i, std::size_t m) const {
    return block_->values[i * block_->alternatives + m];
  }
  // Row i of the value table.
  std::span<const double> values_of(std::size_t i) const {
    return std::span<const double>(block_->values).subspan(i * block_->alternatives,
                                                           block_->alternatives);
  }

  void check_alternative(std::size_t m) const {
    if (m >= alternative_count())
      throw Error("alternative index " + std::to_string(m) + " out of range (M = " +
                  std::to_string(alternative_count()) + ")");
  }

 private:
  struct Block {
    std::vector<ParameterVector> candidates;
    std::vector<std::ptrdiff_t> pool_indices;
    std::size_t alternatives = 0;
    std::vector<double> values;
  };

  static CandidateSet from_parts(std::vector<ParameterVector> cands,
                                 std::vector<std::ptrdiff_t> pool_indices, std::size_t m,
                                 std::vector<double> values, std::vector<double> log_weights) {
    const std::size_t l = cands.size();
    if (pool_indices.empty()) pool_indices.assign(l, kNoPoolIndex);
    if (pool_indices.size() != l) throw Error("pool index list has the wrong length");
    if (log_weights.size() != l) throw Error("log weight vector has the wrong length");
    auto block = std::make_shared<Block>();
    block->candidates = std::move(cands);
    block->pool_indices = std::move(pool_indices);
    block->alternatives = m;
    block->values = std::move(values);
    CandidateSet out;
    out.block_ = std::move(block);
    out.set_log_posterior(std::move(log_weights));
    return out;
  }

  void set_log_posterior(std::vector<double> lw) {
    log_weights_ = normalize_log_weights(lw);
    log_posterior_ = std::move(lw);
  }

  std::shared_ptr<const Block> block_;
  std::vector<double> log_posterior_;
  std::vector<double> log_weights_;
};

// fbar(x_m) = sum_i p_i f(x_m; theta_i)
inline double posterior_mean(const CandidateSet& cs, std::size_t m) {
  cs.check_alternative(m);
  double acc = 0.0;
  for (std::size_t i = 0; i < cs.size(); ++i) {
    const double lw = cs.log_weight(i);
    if (lw == kNegInf) continue;
    acc += std::exp(lw) * cs.value(i, m);
  }
  return acc;
}

inline std::vector<double> posterior_means(const CandidateSet& cs) {
  std::vector<double> out(cs.alternative_count(), 0.0);
  for (std::size_t i = 0; i < cs.size(); ++i) {
    const double lw = cs.log_weight(i);
    if (lw == kNegInf) continue;
    const double p = std::exp(lw);
    auto row = cs.values_of(i);
    for (std::size_t m = 0; m < out.size(); ++m) out[m] += p * row[m];
  }
  return out;
}

// Natural-log entropy of a normalized log-weight vector, 0 log 0 = 0.
inline double entropy_of_log_weights(std::span<const double> log_w) {
  double h = 0.0;
  for (double lw : log_w) {
    if (lw == kNegInf) continue;
    h -= std::exp(lw) * lw;
  }
  return std::max(h, 0.0);
}

inline double entropy(const CandidateSet& cs) { return entropy_of_log_weights(cs.log_weights()); }

// Lowest index among maximal entries.
inline std::size_t argmax_lowest(std::span<const double> v) {
  if (v.empty()) throw Error("argmax of an empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

}  // namespace kgdp
