#pragma once

// Bayesian reweighting of candidate sets under Gaussian noise, and the
// residual statistics used to rank the large pool.
//
// Log-likelihoods drop the (sqrt(2 pi) sigma)^-1 factors: every consumer
// either normalizes or ranks, so the constant never matters.

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "kgdp/core.hpp"

namespace kgdp {

inline double gaussian_log_kernel(double residual, const NoiseModel& noise) {
  return -(residual * residual) / (2.0 * noise.variance());
}

// One application of Bayes' rule after observing y at alternative `alt`.
// Zero weights stay zero.
inline CandidateSet sequential_update(const CandidateSet& cs, std::size_t alt, double y,
                                      const NoiseModel& noise) {
  cs.check_alternative(alt);
  if (!std::isfinite(y)) throw Error("observation must be finite");
  std::vector<double> lw(cs.log_posterior());
  for (std::size_t i = 0; i < lw.size(); ++i) {
    if (lw[i] == kNegInf) continue;
    lw[i] += gaussian_log_kernel(y - cs.value(i, alt), noise);
  }
  return cs.reweighted(lw);
}

// log of prod_j exp(-(y_j - f(x_j; theta))^2 / (2 sigma^2))
inline double log_likelihood(std::span<const double> theta, const MeasurementHistory& hist,
                             const ModelSpec& model, const AlternativeSet& alts,
                             const NoiseModel& noise) {
  double acc = 0.0;
  for (const auto& [alt, y] : hist) acc += gaussian_log_kernel(y - model(theta, alts.at(alt)), noise);
  return acc;
}

inline double log_likelihood(const ParameterVector& theta, const MeasurementHistory& hist,
                             const ModelSpec& model, const AlternativeSet& alts,
                             const NoiseModel& noise) {
  return log_likelihood(theta.span(), hist, model, alts, noise);
}

// Weights from the whole history, starting from a uniform prior.
inline CandidateSet batch_update(std::vector<ParameterVector> candidates, const MeasurementHistory& hist,
                                 const ModelSpec& model, const AlternativeSet& alts,
                                 const NoiseModel& noise, std::vector<std::ptrdiff_t> pool_indices = {}) {
  if (candidates.empty()) throw Error("batch update needs at least one candidate");
  hist.validate(alts.size());
  const CandidateSet uniform =
      CandidateSet::uniform(std::move(candidates), model, alts, std::move(pool_indices));
  std::vector<double> lw(uniform.size(), 0.0);
  for (std::size_t i = 0; i < uniform.size(); ++i) {
    double acc = 0.0;
    for (const auto& [alt, y] : hist) acc += gaussian_log_kernel(y - uniform.value(i, alt), noise);
    lw[i] = acc;
  }
  return uniform.reweighted(lw);
}

inline double mse(std::span<const double> theta, const MeasurementHistory& hist,
                  const ModelSpec& model, const AlternativeSet& alts) {
  if (hist.empty()) throw Error("undefined MSE: empty measurement history");
  double acc = 0.0;
  for (const auto& [alt, y] : hist) {
    const double r = y - model(theta, alts.at(alt));
    acc += r * r;
  }
  return acc / static_cast<double>(hist.size());
}

inline double mse(const ParameterVector& theta, const MeasurementHistory& hist,
                  const ModelSpec& model, const AlternativeSet& alts) {
  return mse(theta.span(), hist, model, alts);
}

// Running sums of squared residuals for every member of the large pool.
class ResidualAccumulator {
 public:
  ResidualAccumulator() = default;
  explicit ResidualAccumulator(std::size_t pool_size) : sums_(pool_size, 0.0) {}

  std::size_t pool_size() const noexcept { return sums_.size(); }
  std::size_t count() const noexcept { return count_; }
  double sum(std::size_t k) const { return sums_.at(k); }
  const std::vector<double>& sums() const noexcept { return sums_; }

  double mse(std::size_t k) const {
    if (count_ == 0) throw Error("undefined MSE: empty measurement history");
    return sums_.at(k) / static_cast<double>(count_);
  }

  void add(const ParameterPool& pool, std::size_t alt, double y, const ModelSpec& model,
           const AlternativeSet& alts) {
    if (pool.size() != sums_.size()) throw Error("accumulator does not match the pool size");
    const Alternative& x = alts.at(alt);
    for (std::size_t k = 0; k < sums_.size(); ++k) {
      const double r = y - model(pool.row(k), x);
      sums_[k] += r * r;
    }
    ++count_;
  }

  // Lowest index among minimal sums.
  std::size_t argmin() const {
    if (count_ == 0) throw Error("undefined MSE: empty measurement history");
    std::size_t best = 0;
    for (std::size_t k = 1; k < sums_.size(); ++k)
      if (sums_[k] < sums_[best]) best = k;
    return best;
  }

  static ResidualAccumulator rebuild(const ParameterPool& pool, const MeasurementHistory& hist,
                                     const ModelSpec& model, const AlternativeSet& alts) {
    ResidualAccumulator acc(pool.size());
    for (const auto& [alt, y] : hist) acc.add(pool, alt, y, model, alts);
    return acc;
  }

 private:
  std::vector<double> sums_;
  std::size_t count_ = 0;
};

inline ResidualAccumulator accumulate_residuals(ResidualAccumulator acc, const ParameterPool& pool,
                                                std::size_t alt, double y, const ModelSpec& model,
                                                const AlternativeSet& alts) {
  acc.add(pool, alt, y, model, alts);
  return acc;
}

}  // namespace kgdp
