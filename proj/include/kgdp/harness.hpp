#pragma once

// The sequential measure / update / resample loop under a simulated truth,
// replication management and the evaluation metrics.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "kgdp/belief.hpp"
#include "kgdp/benchmarks.hpp"
#include "kgdp/core.hpp"
#include "kgdp/policies.hpp"
#include "kgdp/resampler.hpp"
#include "kgdp/rng.hpp"

namespace kgdp {

enum class TruthMode { kFromPool, kFromCandidates, kExternal };

inline std::string_view to_string(TruthMode t) {
  switch (t) {
    case TruthMode::kFromPool: return "from-pool";
    case TruthMode::kFromCandidates: return "from-candidates";
    case TruthMode::kExternal: return "external";
  }
  return "?";
}

inline TruthMode parse_truth_mode(std::string_view s) {
  if (s == "from-pool") return TruthMode::kFromPool;
  if (s == "from-candidates") return TruthMode::kFromCandidates;
  if (s == "external") return TruthMode::kExternal;
  throw Error("unknown truth_mode '" + std::string(s) +
              "' (valid: from-pool, from-candidates, external)");
}

struct ModelConfig {
  std::string name = "asymmetric_unimodal";
  nlohmann::json params = nlohmann::json::object();
};

// Either a grid (lower/upper/points_per_axis) or an explicit point list.
struct AlternativeConfig {
  std::vector<double> lower;
  std::vector<double> upper;
  std::size_t points_per_axis = 0;
  std::vector<std::vector<double>> points;
};

struct ExperimentConfig {
  ModelConfig model;
  AlternativeConfig alternatives;
  PriorSpec prior;
  std::size_t L = 10;
  std::size_t N = 30;
  // Exactly one of noise_level / sigma is set.
  std::optional<double> noise_level = 0.2;
  std::optional<double> sigma;
  PolicyKind policy = PolicyKind::kKgdpF;
  bool resample_enabled = true;
  ResampleConfig resample;
  TruthMode truth_mode = TruthMode::kFromPool;
  std::optional<std::vector<double>> truth;
  QuadratureSpec quadrature;
  double score_tolerance = 1e-8;
  std::size_t replications = 100;
  std::uint64_t seed = 1;
};

struct Problem {
  ModelSpec model;
  AlternativeSet alternatives;
  ParameterPool pool;
};

inline AlternativeSet build_alternatives(const AlternativeConfig& cfg) {
  if (!cfg.points.empty()) return AlternativeSet(cfg.points);
  return grid_alternatives(cfg.lower, cfg.upper, cfg.points_per_axis);
}

inline std::shared_ptr<const Problem> build_problem(const ExperimentConfig& cfg) {
  auto p = std::make_shared<Problem>();
  p->model = ModelRegistry::instance().create(cfg.model.name, cfg.model.params);
  p->alternatives = build_alternatives(cfg.alternatives);
  if (cfg.prior.lower.size() != p->model.dimension)
    throw Error("prior has dimension " + std::to_string(cfg.prior.lower.size()) + ", model '" +
                cfg.model.name + "' expects " + std::to_string(p->model.dimension));
  p->pool = make_pool(cfg.prior, cfg.L);
  return p;
}

// ---------------------------------------------------------------------------
// Metrics

inline std::vector<double> true_values(const ModelSpec& model, const ParameterVector& truth,
                                       const AlternativeSet& alts) {
  std::vector<double> v(alts.size());
  for (std::size_t m = 0; m < alts.size(); ++m) v[m] = model(truth, alts[m]);
  return v;
}

inline double noise_sigma_from_level(const ModelSpec& model, const ParameterVector& truth,
                                     const AlternativeSet& alts, double level) {
  if (alts.empty()) throw Error("no alternatives");
  if (!(level > 0.0)) throw Error("noise level must be positive");
  const auto v = true_values(model, truth, alts);
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  const double range = *hi - *lo;
  if (!(range > 0.0)) throw Error("true function has zero range over the alternatives");
  return level * range;
}

inline double opportunity_cost(std::span<const double> truth_values, const CandidateSet& cs) {
  const std::size_t pick = argmax_lowest(posterior_means(cs));
  const double best = *std::max_element(truth_values.begin(), truth_values.end());
  return best - truth_values[pick];
}

inline double opportunity_cost(const ModelSpec& model, const ParameterVector& truth,
                               const AlternativeSet& alts, const CandidateSet& cs) {
  return opportunity_cost(true_values(model, truth, alts), cs);
}

inline double oc_percent(std::span<const double> truth_values, const CandidateSet& cs) {
  const double best = *std::max_element(truth_values.begin(), truth_values.end());
  if (best == 0.0) throw Error("OC% undefined: optimal true value is zero");
  return opportunity_cost(truth_values, cs) / best;
}

inline double oc_percent(const ModelSpec& model, const ParameterVector& truth,
                         const AlternativeSet& alts, const CandidateSet& cs) {
  return oc_percent(true_values(model, truth, alts), cs);
}

// (1/M) sum_x (f(x; truth) - f(x; theta_hat))^2
inline double f_mse_metric(const ModelSpec& model, const ParameterVector& truth,
                           const ParameterVector& theta_hat, const AlternativeSet& alts) {
  double acc = 0.0;
  for (const auto& x : alts) {
    const double d = model(truth, x) - model(theta_hat, x);
    acc += d * d;
  }
  return acc / static_cast<double>(alts.size());
}

inline double theta_dim_error(const ParameterVector& truth, const ParameterVector& theta_hat,
                              std::size_t dim) {
  if (dim >= truth.size() || dim >= theta_hat.size())
    throw Error("parameter dimension " + std::to_string(dim) + " out of range");
  return std::abs(truth[dim] - theta_hat[dim]);
}

struct FinalEstimates {
  std::size_t x_hat = 0;
  std::size_t theta_hat_index = 0;  // in the pool
  ParameterVector theta_hat;
};

inline FinalEstimates final_estimates(const CandidateSet& cs, const ResidualAccumulator& acc,
                                      const ParameterPool& pool) {
  if (acc.count() == 0) throw Error("theta estimate undefined: empty measurement history");
  FinalEstimates e;
  e.x_hat = argmax_lowest(posterior_means(cs));
  e.theta_hat_index = acc.argmin();
  e.theta_hat = pool.at(e.theta_hat_index);
  return e;
}

// ---------------------------------------------------------------------------
// Campaign state machine shared by the simulator and the advisor service.

struct CampaignSettings {
  std::size_t L = 10;
  double sigma = 1.0;
  QuadratureSpec quadrature;
  std::optional<ResampleConfig> resample;
  double score_tolerance = 1e-8;
};

struct StepOutcome {
  bool resampled = false;
  bool capped = false;
  int iterations = 0;
};

struct Recommendation {
  std::size_t index = 0;
  PolicyKind policy = PolicyKind::kKgdpF;
  std::vector<double> kgdp_f;
  std::vector<double> kgdp_h;
  std::vector<double> max_var;
};

// Distinct pool indices drawn uniformly by rejection, in draw order.
inline std::vector<std::size_t> draw_distinct(std::size_t pool_size, std::size_t count, Rng& rng,
                                              std::optional<std::size_t> exclude = std::nullopt) {
  const std::size_t available = pool_size - (exclude ? 1 : 0);
  if (count > available)
    throw Error("cannot draw " + std::to_string(count) + " distinct candidates from a pool of " +
                std::to_string(available));
  std::uniform_int_distribution<std::size_t> pick(0, pool_size - 1);
  std::unordered_set<std::size_t> seen;
  if (exclude) seen.insert(*exclude);
  std::vector<std::size_t> out;
  out.reserve(count);
  while (out.size() < count) {
    const std::size_t k = pick(rng);
    if (seen.insert(k).second) out.push_back(k);
  }
  return out;
}

class Campaign {
 public:
  Campaign(std::shared_ptr<const Problem> problem, CampaignSettings settings, std::uint64_t seed,
           const std::vector<std::size_t>& initial_pool_indices)
      : problem_(std::move(problem)),
        settings_(std::move(settings)),
        noise_(settings_.sigma),
        seed_(seed),
        residuals_(problem_->pool.size()) {
    settings_.quadrature.validate();
    if (settings_.resample) settings_.resample->validate(problem_->pool.size(), settings_.L);
    if (initial_pool_indices.size() != settings_.L)
      throw Error("expected " + std::to_string(settings_.L) + " initial candidates");
    candidates_ = from_pool(initial_pool_indices, {});
  }

  // Rebuild from a persisted history and candidate set; the residuals are
  // recomputed from the history.
  static Campaign restore(std::shared_ptr<const Problem> problem, CampaignSettings settings,
                          std::uint64_t seed, MeasurementHistory history,
                          const std::vector<std::size_t>& pool_indices,
                          const std::vector<double>& log_weights) {
    Campaign c(problem, std::move(settings), seed, pool_indices);
    history.validate(problem->alternatives.size());
    c.residuals_ = ResidualAccumulator::rebuild(problem->pool, history, problem->model,
                                                problem->alternatives);
    c.history_ = std::move(history);
    c.candidates_ = c.from_pool(pool_indices, log_weights);
    return c;
  }

  const Problem& problem() const { return *problem_; }
  const CampaignSettings& settings() const { return settings_; }
  const NoiseModel& noise() const { return noise_; }
  std::uint64_t seed() const { return seed_; }
  std::size_t step() const { return history_.size(); }
  const CandidateSet& candidates() const { return candidates_; }
  const MeasurementHistory& history() const { return history_; }
  const ResidualAccumulator& residuals() const { return residuals_; }

  std::vector<std::size_t> candidate_pool_indices() const {
    std::vector<std::size_t> out;
    for (auto k : candidates_.pool_indices()) out.push_back(static_cast<std::size_t>(k));
    return out;
  }

  // Generator for the policy at the current step; re-derivable from the
  // step counter so recommending never mutates the campaign.
  Rng policy_rng() const { return substream(seed_, Stream::kPolicy, step()); }

  std::size_t select(PolicyKind policy) const {
    Rng rng = policy_rng();
    return select_alternative(policy, candidates_, problem_->alternatives, noise_,
                              settings_.quadrature, rng);
  }

  Recommendation recommend(PolicyKind policy) const {
    Recommendation r;
    r.policy = policy;
    r.kgdp_f = score_all(PolicyKind::kKgdpF, candidates_, noise_, settings_.quadrature);
    r.kgdp_h = score_all(PolicyKind::kKgdpH, candidates_, noise_, settings_.quadrature);
    r.max_var = score_all(PolicyKind::kMaxVar, candidates_, noise_, settings_.quadrature);
    switch (policy) {
      case PolicyKind::kKgdpF: r.index = argmax_lowest(r.kgdp_f); break;
      case PolicyKind::kKgdpH: r.index = argmax_lowest(r.kgdp_h); break;
      case PolicyKind::kMaxVar: r.index = argmax_lowest(r.max_var); break;
      default: r.index = select(policy); break;
    }
    return r;
  }

  StepOutcome observe(std::size_t alt, double y) {
    problem_->alternatives.at(alt);
    if (!std::isfinite(y)) throw Error("observation must be finite");
    history_.push_back({alt, y});
    residuals_.add(problem_->pool, alt, y, problem_->model, problem_->alternatives);
    candidates_ = sequential_update(candidates_, alt, y, noise_);
    StepOutcome out;
    if (settings_.resample && should_resample(step(), candidates_, *settings_.resample)) {
      Rng rng = substream(seed_, Stream::kResampler, step());
      auto res = resample(candidates_, {problem_->pool, residuals_}, history_, *settings_.resample,
                          problem_->model, problem_->alternatives, noise_, rng);
      candidates_ = std::move(res.candidates);
      out.resampled = true;
      out.capped = res.capped;
      out.iterations = res.iterations;
    }
    return out;
  }

  FinalEstimates estimates() const { return final_estimates(candidates_, residuals_, problem_->pool); }

 private:
  CandidateSet from_pool(const std::vector<std::size_t>& idx, const std::vector<double>& log_weights) const {
    std::vector<ParameterVector> cands;
    std::vector<std::ptrdiff_t> pidx;
    for (std::size_t k : idx) {
      cands.push_back(problem_->pool.at(k));
      pidx.push_back(static_cast<std::ptrdiff_t>(k));
    }
    if (log_weights.empty())
      return CandidateSet::uniform(std::move(cands), problem_->model, problem_->alternatives,
                                   std::move(pidx));
    return CandidateSet::with_weights(std::move(cands), problem_->model, problem_->alternatives,
                                      std::move(pidx), log_weights);
  }

  std::shared_ptr<const Problem> problem_;
  CampaignSettings settings_;
  NoiseModel noise_;
  std::uint64_t seed_;
  CandidateSet candidates_;
  MeasurementHistory history_;
  ResidualAccumulator residuals_;
};

// ---------------------------------------------------------------------------
// Simulation

struct StepRecord {
  std::size_t n = 0;  // 1-based step
  std::size_t x_index = 0;
  double y = 0.0;
  double oc = 0.0;
  double oc_pct = 0.0;
  double entropy = 0.0;
  std::optional<double> p_truth;
  bool resampled = false;
  double f_mse_sqrt_norm = 0.0;
  std::vector<double> theta_err;
};

struct Trajectory {
  std::uint64_t seed = 0;
  ParameterVector truth;
  std::optional<std::size_t> truth_pool_index;
  double sigma = 0.0;
  std::vector<StepRecord> steps;
  std::size_t x_hat = 0;
  ParameterVector theta_hat;
};

inline double weight_of_pool_member(const CandidateSet& cs, std::size_t pool_index) {
  double p = 0.0;
  for (std::size_t i = 0; i < cs.size(); ++i)
    if (cs.pool_index(i) == static_cast<std::ptrdiff_t>(pool_index)) p += cs.weight(i);
  return p;
}

inline Trajectory run_campaign(std::shared_ptr<const Problem> problem, const ExperimentConfig& cfg,
                               std::uint64_t seed) {
  if (cfg.N < 1) throw Error("budget N must be >= 1");
  const Problem& pb = *problem;
  const std::size_t pool_size = pb.pool.size();

  Trajectory traj;
  traj.seed = seed;
  std::vector<std::size_t> initial;
  {
    Rng truth_rng = substream(seed, Stream::kTruth);
    Rng init_rng = substream(seed, Stream::kCandidateInit);
    switch (cfg.truth_mode) {
      case TruthMode::kFromPool: {
        const std::size_t t = std::uniform_int_distribution<std::size_t>(0, pool_size - 1)(truth_rng);
        traj.truth_pool_index = t;
        traj.truth = pb.pool.at(t);
        initial = draw_distinct(pool_size, cfg.L, init_rng, t);
        break;
      }
      case TruthMode::kFromCandidates: {
        initial = draw_distinct(pool_size, cfg.L, init_rng);
        const std::size_t t = initial[std::uniform_int_distribution<std::size_t>(0, cfg.L - 1)(truth_rng)];
        traj.truth_pool_index = t;
        traj.truth = pb.pool.at(t);
        break;
      }
      case TruthMode::kExternal: {
        if (!cfg.truth) throw Error("truth_mode external requires an explicit truth vector");
        traj.truth = ParameterVector(*cfg.truth);
        initial = draw_distinct(pool_size, cfg.L, init_rng);
        break;
      }
    }
  }

  const auto tv = true_values(pb.model, traj.truth, pb.alternatives);
  const auto [lo_it, hi_it] = std::minmax_element(tv.begin(), tv.end());
  const double range = *hi_it - *lo_it;
  traj.sigma = cfg.sigma ? *cfg.sigma
                         : noise_sigma_from_level(pb.model, traj.truth, pb.alternatives, *cfg.noise_level);

  CampaignSettings settings;
  settings.L = cfg.L;
  settings.sigma = traj.sigma;
  settings.quadrature = cfg.quadrature;
  if (cfg.resample_enabled) settings.resample = cfg.resample;
  settings.score_tolerance = cfg.score_tolerance;
  Campaign campaign(problem, settings, seed, initial);

  const std::size_t d = pb.model.dimension;
  traj.steps.reserve(cfg.N);
  for (std::size_t n = 0; n < cfg.N; ++n) {
    try {
      const std::size_t x = campaign.select(cfg.policy);
      Rng noise_rng = substream(seed, Stream::kNoise, n);
      const double y = tv[x] + std::normal_distribution<double>(0.0, traj.sigma)(noise_rng);
      const StepOutcome outcome = campaign.observe(x, y);

      const CandidateSet& cs = campaign.candidates();
      StepRecord rec;
      rec.n = n + 1;
      rec.x_index = x;
      rec.y = y;
      rec.oc = opportunity_cost(tv, cs);
      rec.oc_pct = oc_percent(tv, cs);
      rec.entropy = entropy(cs);
      if (traj.truth_pool_index) rec.p_truth = weight_of_pool_member(cs, *traj.truth_pool_index);
      rec.resampled = outcome.resampled;
      const auto est = campaign.estimates();
      double fmse = 0.0;
      for (std::size_t m = 0; m < tv.size(); ++m) {
        const double diff = tv[m] - pb.model(est.theta_hat, pb.alternatives[m]);
        fmse += diff * diff;
      }
      fmse /= static_cast<double>(tv.size());
      rec.f_mse_sqrt_norm = range > 0.0 ? std::sqrt(fmse) / range : 0.0;
      rec.theta_err.resize(d);
      for (std::size_t i = 0; i < d; ++i) rec.theta_err[i] = theta_dim_error(traj.truth, est.theta_hat, i);
      traj.steps.push_back(std::move(rec));
    } catch (const std::exception& e) {
      throw Error("step " + std::to_string(n + 1) + ": " + e.what());
    }
  }
  const auto est = campaign.estimates();
  traj.x_hat = est.x_hat;
  traj.theta_hat = est.theta_hat;
  return traj;
}

inline Trajectory run_campaign(const ExperimentConfig& cfg, std::uint64_t seed) {
  return run_campaign(build_problem(cfg), cfg, seed);
}

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

// Mean and standard error (sample standard deviation / sqrt(n)).
inline MeanSe mean_se(std::span<const double> v) {
  MeanSe out;
  if (v.empty()) return out;
  double s = 0.0;
  for (double d : v) s += d;
  out.mean = s / static_cast<double>(v.size());
  if (v.size() < 2) return out;
  double ss = 0.0;
  for (double d : v) ss += (d - out.mean) * (d - out.mean);
  out.se = std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
  return out;
}

struct StepSummary {
  std::size_t n = 0;
  MeanSe oc;
  MeanSe oc_pct;
  MeanSe entropy;
  std::optional<MeanSe> p_truth;
  MeanSe f_mse_sqrt_norm;
  std::vector<MeanSe> theta_err;
};

struct ReplicationResult {
  std::vector<Trajectory> runs;  // in seed order
  std::vector<StepSummary> summary;
};

// KGDP_THREADS caps the worker count; default is the hardware concurrency.
inline std::size_t worker_count(std::size_t jobs) {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("KGDP_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) n = static_cast<std::size_t>(v);
  }
  return std::max<std::size_t>(1, std::min(n, jobs));
}

inline std::vector<StepSummary> summarize(const std::vector<Trajectory>& runs) {
  std::vector<StepSummary> out;
  if (runs.empty()) return out;
  const std::size_t steps = runs.front().steps.size();
  const std::size_t d = runs.front().steps.empty() ? 0 : runs.front().steps.front().theta_err.size();
  std::vector<double> col(runs.size());
  auto gather = [&](auto&& get) {
    for (std::size_t r = 0; r < runs.size(); ++r) col[r] = get(runs[r]);
    return mean_se(col);
  };
  for (std::size_t s = 0; s < steps; ++s) {
    StepSummary row;
    row.n = s + 1;
    row.oc = gather([&](const Trajectory& t) { return t.steps[s].oc; });
    row.oc_pct = gather([&](const Trajectory& t) { return t.steps[s].oc_pct; });
    row.entropy = gather([&](const Trajectory& t) { return t.steps[s].entropy; });
    const bool all_truth = std::all_of(runs.begin(), runs.end(),
                                       [&](const Trajectory& t) { return t.steps[s].p_truth.has_value(); });
    if (all_truth) row.p_truth = gather([&](const Trajectory& t) { return *t.steps[s].p_truth; });
    row.f_mse_sqrt_norm = gather([&](const Trajectory& t) { return t.steps[s].f_mse_sqrt_norm; });
    for (std::size_t i = 0; i < d; ++i)
      row.theta_err.push_back(gather([&](const Trajectory& t) { return t.steps[s].theta_err[i]; }));
    out.push_back(std::move(row));
  }
  return out;
}

inline ReplicationResult run_replications(std::shared_ptr<const Problem> problem,
                                          const ExperimentConfig& cfg,
                                          const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty()) throw Error("at least one replication seed is required");
  ReplicationResult result;
  result.runs.resize(seeds.size());
  std::vector<std::exception_ptr> errors(seeds.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t r = next++; r < seeds.size(); r = next++) {
      try {
        result.runs[r] = run_campaign(problem, cfg, seeds[r]);
      } catch (...) {
        errors[r] = std::current_exception();
      }
    }
  };
  const std::size_t workers = worker_count(seeds.size());
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  result.summary = summarize(result.runs);
  return result;
}

inline ReplicationResult run_replications(const ExperimentConfig& cfg,
                                          const std::vector<std::uint64_t>& seeds) {
  return run_replications(build_problem(cfg), cfg, seeds);
}

// seed, seed+1, ..., one per replication.
inline std::vector<std::uint64_t> replication_seeds(const ExperimentConfig& cfg) {
  std::vector<std::uint64_t> seeds(cfg.replications);
  for (std::size_t r = 0; r < seeds.size(); ++r) seeds[r] = cfg.seed + r;
  return seeds;
}

}  // namespace kgdp
