#pragma once

// Acquisition scores over a discrete-prior belief and the policy switch
// that turns them into the next alternative to measure.
//
// Both knowledge-gradient scores are expectations over the predictive
// distribution of the next observation y, which is the mixture
// sum_j p_j N(f_j(x), sigma^2). They are evaluated in the subtracted form
//
//   KGDP-f:  E[ max_x' fbar'(x') - fbar'(x0) ],  x0 = argmax fbar
//   KGDP-H:  E[ KL(p' || p) ]
//
// which equals the textbook definitions because E[p'] = p exactly. Both
// integrands are pointwise nonnegative, so the scores are nonnegative for
// any positive-weight quadrature, and both vanish identically in the
// equality cases (shared argmax, indistinguishable candidates). KGDP-f is
// evaluated exactly; KGDP-H by quadrature over the mixture.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kgdp/core.hpp"
#include "kgdp/quadrature.hpp"
#include "kgdp/rng.hpp"

namespace kgdp {

enum class QuadratureScheme { kGaussHermite, kUniformGrid };

struct QuadratureSpec {
  QuadratureScheme scheme = QuadratureScheme::kGaussHermite;
  int order = 32;
  // Grid scheme only: the grid spans [min f - w sigma, max f + w sigma].
  double half_width = 8.0;

  void validate() const {
    if (order < 8) throw Error("quadrature order must be at least 8, got " + std::to_string(order));
    if (scheme == QuadratureScheme::kGaussHermite && order > 256)
      throw Error("Gauss-Hermite order must be at most 256");
    if (scheme == QuadratureScheme::kUniformGrid && !(half_width >= 4.0))
      throw Error("grid half-width must be at least 4 sigma");
  }

  QuadratureSpec doubled() const {
    QuadratureSpec q = *this;
    q.order = scheme == QuadratureScheme::kUniformGrid ? 2 * order - 1 : 2 * order;
    return q;
  }
};

inline std::string_view to_string(QuadratureScheme s) {
  return s == QuadratureScheme::kGaussHermite ? "gauss-hermite" : "uniform-grid";
}

inline QuadratureScheme parse_quadrature_scheme(std::string_view s) {
  if (s == "gauss-hermite") return QuadratureScheme::kGaussHermite;
  if (s == "uniform-grid") return QuadratureScheme::kUniformGrid;
  throw Error("unknown quadrature scheme '" + std::string(s) +
              "' (valid: gauss-hermite, uniform-grid)");
}

enum class PolicyKind { kKgdpF, kKgdpH, kPureExploration, kPureExploitation, kMaxVar };

inline constexpr std::array<PolicyKind, 5> kAllPolicies = {
    PolicyKind::kKgdpF, PolicyKind::kKgdpH, PolicyKind::kPureExploration,
    PolicyKind::kPureExploitation, PolicyKind::kMaxVar};

inline std::string_view to_string(PolicyKind p) {
  switch (p) {
    case PolicyKind::kKgdpF: return "KGDP-f";
    case PolicyKind::kKgdpH: return "KGDP-H";
    case PolicyKind::kPureExploration: return "PureExploration";
    case PolicyKind::kPureExploitation: return "PureExploitation";
    case PolicyKind::kMaxVar: return "MaxVar";
  }
  return "?";
}

inline std::string valid_policy_names() {
  std::string out;
  for (auto p : kAllPolicies) {
    if (!out.empty()) out += ", ";
    out += to_string(p);
  }
  return out;
}

inline PolicyKind parse_policy(std::string_view s) {
  for (auto p : kAllPolicies)
    if (to_string(p) == s) return p;
  throw Error("unknown policy '" + std::string(s) + "' (valid: " + valid_policy_names() + ")");
}

inline bool is_score_policy(PolicyKind p) {
  return p == PolicyKind::kKgdpF || p == PolicyKind::kKgdpH || p == PolicyKind::kMaxVar;
}

// Precomputed per-belief data shared by the scores of every alternative.
class ScoreContext {
 public:
  explicit ScoreContext(const CandidateSet& cs) : cs_(&cs) {
    for (std::size_t i = 0; i < cs.size(); ++i) {
      if (cs.log_weight(i) != kNegInf) {
        support_.push_back(i);
        log_p_.push_back(cs.log_weight(i));
      }
    }
    const auto fbar = posterior_means(cs);
    best_ = argmax_lowest(fbar);
    build_front();
  }

  const CandidateSet& candidates() const { return *cs_; }
  // Candidates with nonzero weight.
  const std::vector<std::size_t>& support() const { return support_; }
  const std::vector<double>& support_log_weights() const { return log_p_; }
  std::size_t current_best() const { return best_; }
  // Alternatives that can be the maximizer of some mixture of the
  // supported candidates, with current_best() listed first.
  const std::vector<std::size_t>& front() const { return front_; }
  std::span<const double> front_values(std::size_t slot) const {
    return std::span<const double>(front_values_).subspan(slot * support_.size(), support_.size());
  }

 private:
  void build_front() {
    const std::size_t m = cs_->alternative_count();
    const std::size_t s = support_.size();
    std::vector<double> col(m * s);
    std::vector<double> total(m, 0.0);
    for (std::size_t a = 0; a < m; ++a) {
      for (std::size_t k = 0; k < s; ++k) {
        col[a * s + k] = cs_->value(support_[k], a);
        total[a] += col[a * s + k];
      }
    }
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return total[a] > total[b]; });
    std::vector<std::size_t> kept;
    for (std::size_t a : order) {
      bool dominated = false;
      for (std::size_t b : kept) {
        bool ge = true;
        for (std::size_t k = 0; k < s && ge; ++k) ge = col[b * s + k] >= col[a * s + k];
        if (ge) {
          dominated = true;
          break;
        }
      }
      if (!dominated) kept.push_back(a);
    }
    front_.push_back(best_);
    for (std::size_t a : kept)
      if (a != best_) front_.push_back(a);
    front_values_.reserve(front_.size() * s);
    for (std::size_t a : front_)
      front_values_.insert(front_values_.end(), col.begin() + a * s, col.begin() + (a + 1) * s);
  }

  const CandidateSet* cs_;
  std::vector<std::size_t> support_;
  std::vector<double> log_p_;
  std::size_t best_ = 0;
  std::vector<std::size_t> front_;
  std::vector<double> front_values_;
};

namespace detail {

struct WeightedNodes {
  std::vector<double> y;
  std::vector<double> w;
};

inline double normal_pdf(double y, double mean, double sigma) {
  const double z = (y - mean) / sigma;
  return std::exp(-0.5 * z * z) / (std::sqrt(2.0 * std::numbers::pi) * sigma);
}

// The predictive mixture of y at `alt` as a weighted node list.
inline WeightedNodes predictive_nodes(const ScoreContext& ctx, std::size_t alt,
                                      const NoiseModel& noise, const QuadratureSpec& quad) {
  const auto& cs = ctx.candidates();
  const auto& sup = ctx.support();
  WeightedNodes out;
  if (quad.scheme == QuadratureScheme::kGaussHermite) {
    const auto rule = normal_expectation_rule(quad.order, noise.sigma());
    out.y.reserve(sup.size() * rule.offsets.size());
    out.w.reserve(sup.size() * rule.offsets.size());
    for (std::size_t k = 0; k < sup.size(); ++k) {
      const double pj = std::exp(ctx.support_log_weights()[k]);
      const double fj = cs.value(sup[k], alt);
      for (std::size_t q = 0; q < rule.offsets.size(); ++q) {
        out.y.push_back(fj + rule.offsets[q]);
        out.w.push_back(pj * rule.weights[q]);
      }
    }
    return out;
  }
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (std::size_t i : sup) {
    lo = std::min(lo, cs.value(i, alt));
    hi = std::max(hi, cs.value(i, alt));
  }
  lo -= quad.half_width * noise.sigma();
  hi += quad.half_width * noise.sigma();
  const int n = quad.order;
  const double h = (hi - lo) / (n - 1);
  out.y.resize(n);
  out.w.resize(n);
  for (int q = 0; q < n; ++q) {
    const double y = lo + h * q;
    double density = 0.0;
    for (std::size_t k = 0; k < sup.size(); ++k)
      density += std::exp(ctx.support_log_weights()[k]) * normal_pdf(y, cs.value(sup[k], alt),
                                                                        noise.sigma());
    out.y[q] = y;
    out.w[q] = (q == 0 || q == n - 1 ? 0.5 * h : h) * density;
  }
  return out;
}

// Posterior over the support after observing y at alt: linear weights in
// `q`, normalized log weights in `lq`.
inline void posterior_at(const ScoreContext& ctx, std::size_t alt, double y, const NoiseModel& noise,
                         std::vector<double>& q, std::vector<double>& lq) {
  const auto& cs = ctx.candidates();
  const auto& sup = ctx.support();
  const auto& lp = ctx.support_log_weights();
  const double inv2v = 1.0 / (2.0 * noise.variance());
  q.resize(sup.size());
  lq.resize(sup.size());
  double hi = kNegInf;
  for (std::size_t k = 0; k < sup.size(); ++k) {
    const double r = y - cs.value(sup[k], alt);
    lq[k] = lp[k] - r * r * inv2v;
    hi = std::max(hi, lq[k]);
  }
  double z = 0.0;
  for (std::size_t k = 0; k < sup.size(); ++k) {
    q[k] = std::exp(lq[k] - hi);
    z += q[k];
  }
  const double log_z = hi + std::log(z);
  for (std::size_t k = 0; k < sup.size(); ++k) {
    q[k] /= z;
    lq[k] -= log_z;
  }
}

// True when observing alt cannot move the weights.
inline bool uninformative(const ScoreContext& ctx, std::size_t alt) {
  const auto& sup = ctx.support();
  if (sup.size() < 2) return true;
  const double f0 = ctx.candidates().value(sup[0], alt);
  for (std::size_t i : sup)
    if (ctx.candidates().value(i, alt) != f0) return false;
  return true;
}

}  // namespace detail

// The literal quadrature form of KGDP-f. The integrand has a kink wherever
// the maximizing alternative changes, so this converges only like 1/Q; it
// is kept as an independent cross-check of the exact evaluation below.
inline double kgdp_f_score_quadrature(const ScoreContext& ctx, std::size_t alt, const NoiseModel& noise,
                                      const QuadratureSpec& quad) {
  ctx.candidates().check_alternative(alt);
  if (detail::uninformative(ctx, alt)) return 0.0;
  const auto nodes = detail::predictive_nodes(ctx, alt, noise, quad);
  const std::size_t s = ctx.support().size();
  const std::size_t slots = ctx.front().size();
  std::vector<double> q, lq;
  double total = 0.0;
  for (std::size_t n = 0; n < nodes.y.size(); ++n) {
    if (nodes.w[n] == 0.0) continue;
    detail::posterior_at(ctx, alt, nodes.y[n], noise, q, lq);
    double at_best = 0.0;
    {
      auto v = ctx.front_values(0);
      for (std::size_t k = 0; k < s; ++k) at_best += q[k] * v[k];
    }
    double best = at_best;
    for (std::size_t slot = 1; slot < slots; ++slot) {
      auto v = ctx.front_values(slot);
      double acc = 0.0;
      for (std::size_t k = 0; k < s; ++k) acc += q[k] * v[k];
      best = std::max(best, acc);
    }
    total += nodes.w[n] * (best - at_best);
  }
  return total;
}

inline double kgdp_f_score_quadrature(const CandidateSet& cs, std::size_t alt, const NoiseModel& noise,
                                      const QuadratureSpec& quad = {}) {
  return kgdp_f_score_quadrature(ScoreContext(cs), alt, noise, quad);
}

namespace detail {

// P(a < Z < b) for Z ~ N(0, 1), accurate in both tails.
inline double normal_mass(double a, double b) {
  if (a >= 0.0) return 0.5 * (std::erfc(a / std::numbers::sqrt2) - std::erfc(b / std::numbers::sqrt2));
  if (b <= 0.0) return 0.5 * (std::erfc(-b / std::numbers::sqrt2) - std::erfc(-a / std::numbers::sqrt2));
  return 1.0 - 0.5 * (std::erfc(-a / std::numbers::sqrt2) + std::erfc(b / std::numbers::sqrt2));
}

// Front slot maximizing the posterior mean after observing y.
inline std::size_t best_slot_at(const ScoreContext& ctx, std::size_t alt, double y, const NoiseModel& noise,
                                std::vector<double>& q, std::vector<double>& lq) {
  posterior_at(ctx, alt, y, noise, q, lq);
  const std::size_t s = ctx.support().size();
  std::size_t best = 0;
  double best_v = -std::numeric_limits<double>::infinity();
  for (std::size_t slot = 0; slot < ctx.front().size(); ++slot) {
    auto v = ctx.front_values(slot);
    double acc = 0.0;
    for (std::size_t k = 0; k < s; ++k) acc += q[k] * v[k];
    if (acc > best_v) {
      best_v = acc;
      best = slot;
    }
  }
  return best;
}

}  // namespace detail

// Exact KGDP-f. Since p_i'(y) g(y) = p_i N(y; f_i(x), sigma^2) for the
// predictive density g, on any interval of y where the maximizing
// alternative x' is fixed the contribution is
//
//   sum_i p_i (f_i(x') - f_i(x0)) P(y in interval | component i),
//
// so only the switch points of the argmax need to be located. They are
// bracketed on a scan grid (spacing sigma/8, plus the points where two
// components trade dominance) and bisected to machine precision.
inline double kgdp_f_score(const ScoreContext& ctx, std::size_t alt, const NoiseModel& noise,
                           const QuadratureSpec& = {}) {
  const auto& cs = ctx.candidates();
  cs.check_alternative(alt);
  if (detail::uninformative(ctx, alt)) return 0.0;
  const auto& sup = ctx.support();
  const auto& lp = ctx.support_log_weights();
  const std::size_t s = sup.size();
  const double sigma = noise.sigma();

  std::vector<double> f(s);
  for (std::size_t k = 0; k < s; ++k) f[k] = cs.value(sup[k], alt);
  const auto [fmin, fmax] = std::minmax_element(f.begin(), f.end());
  const double lo = *fmin - 12.0 * sigma;
  const double hi = *fmax + 12.0 * sigma;

  // Scan only where some component has mass: the union of f_k +- 12 sigma.
  std::vector<double> centers = f;
  std::sort(centers.begin(), centers.end());
  std::vector<std::pair<double, double>> windows;
  for (double c : centers) {
    if (!windows.empty() && c - 12.0 * sigma <= windows.back().second)
      windows.back().second = c + 12.0 * sigma;
    else
      windows.push_back({c - 12.0 * sigma, c + 12.0 * sigma});
  }
  double covered = 0.0;
  for (const auto& [a, b] : windows) covered += b - a;
  const double step = std::max(sigma / 8.0, covered / 4096.0);

  std::vector<double> grid;
  for (const auto& [a, b] : windows) {
    const auto cells = static_cast<std::size_t>(std::ceil((b - a) / step));
    for (std::size_t c = 0; c <= cells; ++c) grid.push_back(a + (b - a) * static_cast<double>(c) / cells);
  }
  for (std::size_t j = 0; j < s; ++j)
    for (std::size_t k = j + 1; k < s; ++k) {
      if (f[j] == f[k]) continue;
      // equal posterior weight of components j and k
      const double y = 0.5 * (f[j] + f[k]) + noise.variance() * (lp[k] - lp[j]) / (f[j] - f[k]);
      if (y > lo && y < hi) grid.push_back(y);
    }
  std::sort(grid.begin(), grid.end());

  std::vector<double> q, lq;
  std::vector<std::size_t> arg(grid.size());
  for (std::size_t g = 0; g < grid.size(); ++g) arg[g] = detail::best_slot_at(ctx, alt, grid[g], noise, q, lq);

  // (left end, slot) pieces; the first extends to -inf, the last to +inf
  std::vector<std::pair<double, std::size_t>> pieces{{-std::numeric_limits<double>::infinity(), arg[0]}};
  const double resolution = 1e-13 * std::max({1.0, std::abs(lo), std::abs(hi)});
  auto split = [&](auto&& self, double a, double b, std::size_t sa, std::size_t sb) -> void {
    if (sa == sb) return;
    if (b - a <= resolution) {
      pieces.push_back({0.5 * (a + b), sb});
      return;
    }
    const double m = 0.5 * (a + b);
    const std::size_t sm = detail::best_slot_at(ctx, alt, m, noise, q, lq);
    self(self, a, m, sa, sm);
    self(self, m, b, sm, sb);
  };
  for (std::size_t g = 0; g + 1 < grid.size(); ++g) split(split, grid[g], grid[g + 1], arg[g], arg[g + 1]);

  const auto v0 = ctx.front_values(0);
  double total = 0.0;
  for (std::size_t p = 0; p < pieces.size(); ++p) {
    const std::size_t slot = pieces[p].second;
    if (slot == 0) continue;
    const double a = pieces[p].first;
    const double b = p + 1 < pieces.size() ? pieces[p + 1].first : std::numeric_limits<double>::infinity();
    const auto v = ctx.front_values(slot);
    for (std::size_t k = 0; k < s; ++k) {
      const double gain = v[k] - v0[k];
      if (gain == 0.0) continue;
      total += std::exp(lp[k]) * gain * detail::normal_mass((a - f[k]) / sigma, (b - f[k]) / sigma);
    }
  }
  return total;
}

inline double kgdp_f_score(const CandidateSet& cs, std::size_t alt, const NoiseModel& noise,
                           const QuadratureSpec& quad = {}) {
  return kgdp_f_score(ScoreContext(cs), alt, noise, quad);
}

namespace detail {

inline double kgdp_h_at_order(const ScoreContext& ctx, std::size_t alt, const NoiseModel& noise,
                              const QuadratureSpec& quad) {
  const auto nodes = predictive_nodes(ctx, alt, noise, quad);
  const auto& lp = ctx.support_log_weights();
  std::vector<double> q, lq;
  double total = 0.0;
  for (std::size_t n = 0; n < nodes.y.size(); ++n) {
    if (nodes.w[n] == 0.0) continue;
    posterior_at(ctx, alt, nodes.y[n], noise, q, lq);
    double kl = 0.0;
    for (std::size_t k = 0; k < q.size(); ++k)
      if (q[k] > 0.0) kl += q[k] * (lq[k] - lp[k]);
    total += nodes.w[n] * std::max(kl, 0.0);
  }
  return total;
}

inline constexpr double kRefineTolerance = 1e-9;
inline constexpr int kMaxGaussHermiteOrder = 512;
inline constexpr int kMaxGridOrder = 1 << 16;

template <class Eval>
double refine_order(const QuadratureSpec& quad, Eval eval) {
  QuadratureSpec cur = quad;
  double value = eval(cur);
  const int cap = quad.scheme == QuadratureScheme::kGaussHermite ? kMaxGaussHermiteOrder : kMaxGridOrder;
  while (true) {
    const QuadratureSpec next = cur.doubled();
    if (next.order > cap) return value;
    const double refined = eval(next);
    if (std::abs(refined - value) < kRefineTolerance) return refined;
    value = refined;
    cur = next;
  }
}

}  // namespace detail

// Expected reduction in entropy of the weights, H(p) - E[H(p')]. When the
// noise is small against the spread of candidate values the posterior
// switches sharply between nodes, so the order is doubled from quad.order
// until two successive values agree to 1e-9.
inline double kgdp_h_score(const ScoreContext& ctx, std::size_t alt, const NoiseModel& noise,
                           const QuadratureSpec& quad) {
  ctx.candidates().check_alternative(alt);
  if (detail::uninformative(ctx, alt)) return 0.0;
  return detail::refine_order(quad, [&](const QuadratureSpec& q) { return detail::kgdp_h_at_order(ctx, alt, noise, q); });
}

inline double kgdp_h_score(const CandidateSet& cs, std::size_t alt, const NoiseModel& noise,
                           const QuadratureSpec& quad = {}) {
  return kgdp_h_score(ScoreContext(cs), alt, noise, quad);
}

// E[H(p')] under the predictive mixture, evaluated directly.
inline double expected_posterior_entropy(const CandidateSet& cs, std::size_t alt,
                                         const NoiseModel& noise, const QuadratureSpec& quad = {}) {
  cs.check_alternative(alt);
  const ScoreContext ctx(cs);
  return detail::refine_order(quad, [&](const QuadratureSpec& spec) {
    const auto nodes = detail::predictive_nodes(ctx, alt, noise, spec);
    std::vector<double> q, lq;
    double total = 0.0;
    for (std::size_t n = 0; n < nodes.y.size(); ++n) {
      if (nodes.w[n] == 0.0) continue;
      detail::posterior_at(ctx, alt, nodes.y[n], noise, q, lq);
      total += nodes.w[n] * entropy_of_log_weights(lq);
    }
    return total;
  });
}

inline double max_var_score(const CandidateSet& cs, std::size_t alt) {
  const double mean = posterior_mean(cs, alt);
  double acc = 0.0;
  for (std::size_t i = 0; i < cs.size(); ++i) {
    if (cs.log_weight(i) == kNegInf) continue;
    const double d = cs.value(i, alt) - mean;
    acc += cs.weight(i) * d * d;
  }
  return acc;
}

// Scores of every alternative under a score-based policy.
inline std::vector<double> score_all(PolicyKind policy, const CandidateSet& cs,
                                     const NoiseModel& noise, const QuadratureSpec& quad = {}) {
  const std::size_t m = cs.alternative_count();
  std::vector<double> out(m, 0.0);
  switch (policy) {
    case PolicyKind::kKgdpF: {
      quad.validate();
      const ScoreContext ctx(cs);
      for (std::size_t a = 0; a < m; ++a) out[a] = kgdp_f_score(ctx, a, noise, quad);
      break;
    }
    case PolicyKind::kKgdpH: {
      quad.validate();
      const ScoreContext ctx(cs);
      for (std::size_t a = 0; a < m; ++a) out[a] = kgdp_h_score(ctx, a, noise, quad);
      break;
    }
    case PolicyKind::kMaxVar:
      for (std::size_t a = 0; a < m; ++a) out[a] = max_var_score(cs, a);
      break;
    default:
      throw Error(std::string("policy ") + std::string(to_string(policy)) + " has no score");
  }
  return out;
}

inline std::size_t select_alternative(PolicyKind policy, const CandidateSet& cs,
                                      const AlternativeSet& alts, const NoiseModel& noise,
                                      const QuadratureSpec& quad, Rng& rng) {
  if (alts.size() != cs.alternative_count())
    throw Error("candidate set and alternative set disagree on M");
  switch (policy) {
    case PolicyKind::kPureExploration:
      return std::uniform_int_distribution<std::size_t>(0, alts.size() - 1)(rng);
    case PolicyKind::kPureExploitation:
      return argmax_lowest(posterior_means(cs));
    default:
      return argmax_lowest(score_all(policy, cs, noise, quad));
  }
}

struct QuadratureCheck {
  double score = 0.0;
  double refined = 0.0;
  bool converged = false;
};

// Compares a KG score at order Q against order 2Q.
inline QuadratureCheck check_quadrature(PolicyKind policy, const CandidateSet& cs, std::size_t alt,
                                        const NoiseModel& noise, const QuadratureSpec& quad,
                                        double threshold = 1e-6) {
  if (policy != PolicyKind::kKgdpF && policy != PolicyKind::kKgdpH)
    throw Error("quadrature check applies to KGDP-f and KGDP-H only");
  const ScoreContext ctx(cs);
  auto eval = [&](const QuadratureSpec& q) {
    return policy == PolicyKind::kKgdpF ? kgdp_f_score(ctx, alt, noise, q)
                                        : kgdp_h_score(ctx, alt, noise, q);
  };
  QuadratureCheck out;
  out.score = eval(quad);
  out.refined = eval(quad.doubled());
  out.converged = std::abs(out.score - out.refined) < threshold;
  return out;
}

}  // namespace kgdp
