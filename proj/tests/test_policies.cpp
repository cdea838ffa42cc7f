#include <gtest/gtest.h>

#include <cmath>

#include "kgdp/belief.hpp"
#include "kgdp/policies.hpp"
#include "support.hpp"

using namespace kgdp;
using kgdp::testing::logistic;
using kgdp::testing::normal_pdf;
using kgdp::testing::random_values_set;
using kgdp::testing::trapezoid;

namespace {

constexpr double kTol = 1e-8;

QuadratureSpec grid(int order = 801, double half_width = 10.0) {
  return {QuadratureScheme::kUniformGrid, order, half_width};
}

// Two candidates, M = 2, values f1 = (1, 0), f2 = (0, 1), sigma = 1, p = (1/2, 1/2).
// Measuring x0 gives p1' = logistic(y - 1/2), and y ~ (N(1,1) + N(0,1)) / 2.
CandidateSet symmetric_pair() { return CandidateSet::from_values({{1.0, 0.0}, {0.0, 1.0}}); }

double mixture_density(double y) { return 0.5 * (normal_pdf(y, 1.0, 1.0) + normal_pdf(y, 0.0, 1.0)); }

// E[max_x' fbar'(x') - fbar'(x0)] by a fine trapezoid rule over y, with the
// posterior written out from Bayes' rule.
double brute_force_kgdp_f(const CandidateSet& cs, std::size_t alt, double sigma) {
  const std::size_t l = cs.size();
  const std::size_t m = cs.alternative_count();
  std::vector<double> p = cs.weights();
  std::size_t x0 = 0;
  double best = -1e300;
  for (std::size_t x = 0; x < m; ++x) {
    double mean = 0.0;
    for (std::size_t i = 0; i < l; ++i) mean += p[i] * cs.value(i, x);
    if (mean > best) best = mean, x0 = x;
  }
  double lo = 1e300, hi = -1e300;
  for (std::size_t i = 0; i < l; ++i) lo = std::min(lo, cs.value(i, alt)), hi = std::max(hi, cs.value(i, alt));
  auto integrand = [&](double y) {
    std::vector<double> joint(l);
    double g = 0.0;
    for (std::size_t i = 0; i < l; ++i) g += joint[i] = p[i] * normal_pdf(y, cs.value(i, alt), sigma);
    if (g == 0.0) return 0.0;
    double top = -1e300, at_x0 = 0.0;
    for (std::size_t x = 0; x < m; ++x) {
      double mean = 0.0;
      for (std::size_t i = 0; i < l; ++i) mean += joint[i] * cs.value(i, x);
      top = std::max(top, mean);
      if (x == x0) at_x0 = mean;
    }
    return top - at_x0;  // already multiplied by the predictive density g(y)
  };
  return trapezoid(integrand, lo - 12.0 * sigma, hi + 12.0 * sigma, 400000);
}

double binary_entropy(double p) {
  double h = 0.0;
  if (p > 0.0) h -= p * std::log(p);
  if (p < 1.0) h -= (1.0 - p) * std::log1p(-p);
  return h;
}

}  // namespace

TEST(KgdpF, IdenticalCandidatesScoreZero) {
  const auto cs = CandidateSet::from_values({{1.0, 2.0, 0.5}, {1.0, 2.0, 0.5}, {1.0, 2.0, 0.5}},
                                            {std::log(0.2), std::log(0.3), std::log(0.5)});
  for (std::size_t a = 0; a < 3; ++a) EXPECT_NEAR(kgdp_f_score(cs, a, NoiseModel(1.0)), 0.0, kTol);
}

TEST(KgdpF, SharedArgmaxScoresZero) {
  const auto cs = CandidateSet::from_values({{0.0, 5.0, 1.0}, {2.0, 3.0, -1.0}, {-4.0, 9.0, 8.0}});
  for (std::size_t a = 0; a < 3; ++a) EXPECT_NEAR(kgdp_f_score(cs, a, NoiseModel(0.5)), 0.0, kTol);
}

TEST(KgdpF, SymmetricPairMatchesFineGridOracle) {
  const double oracle =
      trapezoid([](double z) { return normal_pdf(z, 0.5, 1.0) * logistic(std::abs(z)); }, -15.0, 16.0, 100000) -
      0.5;

  // Direct integral over y of max_x' fbar'(x') minus fbar(x0) under the mixture.
  const double direct =
      trapezoid([](double y) { return mixture_density(y) * std::max(logistic(y - 0.5), 1.0 - logistic(y - 0.5)); },
                -15.0, 16.0, 100000) -
      0.5;
  EXPECT_NEAR(oracle, direct, 1e-9);

  const auto cs = symmetric_pair();
  EXPECT_NEAR(kgdp_f_score(cs, 0, NoiseModel(1.0)), oracle, 1e-7);
  EXPECT_NEAR(kgdp_f_score(cs, 0, NoiseModel(1.0), grid()), oracle, 1e-7);
  EXPECT_GT(oracle, 0.05);
}

TEST(KgdpF, RandomInstancesMatchBruteForceOracle) {
  Rng rng(23);
  std::uniform_real_distribution<double> sig(0.05, 3.0);
  for (int t = 0; t < 30; ++t) {
    const auto cs = random_values_set(rng, 2 + t % 7, 5);
    const double sigma = sig(rng);
    const std::size_t a = t % 5;
    const double oracle = brute_force_kgdp_f(cs, a, sigma);
    EXPECT_NEAR(kgdp_f_score(cs, a, NoiseModel(sigma)), oracle, 1e-8) << "trial " << t << " sigma " << sigma;
  }
}

TEST(KgdpF, ExactScoreAgreesWithQuadratureFormAtHighOrder) {
  Rng rng(29);
  for (int t = 0; t < 20; ++t) {
    const auto cs = random_values_set(rng, 3 + t % 5, 4);
    const NoiseModel noise(1.0);
    const double exact = kgdp_f_score(cs, t % 4, noise);
    EXPECT_NEAR(kgdp_f_score_quadrature(cs, t % 4, noise, grid(200001, 12.0)), exact, 1e-7);
  }
}

TEST(KgdpH, EqualValuesAtAlternativeScoreZero) {
  const auto cs = CandidateSet::from_values({{3.0, 0.0}, {3.0, 1.0}, {3.0, 2.0}});
  EXPECT_NEAR(kgdp_h_score(cs, 0, NoiseModel(1.0)), 0.0, kTol);
}

TEST(KgdpH, PointMassScoresZero) {
  const auto cs = CandidateSet::from_values({{0.0, 1.0}, {5.0, 2.0}, {9.0, -3.0}}, {0.0, kNegInf, kNegInf});
  for (std::size_t a = 0; a < 2; ++a) {
    EXPECT_NEAR(kgdp_h_score(cs, a, NoiseModel(1.0)), 0.0, kTol);
    EXPECT_NEAR(kgdp_f_score(cs, a, NoiseModel(1.0)), 0.0, kTol);
  }
}

TEST(KgdpH, SymmetricPairMatchesFineGridOracle) {
  const double expected_post = trapezoid(
      [](double y) { return mixture_density(y) * binary_entropy(logistic(y - 0.5)); }, -15.0, 16.0, 100000);
  const double oracle = std::log(2.0) - expected_post;
  const auto cs = symmetric_pair();
  EXPECT_NEAR(kgdp_h_score(cs, 0, NoiseModel(1.0)), oracle, 1e-7);
  EXPECT_NEAR(kgdp_h_score(cs, 0, NoiseModel(1.0), grid()), oracle, 1e-7);
}

TEST(MaxVar, Examples) {
  EXPECT_NEAR(max_var_score(CandidateSet::from_values({{2.0}, {2.0}}), 0), 0.0, 1e-15);
  EXPECT_NEAR(max_var_score(CandidateSet::from_values({{0.0}, {2.0}}), 0), 1.0, 1e-14);
  EXPECT_NEAR(max_var_score(CandidateSet::from_values({{4.0}, {0.0}}, {std::log(0.25), std::log(0.75)}), 0), 3.0,
              1e-13);
}

TEST(SelectAlternative, PureExploitationPicksPosteriorArgmax) {
  const auto cs = CandidateSet::from_values({{0.1, 0.9, 0.3}});
  const AlternativeSet alts(std::vector<std::vector<double>>{{0.0}, {1.0}, {2.0}});
  Rng rng(1);
  EXPECT_EQ(select_alternative(PolicyKind::kPureExploitation, cs, alts, NoiseModel(1.0), {}, rng), 1u);
}

TEST(SelectAlternative, SingleCandidateKgTiesToZero) {
  const auto cs = CandidateSet::from_values({{0.1, 0.9, 0.3}});
  const AlternativeSet alts(std::vector<std::vector<double>>{{0.0}, {1.0}, {2.0}});
  Rng rng(1);
  for (auto p : {PolicyKind::kKgdpF, PolicyKind::kKgdpH, PolicyKind::kMaxVar}) {
    for (double s : score_all(p, cs, NoiseModel(1.0))) EXPECT_EQ(s, 0.0);
    EXPECT_EQ(select_alternative(p, cs, alts, NoiseModel(1.0), {}, rng), 0u);
  }
}

TEST(SelectAlternative, PureExplorationIsReproducible) {
  Rng seeded(99);
  const auto cs = random_values_set(seeded, 3, 17);
  std::vector<std::vector<double>> f(17, std::vector<double>{0.0});
  const AlternativeSet alts(f);
  for (std::uint64_t s = 0; s < 50; ++s) {
    Rng a(s), b(s);
    const std::size_t expect = std::uniform_int_distribution<std::size_t>(0, 16)(b);
    EXPECT_EQ(select_alternative(PolicyKind::kPureExploration, cs, alts, NoiseModel(1.0), {}, a), expect);
  }
}

TEST(SelectAlternative, ScorePoliciesUseLowestIndexArgmax) {
  Rng rng(8);
  for (int t = 0; t < 20; ++t) {
    const auto cs = random_values_set(rng, 4, 6);
    std::vector<std::vector<double>> f(6, std::vector<double>{0.0});
    const AlternativeSet alts(f);
    for (auto p : {PolicyKind::kKgdpF, PolicyKind::kKgdpH, PolicyKind::kMaxVar}) {
      Rng r(0);
      EXPECT_EQ(select_alternative(p, cs, alts, NoiseModel(1.0), {}, r),
                argmax_lowest(score_all(p, cs, NoiseModel(1.0))));
    }
  }
}

TEST(PolicyKind, ParseAndPrint) {
  for (auto p : kAllPolicies) EXPECT_EQ(parse_policy(to_string(p)), p);
  try {
    parse_policy("KG");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("PureExploration"), std::string::npos);
  }
}

TEST(QuadratureSpecTest, Validation) {
  EXPECT_THROW((QuadratureSpec{QuadratureScheme::kGaussHermite, 7, 8.0}.validate()), Error);
  EXPECT_THROW((QuadratureSpec{QuadratureScheme::kUniformGrid, 64, 3.0}.validate()), Error);
  EXPECT_NO_THROW((QuadratureSpec{QuadratureScheme::kUniformGrid, 64, 4.0}.validate()));
}

TEST(PolicyProperties, Nonnegativity) {
  Rng rng(2024);
  std::uniform_real_distribution<double> sig(0.05, 5.0);
  for (int t = 0; t < 1000; ++t) {
    const auto cs = random_values_set(rng, 2 + t % 12, 2 + t % 7);
    const NoiseModel noise(sig(rng));
    const std::size_t a = t % cs.alternative_count();
    EXPECT_GE(kgdp_f_score(cs, a, noise), -kTol);
    EXPECT_GE(kgdp_h_score(cs, a, noise), -kTol);
  }
}

TEST(PolicyProperties, QuadratureConvergesWhenOrderDoubles) {
  Rng rng(31);
  std::uniform_real_distribution<double> sig(0.3, 3.0);
  for (int t = 0; t < 100; ++t) {
    const auto cs = random_values_set(rng, 2 + t % 6, 4);
    const NoiseModel noise(sig(rng));
    for (auto p : {PolicyKind::kKgdpF, PolicyKind::kKgdpH}) {
      const auto c = check_quadrature(p, cs, t % 4, noise, {});
      EXPECT_TRUE(c.converged) << "trial " << t << ": " << c.score << " vs " << c.refined;
    }
  }
}

TEST(PolicyProperties, GaussHermiteAndGridAgree) {
  Rng rng(41);
  std::uniform_real_distribution<double> sig(0.3, 3.0);
  for (int t = 0; t < 100; ++t) {
    const auto cs = random_values_set(rng, 2 + t % 6, 4);
    const NoiseModel noise(sig(rng));
    const std::size_t a = t % 4;
    EXPECT_NEAR(kgdp_f_score(cs, a, noise), kgdp_f_score(cs, a, noise, grid(1601, 10.0)), 1e-5);
    EXPECT_NEAR(kgdp_h_score(cs, a, noise), kgdp_h_score(cs, a, noise, grid(1601, 10.0)), 1e-5);
  }
}

TEST(PolicyProperties, EntropyDecomposition) {
  Rng rng(51);
  std::uniform_real_distribution<double> sig(0.3, 3.0);
  for (int t = 0; t < 200; ++t) {
    const auto cs = random_values_set(rng, 2 + t % 8, 3);
    const NoiseModel noise(sig(rng));
    const std::size_t a = t % 3;
    const double post = expected_posterior_entropy(cs, a, noise);
    EXPECT_LE(post, entropy(cs) + kTol);
    EXPECT_NEAR(kgdp_h_score(cs, a, noise), entropy(cs) - post, 1e-8);  // each side is refined to 1e-9 independently
  }
}

TEST(PolicyProperties, ScoresVanishAsBeliefConcentrates) {
  Rng rng(61);
  for (int t = 0; t < 10; ++t) {
    auto cs = random_values_set(rng, 5, 6);
    const NoiseModel noise(1.0);
    // the truth is candidate 0; measure every alternative in turn, noiselessly
    for (int n = 0; n < 200; ++n) {
      const std::size_t a = n % 6;
      cs = sequential_update(cs, a, cs.value(0, a), noise);
    }
    for (std::size_t a = 0; a < 6; ++a) {
      EXPECT_LT(kgdp_f_score(cs, a, noise), 1e-6);
      EXPECT_LT(kgdp_h_score(cs, a, noise), 1e-6);
    }
  }
}

TEST(PolicyProperties, MartingaleViaGaussHermite) {
  // weight of candidate i after y, averaged over the per-component rule
  Rng rng(71);
  for (int t = 0; t < 200; ++t) {
    const auto cs = random_values_set(rng, 2 + t % 7, 2);
    const NoiseModel noise(0.2 + 0.01 * t);
    const auto rule = normal_expectation_rule(128, noise.sigma());
    std::vector<double> ep(cs.size(), 0.0);
    for (std::size_t j = 0; j < cs.size(); ++j)
      for (std::size_t k = 0; k < rule.offsets.size(); ++k) {
        const auto post = sequential_update(cs, 0, cs.value(j, 0) + rule.offsets[k], noise);
        for (std::size_t i = 0; i < cs.size(); ++i) ep[i] += cs.weight(j) * rule.weights[k] * post.weight(i);
      }
    for (std::size_t i = 0; i < cs.size(); ++i) EXPECT_NEAR(ep[i], cs.weight(i), 1e-6);
  }
}
