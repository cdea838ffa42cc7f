#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "kgdp/core.hpp"
#include "support.hpp"

using namespace kgdp;
using kgdp::testing::random_values_set;

TEST(NormalizeLogWeights, EqualEntriesGiveHalves) {
  const std::vector<double> in{0.0, 0.0};
  const auto r = normalize_log_weights(in);
  EXPECT_NEAR(r[0], -std::log(2.0), 1e-15);
  EXPECT_NEAR(r[1], -std::log(2.0), 1e-15);
}

TEST(NormalizeLogWeights, SingleSurvivorTakesAll) {
  const std::vector<double> in{kNegInf, 0.0};
  const auto r = normalize_log_weights(in);
  EXPECT_EQ(r[0], kNegInf);
  EXPECT_DOUBLE_EQ(r[1], 0.0);
}

TEST(NormalizeLogWeights, LargeOffsetsStayStable) {
  const std::vector<double> in{100.0, 100.0 + std::log(3.0)};
  const auto r = normalize_log_weights(in);
  EXPECT_NEAR(r[0], -std::log(4.0), 1e-12);
  EXPECT_NEAR(r[1], std::log(3.0) - std::log(4.0), 1e-12);
}

TEST(NormalizeLogWeights, AllNegInfIsDegenerate) {
  const std::vector<double> in{kNegInf, kNegInf};
  try {
    normalize_log_weights(in);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("degenerate weights"), std::string::npos);
  }
}

TEST(NormalizeLogWeights, NormalizingTwiceIsExact) {
  Rng rng(4);
  std::normal_distribution<double> n(0.0, 20.0);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> lw(1 + t % 40);
    for (double& d : lw) d = n(rng);
    if (t % 3 == 0 && lw.size() > 1) lw[0] = kNegInf;
    const auto once = normalize_log_weights(lw);
    EXPECT_EQ(normalize_log_weights(once), once);
  }
}

TEST(NormalizeLogWeights, ShiftIsConstantOnFiniteEntries) {
  Rng rng(3);
  std::normal_distribution<double> g(0.0, 50.0);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> in(1 + t % 9);
    for (double& d : in) d = g(rng);
    if (in.size() > 2) in[1] = kNegInf;
    const auto r = normalize_log_weights(in);
    EXPECT_NEAR(log_sum_exp(r), 0.0, 1e-12);
    const double shift = r[0] - in[0];
    for (std::size_t i = 0; i < in.size(); ++i) {
      if (in[i] == kNegInf) {
        EXPECT_EQ(r[i], kNegInf);
      } else {
        EXPECT_NEAR(r[i] - in[i], shift, 1e-9);
      }
    }
  }
}

TEST(PosteriorMean, SingleCandidate) {
  const auto cs = CandidateSet::from_values({{3.5}});
  EXPECT_DOUBLE_EQ(posterior_mean(cs, 0), 3.5);
}

TEST(PosteriorMean, EqualWeights) {
  const auto cs = CandidateSet::from_values({{0.0}, {1.0}});
  EXPECT_NEAR(posterior_mean(cs, 0), 0.5, 1e-15);
}

TEST(PosteriorMean, DotProduct) {
  const auto cs = CandidateSet::from_values({{4.0}, {0.0}}, {std::log(0.25), std::log(0.75)});
  EXPECT_NEAR(posterior_mean(cs, 0), 1.0, 1e-14);
}

TEST(PosteriorMean, InvalidIndexThrows) {
  const auto cs = CandidateSet::from_values({{4.0}, {0.0}});
  EXPECT_THROW(posterior_mean(cs, 1), Error);
}

TEST(PosteriorMean, PermutationInvariant) {
  Rng rng(11);
  for (int t = 0; t < 100; ++t) {
    const auto cs = random_values_set(rng, 6, 4);
    std::vector<std::size_t> perm(cs.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::vector<double>> rows;
    std::vector<double> lw;
    for (std::size_t i : perm) {
      auto v = cs.values_of(i);
      rows.emplace_back(v.begin(), v.end());
      lw.push_back(cs.log_weight(i));
    }
    const auto shuffled = CandidateSet::from_values(rows, lw);
    for (std::size_t m = 0; m < 4; ++m) EXPECT_NEAR(posterior_mean(cs, m), posterior_mean(shuffled, m), 1e-12);
  }
}

TEST(Entropy, UniformIsLogL) {
  const auto cs = CandidateSet::from_values({{0.0}, {1.0}, {2.0}, {3.0}});
  EXPECT_NEAR(entropy(cs), 1.3862944, 1e-7);
}

TEST(Entropy, PointMassIsZero) {
  const auto cs = CandidateSet::from_values({{0.0}, {1.0}, {2.0}}, {0.0, kNegInf, kNegInf});
  EXPECT_EQ(entropy(cs), 0.0);
}

TEST(Entropy, HalfQuarterQuarter) {
  const auto cs = CandidateSet::from_values({{0.0}, {1.0}, {2.0}}, {std::log(0.5), std::log(0.25), std::log(0.25)});
  EXPECT_NEAR(entropy(cs), 1.0397208, 1e-7);
  EXPECT_NEAR(entropy(cs), 1.5 * std::log(2.0), 1e-14);
}

TEST(Entropy, BoundedByLogLWithEqualityOnlyWhenUniform) {
  Rng rng(5);
  for (int t = 0; t < 300; ++t) {
    const std::size_t l = 2 + t % 10;
    const auto cs = random_values_set(rng, l, 2);
    const double h = entropy(cs);
    EXPECT_GE(h, 0.0);
    EXPECT_LT(h, std::log(static_cast<double>(l)) - 1e-9);
    const auto uni = random_values_set(rng, l, 2, 1.0, false);
    EXPECT_NEAR(entropy(uni), std::log(static_cast<double>(l)), 1e-12);
  }
}

TEST(CandidateSet, WeightsNormalizedAfterConstruction) {
  Rng rng(7);
  for (int t = 0; t < 100; ++t) {
    const auto cs = random_values_set(rng, 2 + t % 7, 3);
    EXPECT_NEAR(log_sum_exp(cs.log_weights()), 0.0, 1e-12);
    const auto r = cs.reweighted(std::vector<double>(cs.size(), 5.0));
    EXPECT_NEAR(log_sum_exp(r.log_weights()), 0.0, 1e-12);
  }
}

TEST(CandidateSet, ValueCacheMatchesModel) {
  const auto model = kgdp::testing::line_model();
  const auto alts = kgdp::testing::line_alternatives(7);
  Rng rng(9);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  std::vector<ParameterVector> cands;
  for (int i = 0; i < 5; ++i) cands.push_back(ParameterVector{u(rng), u(rng)});
  const auto cs = CandidateSet::uniform(cands, model, alts);
  for (std::size_t i = 0; i < cs.size(); ++i)
    for (std::size_t m = 0; m < alts.size(); ++m)
      EXPECT_EQ(cs.value(i, m), model(cands[i], alts[m]));
}

TEST(CandidateSet, RejectsDimensionMismatch) {
  const auto model = kgdp::testing::line_model();
  const auto alts = kgdp::testing::line_alternatives(3);
  EXPECT_THROW(CandidateSet::uniform({ParameterVector{1.0}}, model, alts), Error);
}

TEST(CoreTypes, Invariants) {
  EXPECT_THROW(AlternativeSet(std::vector<std::vector<double>>{}), Error);
  EXPECT_THROW(AlternativeSet(std::vector<std::vector<double>>{{std::nan("")}}), Error);
  EXPECT_THROW(ParameterVector{std::numeric_limits<double>::infinity()}, Error);
  EXPECT_THROW(NoiseModel(0.0), Error);
  EXPECT_THROW(NoiseModel(-1.0), Error);
  const AlternativeSet alts(std::vector<std::vector<double>>{{0.0}, {1.0}, {2.0}});
  for (std::size_t i = 0; i < alts.size(); ++i) EXPECT_EQ(alts[i].index, i);
  MeasurementHistory h;
  h.push_back({3, 1.0});
  EXPECT_THROW(h.validate(3), Error);
}

TEST(Argmax, LowestIndexOnTies) {
  const std::vector<double> v{0.1, 0.9, 0.9, 0.3};
  EXPECT_EQ(argmax_lowest(v), 1u);
}
