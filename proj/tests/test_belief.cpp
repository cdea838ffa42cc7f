#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "kgdp/belief.hpp"
#include "support.hpp"

using namespace kgdp;
using kgdp::testing::line_alternatives;
using kgdp::testing::line_model;

namespace {

std::vector<ParameterVector> random_lines(Rng& rng, std::size_t l) {
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::vector<ParameterVector> out;
  for (std::size_t i = 0; i < l; ++i) out.push_back(ParameterVector{u(rng), u(rng)});
  return out;
}

MeasurementHistory random_history(Rng& rng, std::size_t n, std::size_t m) {
  std::uniform_int_distribution<std::size_t> alt(0, m - 1);
  std::normal_distribution<double> y(0.0, 4.0);
  MeasurementHistory h;
  for (std::size_t j = 0; j < n; ++j) h.push_back({alt(rng), y(rng)});
  return h;
}

}  // namespace

TEST(SequentialUpdate, TwoCandidateExample) {
  const auto cs = CandidateSet::from_values({{0.0}, {1.0}});
  const auto next = sequential_update(cs, 0, 0.0, NoiseModel(1.0));
  const double e = std::exp(-0.5);
  EXPECT_NEAR(next.weight(0), 1.0 / (1.0 + e), 1e-14);
  EXPECT_NEAR(next.weight(1), e / (1.0 + e), 1e-14);
  EXPECT_NEAR(next.weight(0), 0.62246, 1e-5);
  EXPECT_NEAR(next.weight(1), 0.37754, 1e-5);
}

TEST(SequentialUpdate, EqualValuesLeaveWeightsUnchanged) {
  const auto cs = CandidateSet::from_values({{2.0, 1.0}, {2.0, 5.0}, {2.0, -1.0}},
                                            {std::log(0.2), std::log(0.5), std::log(0.3)});
  const auto next = sequential_update(cs, 0, 17.0, NoiseModel(0.3));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(next.log_weight(i), cs.log_weight(i), 1e-12);
}

TEST(SequentialUpdate, ZeroWeightIsAbsorbing) {
  const auto cs = CandidateSet::from_values({{0.0}, {9.0}}, {0.0, kNegInf});
  for (double y : {-3.0, 0.0, 9.0, 50.0}) {
    const auto next = sequential_update(cs, 0, y, NoiseModel(1.0));
    EXPECT_DOUBLE_EQ(next.weight(0), 1.0);
    EXPECT_EQ(next.log_weight(1), kNegInf);
  }
}

TEST(SequentialUpdate, RejectsNonFiniteObservation) {
  const auto cs = CandidateSet::from_values({{0.0}, {1.0}});
  EXPECT_THROW(sequential_update(cs, 0, std::nan(""), NoiseModel(1.0)), Error);
}

TEST(LogLikelihood, Examples) {
  const auto model = line_model();
  const auto alts = line_alternatives(3);
  const ParameterVector th{1.0, 0.0};
  EXPECT_EQ(log_likelihood(th, MeasurementHistory{}, model, alts, NoiseModel(1.0)), 0.0);
  EXPECT_EQ(log_likelihood(th, MeasurementHistory({{0, 1.0}}), model, alts, NoiseModel(1.0)), 0.0);
  EXPECT_DOUBLE_EQ(log_likelihood(th, MeasurementHistory({{0, 2.0}, {1, 3.0}}), model, alts, NoiseModel(1.0)),
                   -2.5);
}

TEST(BatchUpdate, EmptyHistoryIsUniform) {
  Rng rng(1);
  const auto cs = batch_update(random_lines(rng, 3), {}, line_model(), line_alternatives(4), NoiseModel(1.0));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(cs.weight(i), 1.0 / 3.0, 1e-15);
}

TEST(BatchUpdate, EmptyCandidateListThrows) {
  EXPECT_THROW(batch_update({}, {}, line_model(), line_alternatives(4), NoiseModel(1.0)), Error);
}

TEST(BatchUpdate, SingleEntryEqualsOneSequentialStep) {
  Rng rng(2);
  const auto model = line_model();
  const auto alts = line_alternatives(5);
  const auto cands = random_lines(rng, 4);
  const NoiseModel noise(0.7);
  const auto seq = sequential_update(CandidateSet::uniform(cands, model, alts), 3, 1.25, noise);
  const auto bat = batch_update(cands, MeasurementHistory({{3, 1.25}}), model, alts, noise);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(seq.log_weight(i), bat.log_weight(i), 1e-13);
}

TEST(BatchUpdate, TwentyEntriesMatchSequentialChain) {
  Rng rng(3);
  const auto model = line_model();
  const auto alts = line_alternatives(6);
  const auto cands = random_lines(rng, 5);
  const NoiseModel noise(1.3);
  const auto hist = random_history(rng, 20, alts.size());
  auto seq = CandidateSet::uniform(cands, model, alts);
  for (const auto& [a, y] : hist) seq = sequential_update(seq, a, y, noise);
  const auto bat = batch_update(cands, hist, model, alts, noise);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(seq.log_weight(i), bat.log_weight(i), 1e-10);
}

TEST(BatchUpdate, EquivalenceProperty) {
  Rng rng(4);
  const auto model = line_model();
  const auto alts = line_alternatives(8);
  std::uniform_real_distribution<double> sig(0.5, 3.0);
  for (int t = 0; t < 60; ++t) {
    const auto cands = random_lines(rng, 2 + t % 9);
    const NoiseModel noise(sig(rng));
    const auto hist = random_history(rng, 1 + (t * 7) % 120, alts.size());
    auto seq = CandidateSet::uniform(cands, model, alts);
    for (const auto& [a, y] : hist) seq = sequential_update(seq, a, y, noise);
    const auto bat = batch_update(cands, hist, model, alts, noise);
    for (std::size_t i = 0; i < cands.size(); ++i) {
      if (bat.log_weight(i) == kNegInf || seq.log_weight(i) == kNegInf) {
        EXPECT_EQ(bat.log_weight(i), seq.log_weight(i));
        continue;
      }
      EXPECT_NEAR(seq.log_weight(i), bat.log_weight(i), 1e-10) << "trial " << t;
    }
  }
}

TEST(BatchUpdate, EquivalenceHoldsForVeryUnlikelyCandidates) {
  // log weights around -1e5, where one ulp is already ~1e-11
  Rng rng(5);
  const auto model = line_model();
  const auto alts = line_alternatives(8);
  std::vector<ParameterVector> cands = random_lines(rng, 6);
  for (auto& c : cands) c = ParameterVector{20.0 * c[0], 20.0 * c[1]};
  const NoiseModel noise(0.3);
  const auto hist = random_history(rng, 200, alts.size());
  auto seq = CandidateSet::uniform(cands, model, alts);
  for (const auto& [a, y] : hist) seq = sequential_update(seq, a, y, noise);
  const auto bat = batch_update(cands, hist, model, alts, noise);
  EXPECT_LT(*std::min_element(bat.log_weights().begin(), bat.log_weights().end()), -1e4);
  for (std::size_t i = 0; i < cands.size(); ++i) EXPECT_NEAR(seq.log_weight(i), bat.log_weight(i), 1e-10);
}

TEST(Mse, Examples) {
  const auto model = line_model();
  const auto alts = line_alternatives(3);
  const ParameterVector th{1.0, 0.0};
  EXPECT_DOUBLE_EQ(mse(th, MeasurementHistory({{0, 2.0}}), model, alts), 1.0);
  EXPECT_DOUBLE_EQ(mse(ParameterVector{0.5, 2.0}, MeasurementHistory({{0, 0.5}, {2, 4.5}}), model, alts), 0.0);
  EXPECT_NEAR(mse(th, MeasurementHistory({{0, 2.0}, {1, 3.0}, {2, 4.0}}), model, alts), 14.0 / 3.0, 1e-15);
}

TEST(Mse, EmptyHistoryIsUndefined) {
  try {
    mse(ParameterVector{1.0, 0.0}, {}, line_model(), line_alternatives(2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("undefined MSE"), std::string::npos);
  }
}

TEST(Mse, PermutationInvariantInHistoryOrder) {
  Rng rng(5);
  const auto model = line_model();
  const auto alts = line_alternatives(5);
  for (int t = 0; t < 50; ++t) {
    const auto th = random_lines(rng, 1)[0];
    auto entries = random_history(rng, 30, alts.size()).entries();
    const double a = mse(th, MeasurementHistory(entries), model, alts);
    std::shuffle(entries.begin(), entries.end(), rng);
    EXPECT_NEAR(a, mse(th, MeasurementHistory(entries), model, alts), 1e-12);
  }
}

TEST(ResidualAccumulator, FirstEntry) {
  const auto model = line_model();
  const auto alts = line_alternatives(3);
  const ParameterPool pool(2, {0.0, 1.0, 2.0, 0.0});
  const auto acc = accumulate_residuals(ResidualAccumulator(2), pool, 1, 3.0, model, alts);
  EXPECT_EQ(acc.count(), 1u);
  EXPECT_DOUBLE_EQ(acc.sum(0), 4.0);
  EXPECT_DOUBLE_EQ(acc.sum(1), 1.0);
}

TEST(ResidualAccumulator, ZeroResidualLeavesSumUnchanged) {
  const auto model = line_model();
  const auto alts = line_alternatives(3);
  const ParameterPool pool(2, {0.0, 1.0});
  auto acc = accumulate_residuals(ResidualAccumulator(1), pool, 0, 2.0, model, alts);
  const double before = acc.sum(0);
  acc = accumulate_residuals(acc, pool, 2, 2.0, model, alts);
  EXPECT_EQ(acc.sum(0), before);
  EXPECT_EQ(acc.count(), 2u);
}

TEST(ResidualAccumulator, MatchesFromScratchMse) {
  Rng rng(6);
  const auto model = line_model();
  const auto alts = line_alternatives(6);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::vector<double> data(200);
  for (double& d : data) d = u(rng);
  const ParameterPool pool(2, data);
  const auto hist = random_history(rng, 10, alts.size());
  ResidualAccumulator acc(pool.size());
  for (const auto& [a, y] : hist) acc = accumulate_residuals(acc, pool, a, y, model, alts);
  for (std::size_t k = 0; k < pool.size(); ++k) {
    EXPECT_GE(acc.sum(k), 0.0);
    EXPECT_NEAR(acc.mse(k), mse(pool.row(k), hist, model, alts), 1e-12);
  }
  const auto rebuilt = ResidualAccumulator::rebuild(pool, hist, model, alts);
  EXPECT_EQ(rebuilt.sums(), acc.sums());
}

// Expected weights after one more observation, with y drawn from the
// predictive mixture, equal the current weights. Integrated on a fine grid.
TEST(BeliefProperties, MartingaleUnderPredictiveMixture) {
  Rng rng(7);
  std::uniform_real_distribution<double> sig(0.3, 2.0);
  for (int t = 0; t < 25; ++t) {
    const auto cs = kgdp::testing::random_values_set(rng, 2 + t % 5, 3);
    const NoiseModel noise(sig(rng));
    double lo = 1e300, hi = -1e300;
    for (std::size_t i = 0; i < cs.size(); ++i) {
      lo = std::min(lo, cs.value(i, 1));
      hi = std::max(hi, cs.value(i, 1));
    }
    auto density = [&](double y) {
      double s = 0.0;
      for (std::size_t j = 0; j < cs.size(); ++j)
        s += cs.weight(j) * kgdp::testing::normal_pdf(y, cs.value(j, 1), noise.sigma());
      return s;
    };
    for (std::size_t i = 0; i < cs.size(); ++i) {
      const double ep = kgdp::testing::trapezoid(
          [&](double y) { return density(y) * sequential_update(cs, 1, y, noise).weight(i); },
          lo - 12 * noise.sigma(), hi + 12 * noise.sigma(), 4000);
      EXPECT_NEAR(ep, cs.weight(i), 1e-6);
    }
  }
}

// Repeated measurements at one x drive every candidate that disagrees with
// the truth there to negligible weight.
TEST(BeliefProperties, ConcentrationAtRepeatedAlternative) {
  int ok = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng = substream(seed, Stream::kNoise);
    const std::vector<double> f{1.0, 2.0, 0.0, 1.5};  // candidate 0 is the truth
    const double gap = 0.5;
    const NoiseModel noise(0.2 * gap);
    auto cs = CandidateSet::from_values({{f[0]}, {f[1]}, {f[2]}, {f[3]}});
    std::normal_distribution<double> w(0.0, noise.sigma());
    for (int n = 0; n < 500; ++n) cs = sequential_update(cs, 0, f[0] + w(rng), noise);
    bool all = true;
    for (std::size_t i = 1; i < cs.size(); ++i) all = all && cs.weight(i) < 1e-6;
    ok += all;
  }
  EXPECT_GE(ok, 95);
}
