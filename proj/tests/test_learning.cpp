#include <gtest/gtest.h>

#include <map>
#include <set>

#include "support.hpp"
#include "vra/error.hpp"

using namespace vra;
using vra::testing::checksum;
using vra::testing::makeDataset;
using vra::testing::randomDataset;
using vra::testing::randomFeatures;

namespace {

Eigen::MatrixXd& blockOf(ModelParams& m, int k) {
  Eigen::MatrixXd* blocks[] = {&m.U, &m.V, &m.T, &m.W, &m.M, &m.N};
  return *blocks[k];
}

const ParamBlock kBlocks[] = {ParamBlock::U, ParamBlock::V, ParamBlock::T,
                              ParamBlock::W, ParamBlock::M, ParamBlock::N};

// Indices into blockOf: {U, V, M} or {T, W, N}.
std::array<int, 3> sideBlocks(Side side) {
  return side == Side::User ? std::array{0, 1, 4} : std::array{2, 3, 5};
}

NeighborIndex graphIndex(const Dataset& ds) {
  NeighborOptions o;
  o.useFeatureSets = false;
  return buildNeighborIndex(ds, nullptr, o);
}

}  // namespace

TEST(LogSigmoid, StableAtExtremes) {
  EXPECT_NEAR(logSigmoid(-800.0), -800.0, 1e-9);
  EXPECT_LE(logSigmoid(800.0), 0.0);
  EXPECT_GT(logSigmoid(800.0), -1e-300);
  EXPECT_NEAR(logSigmoid(0.0), -std::log(2.0), 1e-15);
  EXPECT_NEAR(sigmoid(-800.0), 0.0, 1e-300);
  EXPECT_NEAR(sigmoid(3.0) + sigmoid(-3.0), 1.0, 1e-15);
}

TEST(PairGradient, MatchesFiniteDifferences) {
  const auto f = randomFeatures(2, 2, 5, 1);
  const auto m = ModelParams::random(3, 5, 3, 3, 2, 4, FeatureMode::Hybrid, 2, 0.8);
  GradAccumulator acc(m);
  pairLikelihoodGrad(m, &f, 1, 2, 4, 0, 0.3, acc, 0.7);
  const double h = 1e-6;
  for (int k = 0; k < 6; ++k) {
    for (Eigen::Index i = 0; i < acc.block(kBlocks[k]).size(); ++i) {
      auto plus = m, minus = m;
      blockOf(plus, k).data()[i] += h;
      blockOf(minus, k).data()[i] -= h;
      const double fd =
          0.7 * (pairLikelihood(plus, &f, 1, 2, 4, 0, 0.3) - pairLikelihood(minus, &f, 1, 2, 4, 0, 0.3)) / (2 * h);
      EXPECT_NEAR(acc.block(kBlocks[k]).data()[i], fd, 1e-7);
    }
  }
  EXPECT_THROW(pairLikelihoodGrad(m, &f, 1, 2, 2, 0, 0.3, acc), std::invalid_argument);
}

TEST(PairGradient, MaskLimitsWrittenBlocks) {
  const auto m = ModelParams::random(2, 4, 2, 2, 2, 0, FeatureMode::Basic, 3, 0.5);
  GradAccumulator acc(m);
  pairLikelihoodGrad(m, nullptr, 0, 1, 3, 1, 0.1, acc, 1.0, SideMask::only(Side::User));
  EXPECT_TRUE(acc.touched(ParamBlock::T).empty());
  EXPECT_TRUE(acc.touched(ParamBlock::W).empty());
  EXPECT_EQ(acc.touched(ParamBlock::V), (std::vector<Index>{1, 3}));
  EXPECT_TRUE(acc.block(ParamBlock::W).isZero());
}

TEST(ExhaustiveObjective, GradientMatchesFiniteDifferences) {
  const auto ds = randomDataset(4, 6, 3, 0.15, 5);
  const auto f = randomFeatures(2, 1, 6, 6);
  const auto nbr = buildNeighborIndex(ds, &f, {2, 2, 1, 3});
  Hyperparams hp;
  hp.lambdaC = 0.05;
  hp.lambdaR = 0.2;
  hp.eta1 = 0.3;
  hp.eta2 = 0.1;
  const auto m = ModelParams::random(4, 6, 3, 2, 2, 3, FeatureMode::Hybrid, 7, 0.5);
  const double h = 1e-6;
  for (Side side : {Side::User, Side::Time}) {
    auto g = aplrGradientExhaustive(m, &f, ds, nbr, hp, side);
    for (int k : sideBlocks(side)) {
      for (Eigen::Index i = 0; i < blockOf(g, k).size(); ++i) {
        auto plus = m, minus = m;
        blockOf(plus, k).data()[i] += h;
        blockOf(minus, k).data()[i] -= h;
        const double fd = (aplrObjectiveExhaustive(plus, &f, ds, nbr, hp, side) -
                           aplrObjectiveExhaustive(minus, &f, ds, nbr, hp, side)) /
                          (2 * h);
        EXPECT_NEAR(blockOf(g, k).data()[i], fd, 1e-6 * std::max(1.0, std::abs(fd)));
      }
    }
  }
}

TEST(UnlabeledPool, MatchesBruteForceSet) {
  const auto ds = randomDataset(5, 12, 4, 0.15, 8);
  for (Index p = 0; p < 5; ++p) {
    for (Index r = 0; r < 4; ++r) {
      std::vector<Index> expected;
      for (Index q = 0; q < 12; ++q) {
        if (!ds.userBought(p, q) && !ds.boughtDuring(r, q)) expected.push_back(q);
      }
      const UnlabeledPool pool(ds, p, r);
      EXPECT_EQ(pool.items(), expected);
      EXPECT_EQ(pool.size(), expected.size());
      for (Index q = 0; q < 12; ++q) {
        EXPECT_EQ(pool.contains(q), std::binary_search(expected.begin(), expected.end(), q));
      }
    }
  }
}

TEST(UnlabeledPool, UniformDrawsPassChiSquare) {
  const auto ds = makeDataset(2, 10, 2, {{0, 0, 0}, {0, 3, 0}, {1, 7, 0}, {1, 5, 1}});
  const UnlabeledPool pool(ds, 0, 0);  // excludes 0, 3 (user) and 7 (interval)
  ASSERT_EQ(pool.size(), 7u);
  Rng rng(11);
  std::map<Index, int> counts;
  const int draws = 70000;
  for (int i = 0; i < draws; ++i) ++counts[pool.sample(rng)];
  ASSERT_EQ(counts.size(), 7u);
  double chi2 = 0;
  for (const auto& [q, c] : counts) {
    EXPECT_TRUE(pool.contains(q));
    chi2 += (c - 10000.0) * (c - 10000.0) / 10000.0;
  }
  EXPECT_LT(chi2, 22.46);  // 0.999 quantile, 6 degrees of freedom
  const auto none = pool.sampleExcluding(rng, [](Index) { return true; });
  EXPECT_FALSE(none.has_value());
  for (int i = 0; i < 200; ++i) EXPECT_NE(*pool.sampleExcluding(rng, [](Index q) { return q != 9; }), 8u);
}

TEST(UnlabeledPool, EmptyPoolSkipsRecord) {
  const auto ds = makeDataset(1, 2, 1, {{0, 0, 0}, {0, 1, 0}});
  Rng rng(1);
  SamplingCounters counters;
  const auto pairs = sampleAPLRPairs(ds, graphIndex(ds), 0, 0, 0, {}, Side::User, rng, &counters);
  EXPECT_TRUE(pairs.empty());
  EXPECT_EQ(counters.skippedRecords, 1u);
  EXPECT_THROW(UnlabeledPool(ds, 0, 0).sample(rng), DataError);
}

TEST(Sampling, PairLayoutSharesNeighborAcrossRelations) {
  const auto fx = vra::testing::samplingFixture();
  Rng rng(4);
  const auto pairs = sampleAPLRPairs(fx.ds, fx.nbr, 0, 2, 0, {3, true, true}, Side::User, rng);
  ASSERT_EQ(pairs.size(), 9u);
  const std::set<Index> nq3{3, 6, 7, 8, 9};
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(pairs[i].relation, Relation::PosVsNeg);
    EXPECT_GE(*pairs[i].qNeg, 3u);
    EXPECT_EQ(pairs[3 + i].relation, Relation::PosVsNeighbor);
    EXPECT_EQ(pairs[6 + i].relation, Relation::NeighborVsNeg);
    EXPECT_EQ(*pairs[3 + i].qMid, *pairs[6 + i].qMid);
    EXPECT_TRUE(nq3.count(*pairs[3 + i].qMid));
    EXPECT_FALSE(nq3.count(*pairs[6 + i].qNeg));
    EXPECT_EQ(pairs[6 + i].preferred(), *pairs[6 + i].qMid);
  }
}

TEST(Sampling, SharedNeighborDrawLaw) {
  const auto fx = vra::testing::samplingFixture();
  Rng rng(2024);
  std::array<int, 4> hist{};
  const int sweeps = 20000;
  for (int s = 0; s < sweeps; ++s) {
    const auto mids = vra::testing::samplingSweep(fx, rng);
    ++hist[std::count(mids.begin(), mids.end(), Index{3})];
  }
  // P(q4 drawn k times) for k = 0..3: (1/2)(1/2)(4/5), ..., (1/2)(1/2)(1/5).
  const double expected[4] = {0.2, 0.45, 0.3, 0.05};
  for (int k = 0; k < 4; ++k) EXPECT_NEAR(hist[k] / double(sweeps), expected[k], 0.015) << k;
}

TEST(Sampling, SideNeighborsUnionExcludesSelf) {
  NeighborIndex nbr;
  nbr.userLinked = NeighborFamily::fromLists({{1}, {0}, {}, {}});
  nbr.timeLinked = NeighborFamily::fromLists({{2}, {}, {0}, {}});
  nbr.semantic = NeighborFamily::fromClusters({0, 0, 1, 0});
  nbr.aesthetic = NeighborFamily::emptyFor(4);
  EXPECT_EQ(sideNeighbors(nbr, 0, Side::User), (std::vector<Index>{1, 3}));
  EXPECT_EQ(sideNeighbors(nbr, 0, Side::Time), (std::vector<Index>{1, 2, 3}));
}

TEST(Epoch, HalfStepsTouchOnlyTheirSide) {
  const auto ds = randomDataset(8, 10, 4, 0.08, 12);
  const auto nbr = graphIndex(ds);
  Hyperparams hp;
  hp.K1 = hp.K2 = 3;
  hp.batchSize = 7;
  hp.lambdaR = 0.1;
  auto m = ModelParams::random(8, 10, 4, 3, 3, 0, FeatureMode::Basic, 1, 0.1);
  std::array<std::uint64_t, 6> before{};
  int checked = 0;
  EpochHooks hooks;
  hooks.beforeHalfStep = [&](Side, const ModelParams& p) {
    auto copy = p;
    for (int k = 0; k < 6; ++k) before[k] = checksum(blockOf(copy, k));
  };
  hooks.afterHalfStep = [&](Side side, const ModelParams& p) {
    auto copy = p;
    const Side other = side == Side::User ? Side::Time : Side::User;
    for (int k : sideBlocks(other)) EXPECT_EQ(checksum(blockOf(copy, k)), before[k]);
    const int moved = side == Side::User ? 0 : 2;
    EXPECT_NE(checksum(blockOf(copy, moved)), before[moved]);
    ++checked;
  };
  aplrEpoch(m, nullptr, ds, nbr, hp, 1, &hooks);
  EXPECT_EQ(checked, 2 * static_cast<int>((ds.positives().size() + 6) / 7));
}

TEST(Epoch, DeterministicAndThreadCountOnlyReordersSums) {
  const auto ds = randomDataset(10, 12, 3, 0.1, 3);
  const auto nbr = graphIndex(ds);
  Hyperparams hp;
  hp.K1 = hp.K2 = 4;
  hp.batchSize = 16;
  const auto init = ModelParams::random(10, 12, 3, 4, 4, 0, FeatureMode::Basic, 5, 0.1);
  auto a = init, b = init, c = init;
  const auto sa = aplrEpoch(a, nullptr, ds, nbr, hp, 1);
  aplrEpoch(b, nullptr, ds, nbr, hp, 1);
  EXPECT_EQ(checksum(a.U), checksum(b.U));
  EXPECT_EQ(checksum(a.W), checksum(b.W));
  hp.threads = 3;
  const auto sc = aplrEpoch(c, nullptr, ds, nbr, hp, 1);
  EXPECT_LT((a.V - c.V).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(sa.pairs, sc.pairs);
}

TEST(Epoch, HugeStepRaisesDivergence) {
  const auto ds = randomDataset(6, 8, 2, 0.2, 4);
  const auto nbr = graphIndex(ds);
  Hyperparams hp;
  hp.K1 = hp.K2 = 2;
  hp.learnRate = 1e9;
  hp.lambdaR = 0;
  auto m = ModelParams::random(6, 8, 2, 2, 2, 0, FeatureMode::Basic, 5, 1.0);
  EXPECT_THROW(aplrEpoch(m, nullptr, ds, nbr, hp, 1), DivergenceError);
}

TEST(Epoch, PlrModeDrawsOnlyPosVsNeg) {
  const auto ds = randomDataset(6, 8, 2, 0.2, 4);
  const auto nbr = graphIndex(ds);
  Hyperparams hp;
  hp.K1 = hp.K2 = 2;
  hp.eta1 = hp.eta2 = 0;
  auto m = ModelParams::random(6, 8, 2, 2, 2, 0, FeatureMode::Basic, 5);
  const auto st = aplrEpoch(m, nullptr, ds, nbr, hp, 1);
  EXPECT_GT(st.pairs[0], 0u);
  EXPECT_EQ(st.pairs[1], 0u);
  EXPECT_EQ(st.pairs[2], 0u);
}

TEST(MseTrainer, ObjectiveDecreases) {
  const auto ds = randomDataset(6, 7, 3, 0.2, 9);
  Hyperparams hp;
  hp.K1 = hp.K2 = 3;
  hp.lambdaC = 0.1;
  hp.lambdaR = 0.1;
  hp.learnRate = 0.02;
  MseTrainer t(ModelParams::random(6, 7, 3, 3, 3, 0, FeatureMode::Basic, 1, 0.5), nullptr, ds, hp);
  double prev = -1e300;
  for (std::size_t e = 1; e <= 20; ++e) {
    const double L = t.runEpoch(e).meanL;
    EXPECT_GE(L, prev - 1e-12);
    prev = L;
  }
}

TEST(TrainLoop, KeepsBestValidationCheckpoint) {
  SyntheticSpec spec;
  spec.P = spec.Q = 40;
  spec.R = 5;
  spec.trueRank1 = spec.trueRank2 = 3;
  spec.density = 0.03;
  const auto data = generateSynthetic(spec);
  const auto nbr = graphIndex(data.bundle.train);
  Hyperparams hp;
  hp.K1 = hp.K2 = 3;
  hp.lambdaR = 0.01;
  hp.lambdaC = 0.1;
  VraTrainer t(ModelParams::random(40, 40, 5, 3, 3, 0, FeatureMode::Basic, 1, 0.1), nullptr, data.bundle.train, nbr,
               hp, "vra-basic");
  TrainOptions o;
  o.maxIters = 6;
  o.evalEvery = 2;
  o.recordWallclock = false;
  const auto res = t.runEpoch(0).records;
  EXPECT_EQ(res, data.bundle.train.positives().size());
  const auto r = train(t, data.bundle, o);
  ASSERT_EQ(r.history.size(), 7u);
  double best = -1;
  for (const auto& row : r.history) {
    if (row.ndcgAt10) best = std::max(best, *row.ndcgAt10);
    EXPECT_EQ(row.wallclockMs, 0.0);
  }
  EXPECT_EQ(r.bestNdcgAt10, best);
  EXPECT_EQ(r.best.iteration, r.bestEpoch);
  EXPECT_FALSE(r.history[1].ndcgAt10.has_value());
  EXPECT_TRUE(r.history[2].ndcgAt10.has_value());
}
