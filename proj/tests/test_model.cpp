#include <gtest/gtest.h>

#include "support.hpp"
#include "vra/error.hpp"

using namespace vra;
using vra::testing::makeDataset;
using vra::testing::randomFeatures;
using vra::testing::scratchDir;

namespace {

// Direct triple-loop evaluation of the squared-error objective.
double bruteMse(const ModelParams& m, const FeatureMatrix* f, const Dataset& ds, double lc, double lr) {
  double a = 0, b = 0, c = 0;
  for (Index p = 0; p < ds.numUsers(); ++p) {
    for (Index q = 0; q < ds.numItems(); ++q) {
      for (Index r = 0; r < ds.numIntervals(); ++r) {
        const bool pos = std::binary_search(ds.positives().begin(), ds.positives().end(), Triple{p, q, r});
        const double d = (pos ? 1.0 : 0.0) - predict(m, f, p, q, r);
        a += d * d;
      }
    }
  }
  for (Index p = 0; p < ds.numUsers(); ++p) {
    for (Index q = 0; q < ds.numItems(); ++q) {
      const double d = (ds.userBought(p, q) ? 1.0 : 0.0) - scoreS1(m, f, p, q);
      b += d * d;
    }
  }
  for (Index r = 0; r < ds.numIntervals(); ++r) {
    for (Index q = 0; q < ds.numItems(); ++q) {
      const double d = (ds.boughtDuring(r, q) ? 1.0 : 0.0) - scoreS2(m, f, r, q);
      c += d * d;
    }
  }
  return 0.5 * a + 0.5 * lc * (b + c) + 0.5 * lr * m.squaredNorm();
}

Eigen::MatrixXd& blockOf(ModelParams& m, int k) {
  Eigen::MatrixXd* blocks[] = {&m.U, &m.V, &m.T, &m.W, &m.M, &m.N};
  return *blocks[k];
}

}  // namespace

TEST(Model, PredictIsProductOfScores) {
  const auto f = randomFeatures(2, 2, 5, 1);
  const auto m = ModelParams::random(3, 5, 4, 3, 2, 4, FeatureMode::Hybrid, 7, 0.5);
  for (Index p = 0; p < 3; ++p) {
    for (Index q = 0; q < 5; ++q) {
      const double s1 = m.U.col(p).dot(m.V.col(q)) + m.M.col(p).dot(f.column(q).cast<double>());
      for (Index r = 0; r < 4; ++r) {
        const double s2 = m.T.col(r).dot(m.W.col(q)) + m.N.col(r).dot(f.column(q).cast<double>());
        EXPECT_NEAR(predict(m, &f, p, q, r), s1 * s2, 1e-14);
      }
    }
  }
}

TEST(Model, AllItemScoresMatchSingleScores) {
  const auto f = randomFeatures(3, 1, 6, 2);
  const auto m = ModelParams::random(2, 6, 3, 4, 3, 4, FeatureMode::Hybrid, 8, 0.5);
  std::vector<double> s1(6), s2(6);
  scoreS1All(m, &f, 1, s1);
  scoreS2All(m, &f, 2, s2);
  for (Index q = 0; q < 6; ++q) {
    EXPECT_NEAR(s1[q], scoreS1(m, &f, 1, q), 1e-14);
    EXPECT_NEAR(s2[q], scoreS2(m, &f, 2, q), 1e-14);
  }
}

TEST(Model, BasicModeIgnoresFeatures) {
  const auto m = ModelParams::random(2, 3, 2, 2, 2, 4, FeatureMode::Basic, 3, 0.5);
  EXPECT_EQ(m.featureDim(), 0u);
  const auto f = randomFeatures(2, 2, 3, 1);
  EXPECT_EQ(predict(m, nullptr, 1, 2, 1), predict(m, &f, 1, 2, 1));
}

TEST(Model, RandomInitRespectsScale) {
  const auto m = ModelParams::random(10, 10, 10, 5, 5, 3, FeatureMode::Hybrid, 1, 0.01);
  for (int k = 0; k < 6; ++k) {
    auto copy = m;
    EXPECT_LE(blockOf(copy, k).cwiseAbs().maxCoeff(), 0.01);
  }
}

TEST(Mse, ObjectiveMatchesTripleLoop) {
  const auto ds = vra::testing::randomDataset(3, 3, 3, 0.3, 4);
  const auto f = randomFeatures(1, 1, 3, 5);
  for (auto mode : {FeatureMode::Basic, FeatureMode::Hybrid}) {
    const auto m = ModelParams::random(3, 3, 3, 2, 2, 2, mode, 9, 0.8);
    const auto* fp = mode == FeatureMode::Hybrid ? &f : nullptr;
    EXPECT_NEAR(mseObjective(m, fp, ds, 0.3, 0.2), bruteMse(m, fp, ds, 0.3, 0.2), 1e-11);
  }
}

TEST(Mse, GradientMatchesFiniteDifferences) {
  const auto ds = vra::testing::randomDataset(3, 4, 3, 0.3, 6);
  const auto f = randomFeatures(2, 1, 4, 7);
  const auto m = ModelParams::random(3, 4, 3, 2, 2, 3, FeatureMode::Hybrid, 10, 0.7);
  auto g = mseGradient(m, &f, ds, 0.4, 0.1);
  const double h = 1e-6;
  for (int k = 0; k < 6; ++k) {
    for (Eigen::Index i = 0; i < blockOf(g, k).size(); ++i) {
      auto plus = m, minus = m;
      blockOf(plus, k).data()[i] += h;
      blockOf(minus, k).data()[i] -= h;
      const double fd = (mseObjective(plus, &f, ds, 0.4, 0.1) - mseObjective(minus, &f, ds, 0.4, 0.1)) / (2 * h);
      EXPECT_NEAR(blockOf(g, k).data()[i], fd, 1e-6 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST(Checkpoint, RoundTripAtFloatPrecision) {
  const auto m = ModelParams::random(4, 5, 3, 3, 2, 6, FeatureMode::Hybrid, 11, 0.3);
  const auto dir = scratchDir("ckpt");
  saveCheckpoint(toCheckpoint(m, "vra-aplr", 17), dir / "m.ckpt");
  const auto c = loadCheckpoint(dir / "m.ckpt");
  EXPECT_EQ(c.modelKind, "vra-aplr");
  EXPECT_EQ(c.iteration, 17u);
  EXPECT_EQ(c.P, 4u);
  EXPECT_EQ(c.D, 6u);
  const auto back = paramsFromCheckpoint(c);
  EXPECT_EQ(back.mode, FeatureMode::Hybrid);
  EXPECT_TRUE(back.U.isApprox(m.U.cast<float>().cast<double>(), 0));
  EXPECT_TRUE(back.N.isApprox(m.N.cast<float>().cast<double>(), 0));
}

TEST(Checkpoint, CorruptFilesAreRejected) {
  const auto dir = scratchDir("ckpt_bad");
  vra::testing::writeText(dir / "x.ckpt", "garbage");
  EXPECT_THROW(loadCheckpoint(dir / "x.ckpt"), DataError);
  EXPECT_THROW(loadCheckpoint(dir / "absent.ckpt"), IoError);
  const auto m = ModelParams::random(2, 2, 2, 2, 2, 0, FeatureMode::Basic, 1);
  saveCheckpoint(toCheckpoint(m, "vra-basic", 1), dir / "m.ckpt");
  const auto bytes = vra::testing::readText(dir / "m.ckpt");
  vra::testing::writeText(dir / "t.ckpt", bytes.substr(0, bytes.size() - 3));
  EXPECT_THROW(loadCheckpoint(dir / "t.ckpt"), DataError);
}

TEST(Model, ShapeMismatchIsDataError) {
  const auto ds = vra::testing::randomDataset(3, 3, 2, 0.5, 1);
  const auto m = ModelParams::random(3, 4, 2, 2, 2, 0, FeatureMode::Basic, 1);
  EXPECT_THROW(m.checkCompatible(ds, nullptr), DataError);
}
