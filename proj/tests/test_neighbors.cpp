#include <gtest/gtest.h>

#include "support.hpp"
#include "vra/error.hpp"
#include "vra/neighbors.hpp"

using namespace vra;
using vra::testing::makeDataset;
using vra::testing::scratchDir;

TEST(KMeans, RecoversSeparatedBlobs) {
  Rng rng(3);
  Eigen::MatrixXf pts(2, 60);
  const float centers[3][2] = {{0, 0}, {10, 0}, {0, 10}};
  for (int i = 0; i < 60; ++i) {
    pts(0, i) = centers[i % 3][0] + static_cast<float>(rng.uniform() - 0.5);
    pts(1, i) = centers[i % 3][1] + static_cast<float>(rng.uniform() - 0.5);
  }
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto res = kmeans(pts, 3, seed);
    EXPECT_TRUE(res.converged);
    for (int i = 3; i < 60; ++i) EXPECT_EQ(res.assignment[i], res.assignment[i % 3]);
    EXPECT_NE(res.assignment[0], res.assignment[1]);
    EXPECT_NE(res.assignment[0], res.assignment[2]);
    EXPECT_NE(res.assignment[1], res.assignment[2]);
    for (int i = 0; i < 3; ++i) {
      const Eigen::Vector2d c(centers[i][0], centers[i][1]);
      EXPECT_LT((res.centroids.col(res.assignment[i]) - c).norm(), 0.5);
    }
  }
}

TEST(KMeans, RejectsBadClusterCounts) {
  Eigen::MatrixXf pts = Eigen::MatrixXf::Zero(2, 3);
  EXPECT_THROW(kmeans(pts, 0, 1), ConfigError);
  EXPECT_THROW(kmeans(pts, 4, 1), ConfigError);
  const auto res = kmeans(pts, 3, 1);  // coincident points collapse
  for (auto a : res.assignment) EXPECT_EQ(a, 0u);
}

TEST(NeighborFamily, ClusterMembershipExcludesSelf) {
  const auto fam = NeighborFamily::fromClusters({0, 1, 0, 0, 1});
  EXPECT_EQ(fam.neighborsOf(0), (std::vector<Index>{2, 3}));
  EXPECT_EQ(fam.neighborsOf(4), (std::vector<Index>{1}));
  EXPECT_FALSE(fam.contains(0, 0));
  EXPECT_TRUE(fam.contains(0, 3));
  EXPECT_EQ(fam.size(1), 1u);
  const auto lists = NeighborFamily::fromLists({{2, 3, 2, 0}, {4}, {0, 3}, {0, 2}, {1}});
  EXPECT_EQ(lists.neighborsOf(0), (std::vector<Index>{2, 3}));
  EXPECT_EQ(fam, lists);
}

TEST(GraphNeighbors, CoPurchaseHandFixture) {
  // u0: i0 i1 at r0; u1: i1 i2 at r2; u2: i3 at r4.
  const auto ds = makeDataset(3, 5, 5, {{0, 0, 0}, {0, 1, 0}, {1, 1, 2}, {1, 2, 2}, {2, 3, 4}});
  const auto user = graphNeighborsUser(ds);
  EXPECT_EQ(user.neighborsOf(0), (std::vector<Index>{1}));
  EXPECT_EQ(user.neighborsOf(1), (std::vector<Index>{0, 2}));
  EXPECT_EQ(user.neighborsOf(2), (std::vector<Index>{1}));
  EXPECT_TRUE(user.neighborsOf(3).empty());
  EXPECT_TRUE(user.neighborsOf(4).empty());

  const auto t0 = graphNeighborsTime(ds, 0);
  EXPECT_EQ(t0.neighborsOf(0), (std::vector<Index>{1}));
  EXPECT_EQ(t0.neighborsOf(1), (std::vector<Index>{0, 2}));
  const auto t2 = graphNeighborsTime(ds, 2);
  EXPECT_EQ(t2.neighborsOf(0), (std::vector<Index>{1, 2}));
  EXPECT_EQ(t2.neighborsOf(3), (std::vector<Index>{1, 2}));
}

TEST(GraphNeighbors, UserLinkedIsSymmetric) {
  const auto ds = vra::testing::randomDataset(12, 15, 3, 0.05, 8);
  const auto fam = graphNeighborsUser(ds);
  for (Index a = 0; a < 15; ++a) {
    for (Index b : fam.neighborsOf(a)) EXPECT_TRUE(fam.contains(b, a));
  }
}

TEST(NeighborIndex, FeatureSetsNeedFeatures) {
  const auto ds = vra::testing::randomDataset(5, 6, 2, 0.3, 1);
  EXPECT_THROW(buildNeighborIndex(ds, nullptr, {}), ConfigError);
  NeighborOptions graphOnly;
  graphOnly.useFeatureSets = false;
  const auto idx = buildNeighborIndex(ds, nullptr, graphOnly);
  for (Index q = 0; q < 6; ++q) EXPECT_TRUE(idx.aesthetic.neighborsOf(q).empty());
}

TEST(NeighborIndex, CacheRoundTripAndStaleKey) {
  const auto ds = vra::testing::randomDataset(10, 20, 3, 0.1, 2);
  const auto f = vra::testing::randomFeatures(4, 3, 20, 3);
  NeighborOptions o;
  o.kCnn = 3;
  o.kAes = 4;
  o.deltaR = 1;
  const auto idx = buildNeighborIndex(ds, &f, o);
  const auto key = neighborCacheKey(ds, &f, o);
  const auto dir = scratchDir("nbr");
  saveNeighborCache(idx, key, dir / "n.cache");
  NeighborIndex back;
  ASSERT_TRUE(loadNeighborCache(dir / "n.cache", key, back));
  EXPECT_EQ(back, idx);
  auto o2 = o;
  o2.kAes = 5;
  EXPECT_NE(neighborCacheKey(ds, &f, o2), key);
  EXPECT_FALSE(loadNeighborCache(dir / "n.cache", neighborCacheKey(ds, &f, o2), back));
  EXPECT_FALSE(loadNeighborCache(dir / "absent.cache", key, back));
}
