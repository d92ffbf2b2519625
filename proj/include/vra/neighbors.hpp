#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "vra/data.hpp"
#include "vra/features.hpp"

namespace vra {

// One family of per-item neighbor sets. Cluster-derived families keep only
// the partition, so k = 1 does not cost Q^2 memory. members(q) may contain q
// itself; contains() and the materializing helpers always exclude it.
class NeighborFamily {
 public:
  NeighborFamily() = default;

  static NeighborFamily fromClusters(std::vector<Index> assignment);
  // Lists are sorted and deduplicated; q is removed from its own list.
  static NeighborFamily fromLists(std::vector<std::vector<Index>> lists);
  // No neighbors for any of `numItems` items.
  static NeighborFamily emptyFor(std::size_t numItems);

  std::size_t numItems() const noexcept;
  bool clustered() const noexcept { return clustered_; }

  // Sorted candidate list for q; may include q when clustered.
  std::span<const Index> members(Index q) const;
  bool contains(Index q, Index other) const;
  // |N_q|, self excluded.
  std::size_t size(Index q) const;
  // N_q with q removed.
  std::vector<Index> neighborsOf(Index q) const;

  const std::vector<Index>& assignment() const noexcept { return assignment_; }

  bool operator==(const NeighborFamily& other) const;

 private:
  bool clustered_ = false;
  std::vector<Index> assignment_;                // clustered: item -> cluster
  std::vector<std::vector<Index>> lists_;        // clustered: cluster -> items; else item -> neighbors
};

struct NeighborIndex {
  NeighborFamily aesthetic;   // N^A
  NeighborFamily semantic;    // N^C
  NeighborFamily userLinked;  // N^U
  NeighborFamily timeLinked;  // N^T

  bool operator==(const NeighborIndex&) const = default;
};

struct KMeansResult {
  std::vector<Index> assignment;
  Eigen::MatrixXd centroids;  // dim x k
  std::size_t iterations = 0;
  bool converged = false;
};

// Lloyd's algorithm with k-means++ seeding. Assignment ties go to the lowest
// cluster index. `points` holds one point per column.
KMeansResult kmeans(const Eigen::MatrixXf& points, std::size_t k, std::uint64_t seed, std::size_t maxIters = 100);

NeighborFamily clusterNeighbors(const FeatureMatrix& features, FeatureBlock block, std::size_t k,
                                std::uint64_t seed);

// N^U_q: items sharing at least one buyer with q.
NeighborFamily graphNeighborsUser(const Dataset& ds);
// N^T_q: items bought within deltaR intervals of some purchase of q.
NeighborFamily graphNeighborsTime(const Dataset& ds, std::size_t deltaR);

struct NeighborOptions {
  std::size_t kCnn = 0;  // 0 selects max(1, Q / 50)
  std::size_t kAes = 0;
  std::size_t deltaR = 0;
  std::uint64_t seed = 42;
  bool useFeatureSets = true;   // build N^A and N^C by clustering
  bool normalizeForClustering = false;
};

std::size_t defaultClusterCount(std::size_t numItems);

// Builds all four families. Throws ConfigError when feature sets are
// requested but no features are available.
NeighborIndex buildNeighborIndex(const Dataset& ds, const FeatureMatrix* features, const NeighborOptions& options);

// Cache keyed by a content hash of the inputs; load returns false when the
// file is absent or stale.
std::uint64_t neighborCacheKey(const Dataset& ds, const FeatureMatrix* features, const NeighborOptions& options);
void saveNeighborCache(const NeighborIndex& index, std::uint64_t key, const std::filesystem::path& path);
bool loadNeighborCache(const std::filesystem::path& path, std::uint64_t key, NeighborIndex& out);

}  // namespace vra
