#include "vra/neighbors.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <limits>

#include "vra/error.hpp"
#include "vra/rng.hpp"

namespace vra {

NeighborFamily NeighborFamily::fromClusters(std::vector<Index> assignment) {
  NeighborFamily f;
  f.clustered_ = true;
  Index numClusters = 0;
  for (Index c : assignment) numClusters = std::max<Index>(numClusters, c + 1);
  f.lists_.assign(numClusters, {});
  for (std::size_t q = 0; q < assignment.size(); ++q) f.lists_[assignment[q]].push_back(static_cast<Index>(q));
  f.assignment_ = std::move(assignment);
  return f;
}

NeighborFamily NeighborFamily::fromLists(std::vector<std::vector<Index>> lists) {
  NeighborFamily f;
  for (std::size_t q = 0; q < lists.size(); ++q) {
    auto& l = lists[q];
    std::sort(l.begin(), l.end());
    l.erase(std::unique(l.begin(), l.end()), l.end());
    std::erase(l, static_cast<Index>(q));
  }
  f.lists_ = std::move(lists);
  return f;
}

NeighborFamily NeighborFamily::emptyFor(std::size_t numItems) {
  return fromLists(std::vector<std::vector<Index>>(numItems));
}

std::size_t NeighborFamily::numItems() const noexcept { return clustered_ ? assignment_.size() : lists_.size(); }

std::span<const Index> NeighborFamily::members(Index q) const {
  if (q >= numItems()) throw std::out_of_range("item index out of range");
  return clustered_ ? std::span<const Index>(lists_[assignment_[q]]) : std::span<const Index>(lists_[q]);
}

bool NeighborFamily::contains(Index q, Index other) const {
  if (q == other) return false;
  const auto m = members(q);
  return std::binary_search(m.begin(), m.end(), other);
}

std::size_t NeighborFamily::size(Index q) const {
  const auto m = members(q);
  return clustered_ ? m.size() - 1 : m.size();
}

std::vector<Index> NeighborFamily::neighborsOf(Index q) const {
  const auto m = members(q);
  std::vector<Index> out;
  out.reserve(m.size());
  for (Index x : m) {
    if (x != q) out.push_back(x);
  }
  return out;
}

bool NeighborFamily::operator==(const NeighborFamily& other) const {
  if (numItems() != other.numItems()) return false;
  for (Index q = 0; q < numItems(); ++q) {
    if (neighborsOf(q) != other.neighborsOf(q)) return false;
  }
  return true;
}

KMeansResult kmeans(const Eigen::MatrixXf& points, std::size_t k, std::uint64_t seed, std::size_t maxIters) {
  const auto n = static_cast<std::size_t>(points.cols());
  if (n == 0) throw DataError("k-means needs at least one point");
  if (k == 0 || k > n) throw ConfigError("cluster count must be in [1, " + std::to_string(n) + "]");

  const Eigen::MatrixXd X = points.cast<double>();
  const Eigen::RowVectorXd pointNorms = X.colwise().squaredNorm();
  Rng rng(streamSeed(seed, 0xc1, k));

  // k-means++ seeding.
  KMeansResult res;
  res.centroids.resize(X.rows(), static_cast<Eigen::Index>(k));
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  std::size_t chosen = rng.below(n);
  for (std::size_t c = 0; c < k; ++c) {
    res.centroids.col(static_cast<Eigen::Index>(c)) = X.col(static_cast<Eigen::Index>(chosen));
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = (X.col(static_cast<Eigen::Index>(i)) - X.col(static_cast<Eigen::Index>(chosen))).squaredNorm();
      dist[i] = std::min(dist[i], d);
      total += dist[i];
    }
    if (c + 1 == k) break;
    if (total > 0) {
      double target = rng.uniform() * total;
      chosen = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        target -= dist[i];
        if (target < 0 && dist[i] > 0) {
          chosen = i;
          break;
        }
      }
      while (dist[chosen] == 0 && chosen > 0) --chosen;  // guard the float tail
    } else {
      chosen = rng.below(n);  // all points coincide with chosen centroids
    }
  }

  res.assignment.assign(n, 0);
  std::vector<std::size_t> counts(k);
  for (std::size_t iter = 0; iter < maxIters; ++iter) {
    const Eigen::RowVectorXd centroidNorms = res.centroids.colwise().squaredNorm();
    const Eigen::MatrixXd cross = res.centroids.transpose() * X;  // k x n
    bool changed = iter == 0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      Index best = 0;
      double bestDist = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const auto cc = static_cast<Eigen::Index>(c);
        const double d = pointNorms(ii) - 2.0 * cross(cc, ii) + centroidNorms(cc);
        if (d < bestDist) {  // strict: lowest index wins ties
          bestDist = d;
          best = static_cast<Index>(c);
        }
      }
      if (res.assignment[i] != best) {
        res.assignment[i] = best;
        changed = true;
      }
    }
    res.iterations = iter + 1;
    if (!changed) {
      res.converged = true;
      break;
    }
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(X.rows(), static_cast<Eigen::Index>(k));
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      sums.col(res.assignment[i]) += X.col(static_cast<Eigen::Index>(i));
      ++counts[res.assignment[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      // Empty clusters keep their previous centroid.
      if (counts[c] > 0) {
        res.centroids.col(static_cast<Eigen::Index>(c)) = sums.col(static_cast<Eigen::Index>(c)) / static_cast<double>(counts[c]);
      }
    }
  }

  // Compact cluster ids so that they are dense.
  std::vector<Index> remap(k, std::numeric_limits<Index>::max());
  Index next = 0;
  for (auto& a : res.assignment) {
    if (remap[a] == std::numeric_limits<Index>::max()) remap[a] = next++;
    a = remap[a];
  }
  Eigen::MatrixXd compact(X.rows(), static_cast<Eigen::Index>(next));
  for (std::size_t c = 0; c < k; ++c) {
    if (remap[c] != std::numeric_limits<Index>::max()) compact.col(remap[c]) = res.centroids.col(static_cast<Eigen::Index>(c));
  }
  res.centroids = std::move(compact);
  return res;
}

NeighborFamily clusterNeighbors(const FeatureMatrix& features, FeatureBlock block, std::size_t k,
                                std::uint64_t seed) {
  if (features.numItems() == 0) throw DataError("cannot cluster zero items");
  const auto& m = features.matrix();
  const Eigen::MatrixXf points = block == FeatureBlock::Cnn ? Eigen::MatrixXf(m.topRows(static_cast<Eigen::Index>(features.dimCnn())))
                                                            : Eigen::MatrixXf(m.bottomRows(static_cast<Eigen::Index>(features.dimAes())));
  if (points.rows() == 0) throw DataError("feature block to cluster is empty");
  const std::uint64_t blockSeed = streamSeed(seed, block == FeatureBlock::Cnn ? 1 : 2, 0);
  return NeighborFamily::fromClusters(kmeans(points, k, blockSeed).assignment);
}

namespace {

// Two-hop expansion item -> owners -> items over a bipartite adjacency.
template <class OwnersOf, class ItemsOf>
NeighborFamily twoHop(std::size_t numItems, OwnersOf ownersOf, ItemsOf itemsOf) {
  std::vector<std::vector<Index>> lists(numItems);
  std::vector<Index> mark(numItems, std::numeric_limits<Index>::max());
  for (Index q = 0; q < numItems; ++q) {
    auto& out = lists[q];
    mark[q] = q;
    ownersOf(q, [&](Index owner) {
      for (Index other : itemsOf(owner)) {
        if (mark[other] != q) {
          mark[other] = q;
          out.push_back(other);
        }
      }
    });
  }
  return NeighborFamily::fromLists(std::move(lists));
}

}  // namespace

NeighborFamily graphNeighborsUser(const Dataset& ds) {
  return twoHop(
      ds.numItems(),
      [&](Index q, auto&& visit) {
        for (Index p : ds.usersOfItem(q)) visit(p);
      },
      [&](Index p) { return ds.itemsOfUser(p); });
}

NeighborFamily graphNeighborsTime(const Dataset& ds, std::size_t deltaR) {
  const std::size_t R = ds.numIntervals();
  std::vector<char> seen(R);
  std::vector<Index> window;
  return twoHop(
      ds.numItems(),
      [&](Index q, auto&& visit) {
        window.clear();
        for (Index r : ds.intervalsOfItem(q)) {
          const std::size_t lo = r >= deltaR ? r - deltaR : 0;
          const std::size_t hi = std::min(R - 1, std::size_t{r} + deltaR);
          for (std::size_t x = lo; x <= hi; ++x) {
            if (!seen[x]) {
              seen[x] = 1;
              window.push_back(static_cast<Index>(x));
            }
          }
        }
        for (Index x : window) seen[x] = 0;
        for (Index x : window) visit(x);
      },
      [&](Index r) { return ds.itemsOfInterval(r); });
}

std::size_t defaultClusterCount(std::size_t numItems) { return std::max<std::size_t>(1, numItems / 50); }

NeighborIndex buildNeighborIndex(const Dataset& ds, const FeatureMatrix* features, const NeighborOptions& options) {
  NeighborIndex idx;
  const std::size_t Q = ds.numItems();
  if (options.useFeatureSets) {
    if (features == nullptr || features->empty()) {
      throw ConfigError("feature neighbor sets need a feature matrix; supply features or disable them");
    }
    if (features->numItems() != Q) throw DataError("feature matrix does not cover the dataset's items");
    const FeatureMatrix clustered =
        options.normalizeForClustering ? normalizeFeatures(*features, Normalization::UnitL2PerBlock) : *features;
    const auto pick = [&](std::size_t k) { return std::min(Q, k == 0 ? defaultClusterCount(Q) : k); };
    idx.semantic = clustered.dimCnn() > 0 ? clusterNeighbors(clustered, FeatureBlock::Cnn, pick(options.kCnn), options.seed)
                                          : NeighborFamily::emptyFor(Q);
    idx.aesthetic = clustered.dimAes() > 0
                        ? clusterNeighbors(clustered, FeatureBlock::Aesthetic, pick(options.kAes), options.seed)
                        : NeighborFamily::emptyFor(Q);
  } else {
    idx.semantic = NeighborFamily::emptyFor(Q);
    idx.aesthetic = NeighborFamily::emptyFor(Q);
  }
  idx.userLinked = graphNeighborsUser(ds);
  idx.timeLinked = graphNeighborsTime(ds, options.deltaR);
  return idx;
}

namespace {

constexpr char kCacheMagic[4] = {'V', 'R', 'A', 'N'};
constexpr std::uint32_t kCacheVersion = 1;

struct Fnv {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  }
  template <class T>
  void pod(const T& v) {
    bytes(&v, sizeof v);
  }
};

}  // namespace

std::uint64_t neighborCacheKey(const Dataset& ds, const FeatureMatrix* features, const NeighborOptions& o) {
  Fnv f;
  f.pod(std::uint64_t{ds.numUsers()});
  f.pod(std::uint64_t{ds.numItems()});
  f.pod(std::uint64_t{ds.numIntervals()});
  for (const auto& t : ds.positives()) f.pod(t);
  if (o.useFeatureSets && features != nullptr) {
    f.pod(std::uint64_t{features->dimCnn()});
    f.pod(std::uint64_t{features->dimAes()});
    f.bytes(features->matrix().data(), static_cast<std::size_t>(features->matrix().size()) * sizeof(float));
  }
  for (auto v : {std::uint64_t{o.kCnn}, std::uint64_t{o.kAes}, std::uint64_t{o.deltaR}, o.seed,
                 std::uint64_t{o.useFeatureSets}, std::uint64_t{o.normalizeForClustering}}) {
    f.pod(v);
  }
  return f.h;
}

void saveNeighborCache(const NeighborIndex& index, std::uint64_t key, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write neighbor cache " + path.string());
  auto put = [&](auto v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); };
  out.write(kCacheMagic, 4);
  put(kCacheVersion);
  put(key);
  for (const auto* fam : {&index.aesthetic, &index.semantic, &index.userLinked, &index.timeLinked}) {
    put(static_cast<std::uint32_t>(fam->numItems()));
    for (Index q = 0; q < fam->numItems(); ++q) {
      const auto members = fam->neighborsOf(q);
      put(static_cast<std::uint32_t>(members.size()));
      out.write(reinterpret_cast<const char*>(members.data()), static_cast<std::streamsize>(members.size() * sizeof(Index)));
    }
  }
  if (!out) throw IoError("write failure on " + path.string());
}

bool loadNeighborCache(const std::filesystem::path& path, std::uint64_t key, NeighborIndex& out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  char magic[4];
  std::uint32_t version = 0;
  std::uint64_t stored = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  in.read(reinterpret_cast<char*>(&stored), sizeof stored);
  if (!in || std::memcmp(magic, kCacheMagic, 4) != 0 || version != kCacheVersion || stored != key) return false;
  NeighborIndex idx;
  for (auto* fam : {&idx.aesthetic, &idx.semantic, &idx.userLinked, &idx.timeLinked}) {
    std::uint32_t n = 0;
    in.read(reinterpret_cast<char*>(&n), sizeof n);
    if (!in) return false;
    std::vector<std::vector<Index>> lists(n);
    for (auto& l : lists) {
      std::uint32_t count = 0;
      in.read(reinterpret_cast<char*>(&count), sizeof count);
      if (!in || count > n) return false;
      l.resize(count);
      in.read(reinterpret_cast<char*>(l.data()), static_cast<std::streamsize>(count * sizeof(Index)));
      if (!in) return false;
    }
    *fam = NeighborFamily::fromLists(std::move(lists));
  }
  out = std::move(idx);
  return true;
}

}  // namespace vra
