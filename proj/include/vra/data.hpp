#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace vra {

using Index = std::uint32_t;

struct InteractionRecord {
  std::string user;
  std::string item;
  std::int64_t timestamp = 0;

  bool operator==(const InteractionRecord&) const = default;
};

// One positive entry of the user x item x time tensor.
struct Triple {
  Index user = 0;
  Index item = 0;
  Index interval = 0;

  auto operator<=>(const Triple&) const = default;
};

// Binary user x item x interval tensor A together with its coupled matrices
// B (user-item) and C (interval-item). Immutable after construction.
class Dataset {
 public:
  Dataset() = default;

  // Builds the index structures. Duplicate triples are collapsed; an index out
  // of [0,P) x [0,Q) x [0,R) throws DataError.
  Dataset(std::vector<std::string> userIds, std::vector<std::string> itemIds,
          std::size_t numIntervals, std::vector<Triple> positives);

  // Same id space as `like`, different support. Used for the training part
  // of a split so indices stay aligned with held-out triples.
  static Dataset withPositives(const Dataset& like, std::vector<Triple> positives);

  std::size_t numUsers() const noexcept { return userIds_.size(); }
  std::size_t numItems() const noexcept { return itemIds_.size(); }
  std::size_t numIntervals() const noexcept { return numIntervals_; }
  bool empty() const noexcept { return positives_.empty(); }

  // Sorted, unique.
  std::span<const Triple> positives() const noexcept { return positives_; }
  const std::vector<std::pair<Index, Index>>& userItem() const noexcept { return userItem_; }
  const std::vector<std::pair<Index, Index>>& timeItem() const noexcept { return timeItem_; }

  // Q+_p: items bought by user p, sorted.
  std::span<const Index> itemsOfUser(Index p) const;
  // Q+_r: items bought during interval r, sorted.
  std::span<const Index> itemsOfInterval(Index r) const;
  // Users who bought q, sorted.
  std::span<const Index> usersOfItem(Index q) const;
  // Intervals in which q was bought, sorted.
  std::span<const Index> intervalsOfItem(Index q) const;

  bool userBought(Index p, Index q) const;
  bool boughtDuring(Index r, Index q) const;

  const std::vector<std::string>& userIds() const noexcept { return userIds_; }
  const std::vector<std::string>& itemIds() const noexcept { return itemIds_; }

 private:
  struct Csr {
    std::vector<std::size_t> offsets;
    std::vector<Index> values;
    std::span<const Index> row(std::size_t i) const {
      return {values.data() + offsets[i], offsets[i + 1] - offsets[i]};
    }
  };
  static Csr buildCsr(std::size_t rows, const std::vector<std::pair<Index, Index>>& pairs);

  void build();

  std::vector<std::string> userIds_;
  std::vector<std::string> itemIds_;
  std::size_t numIntervals_ = 0;
  std::vector<Triple> positives_;
  std::vector<std::pair<Index, Index>> userItem_;
  std::vector<std::pair<Index, Index>> timeItem_;
  Csr byUser_, byInterval_, byItemUser_, byItemInterval_;
};

enum class SplitUnit { Triple };

struct SplitRatios {
  double train = 0.8;
  double validation = 0.1;
  double test = 0.1;
};

struct SplitBundle {
  Dataset train;
  std::vector<Triple> validation;
  std::vector<Triple> test;
  std::uint64_t seed = 0;
  std::size_t droppedCold = 0;  // held-out triples removed by cold filtering
};

struct DatasetStats {
  std::size_t users = 0, items = 0, intervals = 0, positives = 0, userItemPairs = 0,
              timeItemPairs = 0;
  double tensorSparsity = 0;      // 1 - |A| / (P Q R)
  double userItemSparsity = 0;    // 1 - |B| / (P Q)
  double timeItemSparsity = 0;    // 1 - |C| / (R Q)
};

// Reads `user,item,timestamp` lines and keeps those with timestamp >=
// minTimestamp. An optional fourth column (item category) is accepted; when
// `category` is non-empty only matching lines are kept.
std::vector<InteractionRecord> loadInteractions(const std::filesystem::path& path,
                                                std::int64_t minTimestamp,
                                                const std::string& category = {});

// Peels users and items with fewer than k records until a fixed point.
std::vector<InteractionRecord> kCoreFilter(std::vector<InteractionRecord> records, std::size_t k);

// Interval r = floor((t - t_min) / granularity). Users and items are indexed
// in order of first appearance.
Dataset discretizeTime(const std::vector<InteractionRecord>& records, std::int64_t granularity);

SplitBundle splitDataset(const Dataset& ds, SplitRatios ratios, std::uint64_t seed);

DatasetStats computeStats(const Dataset& ds);

// Split manifest: train.txt / validation.txt / test.txt of "p q r" lines,
// users.txt / items.txt id maps, and split.json with P, Q, R, seed and
// granularity.
void writeSplitManifest(const SplitBundle& bundle, const std::filesystem::path& dir,
                        std::int64_t granularity);
SplitBundle readSplitManifest(const std::filesystem::path& dir);

std::vector<Triple> readTriples(const std::filesystem::path& path);
void writeTriples(std::span<const Triple> triples, const std::filesystem::path& path);

}  // namespace vra
