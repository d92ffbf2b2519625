#include "vra/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string_view>
#include <unordered_map>

#include <json.hpp>

#include "vra/error.hpp"
#include "vra/rng.hpp"

namespace vra {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> splitOn(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <class T>
bool parseInt(std::string_view s, T& out) {
  s = trim(s);
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc{} && ptr == end;
}

bool containsSorted(std::span<const Index> xs, Index x) { return std::binary_search(xs.begin(), xs.end(), x); }

}  // namespace

Dataset::Dataset(std::vector<std::string> userIds, std::vector<std::string> itemIds,
                 std::size_t numIntervals, std::vector<Triple> positives)
    : userIds_(std::move(userIds)),
      itemIds_(std::move(itemIds)),
      numIntervals_(numIntervals),
      positives_(std::move(positives)) {
  build();
}

Dataset Dataset::withPositives(const Dataset& like, std::vector<Triple> positives) {
  return Dataset(like.userIds_, like.itemIds_, like.numIntervals_, std::move(positives));
}

void Dataset::build() {
  for (const auto& t : positives_) {
    if (t.user >= numUsers() || t.item >= numItems() || t.interval >= numIntervals_) {
      throw DataError("triple (" + std::to_string(t.user) + "," + std::to_string(t.item) + "," +
                      std::to_string(t.interval) + ") outside dataset bounds");
    }
  }
  std::sort(positives_.begin(), positives_.end());
  positives_.erase(std::unique(positives_.begin(), positives_.end()), positives_.end());

  userItem_.clear();
  timeItem_.clear();
  userItem_.reserve(positives_.size());
  timeItem_.reserve(positives_.size());
  for (const auto& t : positives_) {
    userItem_.emplace_back(t.user, t.item);
    timeItem_.emplace_back(t.interval, t.item);
  }
  for (auto* v : {&userItem_, &timeItem_}) {
    std::sort(v->begin(), v->end());
    v->erase(std::unique(v->begin(), v->end()), v->end());
  }

  std::vector<std::pair<Index, Index>> swapped;
  byUser_ = buildCsr(numUsers(), userItem_);
  byInterval_ = buildCsr(numIntervals_, timeItem_);
  swapped.reserve(userItem_.size());
  for (auto [p, q] : userItem_) swapped.emplace_back(q, p);
  std::sort(swapped.begin(), swapped.end());
  byItemUser_ = buildCsr(numItems(), swapped);
  swapped.clear();
  for (auto [r, q] : timeItem_) swapped.emplace_back(q, r);
  std::sort(swapped.begin(), swapped.end());
  byItemInterval_ = buildCsr(numItems(), swapped);
}

Dataset::Csr Dataset::buildCsr(std::size_t rows, const std::vector<std::pair<Index, Index>>& pairs) {
  // `pairs` is sorted by (row, value).
  Csr csr;
  csr.offsets.assign(rows + 1, 0);
  for (auto [row, _] : pairs) ++csr.offsets[row + 1];
  std::partial_sum(csr.offsets.begin(), csr.offsets.end(), csr.offsets.begin());
  csr.values.reserve(pairs.size());
  for (auto [_, value] : pairs) csr.values.push_back(value);
  return csr;
}

std::span<const Index> Dataset::itemsOfUser(Index p) const {
  if (p >= numUsers()) throw std::out_of_range("user index out of range");
  return byUser_.row(p);
}

std::span<const Index> Dataset::itemsOfInterval(Index r) const {
  if (r >= numIntervals_) throw std::out_of_range("interval index out of range");
  return byInterval_.row(r);
}

std::span<const Index> Dataset::usersOfItem(Index q) const {
  if (q >= numItems()) throw std::out_of_range("item index out of range");
  return byItemUser_.row(q);
}

std::span<const Index> Dataset::intervalsOfItem(Index q) const {
  if (q >= numItems()) throw std::out_of_range("item index out of range");
  return byItemInterval_.row(q);
}

bool Dataset::userBought(Index p, Index q) const { return containsSorted(itemsOfUser(p), q); }

bool Dataset::boughtDuring(Index r, Index q) const { return containsSorted(itemsOfInterval(r), q); }

std::vector<InteractionRecord> loadInteractions(const std::filesystem::path& path,
                                                std::int64_t minTimestamp,
                                                const std::string& category) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open interactions file " + path.string());
  std::vector<InteractionRecord> out;
  std::string line;
  std::size_t lineNo = 0;
  while (std::getline(in, line)) {
    ++lineNo;
    const auto view = trim(line);
    if (view.empty()) continue;
    const auto fields = splitOn(view, ',');
    if (fields.size() != 3 && fields.size() != 4) {
      throw ParseError(path.string(), lineNo, "expected user,item,timestamp");
    }
    InteractionRecord rec{std::string(trim(fields[0])), std::string(trim(fields[1])), 0};
    if (rec.user.empty() || rec.item.empty()) throw ParseError(path.string(), lineNo, "empty identifier");
    if (!parseInt(fields[2], rec.timestamp) || rec.timestamp < 0) {
      throw ParseError(path.string(), lineNo, "bad timestamp '" + std::string(trim(fields[2])) + "'");
    }
    if (!category.empty() && (fields.size() < 4 || trim(fields[3]) != category)) continue;
    if (rec.timestamp >= minTimestamp) out.push_back(std::move(rec));
  }
  if (in.bad()) throw IoError("read failure on " + path.string());
  return out;
}

std::vector<InteractionRecord> kCoreFilter(std::vector<InteractionRecord> records, std::size_t k) {
  if (k == 0) throw std::invalid_argument("k-core requires k >= 1");
  for (;;) {
    std::unordered_map<std::string_view, std::size_t> userCount, itemCount;
    for (const auto& r : records) {
      ++userCount[r.user];
      ++itemCount[r.item];
    }
    // Users and items are peeled in the same round; repeat until nothing
    // moves. Decide before moving anything: the count keys view the strings.
    std::vector<char> keep(records.size());
    bool removed = false;
    for (std::size_t i = 0; i < records.size(); ++i) {
      keep[i] = userCount[records[i].user] >= k && itemCount[records[i].item] >= k;
      removed |= !keep[i];
    }
    if (!removed) return records;
    std::vector<InteractionRecord> kept;
    kept.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (keep[i]) kept.push_back(std::move(records[i]));
    }
    records = std::move(kept);
  }
}

Dataset discretizeTime(const std::vector<InteractionRecord>& records, std::int64_t granularity) {
  if (granularity <= 0) throw std::invalid_argument("granularity must be positive");
  if (records.empty()) throw DataError("cannot discretize an empty interaction list");

  const auto minTs =
      std::min_element(records.begin(), records.end(), [](const auto& a, const auto& b) {
        return a.timestamp < b.timestamp;
      })->timestamp;

  std::unordered_map<std::string, Index> userIndex, itemIndex;
  std::vector<std::string> users, items;
  std::vector<Triple> triples;
  triples.reserve(records.size());
  Index maxInterval = 0;
  for (const auto& rec : records) {
    auto [uit, uNew] = userIndex.try_emplace(rec.user, static_cast<Index>(users.size()));
    if (uNew) users.push_back(rec.user);
    auto [iit, iNew] = itemIndex.try_emplace(rec.item, static_cast<Index>(items.size()));
    if (iNew) items.push_back(rec.item);
    const auto r = static_cast<Index>((rec.timestamp - minTs) / granularity);
    maxInterval = std::max(maxInterval, r);
    triples.push_back({uit->second, iit->second, r});
  }
  return Dataset(std::move(users), std::move(items), std::size_t{maxInterval} + 1, std::move(triples));
}

SplitBundle splitDataset(const Dataset& ds, SplitRatios ratios, std::uint64_t seed) {
  const double total = ratios.train + ratios.validation + ratios.test;
  if (std::abs(total - 1.0) > 1e-9 || ratios.train < 0 || ratios.validation < 0 || ratios.test < 0) {
    throw ConfigError("split ratios must be non-negative and sum to 1");
  }
  if (ds.empty()) throw DataError("cannot split an empty dataset");

  std::vector<Triple> all(ds.positives().begin(), ds.positives().end());
  Rng rng(streamSeed(seed, 0x5b11, 0));
  // Fisher-Yates with our own generator so splits match across platforms.
  for (std::size_t i = all.size(); i > 1; --i) {
    std::swap(all[i - 1], all[rng.below(i)]);
  }

  const auto n = all.size();
  const auto nTrain = static_cast<std::size_t>(std::llround(ratios.train * static_cast<double>(n)));
  const auto nValid = std::min(n - nTrain,
                               static_cast<std::size_t>(std::llround(ratios.validation * static_cast<double>(n))));

  std::vector<Triple> train(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(nTrain));
  std::vector<Triple> valid(all.begin() + static_cast<std::ptrdiff_t>(nTrain),
                            all.begin() + static_cast<std::ptrdiff_t>(nTrain + nValid));
  std::vector<Triple> test(all.begin() + static_cast<std::ptrdiff_t>(nTrain + nValid), all.end());

  std::vector<char> warmUser(ds.numUsers(), 0), warmItem(ds.numItems(), 0);
  for (const auto& t : train) {
    warmUser[t.user] = 1;
    warmItem[t.item] = 1;
  }
  std::size_t dropped = 0;
  auto dropCold = [&](std::vector<Triple>& part) {
    const auto before = part.size();
    std::erase_if(part, [&](const Triple& t) { return !warmUser[t.user] || !warmItem[t.item]; });
    dropped += before - part.size();
    std::sort(part.begin(), part.end());
  };
  dropCold(valid);
  dropCold(test);

  SplitBundle bundle{Dataset::withPositives(ds, std::move(train)), std::move(valid), std::move(test), seed, dropped};
  return bundle;
}

DatasetStats computeStats(const Dataset& ds) {
  DatasetStats s;
  s.users = ds.numUsers();
  s.items = ds.numItems();
  s.intervals = ds.numIntervals();
  s.positives = ds.positives().size();
  s.userItemPairs = ds.userItem().size();
  s.timeItemPairs = ds.timeItem().size();
  const auto P = static_cast<double>(s.users), Q = static_cast<double>(s.items),
             R = static_cast<double>(s.intervals);
  if (P * Q * R > 0) s.tensorSparsity = 1.0 - static_cast<double>(s.positives) / (P * Q * R);
  if (P * Q > 0) s.userItemSparsity = 1.0 - static_cast<double>(s.userItemPairs) / (P * Q);
  if (R * Q > 0) s.timeItemSparsity = 1.0 - static_cast<double>(s.timeItemPairs) / (R * Q);
  return s;
}

std::vector<Triple> readTriples(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<Triple> out;
  std::string line;
  std::size_t lineNo = 0;
  while (std::getline(in, line)) {
    ++lineNo;
    if (trim(line).empty()) continue;
    std::istringstream ss(line);
    Triple t;
    if (!(ss >> t.user >> t.item >> t.interval)) throw ParseError(path.string(), lineNo, "expected 'p q r'");
    out.push_back(t);
  }
  return out;
}

void writeTriples(std::span<const Triple> triples, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& t : triples) out << t.user << ' ' << t.item << ' ' << t.interval << '\n';
  if (!out) throw IoError("write failure on " + path.string());
}

namespace {

void writeLines(const std::vector<std::string>& lines, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& l : lines) out << l << '\n';
}

std::vector<std::string> readLines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

}  // namespace

void writeSplitManifest(const SplitBundle& bundle, const std::filesystem::path& dir,
                        std::int64_t granularity) {
  std::filesystem::create_directories(dir);
  const auto& train = bundle.train.positives();
  writeTriples(train, dir / "train.txt");
  writeTriples(bundle.validation, dir / "validation.txt");
  writeTriples(bundle.test, dir / "test.txt");
  writeLines(bundle.train.userIds(), dir / "users.txt");
  writeLines(bundle.train.itemIds(), dir / "items.txt");

  nlohmann::ordered_json sidecar;
  sidecar["P"] = bundle.train.numUsers();
  sidecar["Q"] = bundle.train.numItems();
  sidecar["R"] = bundle.train.numIntervals();
  sidecar["seed"] = bundle.seed;
  sidecar["granularity"] = granularity;
  sidecar["split_unit"] = "triple";
  sidecar["train"] = train.size();
  sidecar["validation"] = bundle.validation.size();
  sidecar["test"] = bundle.test.size();
  sidecar["dropped_cold"] = bundle.droppedCold;
  std::ofstream out(dir / "split.json");
  if (!out) throw IoError("cannot write " + (dir / "split.json").string());
  out << sidecar.dump(2) << '\n';
}

SplitBundle readSplitManifest(const std::filesystem::path& dir) {
  std::ifstream in(dir / "split.json");
  if (!in) throw IoError("cannot open " + (dir / "split.json").string());
  nlohmann::json sidecar;
  std::size_t P = 0, Q = 0, R = 0;
  try {
    in >> sidecar;
    P = sidecar.at("P").get<std::size_t>();
    Q = sidecar.at("Q").get<std::size_t>();
    R = sidecar.at("R").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed split.json: " + std::string(e.what()));
  }
  auto users = readLines(dir / "users.txt");
  auto items = readLines(dir / "items.txt");
  if (users.size() != P || items.size() != Q) throw DataError("id maps disagree with split.json sizes");

  SplitBundle bundle;
  bundle.seed = sidecar.value("seed", std::uint64_t{0});
  bundle.droppedCold = sidecar.value("dropped_cold", std::size_t{0});
  bundle.train = Dataset(std::move(users), std::move(items), R, readTriples(dir / "train.txt"));
  bundle.validation = readTriples(dir / "validation.txt");
  bundle.test = readTriples(dir / "test.txt");
  for (const auto* part : {&bundle.validation, &bundle.test}) {
    for (const auto& t : *part) {
      if (t.user >= P || t.item >= Q || t.interval >= R) throw DataError("held-out triple outside dataset bounds");
    }
  }
  return bundle;
}

}  // namespace vra
