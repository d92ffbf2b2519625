#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "vra/data.hpp"
#include "vra/eval.hpp"
#include "vra/learning.hpp"
#include "vra/model.hpp"
#include "vra/rng.hpp"

namespace vra::testing {

inline Dataset makeDataset(std::size_t P, std::size_t Q, std::size_t R, std::vector<Triple> triples) {
  std::vector<std::string> users(P), items(Q);
  for (std::size_t p = 0; p < P; ++p) users[p] = "u" + std::to_string(p);
  for (std::size_t q = 0; q < Q; ++q) items[q] = "i" + std::to_string(q);
  return Dataset(std::move(users), std::move(items), R, std::move(triples));
}

// Each cell (p, q, r) is positive with probability `density`.
inline Dataset randomDataset(std::size_t P, std::size_t Q, std::size_t R, double density, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Triple> t;
  for (Index p = 0; p < P; ++p) {
    for (Index q = 0; q < Q; ++q) {
      for (Index r = 0; r < R; ++r) {
        if (rng.uniform() < density) t.push_back({p, q, r});
      }
    }
  }
  return makeDataset(P, Q, R, std::move(t));
}

inline FeatureMatrix randomFeatures(std::size_t dimCnn, std::size_t dimAes, std::size_t Q, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXf m(static_cast<Eigen::Index>(dimCnn + dimAes), static_cast<Eigen::Index>(Q));
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = static_cast<float>(2.0 * rng.uniform() - 1.0);
  }
  return FeatureMatrix(dimCnn, dimAes, m);
}

// Scores come from a fixed table indexed [p][r][q].
class TableScorer final : public Scorer {
 public:
  TableScorer(std::size_t Q, std::vector<std::vector<std::vector<double>>> table) : Q_(Q), table_(std::move(table)) {}
  std::size_t numItems() const override { return Q_; }
  void scoreItems(Index p, Index r, std::span<double> out) const override {
    std::copy(table_[p][r].begin(), table_[p][r].end(), out.begin());
  }

 private:
  std::size_t Q_;
  std::vector<std::vector<std::vector<double>>> table_;
};

// Three positives q1..q3 of one user at r = 0 whose co-purchase sets are
// N_q1 = {q4, q5}, N_q2 = {q4, q6}, N_q3 = {q4, q7, q8, q9, q10}; items
// q4..q20 are unbought. Item qk has index k - 1.
struct SamplingFixture {
  Dataset ds;
  NeighborIndex nbr;
};

inline SamplingFixture samplingFixture() {
  const std::size_t Q = 20;
  std::vector<std::vector<Index>> lists(Q);
  const auto link = [&](Index a, Index b) {
    lists[a].push_back(b);
    lists[b].push_back(a);
  };
  for (Index b : {3, 4}) link(0, b);
  for (Index b : {3, 5}) link(1, b);
  for (Index b : {3, 6, 7, 8, 9}) link(2, b);
  SamplingFixture f{makeDataset(1, Q, 1, {{0, 0, 0}, {0, 1, 0}, {0, 2, 0}}), {}};
  f.nbr.userLinked = NeighborFamily::fromLists(std::move(lists));
  f.nbr.timeLinked = NeighborFamily::emptyFor(Q);
  f.nbr.semantic = NeighborFamily::emptyFor(Q);
  f.nbr.aesthetic = NeighborFamily::emptyFor(Q);
  return f;
}

// One sweep draws rho = 1 neighbor for each of the three positives; returns
// the neighbor drawn for each.
inline std::array<Index, 3> samplingSweep(const SamplingFixture& f, Rng& rng) {
  std::array<Index, 3> mids{};
  for (Index q = 0; q < 3; ++q) {
    const auto pairs = sampleAPLRPairs(f.ds, f.nbr, 0, q, 0, {1, true, false}, Side::User, rng);
    for (const auto& pair : pairs) {
      if (pair.relation == Relation::PosVsNeighbor) mids[q] = *pair.qMid;
    }
  }
  return mids;
}

// Independent metric oracle: full sort of every unbought item by (score
// descending, index ascending), then textbook F1@n and NDCG@n per (p, r)
// group averaged over groups that keep at least one relevant item.
inline MetricsAtN bruteForceMetrics(const Scorer& scorer, const Dataset& train, const std::vector<Triple>& heldOut,
                                    std::size_t n) {
  std::vector<std::pair<Index, Index>> contexts;
  for (const auto& t : heldOut) contexts.emplace_back(t.user, t.interval);
  std::sort(contexts.begin(), contexts.end());
  contexts.erase(std::unique(contexts.begin(), contexts.end()), contexts.end());
  MetricsAtN out;
  out.n = n;
  double f1Sum = 0, ndcgSum = 0;
  for (const auto& [p, r] : contexts) {
    std::vector<Index> relevant;
    for (const auto& t : heldOut) {
      if (t.user == p && t.interval == r && !train.userBought(p, t.item) &&
          std::find(relevant.begin(), relevant.end(), t.item) == relevant.end()) {
        relevant.push_back(t.item);
      }
    }
    if (relevant.empty()) {
      ++out.skipped;
      continue;
    }
    std::vector<double> scores(scorer.numItems());
    scorer.scoreItems(p, r, scores);
    std::vector<Index> ranked;
    for (Index q = 0; q < scores.size(); ++q) {
      if (!train.userBought(p, q)) ranked.push_back(q);
    }
    std::sort(ranked.begin(), ranked.end(), [&](Index a, Index b) {
      return scores[a] != scores[b] ? scores[a] > scores[b] : a < b;
    });
    double hits = 0, dcg = 0, idcg = 0;
    for (std::size_t i = 0; i < n && i < ranked.size(); ++i) {
      if (std::find(relevant.begin(), relevant.end(), ranked[i]) != relevant.end()) {
        hits += 1;
        dcg += 1.0 / std::log2(i + 2.0);
      }
    }
    for (std::size_t i = 0; i < n && i < relevant.size(); ++i) idcg += 1.0 / std::log2(i + 2.0);
    const double precision = hits / n, recall = hits / relevant.size();
    f1Sum += hits > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
    ndcgSum += dcg / idcg;
    ++out.groups;
  }
  if (out.groups > 0) {
    out.f1 = f1Sum / out.groups;
    out.ndcg = ndcgSum / out.groups;
  }
  return out;
}

// Random scorer table plus train/held-out split for oracle comparisons.
struct MetricCase {
  Dataset train;
  std::vector<Triple> heldOut;
  TableScorer scorer;
  std::size_t n;
};

inline MetricCase randomMetricCase(std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t P = 1 + rng.below(4), Q = 2 + rng.below(19), R = 1 + rng.below(3);
  std::vector<Triple> train, held;
  for (Index p = 0; p < P; ++p) {
    for (Index q = 0; q < Q; ++q) {
      for (Index r = 0; r < R; ++r) {
        const double u = rng.uniform();
        if (u < 0.15) {
          train.push_back({p, q, r});
        } else if (u < 0.3) {
          held.push_back({p, q, r});
        }
      }
    }
  }
  if (held.empty()) held.push_back({0, 0, 0});
  // Coarse scores create ties on purpose.
  std::vector<std::vector<std::vector<double>>> table(P, std::vector<std::vector<double>>(R, std::vector<double>(Q)));
  for (auto& byR : table) {
    for (auto& row : byR) {
      for (auto& v : row) v = static_cast<double>(rng.below(6));
    }
  }
  const std::size_t n = 1 + rng.below(10);
  return {makeDataset(P, Q, R, std::move(train)), std::move(held), TableScorer(Q, std::move(table)), n};
}

// Per-block parameter checksum, bit-exact.
inline std::uint64_t checksum(const Eigen::MatrixXd& m) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    std::uint64_t bits;
    const double v = m.data()[i];
    std::memcpy(&bits, &v, sizeof bits);
    h = mix64(h ^ bits);
  }
  return h;
}

// Fresh scratch directory under the build tree.
inline std::filesystem::path scratchDir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("vra_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline void writeText(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

inline std::string readText(const std::filesystem::path& path) {
  std::ifstream in(path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace vra::testing
