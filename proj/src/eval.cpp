#include "vra/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <thread>

#include "vra/error.hpp"
#include "vra/rng.hpp"

namespace vra {

void TensorScorer::scoreItems(Index p, Index r, std::span<double> out) const {
  std::vector<double> s2(out.size());
  scoreS1All(*params_, features_, p, out);
  scoreS2All(*params_, features_, r, s2);
  for (std::size_t q = 0; q < out.size(); ++q) out[q] *= s2[q];
}

std::vector<Index> rankTop(std::span<const double> scores, std::span<const Index> excluded, std::size_t n) {
  std::vector<Index> candidates;
  candidates.reserve(scores.size());
  std::size_t e = 0;
  for (Index q = 0; q < scores.size(); ++q) {
    while (e < excluded.size() && excluded[e] < q) ++e;
    if (e < excluded.size() && excluded[e] == q) continue;
    candidates.push_back(q);
  }
  const auto better = [&](Index a, Index b) {
    const double sa = scores[a], sb = scores[b];
    const bool na = std::isnan(sa), nb = std::isnan(sb);
    if (na != nb) return nb;  // NaN ranks last
    if (!na && sa != sb) return sa > sb;
    return a < b;
  };
  const std::size_t k = std::min(n, candidates.size());
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k), candidates.end(), better);
  candidates.resize(k);
  return candidates;
}

RankingResult topN(const Scorer& scorer, const Dataset& train, Index p, Index r, std::size_t n) {
  if (n == 0) throw std::invalid_argument("n must be at least 1");
  if (p >= train.numUsers() || r >= train.numIntervals()) throw std::out_of_range("context index out of range");
  std::vector<double> scores(scorer.numItems());
  scorer.scoreItems(p, r, scores);
  RankingResult res;
  res.user = p;
  res.interval = r;
  res.rankedItems = rankTop(scores, train.itemsOfUser(p), n);
  res.truncated = res.rankedItems.size() < n;
  res.scores.reserve(res.rankedItems.size());
  for (Index q : res.rankedItems) res.scores.push_back(scores[q]);
  return res;
}

namespace {

std::size_t hitsInPrefix(const RankingResult& result, std::size_t n) {
  std::size_t hits = 0;
  const std::size_t len = std::min(n, result.rankedItems.size());
  for (std::size_t i = 0; i < len; ++i) {
    if (std::binary_search(result.relevant.begin(), result.relevant.end(), result.rankedItems[i])) ++hits;
  }
  return hits;
}

}  // namespace

std::optional<double> f1AtN(const RankingResult& result, std::size_t n) {
  if (result.relevant.empty()) return std::nullopt;
  if (n == 0) throw std::invalid_argument("n must be at least 1");
  const auto hits = static_cast<double>(hitsInPrefix(result, n));
  const double precision = hits / static_cast<double>(n);
  const double recall = hits / static_cast<double>(result.relevant.size());
  if (precision + recall == 0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

std::optional<double> ndcgAtN(const RankingResult& result, std::size_t n) {
  if (result.relevant.empty()) return std::nullopt;
  if (n == 0) throw std::invalid_argument("n must be at least 1");
  double dcg = 0;
  const std::size_t len = std::min(n, result.rankedItems.size());
  for (std::size_t i = 0; i < len; ++i) {
    if (std::binary_search(result.relevant.begin(), result.relevant.end(), result.rankedItems[i])) {
      dcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
    }
  }
  double idcg = 0;
  const std::size_t ideal = std::min(n, result.relevant.size());
  for (std::size_t i = 0; i < ideal; ++i) idcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
  return dcg / idcg;
}

std::vector<MetricsAtN> evaluateSplit(const Scorer& scorer, const Dataset& train, std::span<const Triple> heldOut,
                                      const EvalOptions& options) {
  if (heldOut.empty()) throw DataError("cannot evaluate an empty split");
  if (options.nList.empty()) throw ConfigError("n-list is empty");
  for (auto n : options.nList) {
    if (n == 0) throw ConfigError("n-list entries must be at least 1");
  }

  // (p, r) -> relevant items; std::map keeps the group order independent of
  // the held-out order.
  std::map<std::pair<Index, Index>, std::vector<Index>> byContext;
  for (const auto& t : heldOut) byContext[{t.user, t.interval}].push_back(t.item);
  std::vector<std::pair<std::pair<Index, Index>, std::vector<Index>>> groups(byContext.begin(), byContext.end());

  if (options.subsample && *options.subsample < groups.size()) {
    Rng rng(streamSeed(options.seed, 0xe7a1, 0));
    std::vector<std::size_t> order(groups.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = 0; i < *options.subsample; ++i) std::swap(order[i], order[i + rng.below(order.size() - i)]);
    order.resize(*options.subsample);
    std::sort(order.begin(), order.end());
    std::vector<std::pair<std::pair<Index, Index>, std::vector<Index>>> picked;
    picked.reserve(order.size());
    for (auto i : order) picked.push_back(std::move(groups[i]));
    groups = std::move(picked);
  }

  const std::size_t maxN = *std::max_element(options.nList.begin(), options.nList.end());
  const std::size_t numN = options.nList.size();
  // Per group: f1 and ndcg for every n, NaN when skipped.
  std::vector<double> f1(groups.size() * numN), ndcg(groups.size() * numN);

  auto work = [&](std::size_t begin, std::size_t end) {
    std::vector<double> scores(scorer.numItems());
    for (std::size_t g = begin; g < end; ++g) {
      const auto [p, r] = groups[g].first;
      RankingResult res;
      res.user = p;
      res.interval = r;
      const auto bought = train.itemsOfUser(p);
      for (Index q : groups[g].second) {
        if (!std::binary_search(bought.begin(), bought.end(), q)) res.relevant.push_back(q);
      }
      std::sort(res.relevant.begin(), res.relevant.end());
      res.relevant.erase(std::unique(res.relevant.begin(), res.relevant.end()), res.relevant.end());
      if (!res.relevant.empty()) {
        scorer.scoreItems(p, r, scores);
        res.rankedItems = rankTop(scores, bought, maxN);
      }
      for (std::size_t k = 0; k < numN; ++k) {
        f1[g * numN + k] = f1AtN(res, options.nList[k]).value_or(std::nan(""));
        ndcg[g * numN + k] = ndcgAtN(res, options.nList[k]).value_or(std::nan(""));
      }
    }
  };

  const std::size_t threads = std::max<std::size_t>(1, std::min(options.threads, groups.size()));
  if (threads == 1) {
    work(0, groups.size());
  } else {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (groups.size() + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
      const std::size_t b = std::min(groups.size(), t * chunk), e = std::min(groups.size(), b + chunk);
      pool.emplace_back(work, b, e);
    }
  }

  std::vector<MetricsAtN> out;
  for (std::size_t k = 0; k < numN; ++k) {
    MetricsAtN m;
    m.n = options.nList[k];
    for (std::size_t g = 0; g < groups.size(); ++g) {
      const double f = f1[g * numN + k];
      if (std::isnan(f)) {
        ++m.skipped;
        continue;
      }
      m.f1 += f;
      m.ndcg += ndcg[g * numN + k];
      ++m.groups;
    }
    if (m.groups > 0) {
      m.f1 /= static_cast<double>(m.groups);
      m.ndcg /= static_cast<double>(m.groups);
    }
    out.push_back(m);
  }
  return out;
}

}  // namespace vra
