#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "vra/data.hpp"
#include "vra/features.hpp"
#include "vra/model.hpp"

namespace vra {

// Anything that can score every item for a (user, interval) context.
class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual std::size_t numItems() const = 0;
  // Fills out[q] for every item q.
  virtual void scoreItems(Index p, Index r, std::span<double> out) const = 0;
};

// The tensor predictor S1(p,q) * S2(r,q). Holds references; the params and
// features must outlive it.
class TensorScorer final : public Scorer {
 public:
  TensorScorer(const ModelParams& params, const FeatureMatrix* features) : params_(&params), features_(features) {}
  std::size_t numItems() const override { return params_->numItems(); }
  void scoreItems(Index p, Index r, std::span<double> out) const override;

 private:
  const ModelParams* params_;
  const FeatureMatrix* features_;
};

struct RankingResult {
  Index user = 0;
  Index interval = 0;
  std::vector<Index> rankedItems;  // best first
  std::vector<double> scores;      // parallel to rankedItems
  std::vector<Index> relevant;     // sorted held-out items for this context
  bool truncated = false;          // fewer than n candidates existed
};

// Ranks every item not bought by p in training; ties go to the lower index.
RankingResult topN(const Scorer& scorer, const Dataset& train, Index p, Index r, std::size_t n);

// Ranking from precomputed scores, excluding the sorted `excluded` items.
std::vector<Index> rankTop(std::span<const double> scores, std::span<const Index> excluded, std::size_t n);

// Binary-relevance metrics over the first n ranked items. nullopt when the
// relevant set is empty (such contexts are left out of averages).
std::optional<double> f1AtN(const RankingResult& result, std::size_t n);
std::optional<double> ndcgAtN(const RankingResult& result, std::size_t n);

struct MetricsAtN {
  std::size_t n = 0;
  double f1 = 0;
  double ndcg = 0;
  std::size_t groups = 0;   // contexts averaged
  std::size_t skipped = 0;  // contexts with no reachable relevant item
};

struct EvalOptions {
  std::vector<std::size_t> nList{5, 10, 20, 50, 100};
  std::optional<std::size_t> subsample;  // number of (p, r) groups
  std::uint64_t seed = 42;
  std::size_t threads = 1;
};

// Groups held-out triples by (p, r), ranks each group once and averages the
// metrics per n. Held-out items already bought by p in training cannot be
// recommended and are not counted as relevant.
std::vector<MetricsAtN> evaluateSplit(const Scorer& scorer, const Dataset& train, std::span<const Triple> heldOut,
                                      const EvalOptions& options);

// ---------------------------------------------------------------------------
// Planted-structure data for desk-scale experiments.

struct SyntheticSpec {
  std::size_t P = 300, Q = 300, R = 20;
  std::size_t trueRank1 = 8, trueRank2 = 8;
  std::size_t featureDim = 16;   // split evenly into CNN and aesthetic blocks
  double featureSignal = 0.6;    // share of preference driven by item features
  double density = 0.01;
  std::uint64_t seed = 1;

  void validate() const;
};

struct SyntheticData {
  SplitBundle bundle;
  FeatureMatrix features;
  ModelParams truth;  // hybrid-mode planted parameters; predict() gives the planted scores
};

SyntheticData generateSynthetic(const SyntheticSpec& spec);

}  // namespace vra
