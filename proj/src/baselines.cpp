#include "vra/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vra/error.hpp"
#include "vra/rng.hpp"

namespace vra {

std::string toString(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::Bpr: return "bpr";
    case BaselineKind::Vbpr: return "vbpr";
    case BaselineKind::Wbpr: return "wbpr";
    case BaselineKind::Cplr: return "cplr";
  }
  return "bpr";
}

BaselineParams BaselineParams::random(std::size_t P, std::size_t Q, std::size_t K, std::size_t visualDim,
                                      std::size_t cnnDim, std::uint64_t seed, double initScale) {
  Rng rng(streamSeed(seed, 0xba5e, 0));
  auto draw = [&](std::size_t rows, std::size_t cols) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = (2.0 * rng.uniform() - 1.0) * initScale;
    }
    return m;
  };
  BaselineParams b;
  b.userFactors = draw(K, P);
  b.itemFactors = draw(K, Q);
  b.visualUser = draw(visualDim, P);
  b.projection = draw(visualDim, visualDim > 0 ? cnnDim : 0);
  return b;
}

double bprScore(const BaselineParams& params, Index p, Index q) {
  return params.userFactors.col(p).dot(params.itemFactors.col(q));
}

double vbprScore(const BaselineParams& params, const FeatureMatrix* features, Index p, Index q) {
  double s = bprScore(params, p, q);
  if (params.visual()) {
    if (features == nullptr || features->dimCnn() != static_cast<std::size_t>(params.projection.cols())) {
      throw DataError("VBPR needs CNN features of the trained dimension");
    }
    s += params.visualUser.col(p).dot(params.projection * features->block(FeatureBlock::Cnn, q).cast<double>());
  }
  return s;
}

double bprStep(BaselineParams& params, Index p, Index qPos, Index qNeg, double learnRate, double lambdaR,
               double weight) {
  auto gp = params.userFactors.col(p);
  auto ga = params.itemFactors.col(qPos);
  auto gb = params.itemFactors.col(qNeg);
  const double diff = gp.dot(ga) - gp.dot(gb);
  const double g = weight * sigmoid(-diff);
  const Eigen::VectorXd user = gp;
  gp += learnRate * (g * (ga - gb) - lambdaR * gp);
  ga += learnRate * (g * user - lambdaR * ga);
  gb += learnRate * (-g * user - lambdaR * gb);
  return logSigmoid(diff);
}

double vbprStep(BaselineParams& params, const FeatureMatrix& features, Index p, Index qPos, Index qNeg,
                double learnRate, double lambdaR, double weight) {
  const Eigen::VectorXd fDiff =
      (features.block(FeatureBlock::Cnn, qPos) - features.block(FeatureBlock::Cnn, qNeg)).cast<double>();
  const Eigen::VectorXd projected = params.projection * fDiff;
  auto gp = params.userFactors.col(p);
  auto ga = params.itemFactors.col(qPos);
  auto gb = params.itemFactors.col(qNeg);
  auto theta = params.visualUser.col(p);
  const double diff = gp.dot(ga - gb) + theta.dot(projected);
  const double g = weight * sigmoid(-diff);
  const Eigen::VectorXd user = gp;
  const Eigen::VectorXd thetaBefore = theta;
  gp += learnRate * (g * (ga - gb) - lambdaR * gp);
  ga += learnRate * (g * user - lambdaR * ga);
  gb += learnRate * (-g * user - lambdaR * gb);
  theta += learnRate * (g * projected - lambdaR * theta);
  params.projection.noalias() += (learnRate * g) * thetaBefore * fDiff.transpose();
  return logSigmoid(diff);
}

PopularitySampler::PopularitySampler(std::span<const double> counts) : cumulative_(counts.size()) {
  double total = 0;
  for (std::size_t q = 0; q < counts.size(); ++q) {
    if (counts[q] < 0) throw DataError("negative popularity count");
    total += counts[q] + 1.0;
    cumulative_[q] = total;
  }
}

Index PopularitySampler::sample(Rng& rng, const std::function<bool(Index)>& inPool) const {
  if (cumulative_.empty()) throw DataError("cannot sample from an empty item set");
  const double total = cumulative_.back();
  for (int attempt = 0; attempt < 64; ++attempt) {
    const double u = rng.uniform() * total;
    const auto q = static_cast<Index>(std::upper_bound(cumulative_.begin(), cumulative_.end(), u) - cumulative_.begin());
    if (q < cumulative_.size() && inPool(q)) return q;
  }
  // Weighted draw restricted to the pool.
  std::vector<Index> items;
  std::vector<double> cum;
  double acc = 0;
  for (Index q = 0; q < cumulative_.size(); ++q) {
    if (!inPool(q)) continue;
    acc += cumulative_[q] - (q == 0 ? 0.0 : cumulative_[q - 1]);
    items.push_back(q);
    cum.push_back(acc);
  }
  if (items.empty()) throw DataError("negative pool is empty");
  const double u = rng.uniform() * acc;
  const auto k = static_cast<std::size_t>(std::upper_bound(cum.begin(), cum.end(), u) - cum.begin());
  return items[std::min(k, items.size() - 1)];
}

Index wbprSampleNegative(const PopularitySampler& sampler, const std::function<bool(Index)>& inPool, Rng& rng) {
  return sampler.sample(rng, inPool);
}

namespace {

// Uniform draw from Q \ Q+_p minus `excluded`.
std::optional<Index> sampleUnbought(const Dataset& ds, Index p, Rng& rng, const std::function<bool(Index)>& excluded) {
  const auto bought = ds.itemsOfUser(p);
  const auto Q = ds.numItems();
  const auto ok = [&](Index q) { return !std::binary_search(bought.begin(), bought.end(), q) && !excluded(q); };
  for (int attempt = 0; attempt < 64; ++attempt) {
    const auto q = static_cast<Index>(rng.below(Q));
    if (ok(q)) return q;
  }
  std::vector<Index> candidates;
  for (Index q = 0; q < Q; ++q) {
    if (ok(q)) candidates.push_back(q);
  }
  if (candidates.empty()) return std::nullopt;
  return candidates[rng.below(candidates.size())];
}

}  // namespace

std::vector<TrainingPair> cplrPairs(const Dataset& ds, const NeighborFamily& coNeighbors, Index p, Index q,
                                    const SamplingOptions& options, Rng& rng, SamplingCounters* counters) {
  std::vector<TrainingPair> pairs;
  const auto none = [](Index) { return false; };
  for (std::size_t i = 0; i < options.rho; ++i) {
    const auto neg = sampleUnbought(ds, p, rng, none);
    if (!neg) {
      if (counters) ++counters->skippedRecords;
      return {};
    }
    pairs.push_back({p, 0, q, std::nullopt, *neg, Relation::PosVsNeg});
  }
  if (!options.posVsNeighbor && !options.neighborVsNeg) return pairs;
  const auto neighbors = coNeighbors.neighborsOf(q);
  if (neighbors.empty()) {
    if (counters) ++counters->noNeighborRecords;
    return pairs;
  }
  std::vector<Index> mids(options.rho);
  for (auto& m : mids) m = neighbors[rng.below(neighbors.size())];
  if (options.posVsNeighbor) {
    for (Index m : mids) pairs.push_back({p, 0, q, m, std::nullopt, Relation::PosVsNeighbor});
  }
  if (options.neighborVsNeg) {
    const auto inNeighbors = [&](Index x) { return std::binary_search(neighbors.begin(), neighbors.end(), x); };
    for (Index m : mids) {
      const auto neg = sampleUnbought(ds, p, rng, inNeighbors);
      if (!neg) {
        if (counters) ++counters->noResidualNegatives;
        break;
      }
      pairs.push_back({p, 0, q, m, *neg, Relation::NeighborVsNeg});
    }
  }
  return pairs;
}

void BaselineScorer::scoreItems(Index p, Index, std::span<double> out) const {
  Eigen::Map<Eigen::VectorXd> o(out.data(), static_cast<Eigen::Index>(out.size()));
  o.noalias() = params_->itemFactors.transpose() * params_->userFactors.col(p);
  if (params_->visual()) {
    if (features_ == nullptr) throw DataError("VBPR scoring needs features");
    const Eigen::VectorXd userVisual = params_->projection.transpose() * params_->visualUser.col(p);
    for (Index q = 0; q < out.size(); ++q) {
      out[q] += userVisual.dot(features_->block(FeatureBlock::Cnn, q).cast<double>());
    }
  }
}

BaselineTrainer::BaselineTrainer(const Dataset& train, const FeatureMatrix* features,
                                 const NeighborFamily* coNeighbors, BaselineOptions options)
    : train_(&train),
      features_(features),
      coNeighbors_(coNeighbors),
      options_(options),
      params_(BaselineParams::random(train.numUsers(), train.numItems(), options.K,
                                     options.kind == BaselineKind::Vbpr ? options.visualDim : 0,
                                     features ? features->dimCnn() : 0, options.seed, options.initScale)),
      scorer_(params_, features),
      popularity_([&] {
        std::vector<double> counts(train.numItems(), 0.0);
        for (auto [p, q] : train.userItem()) counts[q] += 1.0;
        return counts;
      }()) {
  if (options_.kind == BaselineKind::Vbpr && (features == nullptr || features->dimCnn() == 0)) {
    throw ConfigError("vbpr needs a feature file with a CNN block");
  }
  if (options_.kind == BaselineKind::Cplr && coNeighbors == nullptr) {
    throw ConfigError("cplr needs user-linked neighbor sets");
  }
  if (options_.kind == BaselineKind::Wbpr) {
    params_.popularity.assign(train.numItems(), 0.0);
    for (auto [p, q] : train.userItem()) params_.popularity[q] += 1.0;
  }
}

EpochStats BaselineTrainer::runEpoch(std::size_t epoch) {
  const auto& positives = train_->userItem();
  const std::size_t n = positives.size();
  EpochStats stats;
  stats.records = n;
  if (n == 0) return stats;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng shuffler = stream(options_.seed, kEpochDomain, epoch);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffler.below(i)]);

  const SamplingOptions sampling{options_.rho, options_.kind == BaselineKind::Cplr && options_.eta1 > 0,
                                 options_.kind == BaselineKind::Cplr && options_.eta2 > 0};
  double weightedL = 0, weight = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto [p, q] = positives[order[i]];
    Rng rng = stream(options_.seed, epoch, order[i]);
    std::vector<TrainingPair> pairs;
    if (options_.kind == BaselineKind::Cplr) {
      pairs = cplrPairs(*train_, *coNeighbors_, p, q, sampling, rng, &stats.counters);
    } else {
      const auto bought = train_->itemsOfUser(p);
      const auto unbought = [&](Index x) { return !std::binary_search(bought.begin(), bought.end(), x); };
      if (bought.size() == train_->numItems()) {
        ++stats.counters.skippedRecords;
        continue;
      }
      for (std::size_t k = 0; k < options_.rho; ++k) {
        const Index neg = options_.kind == BaselineKind::Wbpr ? wbprSampleNegative(popularity_, unbought, rng)
                                                              : *sampleUnbought(*train_, p, rng, [](Index) { return false; });
        pairs.push_back({p, 0, q, std::nullopt, neg, Relation::PosVsNeg});
      }
    }
    for (const auto& pair : pairs) {
      const double w = pair.relation == Relation::PosVsNeg      ? 1.0
                       : pair.relation == Relation::PosVsNeighbor ? options_.eta1
                                                                  : options_.eta2;
      const double L = options_.kind == BaselineKind::Vbpr
                           ? vbprStep(params_, *features_, p, pair.preferred(), pair.other(), options_.learnRate,
                                      options_.lambdaR, w)
                           : bprStep(params_, p, pair.preferred(), pair.other(), options_.learnRate, options_.lambdaR, w);
      weightedL += w * L;
      weight += w;
      ++stats.pairs[static_cast<std::size_t>(pair.relation)];
    }
  }
  if (params_.visual()) params_.projection *= 1.0 - options_.learnRate * options_.lambdaR;
  if (!params_.userFactors.allFinite() || !params_.itemFactors.allFinite() || !params_.projection.allFinite()) {
    throw DivergenceError(toString(options_.kind) + " diverged; lower learn_rate");
  }
  stats.meanL = weight > 0 ? weightedL / weight : 0.0;
  return stats;
}

Checkpoint toCheckpoint(const BaselineParams& params, BaselineKind kind, std::size_t P, std::size_t Q, std::size_t R,
                        std::uint64_t iteration) {
  Checkpoint c;
  c.modelKind = toString(kind);
  c.K1 = static_cast<std::uint32_t>(params.userFactors.rows());
  c.K2 = static_cast<std::uint32_t>(params.visualUser.rows());
  c.D = static_cast<std::uint32_t>(params.projection.cols());
  c.P = static_cast<std::uint32_t>(P);
  c.Q = static_cast<std::uint32_t>(Q);
  c.R = static_cast<std::uint32_t>(R);
  c.iteration = iteration;
  Eigen::MatrixXd popularity(1, static_cast<Eigen::Index>(params.popularity.size()));
  for (std::size_t q = 0; q < params.popularity.size(); ++q) popularity(0, static_cast<Eigen::Index>(q)) = params.popularity[q];
  c.matrices = {params.userFactors, params.itemFactors, params.visualUser, params.projection, popularity};
  return c;
}

BaselineParams baselineFromCheckpoint(const Checkpoint& c) {
  if (c.matrices.size() != 5) throw DataError("checkpoint of kind '" + c.modelKind + "' is not a baseline model");
  BaselineParams b;
  b.userFactors = c.matrices[0];
  b.itemFactors = c.matrices[1];
  b.visualUser = c.matrices[2];
  b.projection = c.matrices[3];
  const auto& pop = c.matrices[4];
  b.popularity.assign(pop.data(), pop.data() + pop.size());
  if (b.userFactors.cols() != c.P || b.itemFactors.cols() != c.Q || b.userFactors.rows() != b.itemFactors.rows()) {
    throw DataError("baseline checkpoint matrices disagree with header shape");
  }
  return b;
}

Checkpoint BaselineTrainer::checkpoint(std::uint64_t iteration) const {
  return toCheckpoint(params_, options_.kind, train_->numUsers(), train_->numItems(), train_->numIntervals(),
                      iteration);
}

}  // namespace vra
