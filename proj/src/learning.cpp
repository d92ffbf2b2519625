#include "vra/learning.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <thread>

#include "vra/error.hpp"

namespace vra {

// ---------------------------------------------------------------------------
// Unlabeled pool

UnlabeledPool::UnlabeledPool(const Dataset& ds, Index p, Index r)
    : numItems_(ds.numItems()), boughtByUser_(ds.itemsOfUser(p)), boughtDuring_(ds.itemsOfInterval(r)) {
  // |Q+_p U Q+_r| by merging the two sorted lists.
  std::size_t i = 0, j = 0, unionSize = 0;
  while (i < boughtByUser_.size() || j < boughtDuring_.size()) {
    if (j == boughtDuring_.size() || (i < boughtByUser_.size() && boughtByUser_[i] < boughtDuring_[j])) {
      ++i;
    } else if (i == boughtByUser_.size() || boughtDuring_[j] < boughtByUser_[i]) {
      ++j;
    } else {
      ++i;
      ++j;
    }
    ++unionSize;
  }
  size_ = numItems_ - unionSize;
}

bool UnlabeledPool::contains(Index q) const {
  return q < numItems_ && !std::binary_search(boughtByUser_.begin(), boughtByUser_.end(), q) &&
         !std::binary_search(boughtDuring_.begin(), boughtDuring_.end(), q);
}

std::vector<Index> UnlabeledPool::items() const {
  std::vector<Index> out;
  out.reserve(size_);
  for (Index q = 0; q < numItems_; ++q) {
    if (contains(q)) out.push_back(q);
  }
  return out;
}

namespace {

constexpr int kRejectionTries = 64;

}  // namespace

Index UnlabeledPool::sample(Rng& rng) const {
  if (empty()) throw DataError("unlabeled pool is empty");
  auto q = sampleExcluding(rng, [](Index) { return false; });
  return *q;
}

std::optional<Index> UnlabeledPool::sampleExcluding(Rng& rng, const std::function<bool(Index)>& excluded) const {
  if (empty()) return std::nullopt;
  // Rejection from U(Q) is exact and cheap while the pool is most of Q; fall
  // back to enumeration when it keeps missing.
  for (int attempt = 0; attempt < kRejectionTries; ++attempt) {
    const auto q = static_cast<Index>(rng.below(numItems_));
    if (contains(q) && !excluded(q)) return q;
  }
  std::vector<Index> candidates;
  for (Index q = 0; q < numItems_; ++q) {
    if (contains(q) && !excluded(q)) candidates.push_back(q);
  }
  if (candidates.empty()) return std::nullopt;
  return candidates[rng.below(candidates.size())];
}

// ---------------------------------------------------------------------------
// Gradient accumulator

GradAccumulator::GradAccumulator(const ModelParams& shape) {
  const Eigen::MatrixXd* src[6] = {&shape.U, &shape.V, &shape.T, &shape.W, &shape.M, &shape.N};
  for (std::size_t b = 0; b < 6; ++b) {
    blocks_[b] = Eigen::MatrixXd::Zero(src[b]->rows(), src[b]->cols());
    flags_[b].assign(static_cast<std::size_t>(src[b]->cols()), 0);
  }
}

void GradAccumulator::touch(ParamBlock b, Index c) {
  const auto i = static_cast<std::size_t>(b);
  if (!flags_[i][c]) {
    flags_[i][c] = 1;
    touched_[i].push_back(c);
  }
}

bool GradAccumulator::isTouched(ParamBlock b, Index c) const { return flags_[static_cast<std::size_t>(b)][c] != 0; }

void GradAccumulator::zero() {
  for (std::size_t b = 0; b < 6; ++b) {
    for (Index c : touched_[b]) {
      blocks_[b].col(c).setZero();
      flags_[b][c] = 0;
    }
    touched_[b].clear();
  }
}

void GradAccumulator::addFrom(const GradAccumulator& other) {
  for (std::size_t b = 0; b < 6; ++b) {
    for (Index c : other.touched_[b]) {
      touch(static_cast<ParamBlock>(b), c);
      blocks_[b].col(c) += other.blocks_[b].col(c);
    }
  }
}

bool GradAccumulator::allFinite() const {
  for (std::size_t b = 0; b < 6; ++b) {
    for (Index c : touched_[b]) {
      if (!blocks_[b].col(c).allFinite()) return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// Pair likelihood and gradient

double logSigmoid(double x) { return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

namespace {

struct PairScores {
  double s1a, s1b, s2a, s2b;
};

PairScores pairScores(const ModelParams& params, const FeatureMatrix* features, Index p, Index qa, Index qb, Index r) {
  return {scoreS1(params, features, p, qa), scoreS1(params, features, p, qb), scoreS2(params, features, r, qa),
          scoreS2(params, features, r, qb)};
}

double likelihood(const PairScores& s, double lambdaC) {
  const double a = s.s1a * s.s2a - s.s1b * s.s2b;
  return logSigmoid(a) + lambdaC * (logSigmoid(s.s1a - s.s1b) + logSigmoid(s.s2a - s.s2b));
}

}  // namespace

double pairLikelihood(const ModelParams& params, const FeatureMatrix* features, Index p, Index qa, Index qb, Index r,
                      double lambdaC) {
  return likelihood(pairScores(params, features, p, qa, qb, r), lambdaC);
}

double pairLikelihoodGrad(const ModelParams& params, const FeatureMatrix* features, Index p, Index qa, Index qb,
                          Index r, double lambdaC, GradAccumulator& acc, double weight, SideMask mask) {
  if (qa == qb) throw std::invalid_argument("pair items must differ");
  const PairScores s = pairScores(params, features, p, qa, qb, r);
  const double aDiff = s.s1a * s.s2a - s.s1b * s.s2b;
  const double bDiff = s.s1a - s.s1b;
  const double cDiff = s.s2a - s.s2b;

  // d ln s(x) / dx = s(-x).
  const double ga = weight * sigmoid(-aDiff);
  const double gb = weight * lambdaC * sigmoid(-bDiff);
  const double gc = weight * lambdaC * sigmoid(-cDiff);
  const bool hybrid = params.mode == FeatureMode::Hybrid;

  if (mask.user) {
    acc.col(ParamBlock::U, p) += (ga * s.s2a + gb) * params.V.col(qa) - (ga * s.s2b + gb) * params.V.col(qb);
    acc.col(ParamBlock::V, qa) += (ga * s.s2a + gb) * params.U.col(p);
    acc.col(ParamBlock::V, qb) -= (ga * s.s2b + gb) * params.U.col(p);
    if (hybrid) {
      acc.col(ParamBlock::M, p) += (ga * s.s2a + gb) * features->column(qa).cast<double>() -
                                   (ga * s.s2b + gb) * features->column(qb).cast<double>();
    }
  }
  if (mask.time) {
    acc.col(ParamBlock::T, r) += (ga * s.s1a + gc) * params.W.col(qa) - (ga * s.s1b + gc) * params.W.col(qb);
    acc.col(ParamBlock::W, qa) += (ga * s.s1a + gc) * params.T.col(r);
    acc.col(ParamBlock::W, qb) -= (ga * s.s1b + gc) * params.T.col(r);
    if (hybrid) {
      acc.col(ParamBlock::N, r) += (ga * s.s1a + gc) * features->column(qa).cast<double>() -
                                   (ga * s.s1b + gc) * features->column(qb).cast<double>();
    }
  }
  return logSigmoid(aDiff) + lambdaC * (logSigmoid(bDiff) + logSigmoid(cDiff));
}

// ---------------------------------------------------------------------------
// Sampling

std::vector<Index> sideNeighbors(const NeighborIndex& nbr, Index q, Side side) {
  const NeighborFamily& graph = side == Side::User ? nbr.userLinked : nbr.timeLinked;
  std::vector<Index> out;
  for (const NeighborFamily* fam : {&graph, &nbr.semantic, &nbr.aesthetic}) {
    if (fam->numItems() == 0) continue;
    const auto m = fam->members(q);
    out.insert(out.end(), m.begin(), m.end());
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  std::erase(out, q);
  return out;
}

std::vector<TrainingPair> sampleAPLRPairs(const Dataset& ds, const NeighborIndex& nbr, Index p, Index q, Index r,
                                          const SamplingOptions& options, Side side, Rng& rng,
                                          SamplingCounters* counters) {
  std::vector<TrainingPair> pairs;
  const UnlabeledPool pool(ds, p, r);
  if (pool.empty()) {
    if (counters) ++counters->skippedRecords;
    return pairs;
  }
  pairs.reserve(3 * options.rho);
  for (std::size_t i = 0; i < options.rho; ++i) {
    pairs.push_back({p, r, q, std::nullopt, pool.sample(rng), Relation::PosVsNeg});
  }
  if (!options.posVsNeighbor && !options.neighborVsNeg) return pairs;

  const auto neighbors = sideNeighbors(nbr, q, side);
  if (neighbors.empty()) {
    if (counters) ++counters->noNeighborRecords;
    return pairs;
  }
  std::vector<Index> mids(options.rho);
  for (auto& m : mids) m = neighbors[rng.below(neighbors.size())];
  if (options.posVsNeighbor) {
    for (Index m : mids) pairs.push_back({p, r, q, m, std::nullopt, Relation::PosVsNeighbor});
  }
  if (options.neighborVsNeg) {
    const auto inNeighbors = [&](Index x) { return std::binary_search(neighbors.begin(), neighbors.end(), x); };
    for (Index m : mids) {
      const auto neg = pool.sampleExcluding(rng, inNeighbors);
      if (!neg) {
        if (counters) ++counters->noResidualNegatives;
        break;
      }
      pairs.push_back({p, r, q, m, *neg, Relation::NeighborVsNeg});
    }
  }
  return pairs;
}

// ---------------------------------------------------------------------------
// Epoch

namespace {

double relationWeight(Relation rel, const Hyperparams& hp) {
  switch (rel) {
    case Relation::PosVsNeg: return 1.0;
    case Relation::PosVsNeighbor: return hp.eta1;
    case Relation::NeighborVsNeg: return hp.eta2;
  }
  return 0.0;
}

struct WorkerState {
  GradAccumulator acc;
  double weightedL = 0;
  double weight = 0;
  std::array<std::size_t, 3> pairs{};
  SamplingCounters counters;
  std::vector<std::pair<TrainingPair, Side>> observed;
};

constexpr double kDivergenceBound = 1e6;

void applyHalfStep(ModelParams& params, const GradAccumulator& acc, Side side, double learnRate, double regScale) {
  const ParamBlock blocks[3] = {side == Side::User ? ParamBlock::U : ParamBlock::T,
                                side == Side::User ? ParamBlock::V : ParamBlock::W,
                                side == Side::User ? ParamBlock::M : ParamBlock::N};
  Eigen::MatrixXd* targets[3] = {side == Side::User ? &params.U : &params.T, side == Side::User ? &params.V : &params.W,
                                 side == Side::User ? &params.M : &params.N};
  // theta += lr * (grad - lambdaR * s * theta), written as a shrink followed
  // by the sparse gradient step.
  const double shrink = 1.0 - learnRate * regScale;
  for (int i = 0; i < 3; ++i) {
    Eigen::MatrixXd& theta = *targets[i];
    if (theta.size() == 0) continue;
    if (shrink != 1.0) theta *= shrink;
    const auto& g = acc.block(blocks[i]);
    for (Index c : acc.touched(blocks[i])) {
      theta.col(c) += learnRate * g.col(c);
      const double worst = theta.col(c).cwiseAbs().maxCoeff();
      if (!std::isfinite(worst) || worst > kDivergenceBound) {
        throw DivergenceError("parameter diverged (|theta| = " + std::to_string(worst) +
                              "); lower learn_rate or raise lambda_r");
      }
    }
  }
}

}  // namespace

EpochStats aplrEpoch(ModelParams& params, const FeatureMatrix* features, const Dataset& ds, const NeighborIndex& nbr,
                     const Hyperparams& hp, std::size_t epoch, const EpochHooks* hooks) {
  hp.validate();
  params.checkCompatible(ds, features);
  const auto positives = ds.positives();
  const std::size_t n = positives.size();
  EpochStats stats;
  if (n == 0) return stats;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng shuffler = stream(hp.seed, kEpochDomain, epoch);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffler.below(i)]);

  const SamplingOptions sampling{hp.rho, hp.eta1 > 0, hp.eta2 > 0};
  const bool observe = hooks != nullptr && hooks->onPair;
  // Pair observation needs a single ordered stream.
  const std::size_t threads = observe ? 1 : std::max<std::size_t>(1, hp.threads);
  std::vector<WorkerState> workers(threads);
  for (auto& w : workers) w.acc = GradAccumulator(params);

  auto processRange = [&](WorkerState& w, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const std::size_t record = order[i];
      const Triple t = positives[record];
      Rng rng = stream(hp.seed, epoch, record);
      for (Side side : {Side::User, Side::Time}) {
        if (side == Side::Time && hp.freezeTimeFactors) continue;
        const auto pairs = sampleAPLRPairs(ds, nbr, t.user, t.item, t.interval, sampling, side, rng, &w.counters);
        for (const auto& pair : pairs) {
          const double weight = relationWeight(pair.relation, hp);
          const double L = pairLikelihoodGrad(params, features, t.user, pair.preferred(), pair.other(), t.interval,
                                              hp.lambdaC, w.acc, weight, SideMask::only(side));
          w.weightedL += weight * L;
          w.weight += weight;
          ++w.pairs[static_cast<std::size_t>(pair.relation)];
          if (observe) w.observed.emplace_back(pair, side);
        }
      }
    }
  };

  const std::size_t numBatches = (n + hp.batchSize - 1) / hp.batchSize;
  for (std::size_t b = 0; b < numBatches; ++b) {
    const std::size_t begin = b * hp.batchSize, end = std::min(n, begin + hp.batchSize);
    if (threads == 1) {
      processRange(workers[0], begin, end);
    } else {
      std::vector<std::jthread> pool;
      const std::size_t chunk = (end - begin + threads - 1) / threads;
      for (std::size_t t = 0; t < threads; ++t) {
        const std::size_t lo = std::min(end, begin + t * chunk), hi = std::min(end, lo + chunk);
        pool.emplace_back([&, t, lo, hi] { processRange(workers[t], lo, hi); });
      }
    }
    // Ordered reduction into worker 0.
    for (std::size_t t = 1; t < threads; ++t) {
      workers[0].acc.addFrom(workers[t].acc);
      workers[t].acc.zero();
    }
    if (observe) {
      for (const auto& [pair, side] : workers[0].observed) hooks->onPair(pair, side, b);
      workers[0].observed.clear();
    }
    if (!workers[0].acc.allFinite()) throw DivergenceError("non-finite gradient in batch " + std::to_string(b));

    const double regScale = hp.lambdaR * static_cast<double>(end - begin) / static_cast<double>(n);
    for (Side side : {Side::User, Side::Time}) {
      if (side == Side::Time && hp.freezeTimeFactors) continue;
      if (hooks && hooks->beforeHalfStep) hooks->beforeHalfStep(side, params);
      applyHalfStep(params, workers[0].acc, side, hp.learnRate, regScale);
      if (hooks && hooks->afterHalfStep) hooks->afterHalfStep(side, params);
    }
    workers[0].acc.zero();
  }

  double weightedL = 0, weight = 0;
  for (const auto& w : workers) {
    weightedL += w.weightedL;
    weight += w.weight;
    for (std::size_t k = 0; k < 3; ++k) stats.pairs[k] += w.pairs[k];
    stats.counters.skippedRecords += w.counters.skippedRecords;
    stats.counters.noNeighborRecords += w.counters.noNeighborRecords;
    stats.counters.noResidualNegatives += w.counters.noResidualNegatives;
  }
  stats.records = n;
  stats.meanL = weight > 0 ? weightedL / weight : 0.0;
  return stats;
}

// ---------------------------------------------------------------------------
// Exhaustive objective

namespace {

template <class Visit>
void forEachExhaustivePair(const Dataset& ds, const NeighborIndex& nbr, const Hyperparams& hp, Side side,
                           Visit&& visit) {
  for (const auto& t : ds.positives()) {
    const UnlabeledPool pool(ds, t.user, t.interval);
    const auto unlabeled = pool.items();
    const auto neighbors = sideNeighbors(nbr, t.item, side);
    for (Index neg : unlabeled) visit(t, t.item, neg, 1.0);
    for (Index mid : neighbors) visit(t, t.item, mid, hp.eta1);
    for (Index mid : neighbors) {
      for (Index neg : unlabeled) {
        if (!std::binary_search(neighbors.begin(), neighbors.end(), neg)) visit(t, mid, neg, hp.eta2);
      }
    }
  }
}

}  // namespace

double aplrObjectiveExhaustive(const ModelParams& params, const FeatureMatrix* features, const Dataset& ds,
                               const NeighborIndex& nbr, const Hyperparams& hp, Side side) {
  double total = 0;
  forEachExhaustivePair(ds, nbr, hp, side, [&](const Triple& t, Index qa, Index qb, double w) {
    total += w * pairLikelihood(params, features, t.user, qa, qb, t.interval, hp.lambdaC);
  });
  const double reg = side == Side::User ? params.U.squaredNorm() + params.V.squaredNorm() + params.M.squaredNorm()
                                        : params.T.squaredNorm() + params.W.squaredNorm() + params.N.squaredNorm();
  return total - 0.5 * hp.lambdaR * reg;
}

ModelParams aplrGradientExhaustive(const ModelParams& params, const FeatureMatrix* features, const Dataset& ds,
                                   const NeighborIndex& nbr, const Hyperparams& hp, Side side) {
  GradAccumulator acc(params);
  forEachExhaustivePair(ds, nbr, hp, side, [&](const Triple& t, Index qa, Index qb, double w) {
    pairLikelihoodGrad(params, features, t.user, qa, qb, t.interval, hp.lambdaC, acc, w, SideMask::only(side));
  });
  ModelParams g = ModelParams::zeros(params.numUsers(), params.numItems(), params.numIntervals(),
                                     static_cast<std::size_t>(params.U.rows()), static_cast<std::size_t>(params.T.rows()),
                                     params.featureDim(), params.mode);
  if (side == Side::User) {
    g.U = acc.block(ParamBlock::U) - hp.lambdaR * params.U;
    g.V = acc.block(ParamBlock::V) - hp.lambdaR * params.V;
    g.M = acc.block(ParamBlock::M) - hp.lambdaR * params.M;
  } else {
    g.T = acc.block(ParamBlock::T) - hp.lambdaR * params.T;
    g.W = acc.block(ParamBlock::W) - hp.lambdaR * params.W;
    g.N = acc.block(ParamBlock::N) - hp.lambdaR * params.N;
  }
  return g;
}

// ---------------------------------------------------------------------------
// Training loop

TrainResult train(Trainable& model, const SplitBundle& bundle, const TrainOptions& options,
                  const std::function<void(const HistoryRow&)>& progress) {
  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();
  const auto elapsedMs = [&] {
    return options.recordWallclock ? std::chrono::duration<double, std::milli>(Clock::now() - start).count() : 0.0;
  };
  const bool canEvaluate = !bundle.validation.empty();
  EvalOptions eval;
  eval.nList = {10};
  eval.subsample = options.evalSubsample;
  eval.seed = options.seed;
  eval.threads = options.threads;
  const auto evaluate = [&](std::size_t epoch) {
    if (options.resampleEval) eval.seed = streamSeed(options.seed, 0xe1, epoch);
    return evaluateSplit(model.scorer(), bundle.train, bundle.validation, eval).front();
  };

  TrainResult result;
  HistoryRow first;
  first.meanL = std::nan("");
  if (canEvaluate) {
    const auto m = evaluate(0);
    first.f1At10 = m.f1;
    first.ndcgAt10 = m.ndcg;
    result.bestNdcgAt10 = m.ndcg;
  }
  first.wallclockMs = elapsedMs();
  result.best = model.checkpoint(0);
  result.history.push_back(first);
  if (progress) progress(first);

  const std::size_t every = std::max<std::size_t>(1, options.evalEvery);
  for (std::size_t epoch = 1; epoch <= options.maxIters; ++epoch) {
    const EpochStats stats = model.runEpoch(epoch);
    HistoryRow row;
    row.epoch = epoch;
    row.meanL = stats.meanL;
    if (canEvaluate && (epoch % every == 0 || epoch == options.maxIters)) {
      const auto m = evaluate(epoch);
      row.f1At10 = m.f1;
      row.ndcgAt10 = m.ndcg;
      if (m.ndcg > result.bestNdcgAt10) {
        result.bestNdcgAt10 = m.ndcg;
        result.bestEpoch = epoch;
        result.best = model.checkpoint(epoch);
      }
    } else if (!canEvaluate) {
      result.bestEpoch = epoch;
      result.best = model.checkpoint(epoch);
    }
    row.wallclockMs = elapsedMs();
    result.history.push_back(row);
    if (progress) progress(row);
  }
  return result;
}

void writeHistoryCsv(const std::vector<HistoryRow>& history, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "epoch,mean_L,f1@10,ndcg@10,wallclock_ms\n";
  out << std::setprecision(10);
  for (const auto& row : history) {
    out << row.epoch << ',';
    if (!std::isnan(row.meanL)) out << row.meanL;
    out << ',';
    if (row.f1At10) out << *row.f1At10;
    out << ',';
    if (row.ndcgAt10) out << *row.ndcgAt10;
    out << ',' << static_cast<long long>(std::llround(row.wallclockMs)) << '\n';
  }
  if (!out) throw IoError("write failure on " + path.string());
}

// ---------------------------------------------------------------------------
// Trainers

VraTrainer::VraTrainer(ModelParams init, const FeatureMatrix* features, const Dataset& train, const NeighborIndex& nbr,
                       Hyperparams hp, std::string kind)
    : params_(std::move(init)),
      features_(features),
      train_(&train),
      nbr_(&nbr),
      hp_(hp),
      kind_(std::move(kind)),
      scorer_(params_, features_) {
  hp_.validate();
  params_.checkCompatible(train, features);
}

EpochStats VraTrainer::runEpoch(std::size_t epoch) {
  return aplrEpoch(params_, features_, *train_, *nbr_, hp_, epoch, hooks_);
}

Checkpoint VraTrainer::checkpoint(std::uint64_t iteration) const { return toCheckpoint(params_, kind_, iteration); }

MseTrainer::MseTrainer(ModelParams init, const FeatureMatrix* features, const Dataset& train, Hyperparams hp)
    : params_(std::move(init)), features_(features), train_(&train), hp_(hp), scorer_(params_, features_) {
  hp_.validate();
  params_.checkCompatible(train, features);
}

EpochStats MseTrainer::runEpoch(std::size_t) {
  EpochStats stats;
  stats.records = train_->positives().size();
  stats.meanL = -mseObjective(params_, features_, *train_, hp_.lambdaC, hp_.lambdaR);
  const ModelParams g = mseGradient(params_, features_, *train_, hp_.lambdaC, hp_.lambdaR);
  params_.U -= hp_.learnRate * g.U;
  params_.V -= hp_.learnRate * g.V;
  params_.M -= hp_.learnRate * g.M;
  if (!hp_.freezeTimeFactors) {
    params_.T -= hp_.learnRate * g.T;
    params_.W -= hp_.learnRate * g.W;
    params_.N -= hp_.learnRate * g.N;
  }
  if (!params_.allFinite()) throw DivergenceError("squared-error descent diverged; lower learn_rate");
  return stats;
}

Checkpoint MseTrainer::checkpoint(std::uint64_t iteration) const { return toCheckpoint(params_, "mse-opt", iteration); }

}  // namespace vra
