#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "vra/data.hpp"
#include "vra/eval.hpp"
#include "vra/features.hpp"
#include "vra/model.hpp"
#include "vra/neighbors.hpp"
#include "vra/rng.hpp"

namespace vra {

// Which half of the model a pair updates: {U, V, M} or {T, W, N}.
enum class Side { User, Time };

enum class Relation { PosVsNeg, PosVsNeighbor, NeighborVsNeg };

struct TrainingPair {
  Index p = 0;
  Index r = 0;
  Index qPos = 0;
  std::optional<Index> qMid;  // neighbor q'
  std::optional<Index> qNeg;  // unlabeled q''
  Relation relation = Relation::PosVsNeg;

  // The item ranked higher / lower by this pair.
  Index preferred() const { return relation == Relation::NeighborVsNeg ? *qMid : qPos; }
  Index other() const { return relation == Relation::PosVsNeighbor ? *qMid : *qNeg; }
};

// Q^-_pr = Q \ (Q+_p U Q+_r), as a view over the dataset.
class UnlabeledPool {
 public:
  UnlabeledPool(const Dataset& ds, Index p, Index r);

  bool contains(Index q) const;
  std::size_t size() const noexcept { return size_; }
  bool empty() const noexcept { return size_ == 0; }
  std::vector<Index> items() const;

  // Uniform draw; throws DataError on an empty pool.
  Index sample(Rng& rng) const;
  // Uniform draw from the pool minus `excluded`; nullopt when nothing is left.
  std::optional<Index> sampleExcluding(Rng& rng, const std::function<bool(Index)>& excluded) const;

 private:
  std::size_t numItems_;
  std::span<const Index> boughtByUser_;
  std::span<const Index> boughtDuring_;
  std::size_t size_ = 0;
};

enum class ParamBlock { U, V, T, W, M, N };

// Dense gradient blocks shaped like ModelParams, with per-column touch
// tracking so zeroing and merging only visit columns that were written.
class GradAccumulator {
 public:
  GradAccumulator() = default;
  explicit GradAccumulator(const ModelParams& shape);

  Eigen::MatrixXd& block(ParamBlock b) { return blocks_[static_cast<std::size_t>(b)]; }
  const Eigen::MatrixXd& block(ParamBlock b) const { return blocks_[static_cast<std::size_t>(b)]; }
  auto col(ParamBlock b, Index c) {
    touch(b, c);
    return block(b).col(c);
  }

  void touch(ParamBlock b, Index c);
  const std::vector<Index>& touched(ParamBlock b) const { return touched_[static_cast<std::size_t>(b)]; }
  bool isTouched(ParamBlock b, Index c) const;

  void zero();
  void addFrom(const GradAccumulator& other);
  bool allFinite() const;

 private:
  std::array<Eigen::MatrixXd, 6> blocks_;
  std::array<std::vector<Index>, 6> touched_;
  std::array<std::vector<char>, 6> flags_;
};

struct SideMask {
  bool user = true;
  bool time = true;
  static constexpr SideMask both() { return {true, true}; }
  static constexpr SideMask only(Side s) { return {s == Side::User, s == Side::Time}; }
};

double logSigmoid(double x);
double sigmoid(double x);

// L(p, qa, qb, r) = ln s(A_diff) + lambdaC [ln s(B_diff) + ln s(C_diff)].
// Adds weight * dL/dTheta into `acc` for the sides in `mask` and returns L.
double pairLikelihoodGrad(const ModelParams& params, const FeatureMatrix* features, Index p, Index qa, Index qb,
                          Index r, double lambdaC, GradAccumulator& acc, double weight = 1.0,
                          SideMask mask = SideMask::both());

// Likelihood only.
double pairLikelihood(const ModelParams& params, const FeatureMatrix* features, Index p, Index qa, Index qb, Index r,
                      double lambdaC);

// N_q for one side: N^U U N^C U N^A (user) or N^T U N^C U N^A (time), sorted,
// q excluded.
std::vector<Index> sideNeighbors(const NeighborIndex& nbr, Index q, Side side);

struct SamplingCounters {
  std::size_t skippedRecords = 0;      // empty unlabeled pool
  std::size_t noNeighborRecords = 0;   // N_q empty: pos-vs-neg only
  std::size_t noResidualNegatives = 0; // Q^-_pr \ N_q empty
};

struct SamplingOptions {
  std::size_t rho = 5;
  bool posVsNeighbor = true;
  bool neighborVsNeg = true;
};

// Draws, in order: rho negatives q'' ~ U(Q^-_pr) for pos-vs-neg, rho
// neighbors q' ~ U(N_q), and rho negatives ~ U(Q^-_pr \ N_q). The i-th
// neighbor forms both the i-th pos-vs-neighbor pair and the i-th
// neighbor-vs-neg pair. Returns no pairs when the pool is empty.
std::vector<TrainingPair> sampleAPLRPairs(const Dataset& ds, const NeighborIndex& nbr, Index p, Index q, Index r,
                                          const SamplingOptions& options, Side side, Rng& rng,
                                          SamplingCounters* counters = nullptr);

struct EpochStats {
  double meanL = 0;  // weighted mean of L over sampled pairs
  std::array<std::size_t, 3> pairs{};  // by Relation
  std::size_t records = 0;
  SamplingCounters counters;
};

// Observation points inside an epoch; used by tests and diagnostics.
struct EpochHooks {
  std::function<void(const TrainingPair&, Side, std::size_t batch)> onPair;
  std::function<void(Side, const ModelParams&)> beforeHalfStep;
  std::function<void(Side, const ModelParams&)> afterHalfStep;
};

// One pass of mini-batch ascent over the shuffled training positives. The
// epoch index selects the RNG streams (see rng.hpp).
EpochStats aplrEpoch(ModelParams& params, const FeatureMatrix* features, const Dataset& ds, const NeighborIndex& nbr,
                     const Hyperparams& hp, std::size_t epoch, const EpochHooks* hooks = nullptr);

// Exhaustive (un-sampled) APLR objective for one side, with N_q taken for
// that side:  sum_D [ sum_{Q^-} L + eta1 sum_{N_q} L + eta2 sum_{N_q} sum_{Q^- \ N_q} L ]
//             - lambdaR/2 |Theta|^2
// Only feasible on tiny data; used to check gradients.
double aplrObjectiveExhaustive(const ModelParams& params, const FeatureMatrix* features, const Dataset& ds,
                               const NeighborIndex& nbr, const Hyperparams& hp, Side side);
// Gradient of the above w.r.t. the side's own blocks; other blocks are zero.
ModelParams aplrGradientExhaustive(const ModelParams& params, const FeatureMatrix* features, const Dataset& ds,
                                   const NeighborIndex& nbr, const Hyperparams& hp, Side side);

// ---------------------------------------------------------------------------
// Generic training loop shared by the tensor model and the baselines.

class Trainable {
 public:
  virtual ~Trainable() = default;
  virtual EpochStats runEpoch(std::size_t epoch) = 0;
  virtual Checkpoint checkpoint(std::uint64_t iteration) const = 0;
  virtual const Scorer& scorer() const = 0;
};

struct TrainOptions {
  std::size_t maxIters = 200;
  std::size_t evalEvery = 1;
  std::size_t evalSubsample = 1000;
  bool resampleEval = false;  // draw a fresh validation subsample per evaluation
  std::uint64_t seed = 42;
  std::size_t threads = 1;
  bool recordWallclock = true;
};

struct HistoryRow {
  std::size_t epoch = 0;
  double meanL = 0;
  std::optional<double> f1At10;
  std::optional<double> ndcgAt10;
  double wallclockMs = 0;
};

struct TrainResult {
  Checkpoint best;
  std::size_t bestEpoch = 0;
  double bestNdcgAt10 = -1;
  std::vector<HistoryRow> history;
};

// Runs maxIters epochs, evaluating on a fixed validation subsample every
// evalEvery epochs and keeping the checkpoint with the best NDCG@10.
TrainResult train(Trainable& model, const SplitBundle& bundle, const TrainOptions& options,
                  const std::function<void(const HistoryRow&)>& progress = {});

void writeHistoryCsv(const std::vector<HistoryRow>& history, const std::filesystem::path& path);

// The coupled tensor model trained by APLR (or PLR when eta1 = eta2 = 0).
class VraTrainer final : public Trainable {
 public:
  VraTrainer(ModelParams init, const FeatureMatrix* features, const Dataset& train, const NeighborIndex& nbr,
             Hyperparams hp, std::string kind);
  VraTrainer(const VraTrainer&) = delete;
  VraTrainer& operator=(const VraTrainer&) = delete;

  EpochStats runEpoch(std::size_t epoch) override;
  Checkpoint checkpoint(std::uint64_t iteration) const override;
  const Scorer& scorer() const override { return scorer_; }

  const ModelParams& params() const noexcept { return params_; }
  void setHooks(const EpochHooks* hooks) { hooks_ = hooks; }

 private:
  ModelParams params_;
  const FeatureMatrix* features_;
  const Dataset* train_;
  const NeighborIndex* nbr_;
  Hyperparams hp_;
  std::string kind_;
  TensorScorer scorer_;
  const EpochHooks* hooks_ = nullptr;
};

// Full-batch descent on the squared-error objective (dense, desk scale).
// Reports -objective as meanL.
class MseTrainer final : public Trainable {
 public:
  MseTrainer(ModelParams init, const FeatureMatrix* features, const Dataset& train, Hyperparams hp);
  MseTrainer(const MseTrainer&) = delete;
  MseTrainer& operator=(const MseTrainer&) = delete;

  EpochStats runEpoch(std::size_t epoch) override;
  Checkpoint checkpoint(std::uint64_t iteration) const override;
  const Scorer& scorer() const override { return scorer_; }
  const ModelParams& params() const noexcept { return params_; }

 private:
  ModelParams params_;
  const FeatureMatrix* features_;
  const Dataset* train_;
  Hyperparams hp_;
  TensorScorer scorer_;
};

}  // namespace vra
