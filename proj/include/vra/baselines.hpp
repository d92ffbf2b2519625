#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "vra/data.hpp"
#include "vra/eval.hpp"
#include "vra/features.hpp"
#include "vra/learning.hpp"
#include "vra/neighbors.hpp"

namespace vra {

// Time-free matrix-factorization baselines. Scores ignore the interval.
enum class BaselineKind { Bpr, Vbpr, Wbpr, Cplr };

std::string toString(BaselineKind kind);

struct BaselineParams {
  Eigen::MatrixXd userFactors;  // K x P
  Eigen::MatrixXd itemFactors;  // K x Q
  // VBPR only: user visual factors (E x P) and the projection (E x Dcnn)
  // applied to each item's CNN block.
  Eigen::MatrixXd visualUser;
  Eigen::MatrixXd projection;
  // WBPR only: positive count per item.
  std::vector<double> popularity;

  bool visual() const noexcept { return projection.size() > 0; }
  static BaselineParams random(std::size_t P, std::size_t Q, std::size_t K, std::size_t visualDim, std::size_t cnnDim,
                               std::uint64_t seed, double initScale = 0.01);
};

double bprScore(const BaselineParams& params, Index p, Index q);
// Latent dot product plus theta_p . (E f_q) over the CNN block of F.
double vbprScore(const BaselineParams& params, const FeatureMatrix* features, Index p, Index q);

// One stochastic ascent step on
//   weight * ln s(x_{p,qPos} - x_{p,qNeg}) - lambdaR/2 (|g_p|^2 + |g_qPos|^2 + |g_qNeg|^2).
// Returns the pair's ln s value before the step.
double bprStep(BaselineParams& params, Index p, Index qPos, Index qNeg, double learnRate, double lambdaR,
               double weight = 1.0);
// VBPR version; the projection is regularized once per epoch, not here.
double vbprStep(BaselineParams& params, const FeatureMatrix& features, Index p, Index qPos, Index qNeg,
                double learnRate, double lambdaR, double weight = 1.0);

// Negative sampling with probability proportional to (count + 1) among the
// items accepted by `inPool`.
class PopularitySampler {
 public:
  explicit PopularitySampler(std::span<const double> counts);
  Index sample(Rng& rng, const std::function<bool(Index)>& inPool) const;

 private:
  std::vector<double> cumulative_;
};

Index wbprSampleNegative(const PopularitySampler& sampler, const std::function<bool(Index)>& inPool, Rng& rng);

// Three-level pairs on the user-item matrix with N_q = N^U_q. The pool is
// Q \ Q+_p. Pairs carry r = 0.
std::vector<TrainingPair> cplrPairs(const Dataset& ds, const NeighborFamily& coNeighbors, Index p, Index q,
                                    const SamplingOptions& options, Rng& rng, SamplingCounters* counters = nullptr);

class BaselineScorer final : public Scorer {
 public:
  BaselineScorer(const BaselineParams& params, const FeatureMatrix* features) : params_(&params), features_(features) {}
  std::size_t numItems() const override { return static_cast<std::size_t>(params_->itemFactors.cols()); }
  void scoreItems(Index p, Index r, std::span<double> out) const override;

 private:
  const BaselineParams* params_;
  const FeatureMatrix* features_;
};

struct BaselineOptions {
  BaselineKind kind = BaselineKind::Bpr;
  std::size_t K = 200;
  std::size_t visualDim = 20;  // VBPR projection rank
  double learnRate = 0.01;
  double lambdaR = 1.5;
  double eta1 = 0.1;  // CPLR
  double eta2 = 0.01;
  std::size_t rho = 5;
  std::uint64_t seed = 42;
  double initScale = 0.01;
};

class BaselineTrainer final : public Trainable {
 public:
  // `features` is required for VBPR; `coNeighbors` for CPLR.
  BaselineTrainer(const Dataset& train, const FeatureMatrix* features, const NeighborFamily* coNeighbors,
                  BaselineOptions options);
  BaselineTrainer(const BaselineTrainer&) = delete;
  BaselineTrainer& operator=(const BaselineTrainer&) = delete;

  EpochStats runEpoch(std::size_t epoch) override;
  Checkpoint checkpoint(std::uint64_t iteration) const override;
  const Scorer& scorer() const override { return scorer_; }
  const BaselineParams& params() const noexcept { return params_; }

 private:
  const Dataset* train_;
  const FeatureMatrix* features_;
  const NeighborFamily* coNeighbors_;
  BaselineOptions options_;
  BaselineParams params_;
  BaselineScorer scorer_;
  PopularitySampler popularity_;
};

Checkpoint toCheckpoint(const BaselineParams& params, BaselineKind kind, std::size_t P, std::size_t Q,
                        std::size_t R, std::uint64_t iteration);
BaselineParams baselineFromCheckpoint(const Checkpoint& ckpt);

}  // namespace vra
