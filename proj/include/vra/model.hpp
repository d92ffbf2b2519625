#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "vra/data.hpp"
#include "vra/features.hpp"

namespace vra {

enum class FeatureMode { Basic, Hybrid };

struct Hyperparams {
  std::size_t K1 = 200;
  std::size_t K2 = 200;
  double lambdaC = 0.01;
  double lambdaR = 1.5;
  double eta1 = 0.1;
  double eta2 = 0.01;
  std::size_t rho = 5;
  std::size_t batchSize = 256;
  double learnRate = 0.01;  // step size of the ascent loop (distinct from eta1/eta2)
  std::size_t maxIters = 200;
  std::uint64_t seed = 42;
  std::size_t threads = 1;
  // Keeps T, W, N at their initial values; used to reduce the model to a
  // pure user-item factorization.
  bool freezeTimeFactors = false;

  void validate() const;
};

// Factor matrices of the predictor, one column per entity:
//   U: K1 x P, V: K1 x Q, T: K2 x R, W: K2 x Q, M: D x P, N: D x R.
// In basic mode M and N have zero rows.
struct ModelParams {
  Eigen::MatrixXd U, V, T, W, M, N;
  FeatureMode mode = FeatureMode::Basic;

  std::size_t numUsers() const noexcept { return static_cast<std::size_t>(U.cols()); }
  std::size_t numItems() const noexcept { return static_cast<std::size_t>(V.cols()); }
  std::size_t numIntervals() const noexcept { return static_cast<std::size_t>(T.cols()); }
  std::size_t featureDim() const noexcept { return static_cast<std::size_t>(M.rows()); }

  // Entries i.i.d. uniform in [-initScale, initScale].
  static ModelParams random(std::size_t P, std::size_t Q, std::size_t R, std::size_t K1, std::size_t K2,
                            std::size_t D, FeatureMode mode, std::uint64_t seed, double initScale = 0.01);
  static ModelParams zeros(std::size_t P, std::size_t Q, std::size_t R, std::size_t K1, std::size_t K2,
                           std::size_t D, FeatureMode mode);

  bool allFinite() const;
  double squaredNorm() const;
  // Throws DataError if the shapes disagree with the dataset/features.
  void checkCompatible(const Dataset& ds, const FeatureMatrix* features) const;
};

// S1(p,q) = U_p . V_q (+ M_p . F_q in hybrid mode).
double scoreS1(const ModelParams& params, const FeatureMatrix* features, Index p, Index q);
// S2(r,q) = T_r . W_q (+ N_r . F_q in hybrid mode).
double scoreS2(const ModelParams& params, const FeatureMatrix* features, Index r, Index q);
// A(p,q,r) = S1(p,q) * S2(r,q).
double predict(const ModelParams& params, const FeatureMatrix* features, Index p, Index q, Index r);

// All-item versions; `out` has Q entries.
void scoreS1All(const ModelParams& params, const FeatureMatrix* features, Index p, std::span<double> out);
void scoreS2All(const ModelParams& params, const FeatureMatrix* features, Index r, std::span<double> out);

// Dense cell limit for the squared-error objective.
inline constexpr std::size_t kDenseCellLimit = 50'000'000;

// 1/2 |A - Ahat|^2 + lambdaC/2 (|B - Bhat|^2 + |C - Chat|^2) + lambdaR/2 |Theta|^2.
double mseObjective(const ModelParams& params, const FeatureMatrix* features, const Dataset& ds, double lambdaC,
                    double lambdaR);

// Gradient of mseObjective, same shapes as `params`.
ModelParams mseGradient(const ModelParams& params, const FeatureMatrix* features, const Dataset& ds, double lambdaC,
                        double lambdaR);

// Serialized model state shared by every model kind.
//   "VRAC" | version u32 | kind length u32 | kind bytes | featureMode u32 |
//   K1 K2 D P Q R u32 | iteration u64 | matrix count u32 |
//   per matrix: rows u32, cols u32, rows*cols f32 row-major, little-endian.
struct Checkpoint {
  std::string modelKind;
  FeatureMode mode = FeatureMode::Basic;
  std::uint32_t K1 = 0, K2 = 0, D = 0, P = 0, Q = 0, R = 0;
  std::uint64_t iteration = 0;
  std::vector<Eigen::MatrixXd> matrices;
};

void saveCheckpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint loadCheckpoint(const std::filesystem::path& path);

Checkpoint toCheckpoint(const ModelParams& params, const std::string& kind, std::uint64_t iteration);
ModelParams paramsFromCheckpoint(const Checkpoint& ckpt);

}  // namespace vra
