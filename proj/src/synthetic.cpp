#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "vra/error.hpp"
#include "vra/eval.hpp"
#include "vra/rng.hpp"

namespace vra {

void SyntheticSpec::validate() const {
  if (P == 0 || Q == 0 || R == 0) throw ConfigError("synthetic sizes must be at least 1");
  if (trueRank1 == 0 || trueRank2 == 0) throw ConfigError("synthetic ranks must be at least 1");
  if (featureDim < 2) throw ConfigError("synthetic feature_dim must be at least 2");
  if (!(featureSignal >= 0 && featureSignal <= 1)) throw ConfigError("feature_signal must lie in [0, 1]");
  if (!(density > 0 && density <= 1)) throw ConfigError("density must lie in (0, 1]");
}

namespace {

// Constant S1 offset carried by the first latent dimension. It spreads a
// user's positives over more items so that held-out items are often new to
// the user.
constexpr double kUserOffset = 2.0;
// Seasonality of S2: Dirichlet concentration of interval profiles and the
// gamma shape of item loadings. Small values make intervals selective.
constexpr double kIntervalConcentration = 0.3;
constexpr double kItemShape = 0.5;
constexpr double kFeatureNoise = 0.1;
// Share of each latent item vector explained by its visual traits.
constexpr double kTraitShare = 0.5;

}  // namespace

SyntheticData generateSynthetic(const SyntheticSpec& spec) {
  spec.validate();
  const auto P = static_cast<Eigen::Index>(spec.P), Q = static_cast<Eigen::Index>(spec.Q),
             R = static_cast<Eigen::Index>(spec.R);
  const auto K1 = static_cast<Eigen::Index>(spec.trueRank1), K2 = static_cast<Eigen::Index>(spec.trueRank2),
             D = static_cast<Eigen::Index>(spec.featureDim);
  const double s = spec.featureSignal;

  Rng rng(streamSeed(spec.seed, 0x5e7, 0));
  std::normal_distribution<double> normal;
  auto gaussian = [&](Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j) {
      for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
    }
    return m;
  };

  // Visual traits of each item, scaled so feature vectors have roughly unit
  // norm; the features observe them with noise.
  const double unit = 1.0 / std::sqrt(static_cast<double>(D));
  const Eigen::MatrixXd traits = unit * gaussian(D, Q);
  Eigen::MatrixXd F = kFeatureNoise * unit * gaussian(D, Q);
  if (s > 0) F += traits;

  ModelParams truth = ModelParams::zeros(spec.P, spec.Q, spec.R, spec.trueRank1, spec.trueRank2, spec.featureDim,
                                         FeatureMode::Hybrid);
  const double latentScale = std::sqrt((1.0 - s) / std::max<double>(1.0, static_cast<double>(K1 - 1)));
  truth.U = latentScale * gaussian(K1, P);
  truth.U.row(0).setOnes();
  Eigen::MatrixXd V = gaussian(K1, Q);
  if (K1 > 1) {
    // Correlate the item factors with the traits through a random projection.
    const Eigen::MatrixXd mix = gaussian(K1 - 1, D);
    V.bottomRows(K1 - 1) = std::sqrt(1 - kTraitShare) * V.bottomRows(K1 - 1) + std::sqrt(kTraitShare) * mix * traits;
  }
  V.row(0).setConstant(kUserOffset);
  truth.V = V;
  truth.M = std::sqrt(s) * gaussian(D, P);

  std::gamma_distribution<double> profile(kIntervalConcentration, 1.0), loading(kItemShape, 1.0);
  for (Eigen::Index r = 0; r < R; ++r) {
    double sum = 0;
    for (Eigen::Index k = 0; k < K2; ++k) sum += truth.T(k, r) = profile(rng);
    if (sum > 0) {
      truth.T.col(r) /= sum;
    } else {
      truth.T(0, r) = 1.0;
    }
  }
  for (Eigen::Index q = 0; q < Q; ++q) {
    for (Eigen::Index k = 0; k < K2; ++k) truth.W(k, q) = loading(rng);
  }

  // Planted S1 and S2 use the f32 features, exactly as predict() will.
  FeatureMatrix features(spec.featureDim / 2, spec.featureDim - spec.featureDim / 2, F.cast<float>());
  const Eigen::MatrixXd Fd = features.matrix().cast<double>();
  const Eigen::MatrixXd S1 = truth.U.transpose() * truth.V + truth.M.transpose() * Fd;  // P x Q
  const Eigen::MatrixXd S2 = truth.T.transpose() * truth.W;                              // R x Q

  const std::size_t cells = spec.P * spec.Q * spec.R;
  const auto target = static_cast<std::size_t>(std::llround(spec.density * static_cast<double>(cells)));
  if (target == 0) throw ConfigError("density " + std::to_string(spec.density) + " yields zero positives");

  // Cell c = (p * Q + q) * R + r; keep the `target` largest, ties to the lower cell.
  std::vector<double> values(cells);
  for (Eigen::Index p = 0; p < P; ++p) {
    for (Eigen::Index q = 0; q < Q; ++q) {
      for (Eigen::Index r = 0; r < R; ++r) values[static_cast<std::size_t>((p * Q + q) * R + r)] = S1(p, q) * S2(r, q);
    }
  }
  std::vector<std::size_t> order(cells);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto better = [&](std::size_t a, std::size_t b) { return values[a] != values[b] ? values[a] > values[b] : a < b; };
  std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(target - 1), order.end(), better);
  order.resize(target);

  std::vector<Triple> positives;
  positives.reserve(target);
  for (auto c : order) {
    const auto r = static_cast<Index>(c % spec.R);
    const auto pq = c / spec.R;
    positives.push_back({static_cast<Index>(pq / spec.Q), static_cast<Index>(pq % spec.Q), r});
  }

  std::vector<std::string> users(spec.P), items(spec.Q);
  for (std::size_t p = 0; p < spec.P; ++p) users[p] = "u" + std::to_string(p);
  for (std::size_t q = 0; q < spec.Q; ++q) items[q] = "i" + std::to_string(q);
  Dataset full(std::move(users), std::move(items), spec.R, std::move(positives));

  return {splitDataset(full, SplitRatios{}, spec.seed), std::move(features), std::move(truth)};
}

}  // namespace vra
