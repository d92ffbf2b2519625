#include "vra/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "vra/error.hpp"
#include "vra/rng.hpp"

namespace vra {

static_assert(std::endian::native == std::endian::little, "checkpoints are little-endian");

void Hyperparams::validate() const {
  if (K1 == 0 || K2 == 0) throw ConfigError("K1 and K2 must be positive");
  if (lambdaC < 0 || lambdaR < 0 || eta1 < 0 || eta2 < 0) throw ConfigError("weights must be non-negative");
  if (rho == 0) throw ConfigError("rho must be positive");
  if (batchSize == 0) throw ConfigError("batch_size must be positive");
  if (!(learnRate >= 0) || !std::isfinite(learnRate)) throw ConfigError("learn_rate must be a finite non-negative number");
  if (threads == 0) throw ConfigError("threads must be positive");
}

namespace {

Eigen::MatrixXd uniformMatrix(std::size_t rows, std::size_t cols, Rng& rng, double scale) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = (2.0 * rng.uniform() - 1.0) * scale;
  }
  return m;
}

void checkFeatures(const ModelParams& params, const FeatureMatrix* features) {
  if (params.mode != FeatureMode::Hybrid) return;
  if (features == nullptr || features->dim() != params.featureDim()) {
    throw DataError("hybrid model needs features of dimension " + std::to_string(params.featureDim()));
  }
}

void checkIndex(std::size_t i, std::size_t n, const char* what) {
  if (i >= n) throw std::out_of_range(std::string(what) + " index out of range");
}

}  // namespace

ModelParams ModelParams::random(std::size_t P, std::size_t Q, std::size_t R, std::size_t K1, std::size_t K2,
                                std::size_t D, FeatureMode mode, std::uint64_t seed, double initScale) {
  Rng rng(streamSeed(seed, 0x1417, 0));
  ModelParams m;
  m.mode = mode;
  m.U = uniformMatrix(K1, P, rng, initScale);
  m.V = uniformMatrix(K1, Q, rng, initScale);
  m.T = uniformMatrix(K2, R, rng, initScale);
  m.W = uniformMatrix(K2, Q, rng, initScale);
  const std::size_t d = mode == FeatureMode::Hybrid ? D : 0;
  m.M = uniformMatrix(d, P, rng, initScale);
  m.N = uniformMatrix(d, R, rng, initScale);
  return m;
}

ModelParams ModelParams::zeros(std::size_t P, std::size_t Q, std::size_t R, std::size_t K1, std::size_t K2,
                               std::size_t D, FeatureMode mode) {
  ModelParams m;
  m.mode = mode;
  const auto e = [](std::size_t x) { return static_cast<Eigen::Index>(x); };
  const std::size_t d = mode == FeatureMode::Hybrid ? D : 0;
  m.U = Eigen::MatrixXd::Zero(e(K1), e(P));
  m.V = Eigen::MatrixXd::Zero(e(K1), e(Q));
  m.T = Eigen::MatrixXd::Zero(e(K2), e(R));
  m.W = Eigen::MatrixXd::Zero(e(K2), e(Q));
  m.M = Eigen::MatrixXd::Zero(e(d), e(P));
  m.N = Eigen::MatrixXd::Zero(e(d), e(R));
  return m;
}

bool ModelParams::allFinite() const {
  return U.allFinite() && V.allFinite() && T.allFinite() && W.allFinite() && M.allFinite() && N.allFinite();
}

double ModelParams::squaredNorm() const {
  return U.squaredNorm() + V.squaredNorm() + T.squaredNorm() + W.squaredNorm() + M.squaredNorm() +
         N.squaredNorm();
}

void ModelParams::checkCompatible(const Dataset& ds, const FeatureMatrix* features) const {
  if (numUsers() != ds.numUsers() || numItems() != ds.numItems() || numIntervals() != ds.numIntervals() ||
      W.cols() != V.cols() || M.cols() != U.cols() || N.cols() != T.cols()) {
    throw DataError("model shape (P=" + std::to_string(numUsers()) + ", Q=" + std::to_string(numItems()) +
                    ", R=" + std::to_string(numIntervals()) + ") does not match dataset (P=" +
                    std::to_string(ds.numUsers()) + ", Q=" + std::to_string(ds.numItems()) +
                    ", R=" + std::to_string(ds.numIntervals()) + ")");
  }
  checkFeatures(*this, features);
  if (mode == FeatureMode::Hybrid && features->numItems() != numItems()) {
    throw DataError("feature matrix covers " + std::to_string(features->numItems()) + " items, model has " +
                    std::to_string(numItems()));
  }
}

double scoreS1(const ModelParams& params, const FeatureMatrix* features, Index p, Index q) {
  checkIndex(p, params.numUsers(), "user");
  checkIndex(q, params.numItems(), "item");
  double s = params.U.col(p).dot(params.V.col(q));
  if (params.mode == FeatureMode::Hybrid) {
    checkFeatures(params, features);
    s += params.M.col(p).dot(features->column(q).cast<double>());
  }
  return s;
}

double scoreS2(const ModelParams& params, const FeatureMatrix* features, Index r, Index q) {
  checkIndex(r, params.numIntervals(), "interval");
  checkIndex(q, params.numItems(), "item");
  double s = params.T.col(r).dot(params.W.col(q));
  if (params.mode == FeatureMode::Hybrid) {
    checkFeatures(params, features);
    s += params.N.col(r).dot(features->column(q).cast<double>());
  }
  return s;
}

double predict(const ModelParams& params, const FeatureMatrix* features, Index p, Index q, Index r) {
  return scoreS1(params, features, p, q) * scoreS2(params, features, r, q);
}

void scoreS1All(const ModelParams& params, const FeatureMatrix* features, Index p, std::span<double> out) {
  checkIndex(p, params.numUsers(), "user");
  Eigen::Map<Eigen::VectorXd> o(out.data(), static_cast<Eigen::Index>(out.size()));
  o.noalias() = params.V.transpose() * params.U.col(p);
  if (params.mode == FeatureMode::Hybrid) {
    checkFeatures(params, features);
    const auto& F = features->matrix();
    // Column-wise dots keep the feature matrix in f32 storage.
    for (Eigen::Index q = 0; q < F.cols(); ++q) o[q] += params.M.col(p).dot(F.col(q).cast<double>());
  }
}

void scoreS2All(const ModelParams& params, const FeatureMatrix* features, Index r, std::span<double> out) {
  checkIndex(r, params.numIntervals(), "interval");
  Eigen::Map<Eigen::VectorXd> o(out.data(), static_cast<Eigen::Index>(out.size()));
  o.noalias() = params.W.transpose() * params.T.col(r);
  if (params.mode == FeatureMode::Hybrid) {
    checkFeatures(params, features);
    const auto& F = features->matrix();
    for (Eigen::Index q = 0; q < F.cols(); ++q) o[q] += params.N.col(r).dot(F.col(q).cast<double>());
  }
}

namespace {

struct DenseScores {
  Eigen::MatrixXd S1;  // P x Q
  Eigen::MatrixXd S2;  // R x Q
};

DenseScores denseScores(const ModelParams& params, const FeatureMatrix* features, const Dataset& ds) {
  params.checkCompatible(ds, features);
  const std::size_t cells = ds.numItems() * (ds.numUsers() + ds.numIntervals());
  if (cells > kDenseCellLimit) {
    throw DataError("dataset too large for the dense squared-error objective (" + std::to_string(cells) +
                    " cells); use the pairwise (PLR/APLR) trainer instead");
  }
  DenseScores s;
  s.S1 = params.U.transpose() * params.V;
  s.S2 = params.T.transpose() * params.W;
  if (params.mode == FeatureMode::Hybrid) {
    const Eigen::MatrixXd F = features->matrix().cast<double>();
    s.S1 += params.M.transpose() * F;
    s.S2 += params.N.transpose() * F;
  }
  return s;
}

}  // namespace

// Uses sum_{p,r} Ahat^2 = sum_q (sum_p S1^2)(sum_r S2^2), so only the P x Q and
// R x Q score matrices are materialized.
double mseObjective(const ModelParams& params, const FeatureMatrix* features, const Dataset& ds, double lambdaC,
                    double lambdaR) {
  const auto s = denseScores(params, features, ds);
  const Eigen::VectorXd s1sq = s.S1.array().square().colwise().sum().transpose();
  const Eigen::VectorXd s2sq = s.S2.array().square().colwise().sum().transpose();
  double tensor = s1sq.dot(s2sq);
  for (const auto& t : ds.positives()) {
    const double a = s.S1(t.user, t.item) * s.S2(t.interval, t.item);
    tensor += 1.0 - 2.0 * a;
  }
  double b = s.S1.squaredNorm();
  for (auto [p, q] : ds.userItem()) b += 1.0 - 2.0 * s.S1(p, q);
  double c = s.S2.squaredNorm();
  for (auto [r, q] : ds.timeItem()) c += 1.0 - 2.0 * s.S2(r, q);
  return 0.5 * tensor + 0.5 * lambdaC * (b + c) + 0.5 * lambdaR * params.squaredNorm();
}

ModelParams mseGradient(const ModelParams& params, const FeatureMatrix* features, const Dataset& ds, double lambdaC,
                        double lambdaR) {
  const auto s = denseScores(params, features, ds);
  const Eigen::RowVectorXd s1sq = s.S1.array().square().colwise().sum();
  const Eigen::RowVectorXd s2sq = s.S2.array().square().colwise().sum();

  // G1 = dJ/dS1, G2 = dJ/dS2.
  Eigen::MatrixXd G1 = s.S1.array().rowwise() * s2sq.array();
  Eigen::MatrixXd G2 = s.S2.array().rowwise() * s1sq.array();
  for (const auto& t : ds.positives()) {
    G1(t.user, t.item) -= s.S2(t.interval, t.item);
    G2(t.interval, t.item) -= s.S1(t.user, t.item);
  }
  G1 += lambdaC * s.S1;
  G2 += lambdaC * s.S2;
  for (auto [p, q] : ds.userItem()) G1(p, q) -= lambdaC;
  for (auto [r, q] : ds.timeItem()) G2(r, q) -= lambdaC;

  ModelParams g;
  g.mode = params.mode;
  g.U = params.V * G1.transpose() + lambdaR * params.U;
  g.V = params.U * G1 + lambdaR * params.V;
  g.T = params.W * G2.transpose() + lambdaR * params.T;
  g.W = params.T * G2 + lambdaR * params.W;
  if (params.mode == FeatureMode::Hybrid) {
    const Eigen::MatrixXd F = features->matrix().cast<double>();
    g.M = F * G1.transpose() + lambdaR * params.M;
    g.N = F * G2.transpose() + lambdaR * params.N;
  } else {
    g.M = Eigen::MatrixXd::Zero(params.M.rows(), params.M.cols());
    g.N = Eigen::MatrixXd::Zero(params.N.rows(), params.N.cols());
  }
  return g;
}

namespace {

constexpr char kCkptMagic[4] = {'V', 'R', 'A', 'C'};
constexpr std::uint32_t kCkptVersion = 1;

template <class T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::istream& in, const std::filesystem::path& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw DataError("truncated checkpoint " + path.string());
  return v;
}

}  // namespace

void saveCheckpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(kCkptMagic, 4);
  put(out, kCkptVersion);
  put(out, static_cast<std::uint32_t>(ckpt.modelKind.size()));
  out.write(ckpt.modelKind.data(), static_cast<std::streamsize>(ckpt.modelKind.size()));
  put(out, static_cast<std::uint32_t>(ckpt.mode == FeatureMode::Hybrid ? 1 : 0));
  for (auto v : {ckpt.K1, ckpt.K2, ckpt.D, ckpt.P, ckpt.Q, ckpt.R}) put(out, v);
  put(out, ckpt.iteration);
  put(out, static_cast<std::uint32_t>(ckpt.matrices.size()));
  std::vector<float> row;
  for (const auto& m : ckpt.matrices) {
    put(out, static_cast<std::uint32_t>(m.rows()));
    put(out, static_cast<std::uint32_t>(m.cols()));
    row.resize(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) row[static_cast<std::size_t>(j)] = static_cast<float>(m(i, j));
      out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(float)));
    }
  }
  if (!out) throw IoError("write failure on " + path.string());
}

Checkpoint loadCheckpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kCkptMagic, 4) != 0) throw DataError(path.string() + ": not a checkpoint file");
  if (get<std::uint32_t>(in, path) != kCkptVersion) throw DataError(path.string() + ": unsupported checkpoint version");
  Checkpoint c;
  const auto kindLen = get<std::uint32_t>(in, path);
  if (kindLen > 256) throw DataError(path.string() + ": corrupt model kind");
  c.modelKind.resize(kindLen);
  in.read(c.modelKind.data(), kindLen);
  c.mode = get<std::uint32_t>(in, path) ? FeatureMode::Hybrid : FeatureMode::Basic;
  for (auto* v : {&c.K1, &c.K2, &c.D, &c.P, &c.Q, &c.R}) *v = get<std::uint32_t>(in, path);
  c.iteration = get<std::uint64_t>(in, path);
  const auto count = get<std::uint32_t>(in, path);
  if (count > 64) throw DataError(path.string() + ": corrupt matrix count");
  std::vector<float> row;
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto rows = get<std::uint32_t>(in, path);
    const auto cols = get<std::uint32_t>(in, path);
    Eigen::MatrixXd m(rows, cols);
    row.resize(cols);
    for (std::uint32_t i = 0; i < rows; ++i) {
      in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(cols * sizeof(float)));
      if (!in) throw DataError("truncated checkpoint " + path.string());
      for (std::uint32_t j = 0; j < cols; ++j) m(i, j) = row[j];
    }
    c.matrices.push_back(std::move(m));
  }
  return c;
}

Checkpoint toCheckpoint(const ModelParams& params, const std::string& kind, std::uint64_t iteration) {
  Checkpoint c;
  c.modelKind = kind;
  c.mode = params.mode;
  c.K1 = static_cast<std::uint32_t>(params.U.rows());
  c.K2 = static_cast<std::uint32_t>(params.T.rows());
  c.D = static_cast<std::uint32_t>(params.featureDim());
  c.P = static_cast<std::uint32_t>(params.numUsers());
  c.Q = static_cast<std::uint32_t>(params.numItems());
  c.R = static_cast<std::uint32_t>(params.numIntervals());
  c.iteration = iteration;
  c.matrices = {params.U, params.V, params.T, params.W, params.M, params.N};
  return c;
}

ModelParams paramsFromCheckpoint(const Checkpoint& c) {
  if (c.matrices.size() != 6) throw DataError("checkpoint of kind '" + c.modelKind + "' is not a tensor model");
  ModelParams m;
  m.mode = c.mode;
  m.U = c.matrices[0];
  m.V = c.matrices[1];
  m.T = c.matrices[2];
  m.W = c.matrices[3];
  m.M = c.matrices[4];
  m.N = c.matrices[5];
  const auto ok = [](const Eigen::MatrixXd& x, std::uint32_t r, std::uint32_t col) {
    return x.rows() == r && x.cols() == col;
  };
  const std::uint32_t d = c.mode == FeatureMode::Hybrid ? c.D : 0;
  if (!ok(m.U, c.K1, c.P) || !ok(m.V, c.K1, c.Q) || !ok(m.T, c.K2, c.R) || !ok(m.W, c.K2, c.Q) ||
      !ok(m.M, d, c.P) || !ok(m.N, d, c.R)) {
    throw DataError("checkpoint matrices disagree with header shape");
  }
  return m;
}

}  // namespace vra
