#include "vra/features.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "vra/error.hpp"

namespace vra {

static_assert(std::endian::native == std::endian::little, "feature files are little-endian");

namespace {

constexpr char kMagic[4] = {'V', 'R', 'A', 'F'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void readPod(std::istream& in, T& v, const std::filesystem::path& path) {
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw DataError("truncated feature file " + path.string());
}

template <class T>
void writePod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::vector<double> parseFloats(const std::string& field, const std::string& source, std::size_t lineNo) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= field.size()) {
    auto end = field.find(',', start);
    if (end == std::string::npos) end = field.size();
    std::string token = field.substr(start, end - start);
    token.erase(0, token.find_first_not_of(" \r"));
    token.erase(token.find_last_not_of(" \r") + 1);
    char* stop = nullptr;
    const double v = std::strtod(token.c_str(), &stop);
    if (token.empty() || stop != token.c_str() + token.size()) {
      throw ParseError(source, lineNo, "bad number '" + token + "'");
    }
    out.push_back(v);
    start = end + 1;
  }
  return out;
}

std::string listMissing(const std::vector<char>& seen, const std::vector<std::string>* ids) {
  std::string msg;
  std::size_t shown = 0, total = 0;
  for (std::size_t q = 0; q < seen.size(); ++q) {
    if (seen[q]) continue;
    ++total;
    if (shown < 20) {
      msg += (shown ? ", " : "") + (ids ? (*ids)[q] : std::to_string(q));
      ++shown;
    }
  }
  if (total > shown) msg += ", ... (" + std::to_string(total) + " total)";
  return msg;
}

}  // namespace

FeatureMatrix::FeatureMatrix(std::size_t dimCnn, std::size_t dimAes, Eigen::MatrixXf columns)
    : dimCnn_(dimCnn), dimAes_(dimAes), data_(std::move(columns)) {
  if (static_cast<std::size_t>(data_.rows()) != dimCnn_ + dimAes_ && data_.size() != 0) {
    throw DataError("feature rows do not match dimCnn + dimAes");
  }
  if (!data_.allFinite()) throw DataError("feature matrix contains non-finite values");
}

FeatureMatrix FeatureMatrix::select(FeatureBlock b) const {
  if (b == FeatureBlock::Cnn) return FeatureMatrix(dimCnn_, 0, data_.topRows(dimCnn_));
  return FeatureMatrix(0, dimAes_, data_.bottomRows(dimAes_));
}

FeatureMatrix loadFeatures(const std::filesystem::path& path, std::size_t expectedItems) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open feature file " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw DataError(path.string() + ": not a VRAF feature file");
  std::uint32_t version = 0, q = 0, dim = 0, dimCnn = 0, reserved[3];
  readPod(in, version, path);
  readPod(in, q, path);
  readPod(in, dim, path);
  readPod(in, dimCnn, path);
  for (auto& r : reserved) readPod(in, r, path);
  if (version != kVersion) throw DataError(path.string() + ": unsupported version " + std::to_string(version));
  if (dimCnn > dim) throw DataError(path.string() + ": dimCnn exceeds total dim");

  Eigen::MatrixXf data = Eigen::MatrixXf::Zero(dim, static_cast<Eigen::Index>(expectedItems));
  std::vector<char> seen(expectedItems, 0);
  std::vector<float> row(dim);
  // Single sequential pass; rows land directly in their item column.
  for (std::uint32_t i = 0; i < q; ++i) {
    std::uint32_t item = 0;
    readPod(in, item, path);
    in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(dim * sizeof(float)));
    if (!in) throw DataError("truncated feature file " + path.string());
    if (item >= expectedItems) {
      throw DataError(path.string() + ": unknown item index " + std::to_string(item));
    }
    if (seen[item]) throw DataError(path.string() + ": duplicate item index " + std::to_string(item));
    for (std::uint32_t d = 0; d < dim; ++d) {
      if (!std::isfinite(row[d])) {
        throw DataError(path.string() + ": non-finite value for item " + std::to_string(item));
      }
    }
    seen[item] = 1;
    data.col(item) = Eigen::Map<const Eigen::VectorXf>(row.data(), dim);
  }
  if (std::find(seen.begin(), seen.end(), 0) != seen.end()) {
    throw DataError(path.string() + ": missing items " + listMissing(seen, nullptr));
  }
  return FeatureMatrix(dimCnn, dim - dimCnn, std::move(data));
}

FeatureMatrix loadFeaturesText(const std::filesystem::path& path, const std::vector<std::string>& itemIds,
                               std::size_t dimCnn) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open feature file " + path.string());
  std::unordered_map<std::string, Index> index;
  for (std::size_t q = 0; q < itemIds.size(); ++q) index.emplace(itemIds[q], static_cast<Index>(q));

  std::vector<std::vector<double>> rows(itemIds.size());
  std::vector<char> seen(itemIds.size(), 0);
  std::size_t dim = 0, lineNo = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++lineNo;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError(path.string(), lineNo, "expected item_id<TAB>values");
    const std::string id = line.substr(0, tab);
    const auto it = index.find(id);
    if (it == index.end()) throw DataError(path.string() + ": unknown item identifier '" + id + "'");
    auto values = parseFloats(line.substr(tab + 1), path.string(), lineNo);
    if (dim == 0) dim = values.size();
    if (values.size() != dim) {
      throw DataError(path.string() + ": item '" + id + "' has dimension " + std::to_string(values.size()) +
                      ", expected " + std::to_string(dim));
    }
    for (double v : values) {
      if (!std::isfinite(v)) throw DataError(path.string() + ": non-finite value for item '" + id + "'");
    }
    if (seen[it->second]) throw DataError(path.string() + ": duplicate item '" + id + "'");
    seen[it->second] = 1;
    rows[it->second] = std::move(values);
  }
  if (std::find(seen.begin(), seen.end(), 0) != seen.end()) {
    throw DataError(path.string() + ": missing items " + listMissing(seen, &itemIds));
  }
  if (dimCnn > dim) throw DataError(path.string() + ": CNN block larger than row dimension");
  Eigen::MatrixXf data(dim, static_cast<Eigen::Index>(itemIds.size()));
  for (std::size_t q = 0; q < rows.size(); ++q) {
    for (std::size_t d = 0; d < dim; ++d) data(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(q)) = static_cast<float>(rows[q][d]);
  }
  return FeatureMatrix(dimCnn, dim - dimCnn, std::move(data));
}

FeatureMatrix loadFeaturesAuto(const std::filesystem::path& path, const std::vector<std::string>& itemIds,
                               std::size_t textDimCnn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open feature file " + path.string());
  char magic[4] = {};
  in.read(magic, 4);
  if (in && std::memcmp(magic, kMagic, 4) == 0) return loadFeatures(path, itemIds.size());
  return loadFeaturesText(path, itemIds, textDimCnn);
}

void saveFeatures(const FeatureMatrix& fm, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(kMagic, 4);
  writePod(out, kVersion);
  writePod(out, static_cast<std::uint32_t>(fm.numItems()));
  writePod(out, static_cast<std::uint32_t>(fm.dim()));
  writePod(out, static_cast<std::uint32_t>(fm.dimCnn()));
  const std::uint32_t zero = 0;
  for (int i = 0; i < 3; ++i) writePod(out, zero);
  const auto& m = fm.matrix();
  for (Eigen::Index q = 0; q < m.cols(); ++q) {
    writePod(out, static_cast<std::uint32_t>(q));
    out.write(reinterpret_cast<const char*>(m.col(q).data()), static_cast<std::streamsize>(m.rows() * sizeof(float)));
  }
  if (!out) throw IoError("write failure on " + path.string());
}

FeatureMatrix normalizeFeatures(const FeatureMatrix& fm, Normalization mode) {
  if (mode == Normalization::None) return fm;
  Eigen::MatrixXf data = fm.matrix();
  const auto cnn = static_cast<Eigen::Index>(fm.dimCnn());
  const auto aes = static_cast<Eigen::Index>(fm.dimAes());
  for (Eigen::Index q = 0; q < data.cols(); ++q) {
    // Norms in double so unit-norm holds to ~1e-7 relative in f32 storage.
    auto scale = [](auto&& block) {
      const double norm = block.template cast<double>().norm();
      if (norm > 0) block = (block.template cast<double>() / norm).template cast<float>();
    };
    scale(data.col(q).head(cnn));
    scale(data.col(q).tail(aes));
  }
  return FeatureMatrix(fm.dimCnn(), fm.dimAes(), std::move(data));
}

HsvHistogramTable::HsvHistogramTable(std::size_t bins, std::vector<Histograms> perItem)
    : bins_(bins), perItem_(std::move(perItem)) {
  if (bins_ < 2) throw DataError("HSV histograms need at least 2 bins");
  for (std::size_t q = 0; q < perItem_.size(); ++q) {
    for (const auto& h : perItem_[q]) {
      if (h.size() != bins_) throw DataError("HSV histogram for item " + std::to_string(q) + " has wrong bin count");
      double sum = 0;
      for (double v : h) {
        if (!(v >= 0) || !std::isfinite(v)) throw DataError("HSV histogram for item " + std::to_string(q) + " has invalid entry");
        sum += v;
      }
      if (std::abs(sum - 1.0) > 1e-9) {
        throw DataError("HSV histogram for item " + std::to_string(q) + " is not unit-normalized");
      }
    }
  }
}

FeatureMatrix HsvHistogramTable::asFeatures() const {
  Eigen::MatrixXf data(static_cast<Eigen::Index>(3 * bins_), static_cast<Eigen::Index>(perItem_.size()));
  for (std::size_t q = 0; q < perItem_.size(); ++q) {
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t b = 0; b < bins_; ++b) {
        data(static_cast<Eigen::Index>(c * bins_ + b), static_cast<Eigen::Index>(q)) = static_cast<float>(perItem_[q][c][b]);
      }
    }
  }
  return FeatureMatrix(3 * bins_, 0, std::move(data));
}

HsvHistogramTable loadHsvTable(const std::filesystem::path& path, const std::vector<std::string>& itemIds) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open HSV table " + path.string());
  std::unordered_map<std::string, Index> index;
  for (std::size_t q = 0; q < itemIds.size(); ++q) index.emplace(itemIds[q], static_cast<Index>(q));

  std::vector<HsvHistogramTable::Histograms> perItem(itemIds.size());
  std::vector<char> seen(itemIds.size(), 0);
  std::size_t bins = 0, lineNo = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++lineNo;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    for (std::string f; std::getline(ss, f, '\t');) fields.push_back(f);
    if (fields.size() != 4) throw ParseError(path.string(), lineNo, "expected item_id<TAB>H<TAB>S<TAB>V");
    const auto it = index.find(fields[0]);
    if (it == index.end()) throw DataError(path.string() + ": unknown item identifier '" + fields[0] + "'");
    HsvHistogramTable::Histograms h;
    for (int c = 0; c < 3; ++c) {
      h[c] = parseFloats(fields[c + 1], path.string(), lineNo);
      if (bins == 0) bins = h[c].size();
      if (h[c].size() != bins) throw ParseError(path.string(), lineNo, "inconsistent bin count");
      // Text round-off; rescale so each channel sums to 1.
      const double sum = std::accumulate(h[c].begin(), h[c].end(), 0.0);
      if (!(sum > 0) || !std::isfinite(sum)) throw ParseError(path.string(), lineNo, "histogram has no mass");
      for (double& v : h[c]) v /= sum;
    }
    perItem[it->second] = std::move(h);
    seen[it->second] = 1;
  }
  if (std::find(seen.begin(), seen.end(), 0) != seen.end()) {
    throw DataError(path.string() + ": missing items " + listMissing(seen, &itemIds));
  }
  return HsvHistogramTable(bins, std::move(perItem));
}

std::array<std::vector<double>, 3> hsvSegmentDiff(const HsvHistogramTable& table, std::span<const Index> segment,
                                                  std::span<const Index> baseline) {
  if (segment.empty() || baseline.empty()) throw DataError("HSV segments must be non-empty");
  auto mean = [&](std::span<const Index> items) {
    std::array<std::vector<double>, 3> acc;
    for (auto& v : acc) v.assign(table.bins(), 0.0);
    for (Index q : items) {
      if (q >= table.numItems()) throw DataError("segment item index out of range");
      const auto& h = table.item(q);
      for (int c = 0; c < 3; ++c) {
        for (std::size_t b = 0; b < table.bins(); ++b) acc[c][b] += h[c][b];
      }
    }
    for (auto& v : acc) {
      for (double& x : v) x /= static_cast<double>(items.size());
    }
    return acc;
  };
  auto diff = mean(segment);
  const auto base = mean(baseline);
  for (int c = 0; c < 3; ++c) {
    for (std::size_t b = 0; b < table.bins(); ++b) diff[c][b] -= base[c][b];
  }
  return diff;
}

}  // namespace vra
