#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "vra/data.hpp"

namespace vra {

enum class FeatureBlock { Cnn, Aesthetic };

// Per-item visual features F, one column per item laid out as
// [CNN block; aesthetic block]. Values are stored as f32, matching the file
// format.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  FeatureMatrix(std::size_t dimCnn, std::size_t dimAes, Eigen::MatrixXf columns);

  std::size_t dimCnn() const noexcept { return dimCnn_; }
  std::size_t dimAes() const noexcept { return dimAes_; }
  std::size_t dim() const noexcept { return dimCnn_ + dimAes_; }
  std::size_t numItems() const noexcept { return static_cast<std::size_t>(data_.cols()); }
  bool empty() const noexcept { return data_.size() == 0; }

  const Eigen::MatrixXf& matrix() const noexcept { return data_; }
  auto column(Index q) const { return data_.col(q); }
  auto block(FeatureBlock b, Index q) const {
    return b == FeatureBlock::Cnn ? data_.col(q).head(dimCnn_) : data_.col(q).tail(dimAes_);
  }

  // Copy holding only one block, e.g. the CNN-only ablation.
  FeatureMatrix select(FeatureBlock b) const;

 private:
  std::size_t dimCnn_ = 0;
  std::size_t dimAes_ = 0;
  Eigen::MatrixXf data_;
};

enum class Normalization { None, UnitL2PerBlock };

// Binary format: 32-byte header
//   "VRAF" | version u32 | Q u32 | total dim u32 | dimCnn u32 | 3 x u32 zero
// then Q records of item_index u32 followed by dim x f32, little-endian.
// item_index refers to the prepared dataset's items.txt order.
//
// Text format (small fixtures): `item_id<TAB>v1,v2,...`; the text loader
// needs the item id list and the CNN dimension.
FeatureMatrix loadFeatures(const std::filesystem::path& path, std::size_t expectedItems);
FeatureMatrix loadFeaturesText(const std::filesystem::path& path, const std::vector<std::string>& itemIds,
                               std::size_t dimCnn);
// Dispatches on the magic bytes.
FeatureMatrix loadFeaturesAuto(const std::filesystem::path& path, const std::vector<std::string>& itemIds,
                               std::size_t textDimCnn);
void saveFeatures(const FeatureMatrix& fm, const std::filesystem::path& path);

FeatureMatrix normalizeFeatures(const FeatureMatrix& fm, Normalization mode);

// Per-item hue / saturation / value histograms, each unit-normalized.
class HsvHistogramTable {
 public:
  using Histograms = std::array<std::vector<double>, 3>;

  HsvHistogramTable() = default;
  HsvHistogramTable(std::size_t bins, std::vector<Histograms> perItem);

  std::size_t bins() const noexcept { return bins_; }
  std::size_t numItems() const noexcept { return perItem_.size(); }
  const Histograms& item(Index q) const { return perItem_.at(q); }

  // Concatenated H|S|V histograms as a feature matrix (all in the CNN block).
  FeatureMatrix asFeatures() const;

 private:
  std::size_t bins_ = 0;
  std::vector<Histograms> perItem_;
};

// `item_id<TAB>H<TAB>S<TAB>V` with each channel comma-separated. Items are
// mapped through `itemIds`; rows for unknown ids throw.
HsvHistogramTable loadHsvTable(const std::filesystem::path& path, const std::vector<std::string>& itemIds);

// (mean histogram over segment) - (mean histogram over baseline), per channel.
std::array<std::vector<double>, 3> hsvSegmentDiff(const HsvHistogramTable& table, std::span<const Index> segment,
                                                  std::span<const Index> baseline);

}  // namespace vra
