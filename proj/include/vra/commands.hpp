#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

#include "vra/config.hpp"
#include "vra/data.hpp"
#include "vra/eval.hpp"
#include "vra/features.hpp"
#include "vra/learning.hpp"

namespace vra {

// Each command writes the resolved config next to its outputs and reports
// progress on `log`.

struct PrepareSummary {
  DatasetStats stats;
  std::size_t records = 0;       // after timestamp/category filtering
  std::size_t coreRecords = 0;   // after k-core
  std::size_t validation = 0, test = 0, droppedCold = 0;
  std::filesystem::path splitDir;
};

struct TrainSummary {
  std::size_t bestEpoch = 0;
  double bestNdcgAt10 = -1;
  std::filesystem::path checkpoint;
  std::filesystem::path history;
};

PrepareSummary cmdPrepare(const ConfigMap& config, std::ostream& log);
TrainSummary cmdTrain(const ConfigMap& config, std::ostream& log);
// Metrics on the configured split; also written to <output_dir>/metrics.csv.
std::vector<MetricsAtN> cmdEvaluate(const ConfigMap& config, std::ostream& log);
// Writes <output_dir>/hsv_diff.csv with rows segment,channel,bin,diff.
std::filesystem::path cmdStats(const ConfigMap& config, std::ostream& log);
RankingResult cmdRecommend(const ConfigMap& config, std::ostream& out);

// Pieces shared with tests and the C API.

// Feature matrix fed to the predictor for a model kind, or nullopt for kinds
// that take no features. `fileFeatures` is the loaded feature file (may be
// null); `hsv` the loaded HSV table (may be null).
std::optional<FeatureMatrix> modelFeatures(ModelKind kind, const FeatureMatrix* fileFeatures,
                                           const HsvHistogramTable* hsv);

void writeMetricsCsv(const std::string& model, const std::vector<MetricsAtN>& metrics,
                     const std::filesystem::path& path);

}  // namespace vra
