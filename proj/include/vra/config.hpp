#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vra/model.hpp"

namespace vra {

enum class ModelKind { VraAplr, VraPlr, VraBasic, Vrco, Vrao, Vrh, Bpr, Vbpr, Wbpr, Cplr, MseOpt };

std::string toString(ModelKind kind);
ModelKind parseModelKind(const std::string& name);
bool isBaseline(ModelKind kind);

// Everything a command needs, resolved from defaults, an optional key=value
// file and command-line overrides (applied in that order).
struct RunConfig {
  // paths
  std::filesystem::path interactions;
  std::filesystem::path features;
  std::filesystem::path hsv;
  std::filesystem::path outputDir = "out";
  std::filesystem::path splitDir;   // defaults to <output_dir>/split
  std::filesystem::path checkpoint; // defaults to <output_dir>/model.ckpt
  std::vector<std::filesystem::path> segments;
  std::filesystem::path baselineSegment;  // empty: every item in the HSV table

  // data preparation
  std::int64_t minTimestamp = 0;
  std::string category;
  std::size_t kCore = 5;
  std::int64_t granularity = 604800;  // one week

  ModelKind model = ModelKind::VraAplr;
  Hyperparams hp;
  double initScale = 0.01;
  std::size_t visualDim = 20;  // VBPR

  // neighbor sets
  std::size_t kCnn = 0;
  std::size_t kAes = 0;
  std::size_t deltaR = 0;
  bool normalize = false;  // unit-L2 per feature block before use
  std::size_t featureTextDimCnn = 0;

  // evaluation
  std::vector<std::size_t> nList{5, 10, 20, 50, 100};
  std::size_t evalEvery = 1;
  std::optional<std::size_t> evalSubsample = 1000;  // validation groups during training
  std::optional<std::size_t> testSubsample;         // none: all test groups
  std::string evalSplit = "test";
  bool recordWallclock = true;

  // recommend
  std::optional<Index> user;
  std::optional<Index> interval;
  std::size_t topN = 10;

  std::filesystem::path resolvedSplitDir() const;
  std::filesystem::path resolvedCheckpoint() const;
};

// Ordered key -> value text, the single source for parsing and for the
// resolved-config echo.
class ConfigMap {
 public:
  ConfigMap();  // every known key with its default

  // Throws ConfigError on unknown keys.
  void set(const std::string& key, const std::string& value);
  std::optional<std::string> get(const std::string& key) const;
  // `key = value` lines; '#' starts a comment; blank lines are ignored.
  void loadFile(const std::filesystem::path& path);

  RunConfig resolve() const;
  const std::map<std::string, std::string>& entries() const noexcept { return entries_; }
  static bool isKnown(const std::string& key);

 private:
  std::map<std::string, std::string> entries_;
};

// Writes every resolved key in sorted order.
void writeResolvedConfig(const ConfigMap& config, const std::filesystem::path& path);

}  // namespace vra
