#include "vra/commands.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <memory>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "vra/baselines.hpp"
#include "vra/error.hpp"
#include "vra/neighbors.hpp"

namespace vra {

namespace {

void ensureDir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

void echoConfig(const ConfigMap& config, const RunConfig& rc, const std::string& command) {
  ensureDir(rc.outputDir);
  writeResolvedConfig(config, rc.outputDir / ("config." + command + ".txt"));
}

bool needsFeatureFile(ModelKind kind) {
  switch (kind) {
    case ModelKind::VraAplr:
    case ModelKind::VraPlr:
    case ModelKind::Vrco:
    case ModelKind::Vrao:
    case ModelKind::Vbpr:
    case ModelKind::MseOpt:
      return true;
    default:
      return false;
  }
}

// The feature file is read only by kinds that use it; vra-basic and the
// latent-only baselines ignore it. vrh reads it for neighbor sets if present.
std::optional<FeatureMatrix> loadFileFeatures(const RunConfig& rc, ModelKind kind, const std::vector<std::string>& itemIds) {
  if (!needsFeatureFile(kind) && kind != ModelKind::Vrh) return std::nullopt;
  if (rc.features.empty()) {
    if (needsFeatureFile(kind)) throw ConfigError("model " + toString(kind) + " needs a feature file (features = ...)");
    return std::nullopt;
  }
  FeatureMatrix fm = loadFeaturesAuto(rc.features, itemIds, rc.featureTextDimCnn);
  if (rc.normalize) fm = normalizeFeatures(fm, Normalization::UnitL2PerBlock);
  return fm;
}

std::optional<HsvHistogramTable> loadHsvFor(const RunConfig& rc, ModelKind kind, const std::vector<std::string>& itemIds) {
  if (kind != ModelKind::Vrh) return std::nullopt;
  if (rc.hsv.empty()) throw ConfigError("model vrh needs an HSV table (hsv = ...)");
  return loadHsvTable(rc.hsv, itemIds);
}

Hyperparams hyperparamsFor(const RunConfig& rc) {
  Hyperparams hp = rc.hp;
  if (rc.model == ModelKind::VraPlr) hp.eta1 = hp.eta2 = 0;
  return hp;
}

BaselineKind baselineKind(ModelKind kind) {
  switch (kind) {
    case ModelKind::Vbpr: return BaselineKind::Vbpr;
    case ModelKind::Wbpr: return BaselineKind::Wbpr;
    case ModelKind::Cplr: return BaselineKind::Cplr;
    default: return BaselineKind::Bpr;
  }
}

// A trained model ready for scoring. Heap-allocated because the scorer keeps
// pointers into the other members.
struct LoadedModel {
  ModelKind kind = ModelKind::VraAplr;
  std::optional<FeatureMatrix> fileFeatures;
  std::optional<FeatureMatrix> features;
  ModelParams tensor;
  BaselineParams baseline;
  std::unique_ptr<Scorer> scorer;
};

std::unique_ptr<LoadedModel> loadModel(const RunConfig& rc, const Dataset& train) {
  const Checkpoint ckpt = loadCheckpoint(rc.resolvedCheckpoint());
  auto m = std::make_unique<LoadedModel>();
  m->kind = parseModelKind(ckpt.modelKind);
  if (ckpt.P != train.numUsers() || ckpt.Q != train.numItems() || ckpt.R != train.numIntervals()) {
    std::ostringstream msg;
    msg << "checkpoint shape P=" << ckpt.P << " Q=" << ckpt.Q << " R=" << ckpt.R << " does not match dataset P="
        << train.numUsers() << " Q=" << train.numItems() << " R=" << train.numIntervals();
    throw DataError(msg.str());
  }
  m->fileFeatures = loadFileFeatures(rc, m->kind, train.itemIds());
  const auto hsv = loadHsvFor(rc, m->kind, train.itemIds());
  if (isBaseline(m->kind)) {
    m->baseline = baselineFromCheckpoint(ckpt);
    const FeatureMatrix* f = m->fileFeatures ? &*m->fileFeatures : nullptr;
    if (m->baseline.visual() && (f == nullptr || f->dimCnn() != static_cast<std::size_t>(m->baseline.projection.cols()))) {
      throw DataError("checkpoint expects CNN features of dimension " + std::to_string(m->baseline.projection.cols()));
    }
    m->scorer = std::make_unique<BaselineScorer>(m->baseline, f);
  } else {
    m->features = modelFeatures(m->kind, m->fileFeatures ? &*m->fileFeatures : nullptr, hsv ? &*hsv : nullptr);
    m->tensor = paramsFromCheckpoint(ckpt);
    const FeatureMatrix* f = m->features ? &*m->features : nullptr;
    m->tensor.checkCompatible(train, f);
    m->scorer = std::make_unique<TensorScorer>(m->tensor, f);
  }
  return m;
}

std::vector<std::string> readIdList(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) ids.push_back(line);
  }
  return ids;
}

// Item ids in the order of the first column of the HSV table.
std::vector<std::string> hsvIds(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    const auto tab = line.find('\t');
    if (!line.empty()) ids.push_back(line.substr(0, tab));
  }
  return ids;
}

}  // namespace

std::optional<FeatureMatrix> modelFeatures(ModelKind kind, const FeatureMatrix* fileFeatures,
                                           const HsvHistogramTable* hsv) {
  auto requireFile = [&] {
    if (fileFeatures == nullptr) throw ConfigError("model " + toString(kind) + " needs a feature file");
    return fileFeatures;
  };
  switch (kind) {
    case ModelKind::VraAplr:
    case ModelKind::VraPlr:
    case ModelKind::MseOpt:
      return *requireFile();
    case ModelKind::Vrco:
      if (requireFile()->dimCnn() == 0) throw DataError("feature file has no CNN block");
      return fileFeatures->select(FeatureBlock::Cnn);
    case ModelKind::Vrao:
      if (requireFile()->dimAes() == 0) throw DataError("feature file has no aesthetic block");
      return fileFeatures->select(FeatureBlock::Aesthetic);
    case ModelKind::Vrh:
      if (hsv == nullptr) throw ConfigError("model vrh needs an HSV table");
      return hsv->asFeatures();
    default:
      return std::nullopt;
  }
}

void writeMetricsCsv(const std::string& model, const std::vector<MetricsAtN>& metrics,
                     const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "model,n,f1,ndcg,groups,skipped\n" << std::setprecision(12);
  for (const auto& m : metrics) {
    out << model << ',' << m.n << ',' << m.f1 << ',' << m.ndcg << ',' << m.groups << ',' << m.skipped << '\n';
  }
  if (!out) throw IoError("write failure on " + path.string());
}

PrepareSummary cmdPrepare(const ConfigMap& config, std::ostream& log) {
  const RunConfig rc = config.resolve();
  if (rc.interactions.empty()) throw ConfigError("prepare needs interactions = <path>");
  echoConfig(config, rc, "prepare");

  PrepareSummary s;
  auto records = loadInteractions(rc.interactions, rc.minTimestamp, rc.category);
  s.records = records.size();
  if (rc.kCore > 1) records = kCoreFilter(std::move(records), rc.kCore);
  s.coreRecords = records.size();
  if (records.empty()) throw DataError("no records left after filtering");
  const Dataset ds = discretizeTime(records, rc.granularity);
  const SplitBundle bundle = splitDataset(ds, SplitRatios{}, rc.hp.seed);
  s.splitDir = rc.resolvedSplitDir();
  ensureDir(s.splitDir);
  writeSplitManifest(bundle, s.splitDir, rc.granularity);
  s.stats = computeStats(ds);
  s.validation = bundle.validation.size();
  s.test = bundle.test.size();
  s.droppedCold = bundle.droppedCold;

  const auto pct = [](double x) {
    std::ostringstream o;
    o << std::fixed << std::setprecision(4) << 100.0 * x << '%';
    return o.str();
  };
  log << "records            " << s.records << " (" << s.coreRecords << " after " << rc.kCore << "-core)\n"
      << "users (P)          " << s.stats.users << '\n'
      << "items (Q)          " << s.stats.items << '\n'
      << "intervals (R)      " << s.stats.intervals << '\n'
      << "positives          " << s.stats.positives << '\n'
      << "user-item sparsity " << pct(s.stats.userItemSparsity) << '\n'
      << "time-item sparsity " << pct(s.stats.timeItemSparsity) << '\n'
      << "tensor sparsity    " << pct(s.stats.tensorSparsity) << '\n'
      << "split              " << bundle.train.positives().size() << " train / " << s.validation << " validation / "
      << s.test << " test (" << s.droppedCold << " cold dropped)\n"
      << "manifest           " << s.splitDir.string() << '\n';
  return s;
}

TrainSummary cmdTrain(const ConfigMap& config, std::ostream& log) {
  const RunConfig rc = config.resolve();
  echoConfig(config, rc, "train");
  const SplitBundle bundle = readSplitManifest(rc.resolvedSplitDir());
  const Dataset& train = bundle.train;

  const auto fileFeatures = loadFileFeatures(rc, rc.model, train.itemIds());
  const FeatureMatrix* file = fileFeatures ? &*fileFeatures : nullptr;

  TrainOptions options;
  options.maxIters = rc.hp.maxIters;
  options.evalEvery = rc.evalEvery;
  options.evalSubsample = rc.evalSubsample.value_or(std::numeric_limits<std::size_t>::max());
  options.seed = rc.hp.seed;
  options.threads = rc.hp.threads;
  options.recordWallclock = rc.recordWallclock;

  const auto progress = [&](const HistoryRow& row) {
    log << "epoch " << row.epoch;
    if (!std::isnan(row.meanL)) log << " mean_L=" << row.meanL;
    if (row.ndcgAt10) log << " ndcg@10=" << *row.ndcgAt10;
    log << '\n';
  };

  TrainResult result;
  if (isBaseline(rc.model)) {
    BaselineOptions bo;
    bo.kind = baselineKind(rc.model);
    bo.K = rc.hp.K1;
    bo.visualDim = rc.visualDim;
    bo.learnRate = rc.hp.learnRate;
    bo.lambdaR = rc.hp.lambdaR;
    bo.eta1 = rc.hp.eta1;
    bo.eta2 = rc.hp.eta2;
    bo.rho = rc.hp.rho;
    bo.seed = rc.hp.seed;
    bo.initScale = rc.initScale;
    std::optional<NeighborFamily> co;
    if (bo.kind == BaselineKind::Cplr) co = graphNeighborsUser(train);
    BaselineTrainer trainer(train, file, co ? &*co : nullptr, bo);
    result = vra::train(trainer, bundle, options, progress);
  } else {
    const auto hsv = loadHsvFor(rc, rc.model, train.itemIds());
    const auto features = modelFeatures(rc.model, file, hsv ? &*hsv : nullptr);
    const FeatureMatrix* F = features ? &*features : nullptr;
    const Hyperparams hp = hyperparamsFor(rc);

    // Visual neighbor sets come from the feature file; vrh falls back to its
    // HSV vectors. vra-basic and vra-plr use graph neighbors only.
    const FeatureMatrix* nbrFeatures = nullptr;
    if (rc.model != ModelKind::VraBasic && rc.model != ModelKind::VraPlr && rc.model != ModelKind::MseOpt) {
      nbrFeatures = file != nullptr ? file : F;
    }
    NeighborOptions no;
    no.kCnn = rc.kCnn;
    no.kAes = rc.kAes;
    no.deltaR = rc.deltaR;
    no.seed = rc.hp.seed;
    no.useFeatureSets = nbrFeatures != nullptr;
    NeighborIndex nbr;
    if (rc.model != ModelKind::MseOpt) {
      const auto cachePath = rc.outputDir / "neighbors.cache";
      const auto key = neighborCacheKey(train, nbrFeatures, no);
      if (!loadNeighborCache(cachePath, key, nbr)) {
        nbr = buildNeighborIndex(train, nbrFeatures, no);
        saveNeighborCache(nbr, key, cachePath);
      }
    }

    const FeatureMode mode = F != nullptr ? FeatureMode::Hybrid : FeatureMode::Basic;
    ModelParams init = ModelParams::random(train.numUsers(), train.numItems(), train.numIntervals(), hp.K1, hp.K2,
                                           F != nullptr ? F->dim() : 0, mode, hp.seed, rc.initScale);
    if (rc.model == ModelKind::MseOpt) {
      MseTrainer trainer(std::move(init), F, train, hp);
      result = vra::train(trainer, bundle, options, progress);
    } else {
      VraTrainer trainer(std::move(init), F, train, nbr, hp, toString(rc.model));
      result = vra::train(trainer, bundle, options, progress);
    }
  }

  TrainSummary s;
  s.bestEpoch = result.bestEpoch;
  s.bestNdcgAt10 = result.bestNdcgAt10;
  s.checkpoint = rc.resolvedCheckpoint();
  s.history = rc.outputDir / "history.csv";
  ensureDir(s.checkpoint.has_parent_path() ? s.checkpoint.parent_path() : std::filesystem::path("."));
  saveCheckpoint(result.best, s.checkpoint);
  writeHistoryCsv(result.history, s.history);
  log << "best epoch " << s.bestEpoch << " -> " << s.checkpoint.string() << '\n';
  return s;
}

std::vector<MetricsAtN> cmdEvaluate(const ConfigMap& config, std::ostream& log) {
  const RunConfig rc = config.resolve();
  echoConfig(config, rc, "evaluate");
  const SplitBundle bundle = readSplitManifest(rc.resolvedSplitDir());
  const auto model = loadModel(rc, bundle.train);
  EvalOptions eo;
  eo.nList = rc.nList;
  eo.subsample = rc.testSubsample;
  eo.seed = rc.hp.seed;
  eo.threads = rc.hp.threads;
  const auto& heldOut = rc.evalSplit == "test" ? bundle.test : bundle.validation;
  const auto metrics = evaluateSplit(*model->scorer, bundle.train, heldOut, eo);
  const auto path = rc.outputDir / "metrics.csv";
  writeMetricsCsv(toString(model->kind), metrics, path);
  for (const auto& m : metrics) {
    log << "n=" << m.n << " f1=" << m.f1 << " ndcg=" << m.ndcg << " (" << m.groups << " groups, " << m.skipped
        << " skipped)\n";
  }
  return metrics;
}

std::filesystem::path cmdStats(const ConfigMap& config, std::ostream& log) {
  const RunConfig rc = config.resolve();
  if (rc.hsv.empty()) throw ConfigError("stats needs hsv = <path>");
  if (rc.segments.empty()) throw ConfigError("stats needs segments = <file>[,<file>...]");
  echoConfig(config, rc, "stats");
  const auto ids = hsvIds(rc.hsv);
  const HsvHistogramTable table = loadHsvTable(rc.hsv, ids);
  std::unordered_map<std::string, Index> index;
  for (Index q = 0; q < ids.size(); ++q) index.emplace(ids[q], q);
  const auto toIndices = [&](const std::filesystem::path& path) {
    std::vector<Index> out;
    for (const auto& id : readIdList(path)) {
      const auto it = index.find(id);
      if (it == index.end()) throw DataError(path.string() + ": unknown item id '" + id + "'");
      out.push_back(it->second);
    }
    return out;
  };
  std::vector<Index> baseline;
  if (rc.baselineSegment.empty()) {
    baseline.resize(ids.size());
    for (Index q = 0; q < ids.size(); ++q) baseline[q] = q;
  } else {
    baseline = toIndices(rc.baselineSegment);
  }

  const auto path = rc.outputDir / "hsv_diff.csv";
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "segment,channel,bin,diff\n" << std::setprecision(12);
  constexpr const char* kChannels[3] = {"h", "s", "v"};
  for (const auto& seg : rc.segments) {
    const auto diff = hsvSegmentDiff(table, toIndices(seg), baseline);
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t b = 0; b < diff[c].size(); ++b) {
        out << seg.stem().string() << ',' << kChannels[c] << ',' << b << ',' << diff[c][b] << '\n';
      }
    }
  }
  if (!out) throw IoError("write failure on " + path.string());
  log << "wrote " << path.string() << '\n';
  return path;
}

RankingResult cmdRecommend(const ConfigMap& config, std::ostream& out) {
  const RunConfig rc = config.resolve();
  if (!rc.user || !rc.interval) throw ConfigError("recommend needs user = <index> and interval = <index>");
  const SplitBundle bundle = readSplitManifest(rc.resolvedSplitDir());
  const Dataset& train = bundle.train;
  if (*rc.user >= train.numUsers()) {
    throw DataError("unknown user index " + std::to_string(*rc.user) + " (P = " + std::to_string(train.numUsers()) + ")");
  }
  if (*rc.interval >= train.numIntervals()) {
    throw DataError("unknown interval index " + std::to_string(*rc.interval) +
                    " (R = " + std::to_string(train.numIntervals()) + ")");
  }
  const auto model = loadModel(rc, train);
  RankingResult res = topN(*model->scorer, train, *rc.user, *rc.interval, rc.topN);
  out << "rank,item_index,item_id,score\n" << std::setprecision(12);
  for (std::size_t i = 0; i < res.rankedItems.size(); ++i) {
    const Index q = res.rankedItems[i];
    out << i + 1 << ',' << q << ',' << train.itemIds()[q] << ',' << res.scores[i] << '\n';
  }
  return res;
}

}  // namespace vra
