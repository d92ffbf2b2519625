#include "vra/config.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "vra/error.hpp"

namespace vra {

namespace {

constexpr std::array<std::pair<ModelKind, const char*>, 11> kKinds{{
    {ModelKind::VraAplr, "vra-aplr"},
    {ModelKind::VraPlr, "vra-plr"},
    {ModelKind::VraBasic, "vra-basic"},
    {ModelKind::Vrco, "vrco"},
    {ModelKind::Vrao, "vrao"},
    {ModelKind::Vrh, "vrh"},
    {ModelKind::Bpr, "bpr"},
    {ModelKind::Vbpr, "vbpr"},
    {ModelKind::Wbpr, "wbpr"},
    {ModelKind::Cplr, "cplr"},
    {ModelKind::MseOpt, "mse-opt"},
}};

// Keys and defaults. An empty value means "unset".
const std::map<std::string, std::string>& defaults() {
  static const std::map<std::string, std::string> d{
      {"interactions", ""},
      {"features", ""},
      {"hsv", ""},
      {"output_dir", "out"},
      {"split_dir", ""},
      {"checkpoint", ""},
      {"segments", ""},
      {"baseline_segment", ""},
      {"min_timestamp", "0"},
      {"category", ""},
      {"k_core", "5"},
      {"granularity", "604800"},
      {"split_unit", "triple"},
      {"model", "vra-aplr"},
      {"K1", "200"},
      {"K2", "200"},
      {"lambda_c", "0.01"},
      {"lambda_r", "1.5"},
      {"eta1", "0.1"},
      {"eta2", "0.01"},
      {"rho", "5"},
      {"batch_size", "256"},
      {"learn_rate", "0.01"},
      {"max_iters", "200"},
      {"seed", "42"},
      {"threads", "1"},
      {"init_scale", "0.01"},
      {"visual_dim", "20"},
      {"k_cnn", "0"},
      {"k_aes", "0"},
      {"delta_r", "0"},
      {"normalize", "false"},
      {"feature_text_dim_cnn", "0"},
      {"n_list", "5,10,20,50,100"},
      {"eval_every", "1"},
      {"eval_subsample", "1000"},
      {"test_subsample", ""},
      {"eval_split", "test"},
      {"record_wallclock", "true"},
      {"user", ""},
      {"interval", ""},
      {"top_n", "10"},
  };
  return d;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parseNumber(const std::string& key, const std::string& text) {
  T value{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end) throw ConfigError("invalid value for " + key + ": '" + text + "'");
  return value;
}

std::size_t parseSize(const std::string& key, const std::string& text) {
  return parseNumber<std::size_t>(key, text);
}

double parseReal(const std::string& key, const std::string& text) {
  const double v = parseNumber<double>(key, text);
  if (!std::isfinite(v)) throw ConfigError(key + " must be finite");
  return v;
}

bool parseBool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError("invalid boolean for " + key + ": '" + text + "'");
}

std::vector<std::string> splitList(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    part = trim(part);
    if (!part.empty()) out.push_back(part);
  }
  return out;
}

}  // namespace

std::string toString(ModelKind kind) {
  for (auto [k, name] : kKinds) {
    if (k == kind) return name;
  }
  return "vra-aplr";
}

ModelKind parseModelKind(const std::string& name) {
  for (auto [k, n] : kKinds) {
    if (name == n) return k;
  }
  std::string known;
  for (auto [k, n] : kKinds) known += (known.empty() ? "" : ", ") + std::string(n);
  throw ConfigError("unknown model kind '" + name + "' (expected one of " + known + ")");
}

bool isBaseline(ModelKind kind) {
  return kind == ModelKind::Bpr || kind == ModelKind::Vbpr || kind == ModelKind::Wbpr || kind == ModelKind::Cplr;
}

std::filesystem::path RunConfig::resolvedSplitDir() const {
  return splitDir.empty() ? outputDir / "split" : splitDir;
}

std::filesystem::path RunConfig::resolvedCheckpoint() const {
  return checkpoint.empty() ? outputDir / "model.ckpt" : checkpoint;
}

ConfigMap::ConfigMap() : entries_(defaults()) {}

bool ConfigMap::isKnown(const std::string& key) { return defaults().contains(key); }

void ConfigMap::set(const std::string& key, const std::string& value) {
  if (!isKnown(key)) throw ConfigError("unknown config key '" + key + "'");
  entries_[key] = trim(value);
}

std::optional<std::string> ConfigMap::get(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void ConfigMap::loadFile(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::string line;
  std::size_t lineNo = 0;
  while (std::getline(in, line)) {
    ++lineNo;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(lineNo) + ": expected key = value");
    }
    set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
}

RunConfig ConfigMap::resolve() const {
  const auto& e = entries_;
  auto str = [&](const char* key) { return e.at(key); };
  RunConfig c;
  c.interactions = str("interactions");
  c.features = str("features");
  c.hsv = str("hsv");
  c.outputDir = str("output_dir");
  if (c.outputDir.empty()) throw ConfigError("output_dir must not be empty");
  c.splitDir = str("split_dir");
  c.checkpoint = str("checkpoint");
  for (const auto& s : splitList(str("segments"))) c.segments.emplace_back(s);
  c.baselineSegment = str("baseline_segment");

  c.minTimestamp = parseNumber<std::int64_t>("min_timestamp", str("min_timestamp"));
  c.category = str("category");
  c.kCore = parseSize("k_core", str("k_core"));
  c.granularity = parseNumber<std::int64_t>("granularity", str("granularity"));
  if (c.granularity <= 0) throw ConfigError("granularity must be positive");
  if (str("split_unit") != "triple") throw ConfigError("split_unit supports only 'triple'");

  c.model = parseModelKind(str("model"));
  c.hp.K1 = parseSize("K1", str("K1"));
  c.hp.K2 = parseSize("K2", str("K2"));
  c.hp.lambdaC = parseReal("lambda_c", str("lambda_c"));
  c.hp.lambdaR = parseReal("lambda_r", str("lambda_r"));
  c.hp.eta1 = parseReal("eta1", str("eta1"));
  c.hp.eta2 = parseReal("eta2", str("eta2"));
  c.hp.rho = parseSize("rho", str("rho"));
  c.hp.batchSize = parseSize("batch_size", str("batch_size"));
  c.hp.learnRate = parseReal("learn_rate", str("learn_rate"));
  c.hp.maxIters = parseSize("max_iters", str("max_iters"));
  c.hp.seed = parseNumber<std::uint64_t>("seed", str("seed"));
  c.hp.threads = parseSize("threads", str("threads"));
  c.hp.validate();
  c.initScale = parseReal("init_scale", str("init_scale"));
  if (c.initScale < 0) throw ConfigError("init_scale must be non-negative");
  c.visualDim = parseSize("visual_dim", str("visual_dim"));

  c.kCnn = parseSize("k_cnn", str("k_cnn"));
  c.kAes = parseSize("k_aes", str("k_aes"));
  c.deltaR = parseSize("delta_r", str("delta_r"));
  c.normalize = parseBool("normalize", str("normalize"));
  c.featureTextDimCnn = parseSize("feature_text_dim_cnn", str("feature_text_dim_cnn"));

  c.nList.clear();
  for (const auto& n : splitList(str("n_list"))) {
    c.nList.push_back(parseSize("n_list", n));
    if (c.nList.back() == 0) throw ConfigError("n_list entries must be at least 1");
  }
  if (c.nList.empty()) throw ConfigError("n_list must not be empty");
  c.evalEvery = parseSize("eval_every", str("eval_every"));
  if (str("eval_subsample").empty() || str("eval_subsample") == "0") {
    c.evalSubsample.reset();
  } else {
    c.evalSubsample = parseSize("eval_subsample", str("eval_subsample"));
  }
  if (!str("test_subsample").empty() && str("test_subsample") != "0") {
    c.testSubsample = parseSize("test_subsample", str("test_subsample"));
  }
  c.evalSplit = str("eval_split");
  if (c.evalSplit != "test" && c.evalSplit != "validation") throw ConfigError("eval_split must be test or validation");
  c.recordWallclock = parseBool("record_wallclock", str("record_wallclock"));

  if (!str("user").empty()) c.user = parseNumber<Index>("user", str("user"));
  if (!str("interval").empty()) c.interval = parseNumber<Index>("interval", str("interval"));
  c.topN = parseSize("top_n", str("top_n"));
  if (c.topN == 0) throw ConfigError("top_n must be at least 1");
  return c;
}

void writeResolvedConfig(const ConfigMap& config, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& [k, v] : config.entries()) out << k << " = " << v << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace vra
