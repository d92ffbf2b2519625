#include <gtest/gtest.h>

#include <sstream>
#include <sys/wait.h>

#include "support.hpp"
#include "vra/commands.hpp"
#include "vra/error.hpp"
#include "vra/vra.h"

using namespace vra;
using vra::testing::readText;
using vra::testing::scratchDir;
using vra::testing::writeText;

namespace {

// 30 users buy 6 of 20 items each over six weeks; item features are 4 CNN
// plus 2 aesthetic dimensions in the text format.
void writeFixture(const std::filesystem::path& dir) {
  Rng rng(17);
  std::ostringstream csv;
  for (int u = 0; u < 30; ++u) {
    std::vector<int> items;
    while (items.size() < 6) {
      const int q = static_cast<int>(rng.below(20));
      if (std::find(items.begin(), items.end(), q) == items.end()) items.push_back(q);
    }
    for (int q : items) {
      csv << "user" << u << ",item" << q << ',' << 1300000000 + static_cast<long>(rng.below(6 * 604800)) << '\n';
    }
  }
  writeText(dir / "interactions.csv", csv.str());
  std::ostringstream feat;
  for (int q = 0; q < 20; ++q) {
    feat << "item" << q << '\t';
    for (int d = 0; d < 6; ++d) feat << (d ? "," : "") << rng.uniform() * 2 - 1;
    feat << '\n';
  }
  writeText(dir / "features.tsv", feat.str());
}

ConfigMap fixtureConfig(const std::filesystem::path& dir, const std::string& out) {
  ConfigMap c;
  c.set("interactions", (dir / "interactions.csv").string());
  c.set("features", (dir / "features.tsv").string());
  c.set("feature_text_dim_cnn", "4");
  c.set("split_dir", (dir / "split").string());
  c.set("output_dir", (dir / out).string());
  c.set("k_core", "2");
  c.set("K1", "4");
  c.set("K2", "3");
  c.set("max_iters", "3");
  c.set("lambda_r", "0.01");
  c.set("init_scale", "0.1");
  c.set("k_cnn", "3");
  c.set("k_aes", "3");
  c.set("n_list", "5,10");
  c.set("record_wallclock", "false");
  c.set("threads", "1");
  return c;
}

struct CConfig {
  vra_config* ptr = nullptr;
  CConfig() { EXPECT_EQ(vra_config_create(&ptr), VRA_OK); }
  ~CConfig() { vra_config_destroy(ptr); }
  void set(const std::string& k, const std::string& v) {
    ASSERT_EQ(vra_config_set(ptr, k.c_str(), v.c_str()), VRA_OK) << k << ": " << vra_last_error();
  }
};

void collect(const char* line, void* user) { static_cast<std::vector<std::string>*>(user)->emplace_back(line); }

int runCli(const std::string& args) {
  const std::string cmd = std::string(VRA_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Config, UnknownKeysAndBadValuesAreConfigErrors) {
  ConfigMap c;
  EXPECT_THROW(c.set("learning_rate", "0.1"), ConfigError);
  c.set("K1", "abc");
  EXPECT_THROW(c.resolve(), ConfigError);
  c.set("K1", "8");
  c.set("model", "nonsense");
  EXPECT_THROW(c.resolve(), ConfigError);
  c.set("model", "wbpr");
  EXPECT_EQ(c.resolve().model, ModelKind::Wbpr);
  EXPECT_EQ(c.resolve().hp.K1, 8u);
}

TEST(Config, FileParsingSkipsComments) {
  const auto dir = scratchDir("cfg");
  writeText(dir / "a.conf", "# comment\nK1 = 12\n\n  lambda_r=0.5  # trailing\nmodel = vra-plr\n");
  ConfigMap c;
  c.loadFile(dir / "a.conf");
  const auto rc = c.resolve();
  EXPECT_EQ(rc.hp.K1, 12u);
  EXPECT_DOUBLE_EQ(rc.hp.lambdaR, 0.5);
  EXPECT_EQ(rc.model, ModelKind::VraPlr);
  EXPECT_EQ(rc.resolvedSplitDir(), std::filesystem::path("out") / "split");
  writeText(dir / "b.conf", "bogus = 1\n");
  EXPECT_THROW(c.loadFile(dir / "b.conf"), ConfigError);
  writeText(dir / "c.conf", "K1 12\n");
  EXPECT_THROW(c.loadFile(dir / "c.conf"), ConfigError);
}

TEST(Config, ModelFeatureRouting) {
  const auto f = vra::testing::randomFeatures(3, 2, 4, 1);
  EXPECT_EQ(modelFeatures(ModelKind::VraAplr, &f, nullptr)->dim(), 5u);
  EXPECT_EQ(modelFeatures(ModelKind::Vrco, &f, nullptr)->dim(), 3u);
  EXPECT_EQ(modelFeatures(ModelKind::Vrao, &f, nullptr)->dim(), 2u);
  EXPECT_FALSE(modelFeatures(ModelKind::VraBasic, &f, nullptr).has_value());
  EXPECT_FALSE(modelFeatures(ModelKind::Bpr, &f, nullptr).has_value());
  EXPECT_THROW(modelFeatures(ModelKind::Vrh, &f, nullptr), ConfigError);
}

TEST(CApi, ConfigGetReportsNeededSize) {
  CConfig c;
  c.set("model", "vra-basic");
  std::size_t needed = 0;
  char small[4];
  EXPECT_EQ(vra_config_get(c.ptr, "model", small, sizeof small, &needed), VRA_ERR_ARGUMENT);
  EXPECT_EQ(needed, 10u);
  char buf[16];
  ASSERT_EQ(vra_config_get(c.ptr, "model", buf, sizeof buf, &needed), VRA_OK);
  EXPECT_STREQ(buf, "vra-basic");
  EXPECT_EQ(vra_config_set(c.ptr, "nope", "1"), VRA_ERR_CONFIG);
  EXPECT_NE(std::string(vra_last_error()).find("nope"), std::string::npos);
  EXPECT_EQ(vra_config_set(nullptr, "K1", "1"), VRA_ERR_ARGUMENT);
  c.set("K1", "-3");
  EXPECT_EQ(vra_config_validate(c.ptr), VRA_ERR_CONFIG);
  EXPECT_STREQ(vra_status_name(VRA_ERR_DIVERGED), "diverged");
}

TEST(CApi, PrepareTrainEvaluateRecommend) {
  const auto dir = scratchDir("capi");
  writeFixture(dir);
  CConfig c;
  const auto cfg = fixtureConfig(dir, "run");
  for (const auto& [k, v] : cfg.entries()) c.set(k, v);
  std::vector<std::string> lines;
  ASSERT_EQ(vra_prepare(c.ptr, collect, &lines), VRA_OK) << vra_last_error();
  ASSERT_FALSE(lines.empty());
  EXPECT_TRUE(std::filesystem::exists(dir / "split"));
  ASSERT_EQ(vra_train(c.ptr, nullptr, nullptr), VRA_OK) << vra_last_error();
  EXPECT_TRUE(std::filesystem::exists(dir / "run" / "model.ckpt"));
  EXPECT_EQ(readText(dir / "run" / "history.csv").substr(0, 6), "epoch,");
  EXPECT_TRUE(std::filesystem::exists(dir / "run" / "config.train.txt"));

  vra_metrics* metrics = nullptr;
  ASSERT_EQ(vra_evaluate(c.ptr, nullptr, nullptr, &metrics), VRA_OK) << vra_last_error();
  ASSERT_EQ(vra_metrics_count(metrics), 2u);
  std::size_t n = 0, groups = 0, skipped = 0;
  double f1 = -1, ndcg = -1;
  ASSERT_EQ(vra_metrics_get(metrics, 1, &n, &f1, &ndcg, &groups, &skipped), VRA_OK);
  EXPECT_EQ(n, 10u);
  EXPECT_GE(ndcg, 0.0);
  EXPECT_LE(ndcg, 1.0);
  EXPECT_EQ(vra_metrics_get(metrics, 2, &n, &f1, &ndcg, &groups, &skipped), VRA_ERR_ARGUMENT);
  vra_metrics_destroy(metrics);
  EXPECT_EQ(readText(dir / "run" / "metrics.csv").substr(0, 34), "model,n,f1,ndcg,groups,skipped\nvra");

  c.set("user", "0");
  c.set("interval", "0");
  c.set("top_n", "5");
  vra_ranking* ranking = nullptr;
  lines.clear();
  ASSERT_EQ(vra_recommend(c.ptr, collect, &lines, &ranking), VRA_OK) << vra_last_error();
  ASSERT_EQ(vra_ranking_count(ranking), 5u);
  EXPECT_EQ(lines.front(), "rank,item_index,item_id,score");
  EXPECT_EQ(lines.size(), 6u);
  const auto bundle = readSplitManifest(dir / "split");
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < 5; ++i) {
    std::uint32_t item = 0;
    double score = 0;
    ASSERT_EQ(vra_ranking_get(ranking, i, &item, &score), VRA_OK);
    EXPECT_FALSE(bundle.train.userBought(0, item));
    EXPECT_LE(score, prev);
    prev = score;
  }
  EXPECT_EQ(vra_ranking_truncated(ranking), 0);
  vra_ranking_destroy(ranking);

  c.set("user", "999");
  EXPECT_EQ(vra_recommend(c.ptr, nullptr, nullptr, &ranking), VRA_ERR_DATA);
}

TEST(Commands, SingleThreadedRunsAreByteIdentical) {
  const auto dir = scratchDir("determinism");
  writeFixture(dir);
  std::ostringstream log;
  cmdPrepare(fixtureConfig(dir, "a"), log);
  for (const char* out : {"a", "b"}) {
    const auto c = fixtureConfig(dir, out);
    cmdTrain(c, log);
    cmdEvaluate(c, log);
  }
  EXPECT_EQ(readText(dir / "a" / "history.csv"), readText(dir / "b" / "history.csv"));
  EXPECT_EQ(readText(dir / "a" / "metrics.csv"), readText(dir / "b" / "metrics.csv"));
  EXPECT_EQ(readText(dir / "a" / "model.ckpt"), readText(dir / "b" / "model.ckpt"));
}

TEST(Commands, BasicModelIgnoresFeatureFile) {
  const auto dir = scratchDir("basic");
  writeFixture(dir);
  std::ostringstream log;
  cmdPrepare(fixtureConfig(dir, "a"), log);
  auto a = fixtureConfig(dir, "a");
  a.set("model", "vra-basic");
  cmdTrain(a, log);
  auto b = fixtureConfig(dir, "b");
  b.set("model", "vra-basic");
  b.set("features", (dir / "does_not_exist.tsv").string());
  cmdTrain(b, log);
  EXPECT_EQ(readText(dir / "a" / "model.ckpt"), readText(dir / "b" / "model.ckpt"));
  EXPECT_EQ(loadCheckpoint(dir / "a" / "model.ckpt").mode, FeatureMode::Basic);
}

TEST(Commands, EveryModelKindTrainsAndEvaluates) {
  const auto dir = scratchDir("kinds");
  writeFixture(dir);
  std::ostringstream hsv;
  for (int q = 0; q < 20; ++q) hsv << "item" << q << "\t1,1\t" << q + 1 << ",1\t1," << q + 1 << '\n';
  writeText(dir / "hsv.tsv", hsv.str());
  std::ostringstream log;
  cmdPrepare(fixtureConfig(dir, "x"), log);
  for (const char* kind : {"vra-aplr", "vra-plr", "vra-basic", "vrco", "vrao", "vrh", "bpr", "vbpr", "wbpr", "cplr",
                           "mse-opt"}) {
    auto c = fixtureConfig(dir, std::string("m_") + kind);
    c.set("model", kind);
    c.set("hsv", (dir / "hsv.tsv").string());
    c.set("visual_dim", "2");
    c.set("learn_rate", "0.005");
    ASSERT_NO_THROW(cmdTrain(c, log)) << kind;
    const auto m = cmdEvaluate(c, log);
    ASSERT_EQ(m.size(), 2u) << kind;
    EXPECT_EQ(loadCheckpoint(dir / (std::string("m_") + kind) / "model.ckpt").modelKind, kind);
  }
}

TEST(Commands, StatsWritesSegmentDiffs) {
  const auto dir = scratchDir("stats");
  writeText(dir / "hsv.tsv", "a\t1,0\t1,0\t1,0\nb\t0,1\t0,1\t0,1\n");
  writeText(dir / "seg.txt", "a\n");
  ConfigMap c;
  c.set("hsv", (dir / "hsv.tsv").string());
  c.set("segments", (dir / "seg.txt").string());
  c.set("output_dir", (dir / "out").string());
  std::ostringstream log;
  const auto path = cmdStats(c, log);
  EXPECT_EQ(readText(path),
            "segment,channel,bin,diff\nseg,h,0,0.5\nseg,h,1,-0.5\nseg,s,0,0.5\nseg,s,1,-0.5\nseg,v,0,0.5\nseg,v,1,-0.5\n");
  writeText(dir / "bad.txt", "zzz\n");
  c.set("segments", (dir / "bad.txt").string());
  EXPECT_THROW(cmdStats(c, log), DataError);
}

TEST(Cli, ExitCodes) {
  const auto dir = scratchDir("cli");
  writeFixture(dir);
  const std::string base = "--interactions " + (dir / "interactions.csv").string() + " --split_dir " +
                           (dir / "split").string() + " --output_dir " + (dir / "out").string() + " --k_core 2";
  EXPECT_EQ(runCli("prepare " + base), 0);
  EXPECT_EQ(runCli("prepare " + base + " --no_such_key 1"), 2);
  EXPECT_EQ(runCli("prepare " + base + " --K1=abc"), 2);
  EXPECT_EQ(runCli("frobnicate"), 2);
  EXPECT_EQ(runCli("prepare --interactions " + (dir / "missing.csv").string() + " --output_dir " +
                   (dir / "out").string()),
            3);
  writeText(dir / "bad.csv", "u,i,notanumber\n");
  EXPECT_EQ(runCli("prepare --interactions " + (dir / "bad.csv").string() + " --output_dir " + (dir / "out").string()),
            3);
  EXPECT_EQ(runCli("train --split_dir " + (dir / "split").string() + " --output_dir " + (dir / "out").string() +
                   " --model vra-basic --K1 3 --K2 2 --max_iters 1 --seed 5"),
            0);
}
