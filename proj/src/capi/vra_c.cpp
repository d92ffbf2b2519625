#include "vra/vra.h"

#include <cstring>
#include <ostream>
#include <streambuf>
#include <string>

#include "vra/commands.hpp"
#include "vra/error.hpp"

struct vra_config {
  vra::ConfigMap map;
};

struct vra_metrics {
  std::vector<vra::MetricsAtN> rows;
};

struct vra_ranking {
  vra::RankingResult result;
};

namespace {

thread_local std::string lastError;

vra_status fail(vra_status status, const std::string& message) {
  lastError = message;
  return status;
}

// Translates exceptions into status codes.
template <typename F>
vra_status guarded(F&& body) {
  try {
    lastError.clear();
    body();
    return VRA_OK;
  } catch (const vra::ConfigError& e) {
    return fail(VRA_ERR_CONFIG, e.what());
  } catch (const vra::DataError& e) {
    return fail(VRA_ERR_DATA, e.what());
  } catch (const vra::IoError& e) {
    return fail(VRA_ERR_IO, e.what());
  } catch (const vra::DivergenceError& e) {
    return fail(VRA_ERR_DIVERGED, e.what());
  } catch (const std::out_of_range& e) {
    return fail(VRA_ERR_ARGUMENT, e.what());
  } catch (const std::invalid_argument& e) {
    return fail(VRA_ERR_ARGUMENT, e.what());
  } catch (const std::exception& e) {
    return fail(VRA_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(VRA_ERR_INTERNAL, "unknown error");
  }
}

// Hands complete lines to the callback as they are written.
class LineBuf final : public std::streambuf {
 public:
  LineBuf(vra_log_fn fn, void* user) : fn_(fn), user_(user) {}
  ~LineBuf() override { flushLine(); }

 protected:
  int_type overflow(int_type ch) override {
    if (ch == traits_type::eof()) return traits_type::not_eof(ch);
    if (ch == '\n') {
      flushLine();
    } else {
      line_.push_back(static_cast<char>(ch));
    }
    return ch;
  }

 private:
  void flushLine() {
    if (fn_ && !line_.empty()) fn_(line_.c_str(), user_);
    line_.clear();
  }

  vra_log_fn fn_;
  void* user_;
  std::string line_;
};

}  // namespace

extern "C" {

const char* vra_version(void) { return "1.0.0"; }

const char* vra_last_error(void) { return lastError.c_str(); }

const char* vra_status_name(vra_status status) {
  switch (status) {
    case VRA_OK: return "ok";
    case VRA_ERR_ARGUMENT: return "argument error";
    case VRA_ERR_CONFIG: return "config error";
    case VRA_ERR_DATA: return "data error";
    case VRA_ERR_IO: return "I/O error";
    case VRA_ERR_DIVERGED: return "diverged";
    case VRA_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

vra_status vra_config_create(vra_config** out) {
  if (out == nullptr) return fail(VRA_ERR_ARGUMENT, "null output pointer");
  return guarded([&] { *out = new vra_config(); });
}

void vra_config_destroy(vra_config* config) { delete config; }

vra_status vra_config_set(vra_config* config, const char* key, const char* value) {
  if (config == nullptr || key == nullptr || value == nullptr) return fail(VRA_ERR_ARGUMENT, "null argument");
  return guarded([&] { config->map.set(key, value); });
}

vra_status vra_config_get(const vra_config* config, const char* key, char* buf, size_t capacity, size_t* needed) {
  if (config == nullptr || key == nullptr) return fail(VRA_ERR_ARGUMENT, "null argument");
  const auto value = config->map.get(key);
  if (!value) return fail(VRA_ERR_CONFIG, std::string("unknown config key '") + key + "'");
  if (needed) *needed = value->size() + 1;
  if (buf == nullptr || capacity < value->size() + 1) return fail(VRA_ERR_ARGUMENT, "buffer too small");
  std::memcpy(buf, value->c_str(), value->size() + 1);
  lastError.clear();
  return VRA_OK;
}

vra_status vra_config_load(vra_config* config, const char* path) {
  if (config == nullptr || path == nullptr) return fail(VRA_ERR_ARGUMENT, "null argument");
  return guarded([&] { config->map.loadFile(path); });
}

vra_status vra_config_validate(const vra_config* config) {
  if (config == nullptr) return fail(VRA_ERR_ARGUMENT, "null config");
  return guarded([&] { (void)config->map.resolve(); });
}

vra_status vra_prepare(const vra_config* config, vra_log_fn log, void* user_data) {
  if (config == nullptr) return fail(VRA_ERR_ARGUMENT, "null config");
  return guarded([&] {
    LineBuf buf(log, user_data);
    std::ostream os(&buf);
    vra::cmdPrepare(config->map, os);
  });
}

vra_status vra_train(const vra_config* config, vra_log_fn log, void* user_data) {
  if (config == nullptr) return fail(VRA_ERR_ARGUMENT, "null config");
  return guarded([&] {
    LineBuf buf(log, user_data);
    std::ostream os(&buf);
    vra::cmdTrain(config->map, os);
  });
}

vra_status vra_evaluate(const vra_config* config, vra_log_fn log, void* user_data, vra_metrics** out) {
  if (config == nullptr) return fail(VRA_ERR_ARGUMENT, "null config");
  return guarded([&] {
    LineBuf buf(log, user_data);
    std::ostream os(&buf);
    auto rows = vra::cmdEvaluate(config->map, os);
    if (out) *out = new vra_metrics{std::move(rows)};
  });
}

vra_status vra_stats(const vra_config* config, vra_log_fn log, void* user_data) {
  if (config == nullptr) return fail(VRA_ERR_ARGUMENT, "null config");
  return guarded([&] {
    LineBuf buf(log, user_data);
    std::ostream os(&buf);
    vra::cmdStats(config->map, os);
  });
}

vra_status vra_recommend(const vra_config* config, vra_log_fn log, void* user_data, vra_ranking** out) {
  if (config == nullptr) return fail(VRA_ERR_ARGUMENT, "null config");
  return guarded([&] {
    LineBuf buf(log, user_data);
    std::ostream os(&buf);
    auto result = vra::cmdRecommend(config->map, os);
    if (out) *out = new vra_ranking{std::move(result)};
  });
}

size_t vra_metrics_count(const vra_metrics* metrics) { return metrics ? metrics->rows.size() : 0; }

vra_status vra_metrics_get(const vra_metrics* metrics, size_t index, size_t* n, double* f1, double* ndcg,
                           size_t* groups, size_t* skipped) {
  if (metrics == nullptr || index >= metrics->rows.size()) return fail(VRA_ERR_ARGUMENT, "metrics index out of range");
  const auto& m = metrics->rows[index];
  if (n) *n = m.n;
  if (f1) *f1 = m.f1;
  if (ndcg) *ndcg = m.ndcg;
  if (groups) *groups = m.groups;
  if (skipped) *skipped = m.skipped;
  return VRA_OK;
}

void vra_metrics_destroy(vra_metrics* metrics) { delete metrics; }

size_t vra_ranking_count(const vra_ranking* ranking) { return ranking ? ranking->result.rankedItems.size() : 0; }

vra_status vra_ranking_get(const vra_ranking* ranking, size_t index, uint32_t* item, double* score) {
  if (ranking == nullptr || index >= ranking->result.rankedItems.size()) {
    return fail(VRA_ERR_ARGUMENT, "ranking index out of range");
  }
  if (item) *item = ranking->result.rankedItems[index];
  if (score) *score = ranking->result.scores[index];
  return VRA_OK;
}

int vra_ranking_truncated(const vra_ranking* ranking) { return ranking && ranking->result.truncated ? 1 : 0; }

void vra_ranking_destroy(vra_ranking* ranking) { delete ranking; }

}  // extern "C"
