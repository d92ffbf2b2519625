// Command-line front end over the C API.
//
//   vra <prepare|train|evaluate|stats|recommend> [--config FILE]
//       [--seed N] [--threads N] [--<key> VALUE | --<key>=VALUE ...]
//
// Exit codes: 0 success, 2 configuration error, 3 data error (including
// unreadable files and divergence), 1 anything else.

#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vra/vra.h"

namespace {

int exitCode(vra_status status) {
  switch (status) {
    case VRA_OK: return 0;
    case VRA_ERR_ARGUMENT:
    case VRA_ERR_CONFIG: return 2;
    case VRA_ERR_DATA:
    case VRA_ERR_IO:
    case VRA_ERR_DIVERGED: return 3;
    default: return 1;
  }
}

void printLine(const char* line, void*) {
  std::puts(line);
  std::fflush(stdout);
}

int report(vra_status status) {
  if (status != VRA_OK) std::fprintf(stderr, "vra: %s: %s\n", vra_status_name(status), vra_last_error());
  return exitCode(status);
}

struct ConfigGuard {
  vra_config* ptr = nullptr;
  ~ConfigGuard() { vra_config_destroy(ptr); }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Time-aware visual recommender"};
  app.require_subcommand(1);

  std::string configPath;
  std::string seed;
  std::string threads;
  const std::vector<std::string> names{"prepare", "train", "evaluate", "stats", "recommend"};
  std::vector<CLI::App*> subs;
  for (const auto& name : names) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", configPath, "key = value config file");
    sub->add_option("--seed", seed, "random seed");
    sub->add_option("--threads", threads, "worker threads (1 is fully deterministic)");
    sub->allow_extras();
    subs.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  ConfigGuard config;
  if (const auto s = vra_config_create(&config.ptr); s != VRA_OK) return report(s);
  if (!configPath.empty()) {
    if (const auto s = vra_config_load(config.ptr, configPath.c_str()); s != VRA_OK) return report(s);
  }

  CLI::App* active = nullptr;
  for (auto* sub : subs) {
    if (sub->parsed()) active = sub;
  }

  // Remaining arguments are key overrides.
  const auto extras = active->remaining();
  for (std::size_t i = 0; i < extras.size(); ++i) {
    std::string arg = extras[i];
    if (arg.rfind("--", 0) != 0) {
      std::fprintf(stderr, "vra: unexpected argument '%s'\n", arg.c_str());
      return 2;
    }
    arg.erase(0, 2);
    std::string key = arg, value;
    if (const auto eq = arg.find('='); eq != std::string::npos) {
      key = arg.substr(0, eq);
      value = arg.substr(eq + 1);
    } else if (i + 1 < extras.size()) {
      value = extras[++i];
    } else {
      std::fprintf(stderr, "vra: option --%s needs a value\n", key.c_str());
      return 2;
    }
    if (const auto s = vra_config_set(config.ptr, key.c_str(), value.c_str()); s != VRA_OK) return report(s);
  }
  if (!seed.empty()) {
    if (const auto s = vra_config_set(config.ptr, "seed", seed.c_str()); s != VRA_OK) return report(s);
  }
  if (!threads.empty()) {
    if (const auto s = vra_config_set(config.ptr, "threads", threads.c_str()); s != VRA_OK) return report(s);
  }

  const std::string command = active->get_name();
  vra_status status = VRA_OK;
  if (command == "prepare") {
    status = vra_prepare(config.ptr, printLine, nullptr);
  } else if (command == "train") {
    status = vra_train(config.ptr, printLine, nullptr);
  } else if (command == "evaluate") {
    vra_metrics* metrics = nullptr;
    status = vra_evaluate(config.ptr, printLine, nullptr, &metrics);
    vra_metrics_destroy(metrics);
  } else if (command == "stats") {
    status = vra_stats(config.ptr, printLine, nullptr);
  } else {
    vra_ranking* ranking = nullptr;
    status = vra_recommend(config.ptr, printLine, nullptr, &ranking);
    vra_ranking_destroy(ranking);
  }
  return report(status);
}
