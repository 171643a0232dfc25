// Command-line front end. Flags become a JSON overrides object merged over
// the optional --config file; all work happens behind the C interface.
#include <cstdio>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cotalign/cotalign.h"

namespace {

using Json = nlohmann::ordered_json;

struct Flags {
  std::optional<std::string> config;
  bool quiet = false;
  Json overrides = Json::object();
  std::vector<std::function<void()>> apply;
};

template <class T>
void bind(CLI::App& app, Flags& flags, const std::string& name, std::vector<std::string> pointer,
          const std::string& help) {
  auto value = std::make_shared<std::optional<T>>();
  app.add_option(name, *value, help);
  flags.apply.push_back([value, pointer = std::move(pointer), &flags] {
    if (!*value) return;
    Json* node = &flags.overrides;
    for (const auto& key : pointer) node = &(*node)[key];
    *node = **value;
  });
}

void path_flag(CLI::App& app, Flags& flags, const std::string& name, const std::string& key,
               const std::string& help) {
  bind<std::string>(app, flags, name, {"paths", key}, help);
}

void endpoint_flags(CLI::App& app, Flags& flags, const std::string& role) {
  bind<std::string>(app, flags, "--" + role + "-endpoint", {"endpoints", role, "base_url"},
                    role + " endpoint base URL");
  bind<std::string>(app, flags, "--" + role + "-model", {"endpoints", role, "model"},
                    role + " model name");
}

void common_flags(CLI::App& app, Flags& flags) {
  app.add_option("--config", flags.config, "JSON run configuration");
  app.add_flag("--quiet", flags.quiet, "suppress JSON-lines logs on stderr");
  bind<long long>(app, flags, "--seed", {"seed"}, "global seed");
  bind<int>(app, flags, "--concurrency", {"concurrency"}, "global in-flight request budget");
  bind<std::string>(app, flags, "--dataset", {"dataset"}, "rsvqa_lr, rsvqa_hr or floodnet");
  path_flag(app, flags, "--manifest", "manifest", "run manifest path");
  path_flag(app, flags, "--mock", "mock", "scripted mock transcript (JSONL)");
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << cotalign_usage();
    return 1;
  }
  const std::string subcommand = argv[1];
  if (subcommand == "-h" || subcommand == "--help") {
    std::cout << cotalign_usage();
    return 0;
  }

  Flags flags;
  CLI::App app{"cotalign " + subcommand, "cotalign " + subcommand};
  common_flags(app, flags);

  if (subcommand == "distill") {
    path_flag(app, flags, "--qa", "qa", "QA records (JSONL)");
    path_flag(app, flags, "--out-dir", "out_dir", "output directory");
    endpoint_flags(app, flags, "teacher");
    endpoint_flags(app, flags, "verifier");
    bind<double>(app, flags, "--min-quality", {"filter", "min_quality"}, "minimum quality score");
    bind<double>(app, flags, "--min-correctness", {"filter", "min_correctness"},
                 "minimum correctness score");
    bind<double>(app, flags, "--teacher-temperature", {"sampling", "teacher_temperature"},
                 "teacher sampling temperature");
    bind<int>(app, flags, "--max-regenerations", {"sampling", "max_regenerations"},
              "retries for outputs without an answer marker");
  } else if (subcommand == "build-pref") {
    path_flag(app, flags, "--qa", "qa", "QA records (JSONL)");
    path_flag(app, flags, "--out", "out", "preference pairs (JSONL)");
    endpoint_flags(app, flags, "policy");
  } else if (subcommand == "sft-export") {
    path_flag(app, flags, "--qa", "qa", "QA records (JSONL)");
    path_flag(app, flags, "--cot", "cot", "distill output (JSONL)");
    path_flag(app, flags, "--out-dir", "out_dir", "output directory");
  } else if (subcommand == "dpo-loss") {
    path_flag(app, flags, "--pairs", "pairs", "PairLogprobs or preference pairs (JSONL)");
    path_flag(app, flags, "--out", "out", "loss summary (JSON)");
    bind<double>(app, flags, "--beta", {"dpo", "beta"}, "DPO temperature");
    endpoint_flags(app, flags, "policy");
    endpoint_flags(app, flags, "reference");
  } else if (subcommand == "dpo-train-toy") {
    path_flag(app, flags, "--pairs", "pairs", "preference pairs (JSONL)");
    path_flag(app, flags, "--vocab", "vocab", "vocabulary, one token per line");
    path_flag(app, flags, "--report", "report", "training report (JSON)");
    bind<double>(app, flags, "--beta", {"dpo", "beta"}, "DPO temperature");
    bind<double>(app, flags, "--lr", {"dpo", "learning_rate"}, "learning rate");
    bind<int>(app, flags, "--epochs", {"dpo", "epochs"}, "full-batch steps");
  } else if (subcommand == "eval") {
    path_flag(app, flags, "--qa", "qa", "QA records (JSONL)");
    path_flag(app, flags, "--pred", "pred", "predictions (JSONL)");
    path_flag(app, flags, "--report", "report", "evaluation report (JSON)");
    bind<std::string>(app, flags, "--style", {"eval", "style"}, "cot or direct");
  } else if (subcommand == "report") {
    path_flag(app, flags, "--report", "report", "evaluation report (JSON)");
    path_flag(app, flags, "--reference", "reference", "reference report (JSON)");
    bind<double>(app, flags, "--tolerance", {"eval", "tolerance"}, "allowed accuracy deviation");
  } else {
    std::cerr << "cotalign: unknown subcommand '" << subcommand << "'\n\n" << cotalign_usage();
    return 1;
  }

  try {
    app.parse(argc - 1, argv + 1);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }
  for (auto& apply : flags.apply) apply();

  cotalign_session* session = nullptr;
  const std::string overrides = flags.overrides.dump();
  auto status = cotalign_session_create(flags.config ? flags.config->c_str() : nullptr,
                                        overrides.c_str(), &session);
  if (status != COTALIGN_OK) {
    std::cerr << "cotalign: " << cotalign_last_error() << "\n";
    return cotalign_exit_code(status);
  }
  cotalign_session_set_logging(session, flags.quiet ? 0 : 1);

  char* console = nullptr;
  status = cotalign_run(session, subcommand.c_str(), nullptr, &console);
  if (status != COTALIGN_OK) {
    std::cerr << "cotalign " << subcommand << ": " << cotalign_status_string(status) << ": "
              << cotalign_last_error() << "\n";
  } else if (console) {
    std::cout << console;
  }
  cotalign_string_free(console);
  cotalign_session_destroy(session);
  return cotalign_exit_code(status);
}
