#pragma once

#include <array>
#include <chrono>
#include <functional>
#include <memory>
#include <string>
#include <string_view>

#include "cotalign/client/model_client.hpp"
#include "cotalign/core/jsonl.hpp"
#include "cotalign/core/log.hpp"
#include "cotalign/pipeline/config.hpp"

namespace cotalign {

inline constexpr std::array<std::string_view, 7> kSubcommands{
    "distill", "build-pref", "sft-export", "dpo-loss", "dpo-train-toy", "eval", "report"};

std::string usage_text();

struct RunHooks {
  // Overrides the transport chosen from the config (HTTP, or mock when
  // paths.mock is set).
  std::shared_ptr<Transport> transport;
  const Logger* logger = nullptr;
  std::function<void(std::chrono::duration<double>)> sleep;
};

struct RunResult {
  // {subcommand, config_hash, inputs: [{name, path, sha256}], outputs: [...],
  //  stats, wall_time_s}
  Json manifest;
  std::string console;  // text the CLI prints on stdout
  std::string manifest_path;
};

/// Runs one subcommand end to end, writes its outputs and the manifest.
/// Unknown subcommands and missing paths are Error(Validation).
RunResult run_subcommand(std::string_view subcommand, const RunConfig& config,
                         const RunHooks& hooks = {});

/// Manifest without the wall-clock field; equal for identical runs.
Json stable_manifest(const Json& manifest);

/// Command-line spelling of a paths.* key ("out_dir" -> "--out-dir").
std::string path_flag(std::string_view key);

}  // namespace cotalign
