#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cotalign/client/model_client.hpp"
#include "cotalign/core/jsonl.hpp"
#include "cotalign/distill/distill.hpp"
#include "cotalign/dpo/dpo.hpp"
#include "cotalign/prefdata/prefdata.hpp"

namespace cotalign {

/// Effective settings of one run. Built from a JSON config document with
/// command-line overrides merged on top (RFC 7386 merge patch).
struct RunConfig {
  std::map<std::string, EndpointConfig> endpoints;
  std::uint64_t seed = 0;
  int concurrency = 4;
  FilterPolicy filter;
  DpoConfig dpo;
  GenerationOptions generation;
  ScoringOptions scoring;
  int max_regenerations = 2;
  CandidateOptions candidates;
  std::optional<Dataset> dataset;
  SftStyle eval_style = SftStyle::Cot;
  double tolerance = 0.01;
  // Named input/output locations: qa, pred, cot, pairs, vocab, out, out_dir,
  // report, reference, manifest, mock.
  std::map<std::string, std::string> paths;

  bool mock() const { return paths.count("mock") != 0; }

  /// Looks up an endpoint; in mock mode a missing one is synthesized.
  EndpointConfig endpoint(const std::string& name) const;

  /// Settings that influence results (no paths, no secrets).
  Json settings_json() const;
};

/// Validates and converts a config document. Errors name the offending
/// field ("dpo.beta", "endpoints.teacher.max_in_flight", ...).
RunConfig config_from_json(const Json& doc);

/// Reads `file` (when given), applies `overrides`, then COTALIGN_API_KEY_<NAME>
/// environment variables, and validates.
RunConfig load_config(const std::optional<std::filesystem::path>& file,
                      const Json& overrides = Json::object());

}  // namespace cotalign
