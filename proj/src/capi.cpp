#include "cotalign/cotalign.h"

#include <cstdlib>
#include <cstring>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "cotalign/core/answer.hpp"
#include "cotalign/core/log.hpp"
#include "cotalign/distill/distill.hpp"
#include "cotalign/dpo/dpo.hpp"
#include "cotalign/error.hpp"
#include "cotalign/evalr/evalr.hpp"
#include "cotalign/pipeline/config.hpp"
#include "cotalign/pipeline/run.hpp"

using namespace cotalign;

struct cotalign_session {
  RunConfig config;
  std::unique_ptr<Logger> logger;
};

namespace {

thread_local std::string last_error;

cotalign_status status_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Validation: return COTALIGN_E_VALIDATION;
    case ErrorKind::Io: return COTALIGN_E_IO;
    case ErrorKind::Transport: return COTALIGN_E_TRANSPORT;
    case ErrorKind::Request: return COTALIGN_E_REQUEST;
    case ErrorKind::Protocol: return COTALIGN_E_PROTOCOL;
    case ErrorKind::MissingMarker: return COTALIGN_E_MISSING_MARKER;
    case ErrorKind::VerdictParse: return COTALIGN_E_VERDICT_PARSE;
    case ErrorKind::UnsupportedCapability: return COTALIGN_E_UNSUPPORTED;
    case ErrorKind::Divergence: return COTALIGN_E_DIVERGENCE;
  }
  return COTALIGN_E_INTERNAL;
}

cotalign_status invalid(const std::string& what) {
  last_error = what;
  return COTALIGN_E_INVALID_ARGUMENT;
}

bool format_from_name(const char* name, AnswerFormat& out) {
  try {
    out = parse_answer_format(name);
    return true;
  } catch (const Error&) {
    return false;
  }
}

template <class Fn>
cotalign_status guarded(Fn&& fn) {
  try {
    fn();
    last_error.clear();
    return COTALIGN_OK;
  } catch (const Error& e) {
    last_error = e.what();
    return status_for(e.kind());
  } catch (const Json::exception& e) {
    last_error = e.what();
    return COTALIGN_E_VALIDATION;
  } catch (const std::exception& e) {
    last_error = e.what();
    return COTALIGN_E_INTERNAL;
  } catch (...) {
    last_error = "unknown error";
    return COTALIGN_E_INTERNAL;
  }
}

char* dup(std::string_view s) {
  auto* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.data(), s.size());
  out[s.size()] = '\0';
  return out;
}

void set_out(char** out, std::string_view s) {
  if (out) *out = dup(s);
}

std::vector<PairLogprobs> unpack_pairs(const double* pairs, std::size_t n) {
  std::vector<PairLogprobs> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = {pairs[4 * i], pairs[4 * i + 1], pairs[4 * i + 2], pairs[4 * i + 3]};
  }
  return out;
}

}  // namespace

extern "C" {

const char* cotalign_status_string(cotalign_status status) {
  switch (status) {
    case COTALIGN_OK: return "ok";
    case COTALIGN_E_INVALID_ARGUMENT: return "invalid argument";
    case COTALIGN_E_VALIDATION: return "validation error";
    case COTALIGN_E_IO: return "i/o error";
    case COTALIGN_E_TRANSPORT: return "transport error";
    case COTALIGN_E_REQUEST: return "request rejected";
    case COTALIGN_E_PROTOCOL: return "protocol error";
    case COTALIGN_E_MISSING_MARKER: return "missing answer marker";
    case COTALIGN_E_VERDICT_PARSE: return "verdict parse error";
    case COTALIGN_E_UNSUPPORTED: return "unsupported capability";
    case COTALIGN_E_DIVERGENCE: return "divergence";
    case COTALIGN_E_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* cotalign_last_error(void) { return last_error.c_str(); }

int cotalign_exit_code(cotalign_status status) {
  switch (status) {
    case COTALIGN_OK: return 0;
    case COTALIGN_E_TRANSPORT:
    case COTALIGN_E_REQUEST:
    case COTALIGN_E_PROTOCOL:
    case COTALIGN_E_UNSUPPORTED: return 2;
    default: return 1;
  }
}

const char* cotalign_usage(void) {
  static const std::string text = usage_text();
  return text.c_str();
}

void cotalign_string_free(char* s) { std::free(s); }

cotalign_status cotalign_session_create(const char* config_path, const char* overrides_json,
                                        cotalign_session** out) {
  if (!out) return invalid("out must not be NULL");
  *out = nullptr;
  return guarded([&] {
    Json overrides = Json::object();
    if (overrides_json && *overrides_json) {
      overrides = Json::parse(overrides_json, nullptr, false);
      if (overrides.is_discarded() || !overrides.is_object()) {
        fail(ErrorKind::Validation, "overrides must be a JSON object");
      }
    }
    std::optional<std::filesystem::path> path;
    if (config_path && *config_path) path = config_path;
    auto session = std::make_unique<cotalign_session>();
    session->config = load_config(path, overrides);
    *out = session.release();
  });
}

void cotalign_session_destroy(cotalign_session* session) { delete session; }

cotalign_status cotalign_session_set_logging(cotalign_session* session, int enabled) {
  if (!session) return invalid("session must not be NULL");
  session->logger = enabled ? std::make_unique<Logger>(&std::cerr) : nullptr;
  last_error.clear();
  return COTALIGN_OK;
}

cotalign_status cotalign_session_config(const cotalign_session* session, char** config_json) {
  if (!session || !config_json) return invalid("session and config_json must not be NULL");
  return guarded([&] {
    Json doc = session->config.settings_json();
    doc["paths"] = session->config.paths;
    *config_json = dup(doc.dump(2));
  });
}

cotalign_status cotalign_run(cotalign_session* session, const char* subcommand,
                             char** manifest_json, char** console_text) {
  if (!session || !subcommand) return invalid("session and subcommand must not be NULL");
  if (manifest_json) *manifest_json = nullptr;
  if (console_text) *console_text = nullptr;
  return guarded([&] {
    RunHooks hooks;
    hooks.logger = session->logger.get();
    auto result = run_subcommand(subcommand, session->config, hooks);
    set_out(manifest_json, result.manifest.dump(2));
    set_out(console_text, result.console);
  });
}

cotalign_status cotalign_normalize_answer(const char* raw, const char* format, char** canonical) {
  if (!raw || !format || !canonical) return invalid("arguments must not be NULL");
  *canonical = nullptr;
  AnswerFormat f;
  if (!format_from_name(format, f)) return invalid(std::string("unknown answer format '") + format + "'");
  return guarded([&] { *canonical = dup(normalize_answer(raw, f).text); });
}

cotalign_status cotalign_extract_final_answer(const char* raw, const char* format, char** rationale,
                                              char** answer) {
  if (!raw || !format) return invalid("raw and format must not be NULL");
  if (rationale) *rationale = nullptr;
  if (answer) *answer = nullptr;
  AnswerFormat f;
  if (!format_from_name(format, f)) return invalid(std::string("unknown answer format '") + format + "'");
  return guarded([&] {
    auto extracted = extract_final_answer(raw, f);
    std::unique_ptr<char, decltype(&std::free)> r(dup(extracted.rationale), &std::free);
    if (answer && extracted.answer) *answer = dup(extracted.answer->text);
    if (rationale) *rationale = r.release();
  });
}

cotalign_status cotalign_generation_prompt(const char* question, const char* answer,
                                           char** prompt) {
  if (!question || !answer || !prompt) return invalid("arguments must not be NULL");
  return guarded([&] { *prompt = dup(generation_prompt_text(question, answer)); });
}

cotalign_status cotalign_parse_verdict(const char* raw, char** verdict_json) {
  if (!raw || !verdict_json) return invalid("arguments must not be NULL");
  return guarded([&] { *verdict_json = dup(verdict_to_json(parse_verdict(raw)).dump()); });
}

cotalign_status cotalign_dpo_loss(const double* pairs, size_t n_pairs, double beta, double* loss,
                                  double* mean_margin_out) {
  if (!pairs || !loss) return invalid("pairs and loss must not be NULL");
  return guarded([&] {
    auto batch = unpack_pairs(pairs, n_pairs);
    *loss = dpo_loss(batch, beta);
    if (mean_margin_out) *mean_margin_out = mean_margin(batch, beta);
  });
}

cotalign_status cotalign_dpo_grad(const double* pairs, size_t n_pairs, double beta, double* grad) {
  if (!pairs || !grad) return invalid("pairs and grad must not be NULL");
  return guarded([&] {
    auto g = dpo_grad(unpack_pairs(pairs, n_pairs), beta);
    for (std::size_t i = 0; i < g.size(); ++i) {
      grad[2 * i] = g[i].d_policy_chosen;
      grad[2 * i + 1] = g[i].d_policy_rejected;
    }
  });
}

cotalign_status cotalign_format_accuracy(size_t correct, size_t total, char* buf, size_t buf_len) {
  if (!buf || buf_len == 0) return invalid("buf must not be NULL or empty");
  if (total == 0 || correct > total) return invalid("need 0 <= correct <= total and total > 0");
  auto text = format_accuracy(static_cast<double>(correct) / static_cast<double>(total));
  if (text.size() + 1 > buf_len) return invalid("buffer too small");
  std::memcpy(buf, text.c_str(), text.size() + 1);
  last_error.clear();
  return COTALIGN_OK;
}

}  // extern "C"
