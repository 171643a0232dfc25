/* cotalign C interface.
 *
 * Strings returned through `char**` out-parameters are heap-allocated and
 * must be released with cotalign_string_free. On failure every function
 * returns a non-zero status and cotalign_last_error() describes it; the
 * message is thread-local and valid until the next call on that thread.
 */
#ifndef COTALIGN_H
#define COTALIGN_H

#include <stddef.h>

#if defined(COTALIGN_BUILDING)
#define COTALIGN_API __attribute__((visibility("default")))
#else
#define COTALIGN_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum cotalign_status {
  COTALIGN_OK = 0,
  COTALIGN_E_INVALID_ARGUMENT = 1, /* null pointer, bad enum name */
  COTALIGN_E_VALIDATION = 2,       /* invalid config or input data */
  COTALIGN_E_IO = 3,
  COTALIGN_E_TRANSPORT = 4,        /* endpoint unreachable, retries exhausted */
  COTALIGN_E_REQUEST = 5,          /* endpoint rejected the request (4xx) */
  COTALIGN_E_PROTOCOL = 6,         /* malformed endpoint reply */
  COTALIGN_E_MISSING_MARKER = 7,
  COTALIGN_E_VERDICT_PARSE = 8,
  COTALIGN_E_UNSUPPORTED = 9,      /* endpoint lacks a required capability */
  COTALIGN_E_DIVERGENCE = 10,
  COTALIGN_E_INTERNAL = 11
} cotalign_status;

typedef struct cotalign_session cotalign_session;

COTALIGN_API const char* cotalign_status_string(cotalign_status status);
COTALIGN_API const char* cotalign_last_error(void);

/* Process exit status for a result: 0 success, 2 endpoint failures
 * (transport, request, protocol, unsupported capability), 1 otherwise. */
COTALIGN_API int cotalign_exit_code(cotalign_status status);

/* Usage text listing the subcommands. Static storage; do not free. */
COTALIGN_API const char* cotalign_usage(void);

COTALIGN_API void cotalign_string_free(char* s);

/* ---- pipeline sessions -------------------------------------------------- */

/* Loads and validates a run configuration. `config_path` may be NULL (all
 * defaults); `overrides_json` may be NULL or a JSON object merged over the
 * file (RFC 7386), e.g. command-line flags. */
COTALIGN_API cotalign_status cotalign_session_create(const char* config_path,
                                                     const char* overrides_json,
                                                     cotalign_session** out);
COTALIGN_API void cotalign_session_destroy(cotalign_session* session);

/* Structured JSON-lines logs on stderr (off by default). */
COTALIGN_API cotalign_status cotalign_session_set_logging(cotalign_session* session, int enabled);

/* Effective configuration (no secrets) as JSON. */
COTALIGN_API cotalign_status cotalign_session_config(const cotalign_session* session,
                                                     char** config_json);

/* Runs one subcommand. On success `manifest_json` receives the run manifest
 * and `console_text` the human-readable summary; either may be NULL. */
COTALIGN_API cotalign_status cotalign_run(cotalign_session* session, const char* subcommand,
                                          char** manifest_json, char** console_text);

/* ---- individual operations ---------------------------------------------- */

/* `format`: yes_no, numeric, rural_urban, flooded_nonflooded, free_short. */
COTALIGN_API cotalign_status cotalign_normalize_answer(const char* raw, const char* format,
                                                       char** canonical);

/* `answer` is NULL-set when the marker line does not parse under `format`. */
COTALIGN_API cotalign_status cotalign_extract_final_answer(const char* raw, const char* format,
                                                           char** rationale, char** answer);

COTALIGN_API cotalign_status cotalign_generation_prompt(const char* question, const char* answer,
                                                        char** prompt);

/* Validated verdict re-serialized as JSON. */
COTALIGN_API cotalign_status cotalign_parse_verdict(const char* raw, char** verdict_json);

/* `pairs` holds n_pairs rows of (policy_chosen, policy_rejected, ref_chosen,
 * ref_rejected). `mean_margin` may be NULL. */
COTALIGN_API cotalign_status cotalign_dpo_loss(const double* pairs, size_t n_pairs, double beta,
                                               double* loss, double* mean_margin);

/* Writes n_pairs rows of (d_policy_chosen, d_policy_rejected). */
COTALIGN_API cotalign_status cotalign_dpo_grad(const double* pairs, size_t n_pairs, double beta,
                                               double* grad);

/* correct/total rendered with four decimals into `buf`. */
COTALIGN_API cotalign_status cotalign_format_accuracy(size_t correct, size_t total, char* buf,
                                                      size_t buf_len);

#ifdef __cplusplus
}
#endif

#endif
