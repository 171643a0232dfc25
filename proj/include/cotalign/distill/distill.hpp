#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cotalign/client/model_client.hpp"
#include "cotalign/core/jsonl.hpp"
#include "cotalign/core/log.hpp"
#include "cotalign/core/types.hpp"

namespace cotalign {

inline constexpr std::string_view kDirectInstruction = "Answer the question with a short answer.";
inline constexpr std::string_view kCotInstruction =
    "Generate a reason first and then output a short answer.";
inline constexpr std::string_view kAnswerMarker = "### Answer: ";

struct CotRecord {
  std::string qa_id;
  std::string rationale;
  CanonicalAnswer final_answer;
  AnswerFormat answer_format = AnswerFormat::YesNo;
  std::string raw_output;
  std::string teacher_model;
  double temperature = 0.0;

  friend bool operator==(const CotRecord&, const CotRecord&) = default;
};

enum class CorrectAnswer { Model, GroundTruth };

struct VerifierVerdict {
  bool rationale_logically_valid = false;
  bool rationale_consistent_with_image = false;
  double rationale_correctness_score = 0.0;
  double rationale_quality_score = 0.0;
  bool answer_follows_from_rationale = false;
  bool answer_matches_ground_truth = false;
  CorrectAnswer correct_answer = CorrectAnswer::GroundTruth;
  std::string explanation;

  friend bool operator==(const VerifierVerdict&, const VerifierVerdict&) = default;
};

struct FilterPolicy {
  double min_quality = 7.0;
  double min_correctness = 7.0;
  bool require_valid = true;
  bool require_answer_match = true;

  void validate() const;
};

struct FilterDecision {
  bool keep = false;
  std::string reason;  // empty when kept
};

// ---- prompts --------------------------------------------------------------

/// User text of the rationale-generation prompt; the image travels as the
/// message's image part in place of the template's `<|image|>` line.
std::string generation_prompt_text(std::string_view question, std::string_view answer);

struct GenerationOptions {
  double temperature = 0.2;
  int max_tokens = 1024;
};

ChatRequest build_generation_prompt(const QaRecord& record, const GenerationOptions& options = {});

/// Verbatim scoring template followed by a labeled block holding the
/// question, rationale, model answer and ground truth.
std::string scoring_prompt_text(const QaRecord& record, const CotRecord& cot);

struct ScoringOptions {
  double temperature = 0.0;
  int max_tokens = 1024;
};

ChatRequest build_scoring_prompt(const QaRecord& record, const CotRecord& cot,
                                 const ScoringOptions& options = {});

/// Question followed by the supervision-style instruction sentence.
std::string sft_prompt(std::string_view question, SftStyle style);

// ---- parsing --------------------------------------------------------------

struct ExtractedAnswer {
  std::string rationale;
  std::string answer_text;                // remainder of the marker line, trimmed
  std::optional<CanonicalAnswer> answer;  // nullopt: unparseable under the format
};

/// Finds the last `### Answer:` marker (1-3 hashes, any case). Everything
/// before it, trimmed, is the rationale. Throws Error(MissingMarker).
ExtractedAnswer extract_final_answer(std::string_view raw, AnswerFormat format);

/// Number of answer markers in `raw`.
std::size_t count_answer_markers(std::string_view raw);

/// Validates the first JSON object in a verifier reply against the
/// eight-field schema. Throws Error(VerdictParse).
VerifierVerdict parse_verdict(std::string_view raw);

Json verdict_to_json(const VerifierVerdict& v);

// ---- stage operations -----------------------------------------------------

struct RationaleResult {
  std::optional<CotRecord> cot;
  std::string failure;  // set when cot is empty
  int attempts = 0;
};

/// One teacher call (plus up to `max_regenerations` retries when the
/// output has no usable answer marker).
RationaleResult generate_rationale(const Client& client, const EndpointConfig& teacher,
                                   const QaRecord& record, const GenerationOptions& options = {},
                                   int max_regenerations = 2, const Logger* logger = nullptr);

struct VerdictResult {
  std::optional<VerifierVerdict> verdict;
  std::string failure;
  std::string raw_reply;
};

/// Verifier call with one re-ask when the reply fails schema validation.
VerdictResult score_rationale(const Client& client, const EndpointConfig& verifier,
                              const QaRecord& record, const CotRecord& cot,
                              const ScoringOptions& options = {}, const Logger* logger = nullptr);

FilterDecision filter_cot(const CotRecord& cot, const VerifierVerdict& verdict,
                          const FilterPolicy& policy, const QaRecord& record);

struct KeptRecord {
  QaRecord record;
  CotRecord cot;
};

struct SftDatasets {
  std::vector<SftExample> direct;
  std::vector<SftExample> cot;
};

SftDatasets emit_sft_datasets(std::span<const KeptRecord> kept);

// ---- stage runner ---------------------------------------------------------

enum class OutcomeStatus { Kept, Discarded, Failed };

std::string_view to_string(OutcomeStatus s);

/// One line of the cot output file.
struct DistillOutcome {
  std::string qa_id;
  OutcomeStatus status = OutcomeStatus::Failed;
  std::string reason;
  std::optional<CotRecord> cot;
  std::optional<VerifierVerdict> verdict;

  friend bool operator==(const DistillOutcome&, const DistillOutcome&) = default;
};

template <>
struct JsonlCodec<DistillOutcome> {
  static Json encode(const DistillOutcome& r);
  static DistillOutcome decode(const FieldReader& f);
};

struct DistillOptions {
  GenerationOptions generation;
  ScoringOptions scoring;
  FilterPolicy filter;
  int max_regenerations = 2;
  int concurrency = 4;
};

struct DistillStats {
  std::size_t input = 0;
  std::size_t kept = 0;
  std::size_t discarded = 0;
  std::size_t failed = 0;
  std::size_t verifier_disputes_ground_truth = 0;
  std::map<std::string, std::size_t> reasons;

  Json to_json() const;
};

struct DistillResult {
  std::vector<DistillOutcome> outcomes;  // input order
  DistillStats stats;
};

/// generate -> score -> filter for every record. Transport, request and
/// protocol errors abort the batch.
DistillResult run_distill(const Client& client, const EndpointConfig& teacher,
                          const EndpointConfig& verifier, std::span<const QaRecord> records,
                          const DistillOptions& options, const Logger* logger = nullptr);

/// Pairs each kept outcome with its record. Outcomes whose qa_id is not in
/// `records` are a validation error.
std::vector<KeptRecord> collect_kept(std::span<const QaRecord> records,
                                     std::span<const DistillOutcome> outcomes);

}  // namespace cotalign
