#include "cotalign/distill/distill.hpp"

#include <unordered_map>

#include "cotalign/core/answer.hpp"
#include "cotalign/core/parallel.hpp"
#include "cotalign/error.hpp"

namespace cotalign {

namespace {

bool is_alnum(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9');
}

bool starts_with_answer(std::string_view rationale, const CanonicalAnswer& answer) {
  auto lowered = ascii_lower(rationale);
  if (lowered.rfind(answer.text, 0) != 0) return false;
  return lowered.size() == answer.text.size() || !is_alnum(lowered[answer.text.size()]);
}

// Empty string when `raw` is a usable teacher output.
std::string check_teacher_output(std::string_view raw, AnswerFormat format, ExtractedAnswer& out) {
  auto markers = count_answer_markers(raw);
  if (markers == 0) return "missing_marker";
  if (markers > 1) return "multiple_markers";
  out = extract_final_answer(raw, format);
  if (!out.answer) return "unparseable_answer";
  if (out.rationale.empty()) return "empty_rationale";
  if (starts_with_answer(out.rationale, *out.answer)) return "answer_first";
  return {};
}

}  // namespace

void FilterPolicy::validate() const {
  if (!(min_quality >= 0.0 && min_quality <= 10.0)) {
    fail(ErrorKind::Validation, "filter.min_quality: must be in [0, 10]");
  }
  if (!(min_correctness >= 0.0 && min_correctness <= 10.0)) {
    fail(ErrorKind::Validation, "filter.min_correctness: must be in [0, 10]");
  }
}

RationaleResult generate_rationale(const Client& client, const EndpointConfig& teacher,
                                   const QaRecord& record, const GenerationOptions& options,
                                   int max_regenerations, const Logger* logger) {
  const auto request = build_generation_prompt(record, options);
  RationaleResult result;
  for (int attempt = 0; attempt <= max_regenerations; ++attempt) {
    ++result.attempts;
    auto response = client.complete(teacher, request);
    const auto& raw = response.choices.front().text;

    ExtractedAnswer parsed;
    auto problem = check_teacher_output(raw, record.answer_format, parsed);
    if (problem.empty()) {
      result.cot = CotRecord{record.id,          std::move(parsed.rationale), *parsed.answer,
                             record.answer_format, raw, teacher.model_name, options.temperature};
      result.failure.clear();
      return result;
    }
    result.failure = problem;
    if (logger) {
      logger->event("distill", "regenerate", record.id,
                    Json{{"reason", problem}, {"attempt", result.attempts}});
    }
  }
  return result;
}

VerdictResult score_rationale(const Client& client, const EndpointConfig& verifier,
                              const QaRecord& record, const CotRecord& cot,
                              const ScoringOptions& options, const Logger* logger) {
  const auto request = build_scoring_prompt(record, cot, options);
  VerdictResult result;
  for (int attempt = 0; attempt < 2; ++attempt) {
    auto response = client.complete(verifier, request);
    result.raw_reply = response.choices.front().text;
    try {
      result.verdict = parse_verdict(result.raw_reply);
      result.failure.clear();
      return result;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::VerdictParse) throw;
      result.failure = "verdict_parse";
      if (logger) logger->event("distill", "verdict_reask", record.id, Json{{"error", e.what()}});
    }
  }
  return result;
}

FilterDecision filter_cot(const CotRecord& cot, const VerifierVerdict& verdict,
                          const FilterPolicy& policy, const QaRecord& record) {
  if (!answers_match(cot.final_answer, record.ground_truth)) return {false, "answer_mismatch"};
  if (policy.require_answer_match && !verdict.answer_matches_ground_truth) {
    return {false, "verifier_answer_mismatch"};
  }
  if (policy.require_valid && !verdict.rationale_logically_valid) {
    return {false, "logically_invalid"};
  }
  if (verdict.rationale_quality_score < policy.min_quality) return {false, "low_quality"};
  if (verdict.rationale_correctness_score < policy.min_correctness) {
    return {false, "low_correctness"};
  }
  return {true, {}};
}

SftDatasets emit_sft_datasets(std::span<const KeptRecord> kept) {
  SftDatasets out;
  out.direct.reserve(kept.size());
  out.cot.reserve(kept.size());
  for (const auto& k : kept) {
    out.direct.push_back(SftExample{k.record.id, SftStyle::Direct,
                                    sft_prompt(k.record.question, SftStyle::Direct),
                                    k.record.ground_truth.text});
    std::string target = k.cot.rationale;
    target += '\n';
    target += kAnswerMarker;
    target += k.cot.final_answer.text;
    out.cot.push_back(SftExample{k.record.id, SftStyle::Cot,
                                 sft_prompt(k.record.question, SftStyle::Cot), std::move(target)});
  }
  return out;
}

std::string_view to_string(OutcomeStatus s) {
  switch (s) {
    case OutcomeStatus::Kept: return "kept";
    case OutcomeStatus::Discarded: return "discarded";
    case OutcomeStatus::Failed: return "failed";
  }
  return "?";
}

Json DistillStats::to_json() const {
  Json r = Json::object();
  for (const auto& [k, v] : reasons) r[k] = v;
  return Json{{"input", input},
              {"kept", kept},
              {"discarded", discarded},
              {"failed", failed},
              {"verifier_disputes_ground_truth", verifier_disputes_ground_truth},
              {"reasons", std::move(r)}};
}

DistillResult run_distill(const Client& client, const EndpointConfig& teacher,
                          const EndpointConfig& verifier, std::span<const QaRecord> records,
                          const DistillOptions& options, const Logger* logger) {
  options.filter.validate();
  DistillResult result;
  result.outcomes = parallel_map(records.size(), options.concurrency, [&](std::size_t i) {
    const auto& record = records[i];
    DistillOutcome outcome;
    outcome.qa_id = record.id;

    auto generated = generate_rationale(client, teacher, record, options.generation,
                                        options.max_regenerations, logger);
    if (!generated.cot) {
      outcome.status = OutcomeStatus::Failed;
      outcome.reason = generated.failure;
      if (logger) logger->event("distill", "failed", record.id, Json{{"reason", outcome.reason}});
      return outcome;
    }
    outcome.cot = std::move(generated.cot);

    auto scored = score_rationale(client, verifier, record, *outcome.cot, options.scoring, logger);
    if (!scored.verdict) {
      outcome.status = OutcomeStatus::Failed;
      outcome.reason = scored.failure;
      if (logger) logger->event("distill", "failed", record.id, Json{{"reason", outcome.reason}});
      return outcome;
    }
    outcome.verdict = std::move(scored.verdict);

    auto decision = filter_cot(*outcome.cot, *outcome.verdict, options.filter, record);
    outcome.status = decision.keep ? OutcomeStatus::Kept : OutcomeStatus::Discarded;
    outcome.reason = decision.reason;
    if (logger) {
      logger->event("distill", to_string(outcome.status), record.id,
                    decision.keep ? Json::object() : Json{{"reason", decision.reason}});
    }
    return outcome;
  });

  auto& s = result.stats;
  s.input = records.size();
  for (const auto& o : result.outcomes) {
    switch (o.status) {
      case OutcomeStatus::Kept: ++s.kept; break;
      case OutcomeStatus::Discarded: ++s.discarded; break;
      case OutcomeStatus::Failed: ++s.failed; break;
    }
    if (!o.reason.empty()) ++s.reasons[o.reason];
    if (o.verdict && o.verdict->correct_answer == CorrectAnswer::Model) {
      ++s.verifier_disputes_ground_truth;
    }
  }
  return result;
}

std::vector<KeptRecord> collect_kept(std::span<const QaRecord> records,
                                     std::span<const DistillOutcome> outcomes) {
  std::unordered_map<std::string_view, const QaRecord*> by_id;
  for (const auto& r : records) by_id.emplace(r.id, &r);
  std::vector<KeptRecord> kept;
  for (const auto& o : outcomes) {
    auto it = by_id.find(o.qa_id);
    if (it == by_id.end()) {
      fail(ErrorKind::Validation, "rationale for unknown qa_id '" + o.qa_id + "'");
    }
    if (o.status != OutcomeStatus::Kept) continue;
    if (!o.cot) fail(ErrorKind::Validation, "kept record '" + o.qa_id + "' has no rationale");
    kept.push_back(KeptRecord{*it->second, *o.cot});
  }
  return kept;
}

// ---------------------------------------------------------------------------

Json JsonlCodec<DistillOutcome>::encode(const DistillOutcome& r) {
  Json j{{"qa_id", r.qa_id}};
  if (r.cot) {
    j["rationale"] = r.cot->rationale;
    j["final_answer"] = r.cot->final_answer.text;
    j["answer_format"] = to_string(r.cot->answer_format);
    j["raw_output"] = r.cot->raw_output;
    j["teacher_model"] = r.cot->teacher_model;
    j["temperature"] = r.cot->temperature;
  }
  if (r.verdict) j["verdict"] = verdict_to_json(*r.verdict);
  j["kept"] = r.status == OutcomeStatus::Kept;
  j["status"] = to_string(r.status);
  if (!r.reason.empty()) j["reason"] = r.reason;
  return j;
}

DistillOutcome JsonlCodec<DistillOutcome>::decode(const FieldReader& f) {
  DistillOutcome r;
  r.qa_id = f.str("qa_id");
  auto status = f.str("status");
  if (status == "kept") {
    r.status = OutcomeStatus::Kept;
  } else if (status == "discarded") {
    r.status = OutcomeStatus::Discarded;
  } else if (status == "failed") {
    r.status = OutcomeStatus::Failed;
  } else {
    f.fail("status", "expected kept|discarded|failed");
  }
  if (f.boolean("kept") != (r.status == OutcomeStatus::Kept)) {
    f.fail("kept", "disagrees with status");
  }
  r.reason = f.opt_str("reason").value_or("");

  if (f.has("rationale")) {
    CotRecord c;
    c.qa_id = r.qa_id;
    c.rationale = f.str("rationale");
    try {
      c.answer_format = parse_answer_format(f.str("answer_format"));
    } catch (const Error& e) {
      f.fail("answer_format", e.what());
    }
    auto answer = try_normalize_answer(f.str("final_answer"), c.answer_format);
    if (!answer) f.fail("final_answer", "unparseable under answer_format");
    c.final_answer = *std::move(answer);
    c.raw_output = f.str("raw_output");
    c.teacher_model = f.str("teacher_model");
    c.temperature = f.num("temperature");
    r.cot = std::move(c);
  }
  if (f.has("verdict")) {
    try {
      r.verdict = parse_verdict(f.at("verdict").dump());
    } catch (const Error& e) {
      f.fail("verdict", e.what());
    }
  }
  if (r.status == OutcomeStatus::Kept && (!r.cot || !r.verdict)) {
    f.fail("status", "kept record needs rationale and verdict");
  }
  return r;
}

}  // namespace cotalign
