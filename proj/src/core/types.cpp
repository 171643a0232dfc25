#include "cotalign/core/types.hpp"

#include <algorithm>
#include <array>
#include <string>
#include <utility>

#include "cotalign/core/answer.hpp"
#include "cotalign/error.hpp"

namespace cotalign {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Validation: return "validation";
    case ErrorKind::Io: return "io";
    case ErrorKind::Transport: return "transport";
    case ErrorKind::Request: return "request";
    case ErrorKind::Protocol: return "protocol";
    case ErrorKind::MissingMarker: return "missing_marker";
    case ErrorKind::VerdictParse: return "verdict_parse";
    case ErrorKind::UnsupportedCapability: return "unsupported_capability";
    case ErrorKind::Divergence: return "divergence";
  }
  return "unknown";
}

std::string_view to_string(Dataset d) {
  switch (d) {
    case Dataset::RsvqaLr: return "rsvqa_lr";
    case Dataset::RsvqaHr: return "rsvqa_hr";
    case Dataset::FloodNet: return "floodnet";
  }
  return "?";
}

std::string_view to_string(QuestionType t) {
  switch (t) {
    case QuestionType::Comp: return "comp";
    case QuestionType::Count: return "count";
    case QuestionType::Presence: return "presence";
    case QuestionType::RuralUrban: return "rural_urban";
    case QuestionType::YesNo: return "yes_no";
    case QuestionType::ConditionRecognition: return "condition_recognition";
    case QuestionType::SimpleCount: return "simple_count";
    case QuestionType::ComplexCount: return "complex_count";
  }
  return "?";
}

std::string_view to_string(AnswerFormat f) {
  switch (f) {
    case AnswerFormat::YesNo: return "yes_no";
    case AnswerFormat::Numeric: return "numeric";
    case AnswerFormat::RuralUrban: return "rural_urban";
    case AnswerFormat::FloodedNonFlooded: return "flooded_nonflooded";
    case AnswerFormat::FreeShort: return "free_short";
  }
  return "?";
}

std::string_view to_string(SftStyle s) {
  return s == SftStyle::Direct ? "direct" : "cot";
}

Dataset parse_dataset(std::string_view name) {
  for (auto d : {Dataset::RsvqaLr, Dataset::RsvqaHr, Dataset::FloodNet}) {
    if (to_string(d) == name) return d;
  }
  fail(ErrorKind::Validation, "unknown dataset '" + std::string(name) + "'");
}

AnswerFormat parse_answer_format(std::string_view name) {
  for (auto f : {AnswerFormat::YesNo, AnswerFormat::Numeric, AnswerFormat::RuralUrban,
                 AnswerFormat::FloodedNonFlooded, AnswerFormat::FreeShort}) {
    if (to_string(f) == name) return f;
  }
  fail(ErrorKind::Validation, "unknown answer format '" + std::string(name) + "'");
}

SftStyle parse_sft_style(std::string_view name) {
  if (name == "direct") return SftStyle::Direct;
  if (name == "cot") return SftStyle::Cot;
  fail(ErrorKind::Validation, "unknown style '" + std::string(name) + "' (expected direct|cot)");
}

std::optional<QuestionType> question_type_from_label(std::string_view label) {
  std::string key = ascii_lower(trim(label));
  std::replace_if(
      key.begin(), key.end(), [](char c) { return c == ' ' || c == '-' || c == '/'; }, '_');

  static const std::array<std::pair<std::string_view, QuestionType>, 15> kLabels{{
      {"comp", QuestionType::Comp},
      {"comparison", QuestionType::Comp},
      {"count", QuestionType::Count},
      {"counting", QuestionType::Count},
      {"presence", QuestionType::Presence},
      {"rural_urban", QuestionType::RuralUrban},
      {"yes_no", QuestionType::YesNo},
      {"yesno", QuestionType::YesNo},
      {"condition_recognition", QuestionType::ConditionRecognition},
      {"condition", QuestionType::ConditionRecognition},
      {"simple_count", QuestionType::SimpleCount},
      {"simple_counting", QuestionType::SimpleCount},
      {"complex_count", QuestionType::ComplexCount},
      {"complex_counting", QuestionType::ComplexCount},
      {"ruralurban", QuestionType::RuralUrban},
  }};
  for (const auto& [name, type] : kLabels) {
    if (name == key) return type;
  }
  return std::nullopt;
}

bool dataset_allows(Dataset d, QuestionType t) {
  using Q = QuestionType;
  switch (d) {
    case Dataset::RsvqaLr:
      return t == Q::Comp || t == Q::Presence || t == Q::Count || t == Q::RuralUrban;
    case Dataset::RsvqaHr:
      return t == Q::Comp || t == Q::Presence;
    case Dataset::FloodNet:
      return t == Q::SimpleCount || t == Q::ComplexCount || t == Q::ConditionRecognition ||
             t == Q::YesNo;
  }
  return false;
}

AnswerFormat answer_format_for(QuestionType t) {
  switch (t) {
    case QuestionType::Comp:
    case QuestionType::Presence:
    case QuestionType::YesNo:
      return AnswerFormat::YesNo;
    case QuestionType::Count:
    case QuestionType::SimpleCount:
    case QuestionType::ComplexCount:
      return AnswerFormat::Numeric;
    case QuestionType::RuralUrban:
      return AnswerFormat::RuralUrban;
    case QuestionType::ConditionRecognition:
      return AnswerFormat::FloodedNonFlooded;
  }
  return AnswerFormat::FreeShort;
}

}  // namespace cotalign
