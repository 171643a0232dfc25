#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace cotalign {

enum class Dataset { RsvqaLr, RsvqaHr, FloodNet };

enum class QuestionType {
  Comp,
  Count,
  Presence,
  RuralUrban,
  YesNo,
  ConditionRecognition,
  SimpleCount,
  ComplexCount,
};

enum class AnswerFormat { YesNo, Numeric, RuralUrban, FloodedNonFlooded, FreeShort };

enum class SftStyle { Direct, Cot };

std::string_view to_string(Dataset d);
std::string_view to_string(QuestionType t);
std::string_view to_string(AnswerFormat f);
std::string_view to_string(SftStyle s);

// Canonical names only; throw Error(Validation) on anything else.
Dataset parse_dataset(std::string_view name);
AnswerFormat parse_answer_format(std::string_view name);
SftStyle parse_sft_style(std::string_view name);

// Accepts the canonical names plus common spellings found in annotation
// files ("Comparison", "counting", "Rural/Urban", "Yes-No", ...).
std::optional<QuestionType> question_type_from_label(std::string_view label);

// Dataset / question-type compatibility from the datasets overview table.
bool dataset_allows(Dataset d, QuestionType t);
AnswerFormat answer_format_for(QuestionType t);

/// Lowercase, trimmed answer text. `numeric_value` is present iff the answer
/// was normalized under AnswerFormat::Numeric, in which case `text` is its
/// decimal rendering.
struct CanonicalAnswer {
  std::string text;
  std::optional<std::int64_t> numeric_value;

  friend bool operator==(const CanonicalAnswer&, const CanonicalAnswer&) = default;
};

struct QaRecord {
  std::string id;
  Dataset dataset = Dataset::RsvqaLr;
  std::string image_ref;
  std::string question;
  CanonicalAnswer ground_truth;
  QuestionType question_type = QuestionType::Comp;
  AnswerFormat answer_format = AnswerFormat::YesNo;

  friend bool operator==(const QaRecord&, const QaRecord&) = default;
};

struct SftExample {
  std::string qa_id;
  SftStyle style = SftStyle::Direct;
  std::string prompt;
  std::string target;

  friend bool operator==(const SftExample&, const SftExample&) = default;
};

}  // namespace cotalign
