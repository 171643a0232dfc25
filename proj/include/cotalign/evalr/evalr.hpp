#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cotalign/core/jsonl.hpp"
#include "cotalign/core/types.hpp"

namespace cotalign {

struct EvalOutcome {
  std::string qa_id;
  QuestionType question_type = QuestionType::Comp;
  std::optional<CanonicalAnswer> predicted;  // nullopt: unparseable
  bool correct = false;
  std::string reason;  // "", missing_marker, unparseable, mismatch, missing_prediction
};

struct TypeTally {
  std::size_t total = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;

  friend bool operator==(const TypeTally&, const TypeTally&) = default;
};

struct EvalReport {
  std::size_t total = 0;
  std::size_t correct = 0;
  double overall_accuracy = 0.0;
  std::map<QuestionType, TypeTally> per_type;

  Json to_json() const;
  static EvalReport from_json(const Json& j);
};

/// Never throws on model output: every failure mode becomes an incorrect
/// outcome with a reason tag.
EvalOutcome judge(std::string_view prediction, const QaRecord& record, SftStyle style);

/// Exact integer counts; accuracy = correct / total. Throws
/// Error(Validation) on empty input.
EvalReport aggregate(std::span<const EvalOutcome> outcomes);

struct Deviation {
  std::string cell;  // "overall" or a question-type name
  double candidate = 0.0;
  double reference = 0.0;
  double difference = 0.0;  // |candidate - reference|
};

/// Accuracy cells whose absolute difference exceeds `tolerance`. Reports
/// must cover the same question types.
std::vector<Deviation> compare_reports(const EvalReport& candidate, const EvalReport& reference,
                                       double tolerance);

/// Four-decimal rendering used in tables and reports.
std::string format_accuracy(double accuracy);

/// Plain-text table: Total Samples, Correct, Overall Accuracy, then Comp,
/// Count, Presence, Rural/Urban and any other types present.
std::string render_table(const EvalReport& report, std::string_view label = "Run");

struct Prediction {
  std::string qa_id;
  std::string output;
};

template <>
struct JsonlCodec<Prediction> {
  static Json encode(const Prediction& r);
  static Prediction decode(const FieldReader& f);
};

/// Judges every record in record order. A record without a prediction is
/// incorrect ("missing_prediction"); a prediction for an unknown id or a
/// duplicate prediction is a validation error.
std::vector<EvalOutcome> judge_all(std::span<const QaRecord> records,
                                   std::span<const Prediction> predictions, SftStyle style);

}  // namespace cotalign
