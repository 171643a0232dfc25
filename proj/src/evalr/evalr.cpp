#include "cotalign/evalr/evalr.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <unordered_map>

#include "cotalign/core/answer.hpp"
#include "cotalign/distill/distill.hpp"
#include "cotalign/error.hpp"

namespace cotalign {

EvalOutcome judge(std::string_view prediction, const QaRecord& record, SftStyle style) {
  EvalOutcome out;
  out.qa_id = record.id;
  out.question_type = record.question_type;
  if (style == SftStyle::Cot) {
    try {
      out.predicted = extract_final_answer(prediction, record.answer_format).answer;
    } catch (const Error&) {
      out.reason = "missing_marker";
      return out;
    }
  } else {
    out.predicted = try_normalize_answer(prediction, record.answer_format);
  }
  if (!out.predicted) {
    out.reason = "unparseable";
    return out;
  }
  out.correct = answers_match(*out.predicted, record.ground_truth);
  if (!out.correct) out.reason = "mismatch";
  return out;
}

EvalReport aggregate(std::span<const EvalOutcome> outcomes) {
  if (outcomes.empty()) fail(ErrorKind::Validation, "cannot aggregate an empty outcome set");
  EvalReport r;
  for (const auto& o : outcomes) {
    auto& t = r.per_type[o.question_type];
    ++t.total;
    ++r.total;
    if (o.correct) {
      ++t.correct;
      ++r.correct;
    }
  }
  r.overall_accuracy = static_cast<double>(r.correct) / static_cast<double>(r.total);
  for (auto& [type, t] : r.per_type) {
    t.accuracy = static_cast<double>(t.correct) / static_cast<double>(t.total);
  }
  return r;
}

std::vector<Deviation> compare_reports(const EvalReport& candidate, const EvalReport& reference,
                                       double tolerance) {
  bool same_partition = candidate.per_type.size() == reference.per_type.size();
  for (const auto& [type, _] : candidate.per_type) {
    same_partition = same_partition && reference.per_type.count(type) == 1;
  }
  if (!same_partition) {
    fail(ErrorKind::Validation, "reports cover different question types");
  }

  std::vector<Deviation> out;
  auto check = [&](std::string cell, double c, double r) {
    double diff = std::abs(c - r);
    if (diff > tolerance) out.push_back({std::move(cell), c, r, diff});
  };
  check("overall", candidate.overall_accuracy, reference.overall_accuracy);
  for (const auto& [type, tally] : candidate.per_type) {
    check(std::string(to_string(type)), tally.accuracy, reference.per_type.at(type).accuracy);
  }
  return out;
}

std::string format_accuracy(double accuracy) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", accuracy);
  return buf;
}

namespace {

std::string column_title(QuestionType t) {
  switch (t) {
    case QuestionType::Comp: return "Comp";
    case QuestionType::Count: return "Count";
    case QuestionType::Presence: return "Presence";
    case QuestionType::RuralUrban: return "Rural/Urban";
    case QuestionType::YesNo: return "Yes/No";
    case QuestionType::ConditionRecognition: return "Condition";
    case QuestionType::SimpleCount: return "Simple Count";
    case QuestionType::ComplexCount: return "Complex Count";
  }
  return "?";
}

}  // namespace

std::string render_table(const EvalReport& report, std::string_view label) {
  std::vector<std::string> header{"Approach", "Total Samples", "Correct", "Overall Accuracy"};
  std::vector<std::string> row{std::string(label), std::to_string(report.total),
                               std::to_string(report.correct),
                               format_accuracy(report.overall_accuracy)};

  std::vector<QuestionType> columns{QuestionType::Comp, QuestionType::Count,
                                    QuestionType::Presence, QuestionType::RuralUrban};
  for (const auto& [type, _] : report.per_type) {
    if (std::find(columns.begin(), columns.end(), type) == columns.end()) columns.push_back(type);
  }
  for (auto type : columns) {
    header.push_back(column_title(type));
    auto it = report.per_type.find(type);
    row.push_back(it == report.per_type.end() ? "-" : format_accuracy(it->second.accuracy));
  }

  std::string head_line, rule, body;
  for (std::size_t i = 0; i < header.size(); ++i) {
    auto width = std::max(header[i].size(), row[i].size());
    auto pad = [&](const std::string& s) {
      return i == 0 ? s + std::string(width - s.size(), ' ') : std::string(width - s.size(), ' ') + s;
    };
    if (i) {
      head_line += "  ";
      rule += "  ";
      body += "  ";
    }
    head_line += pad(header[i]);
    rule += std::string(width, '-');
    body += pad(row[i]);
  }
  return head_line + '\n' + rule + '\n' + body + '\n';
}

Json EvalReport::to_json() const {
  Json types = Json::object();
  for (const auto& [type, t] : per_type) {
    types[std::string(to_string(type))] =
        Json{{"total", t.total}, {"correct", t.correct}, {"accuracy", t.accuracy}};
  }
  return Json{{"total", total},
              {"correct", correct},
              {"overall_accuracy", overall_accuracy},
              {"overall_accuracy_4dp", format_accuracy(overall_accuracy)},
              {"per_type", std::move(types)}};
}

EvalReport EvalReport::from_json(const Json& j) {
  FieldReader f(j, 1);
  EvalReport r;
  r.total = static_cast<std::size_t>(f.uinteger("total"));
  r.correct = static_cast<std::size_t>(f.uinteger("correct"));
  r.overall_accuracy = f.num("overall_accuracy");
  if (f.has("per_type")) {
    for (const auto& [name, cell] : f.at("per_type").items()) {
      auto type = question_type_from_label(name);
      if (!type) f.fail("per_type", "unknown question type '" + name + "'");
      FieldReader c(cell, 1);
      r.per_type[*type] = TypeTally{static_cast<std::size_t>(c.uinteger("total")),
                                    static_cast<std::size_t>(c.uinteger("correct")),
                                    c.num("accuracy")};
    }
  }
  return r;
}

Json JsonlCodec<Prediction>::encode(const Prediction& r) {
  return Json{{"qa_id", r.qa_id}, {"output", r.output}};
}

Prediction JsonlCodec<Prediction>::decode(const FieldReader& f) {
  return Prediction{f.str("qa_id"), f.str("output")};
}

std::vector<EvalOutcome> judge_all(std::span<const QaRecord> records,
                                   std::span<const Prediction> predictions, SftStyle style) {
  std::unordered_map<std::string_view, const Prediction*> by_id;
  for (const auto& p : predictions) {
    if (!by_id.emplace(p.qa_id, &p).second) {
      fail(ErrorKind::Validation, "duplicate prediction for qa_id '" + p.qa_id + "'");
    }
  }
  std::vector<EvalOutcome> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    auto it = by_id.find(r.id);
    if (it == by_id.end()) {
      out.push_back(EvalOutcome{r.id, r.question_type, std::nullopt, false, "missing_prediction"});
      continue;
    }
    out.push_back(judge(it->second->output, r, style));
    by_id.erase(it);
  }
  if (!by_id.empty()) {
    fail(ErrorKind::Validation,
         "prediction for unknown qa_id '" + std::string(by_id.begin()->first) + "'");
  }
  return out;
}

}  // namespace cotalign
