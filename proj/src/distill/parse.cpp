#include <cctype>
#include <cmath>
#include <string>
#include <vector>

#include "cotalign/core/answer.hpp"
#include "cotalign/distill/distill.hpp"
#include "cotalign/error.hpp"

namespace cotalign {

namespace {

struct MarkerHit {
  std::size_t start;         // first '#'
  std::size_t answer_begin;  // first byte after ':'
};

char lower(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

bool is_blank(char c) { return c == ' ' || c == '\t'; }

// `### Answer:` with 1-3 hashes, case-insensitive, optional blanks around
// the word. A longer run of hashes is not a marker.
std::vector<MarkerHit> find_markers(std::string_view s) {
  std::vector<MarkerHit> hits;
  constexpr std::string_view kWord = "answer";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '#' || (i > 0 && s[i - 1] == '#')) continue;
    std::size_t j = i;
    while (j < s.size() && s[j] == '#') ++j;
    if (j - i > 3) continue;
    while (j < s.size() && is_blank(s[j])) ++j;
    if (s.size() - j < kWord.size()) continue;
    bool word = true;
    for (std::size_t k = 0; k < kWord.size(); ++k) word = word && lower(s[j + k]) == kWord[k];
    if (!word) continue;
    j += kWord.size();
    while (j < s.size() && is_blank(s[j])) ++j;
    if (j < s.size() && s[j] == ':') hits.push_back({i, j + 1});
  }
  return hits;
}

[[noreturn]] void verdict_fail(const std::string& what) {
  fail(ErrorKind::VerdictParse, "verifier reply: " + what);
}

// Index one past the '}' that closes the object opened at `open`, or npos.
std::size_t match_brace(std::string_view s, std::size_t open) {
  int depth = 0;
  bool in_string = false;
  for (std::size_t i = open; i < s.size(); ++i) {
    char c = s[i];
    if (in_string) {
      if (c == '\\') {
        ++i;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{') {
      ++depth;
    } else if (c == '}') {
      if (--depth == 0) return i + 1;
    }
  }
  return std::string_view::npos;
}

std::optional<Json> first_object(std::string_view raw) {
  for (auto open = raw.find('{'); open != std::string_view::npos; open = raw.find('{', open + 1)) {
    auto close = match_brace(raw, open);
    if (close == std::string_view::npos) continue;
    Json v = Json::parse(raw.substr(open, close - open), nullptr, false);
    if (!v.is_discarded() && v.is_object()) return v;
  }
  return std::nullopt;
}

// Replies that copy the template literally list the fields without braces.
std::optional<Json> bare_field_list(std::string_view raw) {
  auto first = raw.find("\"rationale_logically_valid\"");
  if (first == std::string_view::npos) return std::nullopt;
  std::string body(raw.substr(first));
  if (auto fence = body.find("```"); fence != std::string::npos) body.resize(fence);
  while (!body.empty() && (body.back() == ',' || std::isspace(static_cast<unsigned char>(body.back())))) {
    body.pop_back();
  }
  Json v = Json::parse("{" + body + "}", nullptr, false);
  if (v.is_discarded() || !v.is_object()) return std::nullopt;
  return v;
}

bool need_bool(const Json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) verdict_fail(std::string("missing field '") + key + "'");
  if (!it->is_boolean()) verdict_fail(std::string("field '") + key + "' is not a boolean");
  return it->get<bool>();
}

double need_score(const Json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) verdict_fail(std::string("missing field '") + key + "'");
  if (!it->is_number()) verdict_fail(std::string("field '") + key + "' is not a number");
  double v = it->get<double>();
  if (!std::isfinite(v) || v < 0.0 || v > 10.0) {
    verdict_fail(std::string("field '") + key + "' is outside [0, 10]");
  }
  return v;
}

std::string need_string(const Json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) verdict_fail(std::string("missing field '") + key + "'");
  if (!it->is_string()) verdict_fail(std::string("field '") + key + "' is not a string");
  return it->get<std::string>();
}

}  // namespace

std::size_t count_answer_markers(std::string_view raw) { return find_markers(raw).size(); }

ExtractedAnswer extract_final_answer(std::string_view raw, AnswerFormat format) {
  auto hits = find_markers(raw);
  if (hits.empty()) fail(ErrorKind::MissingMarker, "no '### Answer:' marker in output");
  const auto& last = hits.back();
  auto line_end = raw.find('\n', last.answer_begin);
  auto tail = raw.substr(last.answer_begin,
                         line_end == std::string_view::npos ? std::string_view::npos
                                                            : line_end - last.answer_begin);
  ExtractedAnswer out;
  out.rationale = trim(raw.substr(0, last.start));
  out.answer_text = trim(tail);
  out.answer = try_normalize_answer(out.answer_text, format);
  return out;
}

VerifierVerdict parse_verdict(std::string_view raw) {
  auto obj = first_object(raw);
  if (!obj) obj = bare_field_list(raw);
  if (!obj) verdict_fail("no JSON object found");

  VerifierVerdict v;
  v.rationale_logically_valid = need_bool(*obj, "rationale_logically_valid");
  v.rationale_consistent_with_image = need_bool(*obj, "rationale_consistent_with_image");
  v.rationale_correctness_score = need_score(*obj, "rationale_correctness_score");
  v.rationale_quality_score = need_score(*obj, "rationale_quality_score");
  v.answer_follows_from_rationale = need_bool(*obj, "answer_follows_from_rationale");
  v.answer_matches_ground_truth = need_bool(*obj, "answer_matches_ground_truth");
  auto who = ascii_lower(trim(need_string(*obj, "correct_answer")));
  if (who == "model") {
    v.correct_answer = CorrectAnswer::Model;
  } else if (who == "ground_truth" || who == "ground truth") {
    v.correct_answer = CorrectAnswer::GroundTruth;
  } else {
    verdict_fail("field 'correct_answer' must be \"model\" or \"ground_truth\"");
  }
  v.explanation = need_string(*obj, "explanation");
  return v;
}

Json verdict_to_json(const VerifierVerdict& v) {
  return Json{
      {"rationale_logically_valid", v.rationale_logically_valid},
      {"rationale_consistent_with_image", v.rationale_consistent_with_image},
      {"rationale_correctness_score", v.rationale_correctness_score},
      {"rationale_quality_score", v.rationale_quality_score},
      {"answer_follows_from_rationale", v.answer_follows_from_rationale},
      {"answer_matches_ground_truth", v.answer_matches_ground_truth},
      {"correct_answer", v.correct_answer == CorrectAnswer::Model ? "model" : "ground_truth"},
      {"explanation", v.explanation},
  };
}

}  // namespace cotalign
