#pragma once

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cotalign/core/jsonl.hpp"
#include "cotalign/core/types.hpp"

namespace testsupport {

namespace fs = std::filesystem;
using cotalign::Json;

inline std::string fixture_path(const std::string& name) {
  return std::string(COTALIGN_FIXTURE_DIR) + "/" + name;
}

inline std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void spit(const fs::path& p, const std::string& data) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  out << data;
}

class TempDir {
 public:
  TempDir() {
    std::string tmpl = (fs::temp_directory_path() / "cotalign-test-XXXXXX").string();
    if (!mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  std::string operator/(const std::string& name) const { return (path_ / name).string(); }

 private:
  fs::path path_;
};

inline std::string to_jsonl(const std::vector<Json>& lines) {
  std::string out;
  for (const auto& l : lines) out += l.dump() + "\n";
  return out;
}

/// Mock transcript entry answering every request that matches `match`.
inline Json entry(Json match, std::vector<std::string> choices) {
  return Json{{"match", std::move(match)}, {"choices", std::move(choices)}};
}

/// Entry serving `responses` in order (the last repeats).
inline Json scripted(Json match, std::vector<Json> responses) {
  return Json{{"match", std::move(match)}, {"responses", std::move(responses)}};
}

inline std::string verdict_text(bool valid, double correctness, double quality, bool matches,
                                const std::string& who = "ground_truth") {
  Json v{{"rationale_logically_valid", valid},
         {"rationale_consistent_with_image", true},
         {"rationale_correctness_score", correctness},
         {"rationale_quality_score", quality},
         {"answer_follows_from_rationale", true},
         {"answer_matches_ground_truth", matches},
         {"correct_answer", who},
         {"explanation", "Grounded in visible roads and fields."}};
  return "Here is my assessment:\n```json\n" + v.dump(2) + "\n```";
}

/// A deterministic corpus with a matching mock transcript covering the
/// teacher, verifier and policy endpoints. Records exercise every filter
/// outcome, regeneration, and all-correct / all-incorrect candidate sets.
struct Corpus {
  std::vector<Json> qa_lines;
  std::vector<Json> transcript;
};

inline std::string wrong_answer(const std::string& type, const std::string& gt) {
  if (type == "count") return std::to_string(std::stoi(gt) + 1);
  if (type == "rural_urban") return gt == "rural" ? "urban" : "rural";
  return gt == "yes" ? "no" : "yes";
}

inline Corpus synthetic_corpus(int n) {
  static const char* kTypes[] = {"presence", "comp", "count", "rural_urban"};
  Corpus c;
  for (int i = 0; i < n; ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "q%03d", i);
    const std::string tag = std::string("[") + id + "]";
    const std::string type = kTypes[i % 4];
    std::string question, gt;
    if (type == "presence") {
      question = "Is a road present in the image? " + tag;
      gt = i % 8 == 0 ? "yes" : "no";
    } else if (type == "comp") {
      question = "Are there more buildings than water areas? " + tag;
      gt = i % 3 == 0 ? "no" : "yes";
    } else if (type == "count") {
      question = "How many residential buildings are there? " + tag;
      gt = std::to_string(i % 5);
    } else {
      question = "Is it a rural or an urban area? " + tag;
      gt = i % 2 ? "rural" : "urban";
    }
    c.qa_lines.push_back(Json{{"id", id},
                              {"dataset", "rsvqa_lr"},
                              {"image", std::string("images/") + id + ".tif"},
                              {"question", question},
                              {"answer", gt},
                              {"type", type}});

    const std::string body = "The image shows roads, fields and buildings around item " +
                             std::string(id) + ". The layout supports the conclusion.";
    const std::string good = body + "\n### Answer: " + gt;
    const std::string bad = body + "\n### Answer: " + wrong_answer(type, gt);

    // Teacher: every 11th record first omits the marker and is regenerated;
    // every 7th answers wrongly.
    Json teacher_match{{"model", "teacher-model"}, {"contains", tag}};
    if (i % 11 == 5) {
      c.transcript.push_back(scripted(teacher_match, {Json{{"choices", {body}}},
                                                      Json{{"choices", {good}}}}));
    } else {
      c.transcript.push_back(entry(teacher_match, {i % 7 == 3 ? bad : good}));
    }

    // Verifier: every 5th rationale scores below the quality threshold.
    const bool low = i % 5 == 2;
    c.transcript.push_back(entry(Json{{"model", "verifier-model"}, {"contains", tag}},
                                 {verdict_text(true, low ? 6.0 : 8.5, low ? 5.0 : 8.0,
                                               i % 7 != 3)}));

    // Policy candidates: mixed by default, all correct every 9th record,
    // all incorrect every 13th.
    std::vector<std::string> low_t, high_t;
    for (int k = 0; k < 4; ++k) {
      const bool all_ok = i % 9 == 4, all_bad = i % 13 == 6;
      const bool ok_low = all_ok || (!all_bad && (k + i) % 3 != 0);
      const bool ok_high = all_ok || (!all_bad && (k + i) % 2 == 0);
      low_t.push_back((ok_low ? good : bad) + (k ? "" : " "));
      high_t.push_back((ok_high ? good : bad) + "\n" + std::string(k + 1, ' '));
    }
    c.transcript.push_back(
        entry(Json{{"model", "policy-model"}, {"contains", tag}, {"temperature", 0.2}}, low_t));
    c.transcript.push_back(
        entry(Json{{"model", "policy-model"}, {"contains", tag}, {"temperature", 0.6}}, high_t));
  }
  return c;
}

inline Json corpus_config(const std::string& mock_path) {
  return Json{{"endpoints",
               {{"teacher", {{"model", "teacher-model"}}},
                {"verifier", {{"model", "verifier-model"}}},
                {"policy", {{"model", "policy-model"}}}}},
              {"seed", 20240917},
              {"concurrency", 4},
              {"paths", {{"mock", mock_path}}}};
}

/// One data row of the published results table: total, correct, and the
/// printed overall accuracy.
struct ResultsRow {
  std::string label;
  long total = 0;
  long correct = 0;
  std::string overall;
};

inline std::string strip_markup(std::string s) {
  for (const char* tok : {"\\textbf{", "}", "\\\\"}) {
    for (auto pos = s.find(tok); pos != std::string::npos; pos = s.find(tok)) {
      s.erase(pos, std::char_traits<char>::length(tok));
    }
  }
  const auto b = s.find_first_not_of(" \t");
  const auto e = s.find_last_not_of(" \t");
  return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

/// Rows of the results table read from the source document (lines with an integer
/// sample count in the second cell).
inline std::vector<ResultsRow> published_results_rows() {
  std::istringstream in(slurp(COTALIGN_RESULTS_DOC));
  std::vector<ResultsRow> rows;
  for (std::string line; std::getline(in, line);) {
    std::vector<std::string> cells;
    std::istringstream cs(line);
    for (std::string c; std::getline(cs, c, '&');) cells.push_back(strip_markup(c));
    if (cells.size() < 8 || cells[1].empty() ||
        cells[1].find_first_not_of("0123456789") != std::string::npos) {
      continue;
    }
    rows.push_back({cells[0], std::stol(cells[1]), std::stol(cells[2]), cells[3]});
  }
  return rows;
}

inline const char* kToyVocab =
    "# toy vocabulary\n<unk>\nthe\nimage\nshows\nroads\nanswer\nyes\nno\nrural\nurban\n0\n1\n2\n3\n4\n5\n";

}  // namespace testsupport
