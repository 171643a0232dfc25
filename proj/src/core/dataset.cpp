#include "cotalign/core/dataset.hpp"

#include <unordered_set>

#include "cotalign/core/jsonl.hpp"

namespace cotalign {

namespace {

std::vector<QaRecord> parse_lines(std::string_view source, std::optional<Dataset> dataset) {
  std::vector<QaRecord> out;
  std::unordered_set<std::string> seen;
  for (auto& l : parse_jsonl_lines(source)) {
    FieldReader f(l.value, l.line);
    if (dataset) {
      if (f.has("dataset") && f.str("dataset") != to_string(*dataset)) {
        f.fail("dataset", "line tagged '" + f.str("dataset") + "' but input is " +
                              std::string(to_string(*dataset)));
      }
      l.value["dataset"] = to_string(*dataset);
    }
    auto record = JsonlCodec<QaRecord>::decode(f);
    if (!seen.insert(record.id).second) f.fail("id", "duplicate id '" + record.id + "'");
    out.push_back(std::move(record));
  }
  return out;
}

}  // namespace

std::vector<QaRecord> parse_qa_dataset(std::string_view source, Dataset dataset) {
  return parse_lines(source, dataset);
}

std::vector<QaRecord> read_qa_jsonl(std::string_view source, std::optional<Dataset> override_dataset) {
  return parse_lines(source, override_dataset);
}

}  // namespace cotalign
