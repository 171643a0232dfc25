#pragma once

#include <optional>
#include <string_view>
#include <vector>

#include "cotalign/core/types.hpp"

namespace cotalign {

/// Parses a normalized annotation stream: one JSON object per line with
/// {id, image, question, answer, type}. A per-line "dataset" field, when
/// present, must agree with `dataset`.
///
/// Record order is preserved. Errors name the line number and, for type
/// mismatches, the offending label. Duplicate ids are rejected.
std::vector<QaRecord> parse_qa_dataset(std::string_view source, Dataset dataset);

/// Like parse_qa_dataset, but takes the dataset tag from each line unless
/// `override_dataset` is given.
std::vector<QaRecord> read_qa_jsonl(std::string_view source,
                                    std::optional<Dataset> override_dataset = std::nullopt);

}  // namespace cotalign
