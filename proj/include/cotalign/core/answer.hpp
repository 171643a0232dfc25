#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "cotalign/core/types.hpp"

namespace cotalign {

/// Comparison form of an answer: ASCII-lowercased, internal whitespace runs
/// collapsed, surrounding whitespace and trailing `.` `,` `!` removed.
/// Numeric answers must be base-10 digits after that and are re-rendered
/// from their integer value, so "03" becomes "3". FloodNet condition answers
/// are spelled "flooded" / "non-flooded".
///
/// Returns nullopt when the answer is unparseable (empty, or non-integer
/// content under the numeric format).
std::optional<CanonicalAnswer> try_normalize_answer(std::string_view raw, AnswerFormat format);

/// As try_normalize_answer, but throws Error(Validation) when unparseable.
CanonicalAnswer normalize_answer(std::string_view raw, AnswerFormat format);

/// Exact match of canonical forms; numeric answers compare as integers.
bool answers_match(const CanonicalAnswer& a, const CanonicalAnswer& b);

std::string trim(std::string_view s);
std::string ascii_lower(std::string_view s);

}  // namespace cotalign
