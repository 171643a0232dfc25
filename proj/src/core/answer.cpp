#include "cotalign/core/answer.hpp"

#include <cctype>
#include <charconv>
#include <limits>

#include "cotalign/error.hpp"

namespace cotalign {

namespace {

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

bool is_terminal_punct(char c) { return c == '.' || c == ',' || c == '!'; }

std::string collapse_whitespace(std::string_view s) {
  std::string out;
  bool pending_space = false;
  for (char c : s) {
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out += ' ';
    pending_space = false;
    out += c;
  }
  return out;
}

std::string strip_terminal(std::string s) {
  while (!s.empty() && (is_terminal_punct(s.back()) || is_space(s.back()))) s.pop_back();
  return s;
}

}  // namespace

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

std::optional<CanonicalAnswer> try_normalize_answer(std::string_view raw, AnswerFormat format) {
  std::string text = strip_terminal(collapse_whitespace(ascii_lower(raw)));
  if (text.empty()) return std::nullopt;

  if (format == AnswerFormat::Numeric) {
    for (char c : text) {
      if (c < '0' || c > '9') return std::nullopt;
    }
    std::int64_t value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size()) return std::nullopt;
    return CanonicalAnswer{std::to_string(value), value};
  }

  if (format == AnswerFormat::FloodedNonFlooded) {
    if (text == "non flooded" || text == "nonflooded" || text == "non_flooded" ||
        text == "not flooded") {
      text = "non-flooded";
    }
  }
  return CanonicalAnswer{std::move(text), std::nullopt};
}

CanonicalAnswer normalize_answer(std::string_view raw, AnswerFormat format) {
  auto normalized = try_normalize_answer(raw, format);
  if (!normalized) {
    fail(ErrorKind::Validation, "unparseable " + std::string(to_string(format)) + " answer '" +
                                    std::string(raw) + "'");
  }
  return *std::move(normalized);
}

bool answers_match(const CanonicalAnswer& a, const CanonicalAnswer& b) {
  if (a.numeric_value && b.numeric_value) return *a.numeric_value == *b.numeric_value;
  return a.text == b.text;
}

}  // namespace cotalign
