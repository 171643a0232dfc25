#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cotalign/core/types.hpp"
#include "cotalign/error.hpp"

namespace cotalign {

using Json = nlohmann::ordered_json;

/// Typed field access on one parsed JSONL object. Every failure names the
/// field and the 1-based line number.
class FieldReader {
 public:
  FieldReader(const Json& object, std::size_t line) : obj_(object), line_(line) {}

  bool has(std::string_view key) const;
  const Json& at(std::string_view key) const;

  std::string str(std::string_view key) const;
  std::optional<std::string> opt_str(std::string_view key) const;
  double num(std::string_view key) const;
  std::int64_t integer(std::string_view key) const;
  std::uint64_t uinteger(std::string_view key) const;
  bool boolean(std::string_view key) const;
  FieldReader object(std::string_view key) const;

  std::size_t line() const { return line_; }
  const Json& json() const { return obj_; }

  [[noreturn]] void fail(std::string_view key, std::string_view what) const;

 private:
  const Json& obj_;
  std::size_t line_;
};

// Specialize with
//   static Json encode(const T&);
//   static T decode(const FieldReader&);
template <class T>
struct JsonlCodec;

struct JsonlLine {
  std::size_t line;  // 1-based
  Json value;
};

/// Splits on '\n', skips blank lines, requires each line to be a JSON object.
std::vector<JsonlLine> parse_jsonl_lines(std::string_view text);

std::string dump_line(const Json& value);

template <class T>
std::string write_jsonl(std::span<const T> records) {
  std::string out;
  for (const auto& r : records) {
    out += dump_line(JsonlCodec<T>::encode(r));
    out += '\n';
  }
  return out;
}

template <class T>
std::string write_jsonl(const std::vector<T>& records) {
  return write_jsonl(std::span<const T>(records));
}

template <class T>
std::vector<T> read_jsonl(std::string_view text) {
  std::vector<T> out;
  for (const auto& l : parse_jsonl_lines(text)) {
    out.push_back(JsonlCodec<T>::decode(FieldReader(l.value, l.line)));
  }
  return out;
}

template <>
struct JsonlCodec<QaRecord> {
  static Json encode(const QaRecord& r);
  static QaRecord decode(const FieldReader& f);
};

template <>
struct JsonlCodec<SftExample> {
  static Json encode(const SftExample& r);
  static SftExample decode(const FieldReader& f);
};

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace cotalign
