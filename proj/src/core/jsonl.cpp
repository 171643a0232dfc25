#include "cotalign/core/jsonl.hpp"

#include <fstream>
#include <sstream>

#include "cotalign/core/answer.hpp"

namespace cotalign {

namespace {

std::string where(std::size_t line, std::string_view key) {
  return "line " + std::to_string(line) + ", field '" + std::string(key) + "'";
}

}  // namespace

bool FieldReader::has(std::string_view key) const {
  auto it = obj_.find(key);
  return it != obj_.end() && !it->is_null();
}

const Json& FieldReader::at(std::string_view key) const {
  auto it = obj_.find(key);
  if (it == obj_.end() || it->is_null()) fail(key, "missing");
  return *it;
}

void FieldReader::fail(std::string_view key, std::string_view what) const {
  cotalign::fail(ErrorKind::Validation, where(line_, key) + ": " + std::string(what));
}

std::string FieldReader::str(std::string_view key) const {
  const auto& v = at(key);
  if (!v.is_string()) fail(key, "expected string");
  return v.get<std::string>();
}

std::optional<std::string> FieldReader::opt_str(std::string_view key) const {
  if (!has(key)) return std::nullopt;
  return str(key);
}

double FieldReader::num(std::string_view key) const {
  const auto& v = at(key);
  if (!v.is_number()) fail(key, "expected number");
  return v.get<double>();
}

std::int64_t FieldReader::integer(std::string_view key) const {
  const auto& v = at(key);
  if (v.is_number_unsigned()) {
    auto u = v.get<std::uint64_t>();
    if (u > static_cast<std::uint64_t>(INT64_MAX)) fail(key, "integer out of range");
    return static_cast<std::int64_t>(u);
  }
  if (!v.is_number_integer()) fail(key, "expected integer");
  return v.get<std::int64_t>();
}

std::uint64_t FieldReader::uinteger(std::string_view key) const {
  const auto& v = at(key);
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<std::int64_t>() >= 0) {
    return static_cast<std::uint64_t>(v.get<std::int64_t>());
  }
  fail(key, "expected non-negative integer");
}

bool FieldReader::boolean(std::string_view key) const {
  const auto& v = at(key);
  if (!v.is_boolean()) fail(key, "expected boolean");
  return v.get<bool>();
}

FieldReader FieldReader::object(std::string_view key) const {
  const auto& v = at(key);
  if (!v.is_object()) fail(key, "expected object");
  return FieldReader(v, line_);
}

std::vector<JsonlLine> parse_jsonl_lines(std::string_view text) {
  std::vector<JsonlLine> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    auto end = nl == std::string_view::npos ? text.size() : nl;
    auto line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;

    Json value = Json::parse(line, nullptr, false);
    if (value.is_discarded()) {
      fail(ErrorKind::Validation, "line " + std::to_string(line_no) + ": malformed JSON");
    }
    if (!value.is_object()) {
      fail(ErrorKind::Validation, "line " + std::to_string(line_no) + ": expected a JSON object");
    }
    out.push_back({line_no, std::move(value)});
  }
  return out;
}

std::string dump_line(const Json& value) {
  try {
    return value.dump();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Validation, std::string("cannot serialize record: ") + e.what());
  }
}

Json JsonlCodec<QaRecord>::encode(const QaRecord& r) {
  return Json{{"id", r.id},
              {"dataset", to_string(r.dataset)},
              {"image", r.image_ref},
              {"question", r.question},
              {"answer", r.ground_truth.text},
              {"type", to_string(r.question_type)}};
}

QaRecord JsonlCodec<QaRecord>::decode(const FieldReader& f) {
  QaRecord r;
  r.id = f.str("id");
  try {
    r.dataset = parse_dataset(f.str("dataset"));
  } catch (const Error& e) {
    f.fail("dataset", e.what());
  }
  r.image_ref = f.str("image");
  r.question = f.str("question");
  auto type = question_type_from_label(f.str("type"));
  if (!type || !dataset_allows(r.dataset, *type)) {
    f.fail("type", "question type '" + f.str("type") + "' is not valid for dataset " +
                       std::string(to_string(r.dataset)));
  }
  r.question_type = *type;
  r.answer_format = answer_format_for(*type);

  const auto& answer = f.at("answer");
  std::string raw;
  if (answer.is_string()) {
    raw = answer.get<std::string>();
  } else if (answer.is_number_integer()) {
    raw = answer.dump();
  } else {
    f.fail("answer", "expected string");
  }
  auto gt = try_normalize_answer(raw, r.answer_format);
  if (!gt) f.fail("answer", "unparseable " + std::string(to_string(r.answer_format)) + " answer");
  r.ground_truth = *std::move(gt);
  return r;
}

Json JsonlCodec<SftExample>::encode(const SftExample& r) {
  return Json{{"qa_id", r.qa_id},
              {"style", to_string(r.style)},
              {"prompt", r.prompt},
              {"target", r.target}};
}

SftExample JsonlCodec<SftExample>::decode(const FieldReader& f) {
  SftExample r;
  r.qa_id = f.str("qa_id");
  try {
    r.style = parse_sft_style(f.str("style"));
  } catch (const Error& e) {
    f.fail("style", e.what());
  }
  r.prompt = f.str("prompt");
  r.target = f.str("target");
  return r;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot open '" + path.string() + "' for writing");
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) fail(ErrorKind::Io, "write to '" + path.string() + "' failed");
}

}  // namespace cotalign
