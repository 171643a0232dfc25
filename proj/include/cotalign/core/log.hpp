#pragma once

#include <mutex>
#include <ostream>
#include <string>
#include <string_view>

#include "cotalign/core/jsonl.hpp"

namespace cotalign {

/// Structured JSON-lines log: {"ts", "stage", "qa_id"?, "event", ...}.
/// A default-constructed logger discards everything.
class Logger {
 public:
  Logger() = default;
  explicit Logger(std::ostream* sink) : sink_(sink) {}

  void event(std::string_view stage, std::string_view event, std::string_view qa_id = {},
             Json extra = Json::object()) const;

  bool enabled() const { return sink_ != nullptr; }

 private:
  std::ostream* sink_ = nullptr;
  mutable std::mutex mu_;
};

}  // namespace cotalign
