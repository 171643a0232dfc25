#pragma once

#include <stdexcept>
#include <string>

namespace cotalign {

enum class ErrorKind {
  Validation,
  Io,
  Transport,             // retries exhausted, connection failure, timeout
  Request,               // non-retryable HTTP 4xx
  Protocol,              // malformed endpoint response
  MissingMarker,         // no `### Answer:` line
  VerdictParse,          // verifier reply failed schema validation
  UnsupportedCapability, // endpoint cannot provide what was asked
  Divergence,            // toy trainer loss blew up
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace cotalign
