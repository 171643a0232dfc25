#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cotalign/core/jsonl.hpp"
#include "cotalign/core/log.hpp"

namespace cotalign {

struct EndpointConfig {
  std::string name;  // role label used in logs and env overrides (teacher, verifier, ...)
  std::string base_url;
  std::string model_name;
  std::optional<std::string> api_key;
  double timeout_s = 120.0;
  int max_retries = 3;
  int max_in_flight = 4;
  double backoff_initial_s = 1.0;
  // When false, a request for n samples is issued as n sequential n=1 calls.
  bool supports_n = true;

  void validate() const;
};

enum class Role { System, User };

struct ChatMessage {
  Role role = Role::User;
  std::string text;
  std::optional<std::string> image_ref;
};

struct ChatRequest {
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
  int n = 1;
  int max_tokens = 1024;
  std::optional<std::int64_t> seed;
  bool logprobs = false;
  // Scoring mode: the endpoint returns token log-probabilities of this text
  // as the assistant turn instead of sampling.
  std::optional<std::string> forced_completion;

  void validate() const;
};

struct ChatChoice {
  std::string text;
  std::optional<std::vector<double>> token_logprobs;
};

struct Usage {
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
};

struct ChatResponse {
  std::vector<ChatChoice> choices;
  std::optional<Usage> usage;
};

struct HttpReply {
  int status = 0;  // 0: connection failure or timeout
  std::string body;
};

/// One POST to {base_url}{path}. Implementations must be thread-safe.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpReply post(const EndpointConfig& endpoint, const std::string& path,
                         const std::string& body) = 0;
};

class HttpTransport final : public Transport {
 public:
  HttpReply post(const EndpointConfig& endpoint, const std::string& path,
                 const std::string& body) override;
};

/// Replays a scripted transcript. Each JSONL entry is
///   {"match": {"model"?, "contains"?: str|[str], "temperature"?, "n"?, "logprobs"?},
///    "responses": [{"status"?, "choices"?: [str | {"text", "logprobs"}], "body"?}, ...]}
/// or the shorthand {"match": ..., "choices": [...]}. The first entry whose
/// matcher accepts the request answers it; an entry's responses are served in
/// order and the last one repeats. Unmatched requests get HTTP 404.
class MockTransport final : public Transport {
 public:
  struct Stats {
    std::size_t calls = 0;
    int peak_in_flight = 0;
  };

  explicit MockTransport(std::string_view transcript_jsonl,
                         std::chrono::milliseconds latency = std::chrono::milliseconds(0));
  static std::shared_ptr<MockTransport> from_file(const std::string& path);

  HttpReply post(const EndpointConfig& endpoint, const std::string& path,
                 const std::string& body) override;

  Stats stats() const;
  std::vector<Json> requests() const;  // request bodies in arrival order

 private:
  struct Entry {
    Json match;
    std::vector<Json> responses;
    std::size_t cursor = 0;
  };

  static bool matches(const Json& matcher, const Json& request);
  static HttpReply render(const Json& response, const Json& request);

  std::vector<Entry> entries_;
  std::chrono::milliseconds latency_;
  mutable std::mutex mu_;
  std::vector<Json> requests_;
  Stats stats_;
  int in_flight_ = 0;
};

/// Counting gate; blocks while `capacity` holders are inside.
class InFlightLimiter {
 public:
  explicit InFlightLimiter(int capacity) : capacity_(capacity) {}

  void acquire();
  void release();

 private:
  int capacity_;
  int in_use_ = 0;
  std::mutex mu_;
  std::condition_variable cv_;
};

enum class ImageMode {
  Inline,     // local files are embedded as base64 data URLs
  Reference,  // image_ref is sent as-is (mock transcripts, remote URLs)
};

struct ClientOptions {
  int global_in_flight = 8;
  ImageMode image_mode = ImageMode::Inline;
  const Logger* logger = nullptr;
  // Injected so tests can observe backoff without sleeping.
  std::function<void(std::chrono::duration<double>)> sleep;
};

class Client {
 public:
  Client(std::shared_ptr<Transport> transport, ClientOptions options);

  /// POST {base_url}/chat/completions with retries on 429, 5xx and
  /// connection failures (exponential backoff, full jitter). Throws
  /// Error(Transport) when retries run out, Error(Request) on other 4xx,
  /// Error(Protocol) when the reply lacks the requested choices.
  ChatResponse complete(const EndpointConfig& endpoint, const ChatRequest& request) const;

  /// Request body exactly as sent on the wire.
  Json request_body(const EndpointConfig& endpoint, const ChatRequest& request) const;

 private:
  ChatResponse complete_once(const EndpointConfig& endpoint, const ChatRequest& request) const;
  InFlightLimiter& endpoint_limiter(const EndpointConfig& endpoint) const;
  std::string encode_image(const std::string& ref) const;

  std::shared_ptr<Transport> transport_;
  ClientOptions options_;
  mutable InFlightLimiter global_;
  mutable std::mutex limiters_mu_;
  mutable std::map<std::string, std::unique_ptr<InFlightLimiter>> limiters_;
};

/// Parses a chat-completions reply body. Throws Error(Protocol).
ChatResponse parse_chat_response(std::string_view body);

struct PlanEntry {
  double temperature = 0.0;
  int count = 1;
};

struct TaggedSample {
  std::string text;
  double temperature = 0.0;
};

/// Issues one request per plan entry (temperature t, n = count) and
/// concatenates the choices in plan order, each tagged with its temperature.
std::vector<TaggedSample> sample_group(const Client& client, const EndpointConfig& endpoint,
                                       const ChatRequest& base, std::span<const PlanEntry> plan);

}  // namespace cotalign
