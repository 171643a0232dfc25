#include "cotalign/client/model_client.hpp"

#include <cmath>
#include <filesystem>
#include <random>
#include <thread>

#include "cotalign/core/digest.hpp"
#include "cotalign/error.hpp"

namespace cotalign {

void EndpointConfig::validate() const {
  const std::string prefix = "endpoints." + (name.empty() ? std::string("?") : name) + ".";
  if (base_url.empty()) fail(ErrorKind::Validation, prefix + "base_url: must be set");
  if (model_name.empty()) fail(ErrorKind::Validation, prefix + "model: must be set");
  if (!(timeout_s > 0)) fail(ErrorKind::Validation, prefix + "timeout_s: must be > 0");
  if (max_retries < 0) fail(ErrorKind::Validation, prefix + "max_retries: must be >= 0");
  if (max_in_flight < 1) fail(ErrorKind::Validation, prefix + "max_in_flight: must be >= 1");
  if (!(backoff_initial_s >= 0)) {
    fail(ErrorKind::Validation, prefix + "backoff_initial_s: must be >= 0");
  }
}

void ChatRequest::validate() const {
  if (messages.empty()) fail(ErrorKind::Validation, "chat request has no messages");
  int images = 0;
  for (const auto& m : messages) images += m.image_ref ? 1 : 0;
  if (images > 1) fail(ErrorKind::Validation, "chat request carries more than one image");
  if (n < 1) fail(ErrorKind::Validation, "chat request n must be >= 1");
  if (!(temperature >= 0.0 && temperature <= 2.0)) {
    fail(ErrorKind::Validation, "chat request temperature must be in [0, 2]");
  }
  if (max_tokens < 1) fail(ErrorKind::Validation, "chat request max_tokens must be >= 1");
}

// ---------------------------------------------------------------------------

void InFlightLimiter::acquire() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return in_use_ < capacity_; });
  ++in_use_;
}

void InFlightLimiter::release() {
  {
    std::lock_guard lock(mu_);
    --in_use_;
  }
  cv_.notify_one();
}

namespace {

class LimiterGuard {
 public:
  explicit LimiterGuard(InFlightLimiter& l) : l_(l) { l_.acquire(); }
  ~LimiterGuard() { l_.release(); }
  LimiterGuard(const LimiterGuard&) = delete;
  LimiterGuard& operator=(const LimiterGuard&) = delete;

 private:
  InFlightLimiter& l_;
};

bool retryable(int status) { return status == 0 || status == 429 || status >= 500; }

std::string mime_for(const std::filesystem::path& p) {
  auto ext = p.extension().string();
  for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".tif" || ext == ".tiff") return "image/tiff";
  if (ext == ".webp") return "image/webp";
  return "image/png";
}

std::vector<double> parse_logprobs(const Json& choice) {
  std::vector<double> out;
  if (auto it = choice.find("token_logprobs"); it != choice.end() && it->is_array()) {
    for (const auto& v : *it) out.push_back(v.get<double>());
    return out;
  }
  const auto& lp = choice.at("logprobs");
  if (lp.is_array()) {
    for (const auto& v : lp) out.push_back(v.get<double>());
  } else if (lp.contains("content")) {
    for (const auto& tok : lp.at("content")) out.push_back(tok.at("logprob").get<double>());
  } else {
    for (const auto& v : lp.at("token_logprobs")) out.push_back(v.get<double>());
  }
  return out;
}

}  // namespace

ChatResponse parse_chat_response(std::string_view body) {
  Json doc = Json::parse(body, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) {
    fail(ErrorKind::Protocol, "endpoint reply is not a JSON object");
  }
  auto it = doc.find("choices");
  if (it == doc.end() || !it->is_array()) fail(ErrorKind::Protocol, "endpoint reply has no choices");

  ChatResponse response;
  try {
    for (const auto& c : *it) {
      ChatChoice choice;
      if (c.contains("message")) {
        const auto& content = c.at("message").at("content");
        choice.text = content.is_null() ? std::string() : content.get<std::string>();
      } else {
        choice.text = c.at("text").get<std::string>();
      }
      auto lp = c.find("logprobs");
      bool has_lp = (lp != c.end() && !lp->is_null()) || c.contains("token_logprobs");
      if (has_lp) choice.token_logprobs = parse_logprobs(c);
      response.choices.push_back(std::move(choice));
    }
    if (auto u = doc.find("usage"); u != doc.end() && u->is_object()) {
      response.usage = Usage{u->value("prompt_tokens", std::int64_t{0}),
                             u->value("completion_tokens", std::int64_t{0})};
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Protocol, std::string("malformed choice in endpoint reply: ") + e.what());
  }
  return response;
}

// ---------------------------------------------------------------------------

Client::Client(std::shared_ptr<Transport> transport, ClientOptions options)
    : transport_(std::move(transport)),
      options_(std::move(options)),
      global_(std::max(1, options_.global_in_flight)) {
  if (!options_.sleep) {
    options_.sleep = [](std::chrono::duration<double> d) { std::this_thread::sleep_for(d); };
  }
}

InFlightLimiter& Client::endpoint_limiter(const EndpointConfig& endpoint) const {
  std::lock_guard lock(limiters_mu_);
  auto key = endpoint.name + '\x1f' + endpoint.base_url + '\x1f' + endpoint.model_name;
  auto& slot = limiters_[key];
  if (!slot) slot = std::make_unique<InFlightLimiter>(endpoint.max_in_flight);
  return *slot;
}

std::string Client::encode_image(const std::string& ref) const {
  if (options_.image_mode == ImageMode::Reference || ref.rfind("http://", 0) == 0 ||
      ref.rfind("https://", 0) == 0 || ref.rfind("data:", 0) == 0) {
    return ref;
  }
  auto bytes = read_file(ref);
  return "data:" + mime_for(ref) + ";base64," + base64_encode(bytes);
}

Json Client::request_body(const EndpointConfig& endpoint, const ChatRequest& request) const {
  Json messages = Json::array();
  for (const auto& m : request.messages) {
    Json msg{{"role", m.role == Role::System ? "system" : "user"}};
    if (m.image_ref) {
      msg["content"] = Json::array(
          {Json{{"type", "image_url"}, {"image_url", Json{{"url", encode_image(*m.image_ref)}}}},
           Json{{"type", "text"}, {"text", m.text}}});
    } else {
      msg["content"] = m.text;
    }
    messages.push_back(std::move(msg));
  }
  Json body{{"model", endpoint.model_name},
            {"messages", std::move(messages)},
            {"temperature", request.temperature},
            {"n", request.n},
            {"max_tokens", request.max_tokens}};
  if (request.seed) body["seed"] = *request.seed;
  if (request.logprobs || request.forced_completion) body["logprobs"] = true;
  if (request.forced_completion) body["forced_completion"] = *request.forced_completion;
  return body;
}

ChatResponse Client::complete_once(const EndpointConfig& endpoint,
                                   const ChatRequest& request) const {
  const std::string body = request_body(endpoint, request).dump();
  thread_local std::mt19937_64 jitter{std::random_device{}()};

  HttpReply reply;
  for (int attempt = 0;; ++attempt) {
    {
      LimiterGuard per_endpoint(endpoint_limiter(endpoint));
      LimiterGuard global(global_);
      reply = transport_->post(endpoint, "/chat/completions", body);
    }
    if (reply.status >= 200 && reply.status < 300) break;
    if (!retryable(reply.status)) {
      fail(ErrorKind::Request, "endpoint '" + endpoint.name + "' rejected request with HTTP " +
                                   std::to_string(reply.status) + ": " + reply.body.substr(0, 300));
    }
    if (attempt >= endpoint.max_retries) {
      fail(ErrorKind::Transport,
           "endpoint '" + endpoint.name + "' failed after " + std::to_string(attempt + 1) +
               " attempt(s); last status " +
               (reply.status == 0 ? std::string("connection failure") : std::to_string(reply.status)) +
               (reply.body.empty() ? "" : ": " + reply.body.substr(0, 300)));
    }
    double cap = endpoint.backoff_initial_s * std::ldexp(1.0, attempt);
    double wait = cap * uniform_unit(jitter);
    if (options_.logger) {
      options_.logger->event("client", "retry", {},
                             Json{{"endpoint", endpoint.name},
                                  {"status", reply.status},
                                  {"attempt", attempt + 1},
                                  {"backoff_s", wait}});
    }
    options_.sleep(std::chrono::duration<double>(wait));
  }

  auto response = parse_chat_response(reply.body);
  if (static_cast<int>(response.choices.size()) != request.n) {
    fail(ErrorKind::Protocol, "endpoint '" + endpoint.name + "' returned " +
                                  std::to_string(response.choices.size()) + " choice(s), expected " +
                                  std::to_string(request.n));
  }
  return response;
}

ChatResponse Client::complete(const EndpointConfig& endpoint, const ChatRequest& request) const {
  request.validate();
  if (request.n == 1 || endpoint.supports_n) return complete_once(endpoint, request);

  ChatRequest single = request;
  single.n = 1;
  ChatResponse merged;
  for (int i = 0; i < request.n; ++i) {
    auto part = complete_once(endpoint, single);
    merged.choices.push_back(std::move(part.choices.front()));
    if (part.usage) {
      if (!merged.usage) merged.usage = Usage{};
      merged.usage->prompt_tokens += part.usage->prompt_tokens;
      merged.usage->completion_tokens += part.usage->completion_tokens;
    }
  }
  return merged;
}

std::vector<TaggedSample> sample_group(const Client& client, const EndpointConfig& endpoint,
                                       const ChatRequest& base, std::span<const PlanEntry> plan) {
  if (plan.empty()) fail(ErrorKind::Validation, "sampling plan is empty");
  std::vector<TaggedSample> out;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const auto& entry = plan[i];
    if (entry.count < 1) {
      fail(ErrorKind::Validation, "sampling plan entry " + std::to_string(i) + " has count < 1");
    }
    ChatRequest req = base;
    req.temperature = entry.temperature;
    req.n = entry.count;
    try {
      for (auto& c : client.complete(endpoint, req).choices) {
        out.push_back({std::move(c.text), entry.temperature});
      }
    } catch (const Error& e) {
      char desc[64];
      std::snprintf(desc, sizeof desc, "plan entry %zu (t=%g, n=%d): ", i, entry.temperature,
                    entry.count);
      throw Error(e.kind(), desc + std::string(e.what()));
    }
  }
  return out;
}

}  // namespace cotalign
