#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <thread>

#include "cotalign/client/model_client.hpp"
#include "cotalign/error.hpp"

namespace cotalign {

namespace {

struct ParsedUrl {
  std::string scheme_host_port;
  std::string path_prefix;
};

ParsedUrl split_base_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    fail(ErrorKind::Validation, "base_url '" + url + "' has no scheme");
  }
  auto path_start = url.find('/', scheme_end + 3);
  ParsedUrl out;
  out.scheme_host_port = url.substr(0, path_start);
  if (path_start != std::string::npos) {
    out.path_prefix = url.substr(path_start);
    while (!out.path_prefix.empty() && out.path_prefix.back() == '/') out.path_prefix.pop_back();
  }
  return out;
}

}  // namespace

HttpReply HttpTransport::post(const EndpointConfig& endpoint, const std::string& path,
                              const std::string& body) {
  auto url = split_base_url(endpoint.base_url);
  httplib::Client cli(url.scheme_host_port);
  auto secs = static_cast<time_t>(endpoint.timeout_s);
  auto usecs = static_cast<time_t>((endpoint.timeout_s - static_cast<double>(secs)) * 1e6);
  cli.set_connection_timeout(secs, usecs);
  cli.set_read_timeout(secs, usecs);
  cli.set_write_timeout(secs, usecs);

  httplib::Headers headers;
  if (endpoint.api_key && !endpoint.api_key->empty()) {
    headers.emplace("Authorization", "Bearer " + *endpoint.api_key);
  }
  auto res = cli.Post(url.path_prefix + path, headers, body, "application/json");
  if (!res) return HttpReply{0, httplib::to_string(res.error())};
  return HttpReply{res->status, res->body};
}

// ---------------------------------------------------------------------------

MockTransport::MockTransport(std::string_view transcript_jsonl, std::chrono::milliseconds latency)
    : latency_(latency) {
  for (auto& l : parse_jsonl_lines(transcript_jsonl)) {
    FieldReader f(l.value, l.line);
    Entry e;
    e.match = f.has("match") ? f.at("match") : Json::object();
    if (!e.match.is_object()) f.fail("match", "expected object");
    if (f.has("responses")) {
      const auto& rs = f.at("responses");
      if (!rs.is_array() || rs.empty()) f.fail("responses", "expected non-empty array");
      for (const auto& r : rs) e.responses.push_back(r);
    } else if (f.has("choices")) {
      e.responses.push_back(Json{{"choices", f.at("choices")}});
    } else {
      f.fail("responses", "entry needs 'responses' or 'choices'");
    }
    entries_.push_back(std::move(e));
  }
}

std::shared_ptr<MockTransport> MockTransport::from_file(const std::string& path) {
  return std::make_shared<MockTransport>(read_file(path));
}

bool MockTransport::matches(const Json& matcher, const Json& request) {
  if (auto it = matcher.find("model"); it != matcher.end()) {
    if (request.value("model", std::string()) != it->get<std::string>()) return false;
  }
  if (auto it = matcher.find("temperature"); it != matcher.end()) {
    if (std::abs(request.value("temperature", -1.0) - it->get<double>()) > 1e-9) return false;
  }
  if (auto it = matcher.find("n"); it != matcher.end()) {
    if (request.value("n", 0) != it->get<int>()) return false;
  }
  if (auto it = matcher.find("logprobs"); it != matcher.end()) {
    if (request.value("logprobs", false) != it->get<bool>()) return false;
  }
  if (auto it = matcher.find("contains"); it != matcher.end()) {
    std::string haystack;
    for (const auto& m : request.at("messages")) {
      const auto& content = m.at("content");
      if (content.is_string()) {
        haystack += content.get<std::string>();
      } else {
        for (const auto& part : content) {
          if (part.value("type", "") == "text") haystack += part.at("text").get<std::string>();
        }
      }
      haystack += '\n';
    }
    if (auto fc = request.find("forced_completion"); fc != request.end()) {
      haystack += fc->get<std::string>();
    }
    std::vector<std::string> needles;
    if (it->is_string()) {
      needles.push_back(it->get<std::string>());
    } else {
      for (const auto& s : *it) needles.push_back(s.get<std::string>());
    }
    for (const auto& needle : needles) {
      if (haystack.find(needle) == std::string::npos) return false;
    }
  }
  return true;
}

HttpReply MockTransport::render(const Json& response, const Json& request) {
  int status = response.value("status", 200);
  if (auto it = response.find("body"); it != response.end()) {
    return HttpReply{status, it->is_string() ? it->get<std::string>() : it->dump()};
  }
  if (status < 200 || status >= 300) return HttpReply{status, "scripted failure"};

  const int n = request.value("n", 1);
  Json choices = Json::array();
  if (auto it = response.find("choices"); it != response.end()) {
    int index = 0;
    for (const auto& c : *it) {
      if (index == n) break;
      Json choice{{"index", index++}};
      if (c.is_string()) {
        choice["message"] = Json{{"role", "assistant"}, {"content", c}};
      } else {
        choice["message"] = Json{{"role", "assistant"}, {"content", c.value("text", "")}};
        if (auto lp = c.find("logprobs"); lp != c.end()) {
          Json content = Json::array();
          for (const auto& v : *lp) content.push_back(Json{{"logprob", v}});
          choice["logprobs"] = Json{{"content", std::move(content)}};
        }
      }
      choice["finish_reason"] = "stop";
      choices.push_back(std::move(choice));
    }
  }
  return HttpReply{status, Json{{"object", "chat.completion"}, {"choices", choices}}.dump()};
}

HttpReply MockTransport::post(const EndpointConfig&, const std::string& path,
                              const std::string& body) {
  Json request = Json::parse(body, nullptr, false);
  if (request.is_discarded() || path != "/chat/completions") {
    return HttpReply{400, "mock: unsupported request"};
  }

  Json response;
  bool found = false;
  {
    std::lock_guard lock(mu_);
    ++stats_.calls;
    ++in_flight_;
    stats_.peak_in_flight = std::max(stats_.peak_in_flight, in_flight_);
    requests_.push_back(request);
    for (auto& e : entries_) {
      if (!matches(e.match, request)) continue;
      response = e.responses[std::min(e.cursor, e.responses.size() - 1)];
      ++e.cursor;
      found = true;
      break;
    }
  }
  if (latency_.count() > 0) std::this_thread::sleep_for(latency_);

  HttpReply reply = found ? render(response, request)
                          : HttpReply{404, "mock: no transcript entry matches this request"};
  std::lock_guard lock(mu_);
  --in_flight_;
  return reply;
}

MockTransport::Stats MockTransport::stats() const {
  std::lock_guard lock(mu_);
  return stats_;
}

std::vector<Json> MockTransport::requests() const {
  std::lock_guard lock(mu_);
  return requests_;
}

}  // namespace cotalign
