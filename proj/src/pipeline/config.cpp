#include "cotalign/pipeline/config.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <set>

#include "cotalign/error.hpp"

namespace cotalign {

namespace {

[[noreturn]] void bad(const std::string& field, const std::string& what) {
  fail(ErrorKind::Validation, field + ": " + what);
}

void reject_unknown(const Json& obj, const std::string& prefix, std::set<std::string> allowed) {
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.count(key)) bad(prefix + key, "unknown setting");
  }
}

const Json* section(const Json& doc, const char* key) {
  auto it = doc.find(key);
  if (it == doc.end() || it->is_null()) return nullptr;
  if (!it->is_object()) bad(key, "expected object");
  return &*it;
}

double get_num(const Json& obj, const std::string& field, const char* key, double fallback) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return fallback;
  if (!it->is_number()) bad(field, "expected number");
  return it->get<double>();
}

std::int64_t get_int(const Json& obj, const std::string& field, const char* key,
                     std::int64_t fallback) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return fallback;
  if (it->is_number_float()) {
    double d = it->get<double>();
    if (d != std::floor(d)) bad(field, "expected integer");
    return static_cast<std::int64_t>(d);
  }
  if (!it->is_number_integer()) bad(field, "expected integer");
  return it->get<std::int64_t>();
}

bool get_bool(const Json& obj, const std::string& field, const char* key, bool fallback) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return fallback;
  if (!it->is_boolean()) bad(field, "expected boolean");
  return it->get<bool>();
}

std::optional<std::string> get_str(const Json& obj, const std::string& field, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) bad(field, "expected string");
  return it->get<std::string>();
}

EndpointConfig endpoint_from_json(const std::string& name, const Json& j) {
  const std::string p = "endpoints." + name + ".";
  if (!j.is_object()) bad("endpoints." + name, "expected object");
  reject_unknown(j, p,
                 {"base_url", "model", "api_key", "timeout_s", "max_retries", "max_in_flight",
                  "backoff_initial_s", "supports_n"});
  EndpointConfig e;
  e.name = name;
  e.base_url = get_str(j, p + "base_url", "base_url").value_or("");
  e.model_name = get_str(j, p + "model", "model").value_or(name);
  e.api_key = get_str(j, p + "api_key", "api_key");
  e.timeout_s = get_num(j, p + "timeout_s", "timeout_s", e.timeout_s);
  e.max_retries = static_cast<int>(get_int(j, p + "max_retries", "max_retries", e.max_retries));
  e.max_in_flight =
      static_cast<int>(get_int(j, p + "max_in_flight", "max_in_flight", e.max_in_flight));
  e.backoff_initial_s = get_num(j, p + "backoff_initial_s", "backoff_initial_s", e.backoff_initial_s);
  e.supports_n = get_bool(j, p + "supports_n", "supports_n", e.supports_n);
  if (!(e.timeout_s > 0)) bad(p + "timeout_s", "must be > 0");
  if (e.max_retries < 0) bad(p + "max_retries", "must be >= 0");
  if (e.max_in_flight < 1) bad(p + "max_in_flight", "must be >= 1");
  if (!(e.backoff_initial_s >= 0)) bad(p + "backoff_initial_s", "must be >= 0");
  return e;
}

std::vector<PlanEntry> plan_from_json(const Json& j) {
  if (!j.is_array() || j.empty()) bad("sampling.plan", "expected non-empty array");
  std::vector<PlanEntry> plan;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string field = "sampling.plan[" + std::to_string(i) + "]";
    const auto& e = j[i];
    PlanEntry entry;
    if (e.is_array() && e.size() == 2 && e[0].is_number() && e[1].is_number_integer()) {
      entry = {e[0].get<double>(), e[1].get<int>()};
    } else if (e.is_object()) {
      entry = {get_num(e, field + ".temperature", "temperature", -1.0),
               static_cast<int>(get_int(e, field + ".count", "count", 0))};
    } else {
      bad(field, "expected [temperature, count]");
    }
    if (!(entry.temperature >= 0.0 && entry.temperature <= 2.0)) {
      bad(field, "temperature must be in [0, 2]");
    }
    if (entry.count < 1) bad(field, "count must be >= 1");
    plan.push_back(entry);
  }
  return plan;
}

}  // namespace

RunConfig config_from_json(const Json& doc) {
  if (!doc.is_object()) bad("config", "expected a JSON object");
  reject_unknown(doc, "",
                 {"endpoints", "seed", "concurrency", "filter", "dpo", "sampling", "dataset", "eval",
                  "paths"});
  RunConfig c;

  if (const auto* eps = section(doc, "endpoints")) {
    for (const auto& [name, e] : eps->items()) c.endpoints.emplace(name, endpoint_from_json(name, e));
  }

  auto seed = get_int(doc, "seed", "seed", 0);
  if (seed < 0) bad("seed", "must be >= 0");
  c.seed = static_cast<std::uint64_t>(seed);
  c.concurrency = static_cast<int>(get_int(doc, "concurrency", "concurrency", c.concurrency));
  if (c.concurrency < 1) bad("concurrency", "must be >= 1");

  if (const auto* f = section(doc, "filter")) {
    reject_unknown(*f, "filter.", {"min_quality", "min_correctness", "require_valid",
                                   "require_answer_match"});
    c.filter.min_quality = get_num(*f, "filter.min_quality", "min_quality", c.filter.min_quality);
    c.filter.min_correctness =
        get_num(*f, "filter.min_correctness", "min_correctness", c.filter.min_correctness);
    c.filter.require_valid = get_bool(*f, "filter.require_valid", "require_valid", true);
    c.filter.require_answer_match =
        get_bool(*f, "filter.require_answer_match", "require_answer_match", true);
  }
  c.filter.validate();

  if (const auto* d = section(doc, "dpo")) {
    reject_unknown(*d, "dpo.", {"beta", "learning_rate", "epochs", "full_batch"});
    c.dpo.beta = get_num(*d, "dpo.beta", "beta", c.dpo.beta);
    c.dpo.learning_rate = get_num(*d, "dpo.learning_rate", "learning_rate", c.dpo.learning_rate);
    c.dpo.epochs = static_cast<int>(get_int(*d, "dpo.epochs", "epochs", c.dpo.epochs));
    c.dpo.full_batch = get_bool(*d, "dpo.full_batch", "full_batch", true);
  }
  c.dpo.validate();

  if (const auto* s = section(doc, "sampling")) {
    reject_unknown(*s, "sampling.", {"plan", "teacher_temperature", "verifier_temperature",
                                     "max_tokens", "max_regenerations"});
    if (auto it = s->find("plan"); it != s->end() && !it->is_null()) {
      c.candidates.plan = plan_from_json(*it);
    }
    c.generation.temperature = get_num(*s, "sampling.teacher_temperature", "teacher_temperature",
                                       c.generation.temperature);
    c.scoring.temperature = get_num(*s, "sampling.verifier_temperature", "verifier_temperature",
                                    c.scoring.temperature);
    auto max_tokens = get_int(*s, "sampling.max_tokens", "max_tokens", 1024);
    if (max_tokens < 1) bad("sampling.max_tokens", "must be >= 1");
    c.generation.max_tokens = c.scoring.max_tokens = c.candidates.max_tokens =
        static_cast<int>(max_tokens);
    c.max_regenerations = static_cast<int>(
        get_int(*s, "sampling.max_regenerations", "max_regenerations", c.max_regenerations));
    if (c.max_regenerations < 0) bad("sampling.max_regenerations", "must be >= 0");
    for (double t : {c.generation.temperature, c.scoring.temperature}) {
      if (!(t >= 0.0 && t <= 2.0)) bad("sampling", "temperatures must be in [0, 2]");
    }
  }

  if (auto ds = get_str(doc, "dataset", "dataset")) {
    try {
      c.dataset = parse_dataset(*ds);
    } catch (const Error& e) {
      bad("dataset", e.what());
    }
  }

  if (const auto* e = section(doc, "eval")) {
    reject_unknown(*e, "eval.", {"style", "tolerance"});
    if (auto style = get_str(*e, "eval.style", "style")) {
      try {
        c.eval_style = parse_sft_style(*style);
      } catch (const Error& err) {
        bad("eval.style", err.what());
      }
    }
    c.tolerance = get_num(*e, "eval.tolerance", "tolerance", c.tolerance);
    if (!(c.tolerance >= 0.0)) bad("eval.tolerance", "must be >= 0");
  }

  if (const auto* p = section(doc, "paths")) {
    for (const auto& [key, v] : p->items()) {
      if (v.is_null()) continue;
      if (!v.is_string() || v.get<std::string>().empty()) bad("paths." + key, "expected path");
      c.paths[key] = v.get<std::string>();
    }
  }
  return c;
}

RunConfig load_config(const std::optional<std::filesystem::path>& file, const Json& overrides) {
  Json doc = Json::object();
  if (file) {
    doc = Json::parse(read_file(*file), nullptr, false);
    if (doc.is_discarded()) fail(ErrorKind::Validation, file->string() + ": malformed JSON");
    if (!doc.is_object()) fail(ErrorKind::Validation, file->string() + ": expected a JSON object");
  }
  if (!overrides.is_null()) doc.merge_patch(overrides);
  auto config = config_from_json(doc);

  for (auto& [name, e] : config.endpoints) {
    std::string var = "COTALIGN_API_KEY_";
    for (char ch : name) {
      var += std::isalnum(static_cast<unsigned char>(ch))
                 ? static_cast<char>(std::toupper(static_cast<unsigned char>(ch)))
                 : '_';
    }
    if (const char* key = std::getenv(var.c_str()); key && *key) e.api_key = key;
  }
  return config;
}

EndpointConfig RunConfig::endpoint(const std::string& name) const {
  auto it = endpoints.find(name);
  if (it != endpoints.end()) {
    EndpointConfig e = it->second;
    if (mock() && e.base_url.empty()) e.base_url = "mock://" + name;
    e.validate();
    return e;
  }
  if (!mock()) {
    fail(ErrorKind::Validation, "endpoints." + name + ": not configured (use --" + name +
                                    "-endpoint or the config file)");
  }
  EndpointConfig e;
  e.name = name;
  e.base_url = "mock://" + name;
  e.model_name = name;
  return e;
}

Json RunConfig::settings_json() const {
  Json eps = Json::object();
  for (const auto& [name, e] : endpoints) {
    eps[name] = Json{{"base_url", e.base_url},
                     {"model", e.model_name},
                     {"timeout_s", e.timeout_s},
                     {"max_retries", e.max_retries},
                     {"max_in_flight", e.max_in_flight},
                     {"backoff_initial_s", e.backoff_initial_s},
                     {"supports_n", e.supports_n}};
  }
  Json plan = Json::array();
  for (const auto& p : candidates.plan) plan.push_back(Json::array({p.temperature, p.count}));
  Json out{{"endpoints", std::move(eps)},
           {"seed", seed},
           {"concurrency", concurrency},
           {"filter", Json{{"min_quality", filter.min_quality},
                           {"min_correctness", filter.min_correctness},
                           {"require_valid", filter.require_valid},
                           {"require_answer_match", filter.require_answer_match}}},
           {"dpo", Json{{"beta", dpo.beta},
                        {"learning_rate", dpo.learning_rate},
                        {"epochs", dpo.epochs},
                        {"full_batch", dpo.full_batch}}},
           {"sampling", Json{{"plan", std::move(plan)},
                             {"teacher_temperature", generation.temperature},
                             {"verifier_temperature", scoring.temperature},
                             {"max_tokens", generation.max_tokens},
                             {"max_regenerations", max_regenerations}}},
           {"eval", Json{{"style", to_string(eval_style)}, {"tolerance", tolerance}}}};
  if (dataset) out["dataset"] = to_string(*dataset);
  return out;
}

}  // namespace cotalign
