#include "cotalign/core/log.hpp"

#include <chrono>
#include <ctime>

namespace cotalign {

namespace {

std::string utc_timestamp() {
  using namespace std::chrono;
  auto now = system_clock::now();
  auto secs = time_point_cast<seconds>(now);
  auto ms = duration_cast<milliseconds>(now - secs).count();
  std::time_t t = system_clock::to_time_t(secs);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[40];
  std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms));
  return out;
}

}  // namespace

void Logger::event(std::string_view stage, std::string_view event, std::string_view qa_id,
                   Json extra) const {
  if (!sink_) return;
  Json line{{"ts", utc_timestamp()}, {"stage", stage}};
  if (!qa_id.empty()) line["qa_id"] = qa_id;
  line["event"] = event;
  for (auto& [k, v] : extra.items()) line[k] = v;
  auto text = line.dump(-1, ' ', false, Json::error_handler_t::replace);
  std::lock_guard lock(mu_);
  *sink_ << text << '\n';
  sink_->flush();
}

}  // namespace cotalign
