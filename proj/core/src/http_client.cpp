#include "dape/http_client.hpp"

#include <chrono>
#include <httplib.h>
#include <thread>

#include "dape/error.hpp"

namespace dape {

HttpJsonClient::HttpJsonClient(HttpClientConfig config) : config_(std::move(config)) {
  const std::string scheme = "http://";
  if (config_.endpoint.rfind(scheme, 0) != 0) {
    throw ConfigError("endpoint must start with http:// (got '" + config_.endpoint + "')");
  }
  const auto slash = config_.endpoint.find('/', scheme.size());
  host_ = config_.endpoint.substr(0, slash);
  path_ = slash == std::string::npos ? "/" : config_.endpoint.substr(slash);
  if (config_.timeout_seconds <= 0 || config_.max_retries < 0) throw ConfigError("invalid HTTP client timeouts");
}

nlohmann::json HttpJsonClient::post(const nlohmann::json& body) const {
  httplib::Client cli(host_);
  const auto secs = static_cast<time_t>(config_.timeout_seconds);
  const auto usecs = static_cast<time_t>((config_.timeout_seconds - static_cast<double>(secs)) * 1e6);
  cli.set_connection_timeout(secs, usecs);
  cli.set_read_timeout(secs, usecs);
  cli.set_write_timeout(secs, usecs);
  const std::string payload = body.dump();

  std::string last_error;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(std::chrono::milliseconds(config_.backoff_ms * attempt));
    auto res = cli.Post(path_, payload, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last_error = "server returned " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) {
      throw ClientError(config_.endpoint + " returned " + std::to_string(res->status), false);
    }
    try {
      return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
      throw ClientError(config_.endpoint + " returned invalid JSON: " + e.what(), false);
    }
  }
  throw ClientError(config_.endpoint + ": " + last_error + " after " + std::to_string(config_.max_retries + 1) +
                        " attempts",
                    true);
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  return httplib::detail::base64_encode(std::string(bytes.begin(), bytes.end()));
}

}  // namespace dape
