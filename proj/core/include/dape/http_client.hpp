#pragma once

#include <cstdint>
#include <nlohmann/json.hpp>
#include <span>
#include <string>

namespace dape {

struct HttpClientConfig {
  /// e.g. "http://localhost:8080/v1/annotate"
  std::string endpoint;
  double timeout_seconds = 30.0;
  int max_retries = 2;
  int backoff_ms = 250;
};

/// JSON-over-HTTP POST with retries on transport errors and 5xx replies.
/// Failures surface as ClientError.
class HttpJsonClient {
 public:
  explicit HttpJsonClient(HttpClientConfig config);
  nlohmann::json post(const nlohmann::json& body) const;
  const HttpClientConfig& config() const noexcept { return config_; }

 private:
  HttpClientConfig config_;
  std::string host_;
  std::string path_;
};

std::string base64_encode(std::span<const std::uint8_t> bytes);

}  // namespace dape
