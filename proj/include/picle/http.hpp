#pragma once

#include <chrono>
#include <string>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "picle/errors.hpp"

namespace picle {

// JSON-over-HTTP endpoint with retry. Transient failures (connection errors,
// 429, 5xx) back off exponentially; other non-2xx statuses raise immediately.
class HttpEndpoint {
 public:
  HttpEndpoint(std::string base_url, std::string api_key = "", int max_attempts = 3,
               int backoff_ms = 250)
      : api_key_(std::move(api_key)), max_attempts_(max_attempts), backoff_ms_(backoff_ms) {
    // Split "scheme://host[:port][/prefix]" into the client target and an
    // optional path prefix.
    const std::size_t scheme = base_url.find("://");
    const std::size_t path_start =
        base_url.find('/', scheme == std::string::npos ? 0 : scheme + 3);
    if (path_start == std::string::npos) {
      host_ = base_url;
    } else {
      host_ = base_url.substr(0, path_start);
      prefix_ = base_url.substr(path_start);
      while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
    }
    if (host_.empty()) throw UsageError("empty endpoint base URL");
  }

  nlohmann::json post_json(const std::string& path, const nlohmann::json& body) {
    const std::string payload = body.dump();
    std::string last_error;
    for (int attempt = 0; attempt < max_attempts_; ++attempt) {
      if (attempt > 0)
        std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms_ << (attempt - 1)));
      httplib::Client cli(host_);
      cli.set_connection_timeout(30);
      cli.set_read_timeout(120);
      httplib::Headers headers;
      if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
      auto res = cli.Post(prefix_ + path, headers, payload, "application/json");
      if (!res) {
        last_error = "connection failure (" + httplib::to_string(res.error()) + ")";
        continue;
      }
      if (res->status >= 200 && res->status < 300) {
        try {
          return nlohmann::json::parse(res->body);
        } catch (const nlohmann::json::exception& e) {
          throw EndpointError(res->status, std::string("unparseable body: ") + e.what());
        }
      }
      if (res->status == 429 || res->status >= 500) {
        last_error = "status " + std::to_string(res->status);
        continue;
      }
      throw EndpointError(res->status, res->body.substr(0, 200));
    }
    throw TransportError("POST " + host_ + prefix_ + path + " failed after " +
                         std::to_string(max_attempts_) + " attempts: " + last_error);
  }

 private:
  std::string host_;
  std::string prefix_;
  std::string api_key_;
  int max_attempts_;
  int backoff_ms_;
};

}  // namespace picle
