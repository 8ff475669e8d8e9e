#pragma once

#include <chrono>
#include <cstdlib>
#include <string>
#include <string_view>
#include <thread>
#include <utility>

#include <httplib.h>
#include <json.hpp>

#include "elemrag/error.hpp"

namespace elemrag {

/// Retryable failure: transport errors, HTTP 429 and 5xx.
class TransientError : public Error {
 public:
  explicit TransientError(const std::string& message) : Error(ErrorCode::ClientError, message) {}
};

struct RetryPolicy {
  int max_attempts = 4;
  std::chrono::milliseconds base_delay{250};
  double multiplier = 2.0;
};

/// Runs `fn`, retrying TransientError with exponential backoff. Exhausting the
/// attempts surfaces as a plain ClientError.
template <class Fn>
auto with_retry(const RetryPolicy& policy, Fn&& fn) -> decltype(fn()) {
  auto delay = policy.base_delay;
  const int attempts = policy.max_attempts < 1 ? 1 : policy.max_attempts;
  for (int attempt = 1;; ++attempt) {
    try {
      return fn();
    } catch (const TransientError& e) {
      if (attempt >= attempts) {
        throw Error(ErrorCode::ClientError,
                    "giving up after " + std::to_string(attempts) + " attempts: " + e.what());
      }
    }
    std::this_thread::sleep_for(delay);
    delay = std::chrono::milliseconds(static_cast<long long>(delay.count() * policy.multiplier));
  }
}

/// Base URL split into the scheme://host[:port] part httplib connects to and
/// the path prefix requests are issued under (e.g. "/v1").
struct Endpoint {
  std::string origin;
  std::string path_prefix;

  static Endpoint parse(std::string_view url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string_view::npos) {
      throw Error(ErrorCode::Config, "base URL must include a scheme: " + std::string(url));
    }
    auto path_start = url.find('/', scheme_end + 3);
    Endpoint ep;
    if (path_start == std::string_view::npos) {
      ep.origin = std::string(url);
    } else {
      ep.origin = std::string(url.substr(0, path_start));
      ep.path_prefix = std::string(url.substr(path_start));
      while (!ep.path_prefix.empty() && ep.path_prefix.back() == '/') ep.path_prefix.pop_back();
    }
    return ep;
  }
};

inline std::string env_or_empty(const std::string& name) {
  if (name.empty()) return {};
  const char* v = std::getenv(name.c_str());
  return v ? std::string(v) : std::string();
}

/// One POST of a JSON body; returns the parsed JSON response. Status and
/// transport failures are classified for with_retry.
inline nlohmann::json post_json(const Endpoint& ep, const std::string& path,
                                const nlohmann::json& body, const std::string& bearer,
                                std::chrono::seconds timeout = std::chrono::seconds(120)) {
  httplib::Client cli(ep.origin);
  cli.set_connection_timeout(timeout);
  cli.set_read_timeout(timeout);
  cli.set_write_timeout(timeout);
  httplib::Headers headers;
  if (!bearer.empty()) headers.emplace("Authorization", "Bearer " + bearer);

  auto res = cli.Post(ep.path_prefix + path, headers, body.dump(), "application/json");
  if (!res) {
    throw TransientError("request to " + ep.origin + ep.path_prefix + path +
                         " failed: " + httplib::to_string(res.error()));
  }
  if (res->status == 429 || res->status >= 500) {
    throw TransientError("HTTP " + std::to_string(res->status) + " from " + ep.origin);
  }
  if (res->status < 200 || res->status >= 300) {
    throw Error(ErrorCode::ClientError,
                "HTTP " + std::to_string(res->status) + " from " + ep.origin + ": " + res->body);
  }
  try {
    return nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::MalformedResponse, std::string("response is not JSON: ") + e.what());
  }
}

}  // namespace elemrag
