#pragma once

#include <atomic>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "elemrag/error.hpp"
#include "elemrag/hash.hpp"
#include "elemrag/http.hpp"

namespace elemrag {

struct DecodingParams {
  double temperature = 0.0;
  int max_tokens = 512;
};

/// Chat-completion client contract. `complete` throws TransientError for
/// retryable failures; callers go through complete_with_retry.
class GeneratorClient {
 public:
  virtual ~GeneratorClient() = default;
  virtual std::string complete(const std::string& prompt, const DecodingParams& params) = 0;
};

inline std::string complete_with_retry(GeneratorClient& client, const std::string& prompt,
                                       const DecodingParams& params, const RetryPolicy& retry) {
  return with_retry(retry, [&] { return client.complete(prompt, params); });
}

struct ChatEndpointConfig {
  std::string base_url = "https://api.openai.com/v1";
  std::string model = "gpt-4";
  std::string api_key_env = "OPENAI_API_KEY";
};

/// OpenAI-compatible `/chat/completions` client.
class HttpChatClient final : public GeneratorClient {
 public:
  explicit HttpChatClient(ChatEndpointConfig config)
      : config_(std::move(config)), endpoint_(Endpoint::parse(config_.base_url)) {}

  std::string complete(const std::string& prompt, const DecodingParams& params) override {
    nlohmann::json body{
        {"model", config_.model},
        {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})},
        {"temperature", params.temperature},
        {"max_tokens", params.max_tokens},
    };
    auto resp = post_json(endpoint_, "/chat/completions", body, env_or_empty(config_.api_key_env));
    try {
      return resp.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::MalformedResponse,
                  std::string("chat response lacks choices[0].message.content: ") + e.what());
    }
  }

 private:
  ChatEndpointConfig config_;
  Endpoint endpoint_;
};

inline std::string prompt_key(const std::string& prompt) { return hex64(fnv1a64(prompt)); }

/// Deterministic offline client. Lookup order: exact prompt key, then the
/// first substring rule whose needle occurs in the prompt, then the default.
/// A scripted response of the form {"error": "..."} raises TransientError.
///
/// Script file:
///   { "responses": { "<prompt key>": "text" | {"error": "msg"} },
///     "contains":  [ { "match": "needle", "response": ... } ],
///     "default":   "text" }
class StubClient final : public GeneratorClient {
 public:
  struct Reply {
    std::string text;
    bool fail = false;
  };
  using Callback = std::function<std::string(const std::string& prompt)>;

  StubClient() = default;
  explicit StubClient(Callback cb) : callback_(std::move(cb)) {}

  static StubClient from_json(const nlohmann::json& script) {
    StubClient stub;
    auto reply_of = [](const nlohmann::json& v) {
      if (v.is_string()) return Reply{v.get<std::string>(), false};
      if (v.is_object() && v.contains("error")) return Reply{v.at("error").get<std::string>(), true};
      throw Error(ErrorCode::Config, "stub response must be a string or {\"error\": ...}");
    };
    if (auto r = script.find("responses"); r != script.end()) {
      for (auto it = r->begin(); it != r->end(); ++it) stub.by_key_[it.key()] = reply_of(it.value());
    }
    if (auto c = script.find("contains"); c != script.end()) {
      for (const auto& rule : *c) {
        stub.by_substring_.emplace_back(rule.at("match").get<std::string>(),
                                        reply_of(rule.at("response")));
      }
    }
    if (auto d = script.find("default"); d != script.end()) stub.default_ = reply_of(*d);
    return stub;
  }

  StubClient(const StubClient& other)
      : by_key_(other.by_key_),
        by_substring_(other.by_substring_),
        default_(other.default_),
        callback_(other.callback_) {}

  void set_response(const std::string& prompt, std::string text) {
    by_key_[prompt_key(prompt)] = Reply{std::move(text), false};
  }
  void add_rule(std::string needle, std::string text, bool fail = false) {
    by_substring_.emplace_back(std::move(needle), Reply{std::move(text), fail});
  }
  void set_default(std::string text) { default_ = Reply{std::move(text), false}; }

  std::size_t calls() const { return calls_.load(); }

  std::string complete(const std::string& prompt, const DecodingParams&) override {
    ++calls_;
    if (callback_) return callback_(prompt);
    const Reply* reply = nullptr;
    if (auto it = by_key_.find(prompt_key(prompt)); it != by_key_.end()) reply = &it->second;
    if (!reply) {
      for (const auto& [needle, r] : by_substring_) {
        if (prompt.find(needle) != std::string::npos) {
          reply = &r;
          break;
        }
      }
    }
    if (!reply && default_) reply = &*default_;
    if (!reply) {
      throw Error(ErrorCode::ClientError, "stub has no scripted response for prompt " + prompt_key(prompt));
    }
    if (reply->fail) throw TransientError("scripted failure: " + reply->text);
    return reply->text;
  }

 private:
  std::map<std::string, Reply> by_key_;
  std::vector<std::pair<std::string, Reply>> by_substring_;
  std::optional<Reply> default_;
  Callback callback_;
  std::atomic<std::size_t> calls_{0};
};

}  // namespace elemrag
