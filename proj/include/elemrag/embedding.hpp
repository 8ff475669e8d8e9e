#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "elemrag/error.hpp"
#include "elemrag/hash.hpp"
#include "elemrag/http.hpp"
#include "elemrag/text.hpp"
#include "elemrag/tokenizer.hpp"

namespace elemrag {

inline constexpr std::size_t kDefaultEmbeddingDim = 768;

/// L2-normalized dense vector.
struct EmbeddingVector {
  std::vector<float> values;

  std::size_t dim() const { return values.size(); }
  bool operator==(const EmbeddingVector&) const = default;
};

inline double dot(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
  return s;
}

inline double l2_norm(std::span<const float> a) { return std::sqrt(dot(a, a)); }

inline double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dim() != b.dim()) throw Error(ErrorCode::DimensionMismatch, "cosine of unequal dims");
  double na = l2_norm(a.values);
  double nb = l2_norm(b.values);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot(a.values, b.values) / (na * nb), -1.0, 1.0);
}

inline EmbeddingVector normalize(std::span<const double> raw) {
  double sq = 0.0;
  for (double v : raw) {
    if (!std::isfinite(v)) throw Error(ErrorCode::MalformedResponse, "non-finite embedding value");
    sq += v * v;
  }
  if (sq == 0.0) throw Error(ErrorCode::EmptyText, "embedding has zero norm");
  const double inv = 1.0 / std::sqrt(sq);
  EmbeddingVector out;
  out.values.reserve(raw.size());
  for (double v : raw) out.values.push_back(static_cast<float>(v * inv));
  return out;
}

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::size_t dim() const = 0;
  virtual EmbeddingVector embed(const std::string& text) = 0;
  virtual std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts) {
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(embed(t));
    return out;
  }
  /// Stable description that goes into config hashes.
  virtual std::string fingerprint() const = 0;
};

/// Signed feature hashing of case-folded default tokens: token -> bucket
/// `h % dim`, sign from the top bit of h, then L2 normalization.
inline EmbeddingVector embed_local(const std::string& s, std::size_t dim = kDefaultEmbeddingDim) {
  if (dim < 8) throw Error(ErrorCode::Config, "local embedding dim must be >= 8");
  const auto tokens = default_tokenize(s);
  if (tokens.empty()) throw Error(ErrorCode::EmptyText, "cannot embed text without tokens");
  std::vector<double> acc(dim, 0.0);
  for (const auto& t : tokens) {
    const auto h = fnv1a64(text::fold_case(t));
    acc[h % dim] += (h >> 63) ? -1.0 : 1.0;
  }
  double sq = 0.0;
  for (double v : acc) sq += v * v;
  if (sq == 0.0) {
    // Signed collisions cancelled out exactly; fall back to unsigned counts.
    for (const auto& t : tokens) acc[fnv1a64(text::fold_case(t)) % dim] += 1.0;
  }
  return normalize(acc);
}

class LocalEmbedder final : public Embedder {
 public:
  explicit LocalEmbedder(std::size_t dim = kDefaultEmbeddingDim) : dim_(dim) {
    if (dim_ < 8) throw Error(ErrorCode::Config, "local embedding dim must be >= 8");
  }
  std::size_t dim() const override { return dim_; }
  EmbeddingVector embed(const std::string& s) override { return embed_local(s, dim_); }
  std::string fingerprint() const override { return "local-hash/" + std::to_string(dim_); }

 private:
  std::size_t dim_;
};

struct EmbeddingEndpointConfig {
  std::string base_url = "https://api.openai.com/v1";
  std::string model = "text-embedding-3-small";
  std::string api_key_env = "OPENAI_API_KEY";
  std::size_t dim = kDefaultEmbeddingDim;
  std::size_t batch_size = 64;
};

/// Client for the `/embeddings` schema: request {model, input: [...]},
/// response {data: [{index, embedding: [...]}, ...]}.
class RemoteEmbedder final : public Embedder {
 public:
  explicit RemoteEmbedder(EmbeddingEndpointConfig config, RetryPolicy retry = {})
      : config_(std::move(config)), endpoint_(Endpoint::parse(config_.base_url)), retry_(retry) {}

  std::size_t dim() const override { return config_.dim; }
  std::string fingerprint() const override {
    return "remote/" + config_.base_url + "/" + config_.model + "/" + std::to_string(config_.dim);
  }

  EmbeddingVector embed(const std::string& s) override { return embed_batch({s}).front(); }

  std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts) override {
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    const std::size_t batch = config_.batch_size ? config_.batch_size : texts.size();
    for (std::size_t start = 0; start < texts.size(); start += batch) {
      std::vector<std::string> slice(texts.begin() + static_cast<std::ptrdiff_t>(start),
                                     texts.begin() + static_cast<std::ptrdiff_t>(
                                                         std::min(texts.size(), start + batch)));
      for (auto& v : request(slice)) out.push_back(std::move(v));
    }
    return out;
  }

 private:
  std::vector<EmbeddingVector> request(const std::vector<std::string>& texts) {
    nlohmann::json body{{"model", config_.model}, {"input", texts}};
    auto resp = with_retry(retry_, [&] {
      return post_json(endpoint_, "/embeddings", body, env_or_empty(config_.api_key_env));
    });
    std::vector<std::vector<double>> raw(texts.size());
    try {
      const auto& data = resp.at("data");
      if (data.size() != texts.size()) {
        throw Error(ErrorCode::MalformedResponse,
                    "expected " + std::to_string(texts.size()) + " embeddings, got " +
                        std::to_string(data.size()));
      }
      for (std::size_t i = 0; i < data.size(); ++i) {
        std::size_t slot = data[i].contains("index") ? data[i].at("index").get<std::size_t>() : i;
        if (slot >= raw.size()) throw Error(ErrorCode::MalformedResponse, "embedding index out of range");
        raw[slot] = data[i].at("embedding").get<std::vector<double>>();
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::MalformedResponse, std::string("bad embeddings response: ") + e.what());
    }
    std::vector<EmbeddingVector> out;
    out.reserve(raw.size());
    for (const auto& r : raw) {
      if (r.size() != config_.dim) {
        throw Error(ErrorCode::DimensionMismatch,
                    "service returned dim " + std::to_string(r.size()) + ", expected " +
                        std::to_string(config_.dim));
      }
      out.push_back(normalize(r));
    }
    return out;
  }

  EmbeddingEndpointConfig config_;
  Endpoint endpoint_;
  RetryPolicy retry_;
};

}  // namespace elemrag
