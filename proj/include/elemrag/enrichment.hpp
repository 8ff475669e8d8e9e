#pragma once

#include <cstddef>
#include <filesystem>
#include <initializer_list>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "elemrag/chunking.hpp"
#include "elemrag/error.hpp"
#include "elemrag/hash.hpp"
#include "elemrag/io.hpp"
#include "elemrag/llm_client.hpp"
#include "elemrag/parallel.hpp"
#include "elemrag/text.hpp"

namespace elemrag {

inline constexpr std::size_t kMaxKeywords = 6;

enum class RepresentationMode { Keywords, Summary, PrefixTable, FullText };

inline std::string_view to_string(RepresentationMode m) {
  switch (m) {
    case RepresentationMode::Keywords: return "keywords";
    case RepresentationMode::Summary: return "summary";
    case RepresentationMode::PrefixTable: return "prefix";
    case RepresentationMode::FullText: return "full";
  }
  return "full";
}

inline std::string display_name(RepresentationMode m) {
  switch (m) {
    case RepresentationMode::Keywords: return "Keywords";
    case RepresentationMode::Summary: return "Summary";
    case RepresentationMode::PrefixTable: return "Prefix & Table Description";
    case RepresentationMode::FullText: return "Full Text";
  }
  return {};
}

inline RepresentationMode parse_mode(std::string_view s) {
  auto t = text::trim(s);
  for (auto m : {RepresentationMode::Keywords, RepresentationMode::Summary,
                 RepresentationMode::PrefixTable, RepresentationMode::FullText}) {
    if (t == to_string(m)) return m;
  }
  throw Error(ErrorCode::Config, "unknown representation mode '" + std::string(s) + "'");
}

struct ChunkMetadata {
  std::optional<std::vector<std::string>> keywords;
  std::optional<std::string> summary;
  std::string prefix_repr;

  bool operator==(const ChunkMetadata&) const = default;
};

/// Prompt templates for the two model-generated representations. `{chunk}`
/// is replaced by the chunk text.
struct EnrichmentPrompts {
  std::string keywords =
      "Extract up to 6 representative keywords from the following passage of a financial "
      "report. Respond with the keywords only, separated by commas.\n\nPassage:\n{chunk}";
  std::string summary =
      "Summarise the following passage of a financial report in one paragraph. Respond with "
      "the paragraph only.\n\nPassage:\n{chunk}";
};

inline std::string fill(std::string_view tmpl, std::string_view key, std::string_view value) {
  std::string out;
  std::size_t pos = 0;
  while (true) {
    auto hit = tmpl.find(key, pos);
    if (hit == std::string_view::npos) break;
    out.append(tmpl.substr(pos, hit - pos));
    out.append(value);
    pos = hit + key.size();
  }
  out.append(tmpl.substr(pos));
  return out;
}

/// Single-pass substitution of several placeholders; inserted values are
/// never rescanned.
inline std::string substitute(std::string_view tmpl,
                              std::initializer_list<std::pair<std::string_view, std::string_view>> vars) {
  std::string out;
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    bool matched = false;
    for (const auto& [key, value] : vars) {
      if (tmpl.substr(pos, key.size()) == key) {
        out.append(value);
        pos += key.size();
        matched = true;
        break;
      }
    }
    if (!matched) out.push_back(tmpl[pos++]);
  }
  return out;
}

/// Sentence boundaries: '.', '!' or '?' followed by whitespace and then an
/// uppercase ASCII letter or a digit. Abbreviations are not special-cased.
/// Returns the end offset (exclusive) of each sentence.
inline std::vector<std::size_t> sentence_ends(std::string_view s) {
  std::vector<std::size_t> ends;
  for (std::size_t i = 0; i < s.size(); ++i) {
    char c = s[i];
    if (c != '.' && c != '!' && c != '?') continue;
    std::size_t j = i + 1;
    if (j >= s.size() || !text::is_space(s[j])) continue;
    while (j < s.size() && text::is_space(s[j])) ++j;
    if (j < s.size() && ((s[j] >= 'A' && s[j] <= 'Z') || (s[j] >= '0' && s[j] <= '9'))) {
      ends.push_back(i + 1);
    }
  }
  ends.push_back(s.size());
  return ends;
}

inline std::string first_sentences(std::string_view s, std::size_t count) {
  auto ends = sentence_ends(s);
  std::size_t cut = ends[std::min(count, ends.size()) - 1];
  return std::string(text::trim(s.substr(0, cut)));
}

/// First line ending with a colon, the usual caption shape of a financial
/// table ("The following table sets forth ...:").
inline std::optional<std::string> table_description(std::string_view s) {
  for (const auto& line : text::split(s, '\n')) {
    auto t = text::trim(line);
    if (!t.empty() && t.back() == ':') return std::string(t);
  }
  return std::nullopt;
}

inline std::string naive_prefix(const Chunk& chunk) {
  if (chunk.is_table_chunk) {
    if (auto desc = table_description(chunk.text)) return *desc;
  }
  return first_sentences(chunk.text, 2);
}

/// Parses a delimited keyword list (commas, semicolons or newlines). List
/// bullets, numbering and quotes are stripped, duplicates dropped after case
/// folding, and at most six are kept.
inline std::vector<std::string> parse_keywords(std::string_view response) {
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  std::string normalized(response);
  for (char& c : normalized) {
    if (c == ';' || c == '\n') c = ',';
  }
  for (const auto& raw : text::split(normalized, ',')) {
    std::string_view k = text::trim(raw);
    if (out.empty() && seen.empty()) {
      auto folded = text::fold_case(k.substr(0, std::min<std::size_t>(k.size(), 9)));
      if (folded == "keywords:") k = text::trim(k.substr(9));
    }
    while (!k.empty() && (k.front() == '-' || k.front() == '*' || k.front() == '"' ||
                          k.front() == '\'')) {
      k = text::trim(k.substr(1));
    }
    std::size_t digits = 0;
    while (digits < k.size() && k[digits] >= '0' && k[digits] <= '9') ++digits;
    if (digits > 0 && digits < k.size() && (k[digits] == '.' || k[digits] == ')')) {
      k = text::trim(k.substr(digits + 1));
    }
    while (!k.empty() && (k.back() == '"' || k.back() == '\'' || k.back() == '.')) {
      k = text::trim(k.substr(0, k.size() - 1));
    }
    if (k.empty()) continue;
    if (text::utf8_length(k) > 100) {
      throw Error(ErrorCode::MalformedResponse, "keyword response contains a prose-length item");
    }
    if (!seen.insert(text::fold_case(k)).second) continue;
    out.emplace_back(k);
    if (out.size() == kMaxKeywords) break;
  }
  return out;
}

struct EnrichOptions {
  EnrichmentPrompts prompts;
  RetryPolicy retry;
  DecodingParams decoding;
  std::size_t concurrency = 4;
};

inline std::vector<std::string> llm_keywords(const Chunk& chunk, GeneratorClient& client,
                                             const EnrichOptions& opts = {}) {
  auto prompt = fill(opts.prompts.keywords, "{chunk}", chunk.text);
  return parse_keywords(complete_with_retry(client, prompt, opts.decoding, opts.retry));
}

inline std::string llm_summary(const Chunk& chunk, GeneratorClient& client,
                               const EnrichOptions& opts = {}) {
  auto prompt = fill(opts.prompts.summary, "{chunk}", chunk.text);
  auto response = complete_with_retry(client, prompt, opts.decoding, opts.retry);
  if (text::is_blank(response)) {
    throw Error(ErrorCode::MalformedResponse, "empty summary for chunk " + chunk.chunk_id);
  }
  return response;
}

/// The text that gets embedded for a chunk under a representation mode.
inline std::string representation_for_index(const Chunk& chunk, const ChunkMetadata& meta,
                                            RepresentationMode mode) {
  switch (mode) {
    case RepresentationMode::FullText: return chunk.text;
    case RepresentationMode::Keywords:
      if (!meta.keywords) break;
      return text::join(*meta.keywords, ", ");
    case RepresentationMode::Summary:
      if (!meta.summary) break;
      return *meta.summary;
    case RepresentationMode::PrefixTable:
      if (meta.prefix_repr.empty()) break;
      return meta.prefix_repr;
  }
  throw Error(ErrorCode::MissingMetadata,
              std::string(to_string(mode)) + " metadata missing for chunk " + chunk.chunk_id);
}

/// On-disk cache of model responses:
///   <root>/<mode>/<fnv64(chunk_id)>-<fnv64(prompt template)>.json
/// each file holding {"chunk_id", "mode", "prompt_hash", "value"}.
class EnrichmentCache {
 public:
  explicit EnrichmentCache(std::filesystem::path root) : root_(std::move(root)) {}

  std::optional<std::string> get(const std::string& chunk_id, RepresentationMode mode,
                                 const std::string& prompt_hash) const {
    auto path = entry_path(chunk_id, mode, prompt_hash);
    std::error_code ec;
    if (!std::filesystem::exists(path, ec)) return std::nullopt;
    try {
      auto j = nlohmann::json::parse(io::read_file(path));
      if (j.at("chunk_id").get<std::string>() != chunk_id) return std::nullopt;
      return j.at("value").get<std::string>();
    } catch (const std::exception&) {
      return std::nullopt;
    }
  }

  void put(const std::string& chunk_id, RepresentationMode mode, const std::string& prompt_hash,
           const std::string& value) {
    nlohmann::json j{{"chunk_id", chunk_id},
                     {"mode", std::string(to_string(mode))},
                     {"prompt_hash", prompt_hash},
                     {"value", value}};
    std::lock_guard lock(write_mu_);
    io::write_file_atomic(entry_path(chunk_id, mode, prompt_hash), j.dump());
  }

 private:
  std::filesystem::path entry_path(const std::string& chunk_id, RepresentationMode mode,
                                   const std::string& prompt_hash) const {
    return root_ / std::string(to_string(mode)) /
           (hex64(fnv1a64(chunk_id)) + "-" + prompt_hash + ".json");
  }

  std::filesystem::path root_;
  std::mutex write_mu_;
};

struct EnrichRequest {
  bool keywords = false;
  bool summary = false;
};

/// Computes metadata for every chunk. The prefix representation is always
/// filled; keywords and summary only when requested (they need `client`).
/// Model calls run on a bounded pool; results are returned in chunk order.
inline std::vector<ChunkMetadata> enrich_chunks(const std::vector<Chunk>& chunks,
                                                EnrichRequest request, GeneratorClient* client,
                                                const EnrichOptions& opts = {},
                                                EnrichmentCache* cache = nullptr) {
  if ((request.keywords || request.summary) && !client) {
    throw Error(ErrorCode::Config, "keyword/summary enrichment requires a generator client");
  }
  const auto kw_hash = hex64(fnv1a64(opts.prompts.keywords));
  const auto sum_hash = hex64(fnv1a64(opts.prompts.summary));

  std::vector<ChunkMetadata> out(chunks.size());
  bounded_for(chunks.size(), opts.concurrency, [&](std::size_t i) {
    const auto& c = chunks[i];
    auto& meta = out[i];
    meta.prefix_repr = naive_prefix(c);
    if (request.keywords) {
      std::optional<std::string> cached;
      if (cache) cached = cache->get(c.chunk_id, RepresentationMode::Keywords, kw_hash);
      if (cached) {
        meta.keywords = parse_keywords(*cached);
      } else {
        auto prompt = fill(opts.prompts.keywords, "{chunk}", c.text);
        auto response = complete_with_retry(*client, prompt, opts.decoding, opts.retry);
        meta.keywords = parse_keywords(response);
        if (cache) cache->put(c.chunk_id, RepresentationMode::Keywords, kw_hash, response);
      }
    }
    if (request.summary) {
      std::optional<std::string> cached;
      if (cache) cached = cache->get(c.chunk_id, RepresentationMode::Summary, sum_hash);
      if (cached) {
        meta.summary = *cached;
      } else {
        meta.summary = llm_summary(c, *client, opts);
        if (cache) cache->put(c.chunk_id, RepresentationMode::Summary, sum_hash, *meta.summary);
      }
    }
  });
  return out;
}

// ---- JSON lines -----------------------------------------------------------

inline nlohmann::json metadata_to_json(const std::string& chunk_id, const ChunkMetadata& m) {
  nlohmann::json j{{"chunk_id", chunk_id}, {"prefix_repr", m.prefix_repr}};
  j["keywords"] = m.keywords ? nlohmann::json(*m.keywords) : nlohmann::json(nullptr);
  j["summary"] = m.summary ? nlohmann::json(*m.summary) : nlohmann::json(nullptr);
  return j;
}

inline std::pair<std::string, ChunkMetadata> metadata_from_json(const nlohmann::json& j) {
  try {
    ChunkMetadata m;
    m.prefix_repr = j.at("prefix_repr").get<std::string>();
    if (!j.at("keywords").is_null()) m.keywords = j.at("keywords").get<std::vector<std::string>>();
    if (!j.at("summary").is_null()) m.summary = j.at("summary").get<std::string>();
    return {j.at("chunk_id").get<std::string>(), std::move(m)};
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedInput, std::string("bad metadata record: ") + e.what());
  }
}

}  // namespace elemrag
