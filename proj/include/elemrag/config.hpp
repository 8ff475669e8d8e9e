#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <json.hpp>

#include "elemrag/chunking.hpp"
#include "elemrag/embedding.hpp"
#include "elemrag/enrichment.hpp"
#include "elemrag/error.hpp"
#include "elemrag/evaluation.hpp"
#include "elemrag/generation.hpp"
#include "elemrag/hash.hpp"
#include "elemrag/llm_client.hpp"
#include "elemrag/vector_index.hpp"

namespace elemrag {

/// One evaluated retrieval configuration: a chunking strategy searched over
/// one or more representation indexes whose hits are merged.
struct EvalTarget {
  StrategyTag strategy;
  std::vector<RepresentationMode> modes;

  /// `elements-2048/full+prefix`
  std::string label() const {
    std::string s = strategy.label() + "/";
    for (std::size_t i = 0; i < modes.size(); ++i) {
      if (i) s += '+';
      s += to_string(modes[i]);
    }
    return s;
  }

  std::string display_name() const {
    if (modes.size() == 1 && modes[0] == RepresentationMode::FullText) return strategy.display_name();
    if (modes.size() == 1) return display_name_of(modes[0]) + " " + strategy.display_name();
    return strategy.display_name() + " Aggregation";
  }

  static EvalTarget parse(std::string_view label) {
    auto s = text::trim(label);
    auto slash = s.rfind('/');
    EvalTarget t;
    t.strategy = StrategyTag::parse(slash == std::string_view::npos ? s : s.substr(0, slash));
    if (slash == std::string_view::npos) {
      t.modes = {RepresentationMode::FullText};
      return t;
    }
    for (const auto& m : text::split(s.substr(slash + 1), '+')) {
      auto mode = parse_mode(m);
      if (std::find(t.modes.begin(), t.modes.end(), mode) == t.modes.end()) t.modes.push_back(mode);
    }
    if (t.modes.empty()) throw Error(ErrorCode::Config, "target '" + std::string(label) + "' lists no modes");
    return t;
  }

 private:
  static std::string display_name_of(RepresentationMode m) { return elemrag::display_name(m); }
};

struct EmbedderConfig {
  bool remote = false;
  std::size_t local_dim = kDefaultEmbeddingDim;
  EmbeddingEndpointConfig endpoint;
};

struct IndexConfig {
  IndexMode mode = IndexMode::Exact;
  HnswParams hnsw;
};

struct ClientConfig {
  std::optional<ChatEndpointConfig> endpoint;  // unset: only usable with a stub
};

struct RunConfig {
  std::filesystem::path corpus_dir;
  std::optional<std::filesystem::path> benchmark;
  std::vector<StrategyTag> strategies;
  std::vector<EvalTarget> targets;
  EmbedderConfig embedder;
  IndexConfig index;
  ClientConfig generator;
  ClientConfig judge;
  bool judge_enabled = true;
  GeneratorBudget budget;
  bool truncate_to_fit = false;
  DecodingParams decoding;
  RetryPolicy retry;
  std::size_t k = kDefaultTopK;
  std::filesystem::path out_dir = "out";
  std::size_t concurrency = 4;
  std::uint64_t seed = 42;
  EnrichmentPrompts enrichment_prompts;
  AnswerPromptTemplate answer_prompt;
  std::string judge_prompt{kJudgeTemplate};

  /// Modes that need an index for `strategy`, in first-use order.
  std::vector<RepresentationMode> modes_for(const StrategyTag& strategy) const {
    std::vector<RepresentationMode> out;
    for (const auto& t : targets) {
      if (t.strategy != strategy) continue;
      for (auto m : t.modes) {
        if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
      }
    }
    return out;
  }

  EnrichRequest enrichment_for(const StrategyTag& strategy) const {
    EnrichRequest r;
    for (auto m : modes_for(strategy)) {
      r.keywords = r.keywords || m == RepresentationMode::Keywords;
      r.summary = r.summary || m == RepresentationMode::Summary;
    }
    return r;
  }

  std::string embedder_fingerprint() const {
    if (embedder.remote) {
      return "remote/" + embedder.endpoint.base_url + "/" + embedder.endpoint.model + "/" +
             std::to_string(embedder.endpoint.dim);
    }
    return "local-hash/" + std::to_string(embedder.local_dim);
  }

  /// Everything that determines chunk, metadata and index contents.
  nlohmann::json index_relevant_json() const {
    nlohmann::json strategies = nlohmann::json::array();
    for (const auto& s : this->strategies) strategies.push_back(s.label());
    nlohmann::json targets = nlohmann::json::array();
    for (const auto& t : this->targets) targets.push_back(t.label());
    return {{"corpus", corpus_dir.generic_string()},
            {"strategies", strategies},
            {"targets", targets},
            {"embedder", embedder_fingerprint()},
            {"index", {{"mode", index.mode == IndexMode::Exact ? "exact" : "approximate"},
                       {"m", index.hnsw.m},
                       {"ef_construction", index.hnsw.ef_construction},
                       {"ef_search", index.hnsw.ef_search},
                       {"seed", seed}}}};
  }

  std::string config_hash() const { return hex64(fnv1a64(index_relevant_json().dump())); }

  void validate() const {
    if (k == 0) throw Error(ErrorCode::Config, "run.k must be >= 1");
    if (strategies.empty()) throw Error(ErrorCode::Config, "chunking.strategies lists no strategy");
    if (concurrency == 0) throw Error(ErrorCode::Config, "run.concurrency must be >= 1");
    if (!std::filesystem::is_directory(corpus_dir)) {
      throw Error(ErrorCode::Config, "corpus directory not found: " + corpus_dir.string());
    }
    if (benchmark && !std::filesystem::is_regular_file(*benchmark)) {
      throw Error(ErrorCode::Config, "benchmark file not found: " + benchmark->string());
    }
    for (const auto& t : targets) {
      if (std::find(strategies.begin(), strategies.end(), t.strategy) == strategies.end()) {
        throw Error(ErrorCode::Config, "target '" + t.label() + "' uses a strategy missing from chunking.strategies");
      }
    }
  }
};

namespace detail {

inline std::vector<std::string> list_value(const std::string& raw) {
  std::vector<std::string> out;
  int depth = 0;
  std::string cur;
  for (char c : raw) {
    if (c == '(') ++depth;
    if (c == ')') --depth;
    if (c == ',' && depth == 0) {
      if (!text::is_blank(cur)) out.emplace_back(text::trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!text::is_blank(cur)) out.emplace_back(text::trim(cur));
  return out;
}

template <class T>
T get_or(const boost::property_tree::ptree& pt, const std::string& key, T fallback) {
  // The defaulted get() swallows conversion failures, so only default on absence.
  if (!pt.get_child_optional(key)) return fallback;
  try {
    return pt.get<T>(key);
  } catch (const boost::property_tree::ptree_error& e) {
    throw Error(ErrorCode::Config, "bad value for " + key + ": " + e.what());
  }
}

inline std::optional<ChatEndpointConfig> chat_endpoint(const boost::property_tree::ptree& pt,
                                                       const std::string& section) {
  auto url = pt.get_optional<std::string>(section + ".base_url");
  if (!url) return std::nullopt;
  ChatEndpointConfig c;
  c.base_url = *url;
  c.model = get_or<std::string>(pt, section + ".model", c.model);
  c.api_key_env = get_or<std::string>(pt, section + ".api_key_env", c.api_key_env);
  return c;
}

}  // namespace detail

/// Parses the INI run configuration. Relative paths resolve against `base`.
/// Keys named like secrets are rejected; credentials come from the
/// environment variables named by `api_key_env`.
inline RunConfig parse_config(const std::string& ini, const std::filesystem::path& base = ".") {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    std::istringstream in(ini);
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw Error(ErrorCode::Config, std::string("config: ") + e.what());
  }
  for (const auto& [section, body] : tree) {
    for (const auto& [key, value] : body) {
      if (key == "api_key" || key == "token" || key == "password" || key == "secret") {
        throw Error(ErrorCode::Config, "config must not hold secrets (" + section + "." + key +
                                           "); set api_key_env instead");
      }
    }
  }
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : (base / path).lexically_normal();
  };

  RunConfig c;
  auto corpus = tree.get_optional<std::string>("corpus.dir");
  if (!corpus) throw Error(ErrorCode::Config, "corpus.dir is required");
  c.corpus_dir = resolve(*corpus);
  if (auto b = tree.get_optional<std::string>("corpus.benchmark")) c.benchmark = resolve(*b);

  for (const auto& s : detail::list_value(detail::get_or<std::string>(tree, "chunking.strategies", ""))) {
    c.strategies.push_back(StrategyTag::parse(s));
  }
  auto targets = detail::list_value(detail::get_or<std::string>(tree, "eval.targets", ""));
  if (targets.empty()) {
    for (const auto& s : c.strategies) c.targets.push_back({s, {RepresentationMode::FullText}});
  } else {
    for (const auto& t : targets) c.targets.push_back(EvalTarget::parse(t));
  }

  auto kind = detail::get_or<std::string>(tree, "embedder.kind", "local");
  if (kind == "remote") {
    c.embedder.remote = true;
    auto& e = c.embedder.endpoint;
    e.base_url = detail::get_or<std::string>(tree, "embedder.base_url", e.base_url);
    e.model = detail::get_or<std::string>(tree, "embedder.model", e.model);
    e.api_key_env = detail::get_or<std::string>(tree, "embedder.api_key_env", e.api_key_env);
    e.dim = detail::get_or<std::size_t>(tree, "embedder.dim", e.dim);
    e.batch_size = detail::get_or<std::size_t>(tree, "embedder.batch_size", e.batch_size);
  } else if (kind == "local") {
    c.embedder.local_dim = detail::get_or<std::size_t>(tree, "embedder.dim", kDefaultEmbeddingDim);
  } else {
    throw Error(ErrorCode::Config, "embedder.kind must be local or remote");
  }

  auto mode = detail::get_or<std::string>(tree, "index.mode", "exact");
  if (mode == "approximate") c.index.mode = IndexMode::Approximate;
  else if (mode != "exact") throw Error(ErrorCode::Config, "index.mode must be exact or approximate");
  c.index.hnsw.m = detail::get_or<std::uint32_t>(tree, "index.m", c.index.hnsw.m);
  c.index.hnsw.ef_construction = detail::get_or<std::uint32_t>(tree, "index.ef_construction", c.index.hnsw.ef_construction);
  c.index.hnsw.ef_search = detail::get_or<std::uint32_t>(tree, "index.ef_search", c.index.hnsw.ef_search);

  c.generator.endpoint = detail::chat_endpoint(tree, "generator");
  c.judge.endpoint = detail::chat_endpoint(tree, "judge");
  if (!c.judge.endpoint) c.judge.endpoint = c.generator.endpoint;
  c.judge_enabled = detail::get_or<bool>(tree, "judge.enabled", true);
  c.budget.max_context_tokens = detail::get_or<std::size_t>(tree, "generator.max_context_tokens", c.budget.max_context_tokens);
  c.budget.reserved_completion_tokens =
      detail::get_or<std::size_t>(tree, "generator.reserved_completion_tokens", c.budget.reserved_completion_tokens);
  c.truncate_to_fit = detail::get_or<bool>(tree, "generator.truncate_to_fit", false);
  c.decoding.max_tokens = detail::get_or<int>(tree, "generator.max_tokens", c.decoding.max_tokens);
  c.retry.max_attempts = detail::get_or<int>(tree, "generator.max_attempts", c.retry.max_attempts);

  c.k = detail::get_or<std::size_t>(tree, "run.k", c.k);
  c.out_dir = resolve(detail::get_or<std::string>(tree, "run.out", "out"));
  c.concurrency = detail::get_or<std::size_t>(tree, "run.concurrency", c.concurrency);
  c.seed = detail::get_or<std::uint64_t>(tree, "run.seed", c.seed);
  c.index.hnsw.seed = c.seed;

  // Template overrides live in files: INI values cannot carry newlines.
  auto load_template = [&](const std::string& key, std::string& into, std::initializer_list<std::string_view> slots) {
    auto file = tree.get_optional<std::string>("prompts." + key);
    if (!file) return;
    const auto path = resolve(*file);
    if (!std::filesystem::is_regular_file(path)) {
      throw Error(ErrorCode::Config, "prompts." + key + ": no such file " + path.string());
    }
    into = io::read_file(path);
    for (auto slot : slots) {
      if (into.find(slot) == std::string::npos) {
        throw Error(ErrorCode::Config, "prompts." + key + " must contain " + std::string(slot));
      }
    }
  };
  load_template("keywords", c.enrichment_prompts.keywords, {"{chunk}"});
  load_template("summary", c.enrichment_prompts.summary, {"{chunk}"});
  load_template("answer", c.answer_prompt.body, {"{query}", "{sources}"});
  load_template("judge", c.judge_prompt, {"{question}", "{ground_truth_answer}", "{generated_answer}"});
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) throw Error(ErrorCode::Config, "config file not found: " + path.string());
  // Anchor on the absolute location so the config hash does not depend on the cwd.
  return parse_config(io::read_file(path), std::filesystem::absolute(path).parent_path().lexically_normal());
}

}  // namespace elemrag
