#pragma once

#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "elemrag/element_model.hpp"
#include "elemrag/error.hpp"
#include "elemrag/text.hpp"
#include "elemrag/tokenizer.hpp"

namespace elemrag {

inline constexpr std::size_t kDefaultMaxChars = 2048;
inline constexpr char kElementJoin = '\n';

struct StrategyTag {
  enum class Kind { FixedTokens, ElementBased, Aggregate };

  Kind kind = Kind::ElementBased;
  std::size_t size = kDefaultMaxChars;  // n for FixedTokens, max_chars for ElementBased
  std::vector<StrategyTag> members;     // Aggregate only

  static StrategyTag fixed_tokens(std::size_t n) { return {Kind::FixedTokens, n, {}}; }
  static StrategyTag element_based(std::size_t max_chars = kDefaultMaxChars) {
    return {Kind::ElementBased, max_chars, {}};
  }
  static StrategyTag aggregate(std::vector<StrategyTag> members) {
    return {Kind::Aggregate, 0, std::move(members)};
  }

  bool operator==(const StrategyTag&) const = default;

  /// Machine label used in chunk ids and file names: `base-128`,
  /// `elements-2048`, `aggregate(base-128+base-256)`.
  std::string label() const {
    switch (kind) {
      case Kind::FixedTokens: return "base-" + std::to_string(size);
      case Kind::ElementBased: return "elements-" + std::to_string(size);
      case Kind::Aggregate: {
        std::string s = "aggregate(";
        for (std::size_t i = 0; i < members.size(); ++i) {
          if (i) s += '+';
          s += members[i].label();
        }
        return s + ")";
      }
    }
    return {};
  }

  /// Human label for report tables.
  std::string display_name() const {
    switch (kind) {
      case Kind::FixedTokens: return "Base " + std::to_string(size);
      case Kind::ElementBased:
        return size == kDefaultMaxChars ? "Element" : "Element " + std::to_string(size);
      case Kind::Aggregate: {
        bool all_fixed = !members.empty();
        for (const auto& m : members) all_fixed = all_fixed && m.kind == Kind::FixedTokens;
        if (all_fixed) return "Base Aggregation";
        std::string s = "Aggregation(";
        for (std::size_t i = 0; i < members.size(); ++i) {
          if (i) s += " + ";
          s += members[i].display_name();
        }
        return s + ")";
      }
    }
    return {};
  }

  /// Atomic (non-aggregate) strategies this tag expands to, in order.
  std::vector<StrategyTag> atoms() const {
    if (kind != Kind::Aggregate) return {*this};
    std::vector<StrategyTag> out;
    for (const auto& m : members) {
      for (auto& a : m.atoms()) out.push_back(std::move(a));
    }
    return out;
  }

  static StrategyTag parse(std::string_view label) {
    auto s = text::trim(label);
    auto positive = [&](std::string_view digits) -> std::size_t {
      if (digits.empty() || digits.find_first_not_of("0123456789") != std::string_view::npos) {
        throw Error(ErrorCode::Config, "invalid strategy label '" + std::string(label) + "'");
      }
      auto v = std::stoull(std::string(digits));
      if (v == 0) throw Error(ErrorCode::Config, "strategy size must be >= 1");
      return static_cast<std::size_t>(v);
    };
    if (s.starts_with("base-")) return fixed_tokens(positive(s.substr(5)));
    if (s == "elements") return element_based();
    if (s.starts_with("elements-")) return element_based(positive(s.substr(9)));
    if (s.starts_with("aggregate(") && s.ends_with(")")) {
      auto inner = s.substr(10, s.size() - 11);
      std::vector<StrategyTag> members;
      int depth = 0;
      std::size_t start = 0;
      for (std::size_t i = 0; i <= inner.size(); ++i) {
        if (i == inner.size() || (inner[i] == '+' && depth == 0)) {
          members.push_back(parse(inner.substr(start, i - start)));
          start = i + 1;
        } else if (inner[i] == '(') {
          ++depth;
        } else if (inner[i] == ')') {
          --depth;
        }
      }
      return aggregate(std::move(members));
    }
    throw Error(ErrorCode::Config, "invalid strategy label '" + std::string(label) + "'");
  }
};

struct Chunk {
  std::string chunk_id;
  std::string doc_id;
  std::string text;
  std::vector<std::string> element_ids;  // empty for token windows
  std::set<int> pages;
  StrategyTag strategy;
  bool is_table_chunk = false;
  std::size_t char_len = 0;
  std::size_t token_len = 0;

  bool operator==(const Chunk&) const = default;
};

namespace detail {

inline std::string chunk_id(const std::string& doc_id, const StrategyTag& tag, std::size_t ordinal) {
  return doc_id + "#" + tag.label() + "#" + std::to_string(ordinal);
}

}  // namespace detail

/// Consecutive, non-overlapping windows of exactly `n` tokens over the
/// document text (element texts joined by a newline); the last window holds
/// the remainder. A window's pages are those of the elements it overlaps.
template <Tokenizer Tok = WhitespacePunctTokenizer>
std::vector<Chunk> chunk_fixed_tokens(const Document& doc, std::size_t n, const Tok& tok = {}) {
  if (n == 0) throw Error(ErrorCode::Config, "token window size must be >= 1");
  const auto tag = StrategyTag::fixed_tokens(n);

  std::string full;
  std::vector<std::pair<std::size_t, std::size_t>> ranges;
  ranges.reserve(doc.elements.size());
  for (std::size_t i = 0; i < doc.elements.size(); ++i) {
    if (i) full += kElementJoin;
    ranges.emplace_back(full.size(), full.size() + doc.elements[i].text.size());
    full += doc.elements[i].text;
  }

  const auto tokens = tok.tokenize(full);
  std::vector<Chunk> out;
  out.reserve((tokens.size() + n - 1) / n);
  std::size_t el = 0;
  for (std::size_t w = 0; w < tokens.size(); w += n) {
    const std::size_t last = std::min(tokens.size(), w + n) - 1;
    const std::size_t begin = tokens[w].begin;
    const std::size_t end = tokens[last].end;

    Chunk c;
    c.chunk_id = detail::chunk_id(doc.doc_id, tag, out.size());
    c.doc_id = doc.doc_id;
    c.text = full.substr(begin, end - begin);
    c.strategy = tag;
    c.char_len = text::utf8_length(c.text);
    c.token_len = last - w + 1;
    while (el < ranges.size() && ranges[el].second <= begin) ++el;
    for (std::size_t j = el; j < ranges.size() && ranges[j].first < end; ++j) {
      if (ranges[j].second > ranges[j].first) c.pages.insert(doc.elements[j].page_number);
    }
    out.push_back(std::move(c));
  }
  return out;
}

/// Structural chunking over typed elements in reading order:
///  - a Title closes the open chunk and starts a new one;
///  - a Table closes the open chunk and forms a chunk of its own;
///  - other elements are appended while the open chunk is shorter than
///    `max_chars`, otherwise they start a new chunk;
///  - an element at least `max_chars` long is emitted whole as its own chunk.
/// Elements with empty text never open or close chunks. They ride along with
/// the open chunk (or the last emitted one, or the first one at document
/// start) so that every element id lands in exactly one chunk.
inline std::vector<Chunk> chunk_by_elements(const Document& doc,
                                            std::size_t max_chars = kDefaultMaxChars) {
  if (max_chars == 0) throw Error(ErrorCode::Config, "max_chars must be >= 1");
  const auto tag = StrategyTag::element_based(max_chars);
  const WhitespacePunctTokenizer tok;

  std::vector<Chunk> out;
  std::optional<Chunk> open;
  std::vector<const DocumentElement*> leading_riders;

  auto start = [&](const DocumentElement& e) {
    Chunk c;
    c.doc_id = doc.doc_id;
    c.strategy = tag;
    c.text = e.text;
    c.char_len = text::utf8_length(e.text);
    c.element_ids.push_back(e.element_id);
    c.pages.insert(e.page_number);
    c.is_table_chunk = e.element_type == ElementType::Table;
    return c;
  };
  auto emit = [&](Chunk c) {
    if (out.empty() && !leading_riders.empty()) {
      std::vector<std::string> ids;
      for (const auto* r : leading_riders) {
        ids.push_back(r->element_id);
        c.pages.insert(r->page_number);
      }
      ids.insert(ids.end(), c.element_ids.begin(), c.element_ids.end());
      c.element_ids = std::move(ids);
      leading_riders.clear();
    }
    c.chunk_id = detail::chunk_id(doc.doc_id, tag, out.size());
    c.token_len = tok.count(c.text);
    out.push_back(std::move(c));
  };
  auto close = [&] {
    if (open) {
      emit(std::move(*open));
      open.reset();
    }
  };

  for (const auto& e : doc.elements) {
    if (e.text.empty()) {
      Chunk* host = open ? &*open : (out.empty() ? nullptr : &out.back());
      if (host) {
        host->element_ids.push_back(e.element_id);
        host->pages.insert(e.page_number);
      } else {
        leading_riders.push_back(&e);
      }
      continue;
    }
    const std::size_t len = text::utf8_length(e.text);
    if (e.element_type == ElementType::Title) {
      close();
      open = start(e);
    } else if (e.element_type == ElementType::Table || len >= max_chars) {
      close();
      emit(start(e));
    } else {
      if (open && open->char_len >= max_chars) close();
      if (!open) {
        open = start(e);
      } else {
        open->text += kElementJoin;
        open->text += e.text;
        open->char_len += 1 + len;
        open->element_ids.push_back(e.element_id);
        open->pages.insert(e.page_number);
      }
    }
  }
  close();
  return out;
}

/// Concatenates chunkings of one document. Each chunk keeps its id and is
/// re-tagged as Aggregate over its original strategy.
inline std::vector<Chunk> aggregate_chunkings(
    const std::vector<std::pair<StrategyTag, std::vector<Chunk>>>& chunkings) {
  std::vector<Chunk> out;
  std::optional<std::string> doc_id;
  for (const auto& [tag, chunks] : chunkings) {
    for (const auto& c : chunks) {
      if (doc_id && *doc_id != c.doc_id) {
        throw Error(ErrorCode::MixedDocuments,
                    "cannot aggregate chunks of '" + *doc_id + "' and '" + c.doc_id + "'");
      }
      doc_id = c.doc_id;
      Chunk copy = c;
      copy.strategy = StrategyTag::aggregate({tag});
      out.push_back(std::move(copy));
    }
  }
  return out;
}

/// Dispatches on the strategy kind. Aggregates chunk each member in turn.
inline std::vector<Chunk> chunk_document(const Document& doc, const StrategyTag& tag) {
  switch (tag.kind) {
    case StrategyTag::Kind::FixedTokens: return chunk_fixed_tokens(doc, tag.size);
    case StrategyTag::Kind::ElementBased: return chunk_by_elements(doc, tag.size);
    case StrategyTag::Kind::Aggregate: {
      std::vector<std::pair<StrategyTag, std::vector<Chunk>>> parts;
      for (const auto& m : tag.members) parts.emplace_back(m, chunk_document(doc, m));
      return aggregate_chunkings(parts);
    }
  }
  return {};
}

// ---- JSON lines -----------------------------------------------------------

inline nlohmann::json to_json(const StrategyTag& tag) {
  switch (tag.kind) {
    case StrategyTag::Kind::FixedTokens: return {{"kind", "FixedTokens"}, {"n", tag.size}};
    case StrategyTag::Kind::ElementBased:
      return {{"kind", "ElementBased"}, {"max_chars", tag.size}};
    case StrategyTag::Kind::Aggregate: {
      auto members = nlohmann::json::array();
      for (const auto& m : tag.members) members.push_back(to_json(m));
      return {{"kind", "Aggregate"}, {"members", std::move(members)}};
    }
  }
  return {};
}

inline StrategyTag strategy_from_json(const nlohmann::json& j) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "FixedTokens") return StrategyTag::fixed_tokens(j.at("n").get<std::size_t>());
  if (kind == "ElementBased") return StrategyTag::element_based(j.at("max_chars").get<std::size_t>());
  if (kind == "Aggregate") {
    std::vector<StrategyTag> members;
    for (const auto& m : j.at("members")) members.push_back(strategy_from_json(m));
    return StrategyTag::aggregate(std::move(members));
  }
  throw Error(ErrorCode::MalformedInput, "unknown strategy kind '" + kind + "'");
}

inline nlohmann::json to_json(const Chunk& c) {
  return {{"chunk_id", c.chunk_id},
          {"doc_id", c.doc_id},
          {"text", c.text},
          {"element_ids", c.element_ids},
          {"pages", c.pages},
          {"strategy", to_json(c.strategy)},
          {"is_table_chunk", c.is_table_chunk},
          {"char_len", c.char_len},
          {"token_len", c.token_len}};
}

inline Chunk chunk_from_json(const nlohmann::json& j) {
  try {
    Chunk c;
    c.chunk_id = j.at("chunk_id").get<std::string>();
    c.doc_id = j.at("doc_id").get<std::string>();
    c.text = j.at("text").get<std::string>();
    c.element_ids = j.at("element_ids").get<std::vector<std::string>>();
    c.pages = j.at("pages").get<std::set<int>>();
    c.strategy = strategy_from_json(j.at("strategy"));
    c.is_table_chunk = j.at("is_table_chunk").get<bool>();
    c.char_len = j.at("char_len").get<std::size_t>();
    c.token_len = j.at("token_len").get<std::size_t>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedInput, std::string("bad chunk record: ") + e.what());
  }
}

inline std::string chunks_to_jsonl(const std::vector<Chunk>& chunks) {
  std::string out;
  for (const auto& c : chunks) {
    out += to_json(c).dump();
    out += '\n';
  }
  return out;
}

inline std::vector<Chunk> chunks_from_jsonl(std::string_view raw) {
  std::vector<Chunk> out;
  for (const auto& line : text::split(raw, '\n')) {
    if (text::is_blank(line)) continue;
    try {
      out.push_back(chunk_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorCode::MalformedInput, std::string("bad chunk line: ") + e.what());
    }
  }
  return out;
}

}  // namespace elemrag
