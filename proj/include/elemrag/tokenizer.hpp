#pragma once

#include <concepts>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "elemrag/text.hpp"

namespace elemrag {

/// Byte range [begin, end) of one token inside the tokenized text.
struct TokenSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
  bool operator==(const TokenSpan&) const = default;
};

/// A tokenizer maps text to token spans and can count without materializing.
/// Implementations must be deterministic.
template <class T>
concept Tokenizer = requires(const T& tok, std::string_view s) {
  { tok.tokenize(s) } -> std::same_as<std::vector<TokenSpan>>;
  { tok.count(s) } -> std::convertible_to<std::size_t>;
};

/// Whitespace splitting with leading and trailing punctuation peeled off as
/// one-character tokens. Interior punctuation stays ("32,502", "10-K").
/// Because tokens never span whitespace, tokenize(a + " " + b) is
/// tokenize(a) followed by tokenize(b).
struct WhitespacePunctTokenizer {
  static bool is_punct(char c) {
    switch (c) {
      case '.': case ',': case ':': case ';': case '!': case '?':
      case '"': case '\'': case '(': case ')': case '[': case ']':
      case '{': case '}':
        return true;
      default:
        return false;
    }
  }

  template <class Sink>
  static void scan(std::string_view s, Sink&& emit) {
    std::size_t i = 0;
    const std::size_t n = s.size();
    while (i < n) {
      while (i < n && text::is_space(s[i])) ++i;
      if (i >= n) break;
      std::size_t b = i;
      while (i < n && !text::is_space(s[i])) ++i;
      std::size_t e = i;
      while (b < e && is_punct(s[b])) {
        emit(TokenSpan{b, b + 1});
        ++b;
      }
      std::size_t core_end = e;
      while (core_end > b && is_punct(s[core_end - 1])) --core_end;
      if (core_end > b) emit(TokenSpan{b, core_end});
      for (std::size_t p = core_end; p < e; ++p) emit(TokenSpan{p, p + 1});
    }
  }

  std::vector<TokenSpan> tokenize(std::string_view s) const {
    std::vector<TokenSpan> out;
    scan(s, [&](TokenSpan t) { out.push_back(t); });
    return out;
  }

  std::size_t count(std::string_view s) const {
    std::size_t n = 0;
    scan(s, [&](TokenSpan) { ++n; });
    return n;
  }
};

static_assert(Tokenizer<WhitespacePunctTokenizer>);

inline std::vector<std::string> token_strings(std::string_view s, const std::vector<TokenSpan>& spans) {
  std::vector<std::string> out;
  out.reserve(spans.size());
  for (auto sp : spans) out.emplace_back(s.substr(sp.begin, sp.end - sp.begin));
  return out;
}

inline std::vector<std::string> default_tokenize(std::string_view s) {
  return token_strings(s, WhitespacePunctTokenizer{}.tokenize(s));
}

}  // namespace elemrag
