#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "elemrag/enrichment.hpp"
#include "elemrag/error.hpp"
#include "elemrag/llm_client.hpp"
#include "elemrag/text.hpp"
#include "elemrag/tokenizer.hpp"
#include "elemrag/vector_index.hpp"

namespace elemrag {

/// Answer prompt. `{query}` takes the question and `{sources}` the rendered
/// source lines, each `source_line` with `{key}` and `{source}` filled.
struct AnswerPromptTemplate {
  std::string body =
      "please answer the question below by referencing the list of sources\n"
      "provided after the question; if the question can not be answered just\n"
      "respond 'No answer'. The sources are listed after \"Sources:\".\n"
      "\n"
      "Question: {query}\n"
      "\n"
      "Sources:\n"
      "{sources}";
  std::string source_line = "{key} - {source}";
};

struct RetrievedChunk {
  RetrievalResult hit;
  std::string text;
};

inline std::string build_answer_prompt(const std::string& question,
                                       const std::vector<RetrievedChunk>& chunks,
                                       const AnswerPromptTemplate& tmpl = {}) {
  if (chunks.empty()) throw Error(ErrorCode::NoChunks, "answer prompt needs at least one source");
  std::string sources;
  for (const auto& c : chunks) {
    sources += substitute(tmpl.source_line, {{"{key}", c.hit.chunk_id}, {"{source}", c.text}});
    sources += '\n';
  }
  return substitute(tmpl.body, {{"{query}", question}, {"{sources}", sources}});
}

struct GeneratorBudget {
  std::size_t max_context_tokens = 8192;
  std::size_t reserved_completion_tokens = 512;

  std::size_t prompt_limit() const {
    return max_context_tokens > reserved_completion_tokens
               ? max_context_tokens - reserved_completion_tokens
               : 0;
  }
};

/// Throws TokenBudgetExceeded when the prompt estimate exceeds the context
/// window minus the completion reserve. Returns the estimate otherwise.
template <Tokenizer Tok = WhitespacePunctTokenizer>
std::size_t enforce_token_budget(std::string_view prompt, const GeneratorBudget& budget,
                                 const Tok& tok = {}) {
  const std::size_t estimate = tok.count(prompt);
  if (estimate > budget.prompt_limit()) throw TokenBudgetExceeded(estimate, budget.prompt_limit());
  return estimate;
}

/// Case-folds, trims, strips surrounding quotes and trailing punctuation, then
/// tests for a leading "no answer".
inline bool is_no_answer(std::string_view response) {
  std::string s = text::fold_case(text::trim(response));
  auto strip_edges = [&] {
    bool changed = true;
    while (changed && !s.empty()) {
      changed = false;
      char b = s.back();
      if (b == '.' || b == '!' || b == '?' || b == ',' || b == ';' || b == ':' || b == '\'' ||
          b == '"' || text::is_space(b)) {
        s.pop_back();
        changed = true;
      }
      if (!s.empty() && (s.front() == '\'' || s.front() == '"' || text::is_space(s.front()))) {
        s.erase(s.begin());
        changed = true;
      }
    }
  };
  strip_edges();
  return s.starts_with("no answer");
}

struct GeneratedAnswer {
  std::string text;
  bool is_no_answer = false;
  std::size_t prompt_tokens_est = 0;
  std::vector<std::string> sources;
};

struct GenerateOptions {
  AnswerPromptTemplate prompt;
  GeneratorBudget budget;
  DecodingParams decoding;
  RetryPolicy retry;
  /// Drop lowest-ranked chunks until the prompt fits instead of failing.
  bool truncate_to_fit = false;
};

inline GeneratedAnswer generate_answer(const std::string& question, std::vector<RetrievedChunk> chunks,
                                       GeneratorClient& client, const GenerateOptions& opts = {}) {
  std::string prompt = build_answer_prompt(question, chunks, opts.prompt);
  std::size_t estimate = 0;
  while (true) {
    try {
      estimate = enforce_token_budget(prompt, opts.budget);
      break;
    } catch (const TokenBudgetExceeded&) {
      if (!opts.truncate_to_fit || chunks.size() <= 1) throw;
      chunks.pop_back();
      prompt = build_answer_prompt(question, chunks, opts.prompt);
    }
  }
  GeneratedAnswer out;
  out.text = complete_with_retry(client, prompt, opts.decoding, opts.retry);
  out.is_no_answer = is_no_answer(out.text);
  out.prompt_tokens_est = estimate;
  for (const auto& c : chunks) out.sources.push_back(c.hit.chunk_id);
  return out;
}

}  // namespace elemrag
