#include <gtest/gtest.h>

#include "elemrag/generation.hpp"

using namespace elemrag;

namespace {

RetrievedChunk rc(std::string id, std::string text, std::size_t rank) {
  return {RetrievalResult{std::move(id), 1.0 / static_cast<double>(rank), rank}, std::move(text)};
}

std::string tokens(std::size_t n) {
  std::string s;
  for (std::size_t i = 0; i < n; ++i) s += i ? " t" : "t";
  return s;
}

const char* kPreamble =
    "please answer the question below by referencing the list of sources\n"
    "provided after the question; if the question can not be answered just\n"
    "respond 'No answer'. The sources are listed after \"Sources:\".\n\n";

}  // namespace

TEST(AnswerPrompt, SingleChunkExactText) {
  auto p = build_answer_prompt("What was revenue?", {rc("d#base-128#0", "Revenue was $5.", 1)});
  EXPECT_EQ(p, std::string(kPreamble) + "Question: What was revenue?\n\nSources:\nd#base-128#0 - Revenue was $5.\n");
}

TEST(AnswerPrompt, SourcesInRankOrder) {
  auto p = build_answer_prompt("Q?", {rc("k1", "first", 1), rc("k2", "second", 2), rc("k3", "third {query}", 3)});
  EXPECT_TRUE(p.ends_with("Sources:\nk1 - first\nk2 - second\nk3 - third {query}\n"));
  EXPECT_LT(p.find("k1 - "), p.find("k2 - "));
  EXPECT_LT(p.find("k2 - "), p.find("k3 - "));
}

TEST(AnswerPrompt, NoChunksRejected) {
  try {
    build_answer_prompt("Q?", {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoChunks);
  }
}

TEST(TokenBudget, Limits) {
  GeneratorBudget big;
  EXPECT_EQ(enforce_token_budget(tokens(100), big), 100u);
  EXPECT_EQ(enforce_token_budget(tokens(7680), big), 7680u);
  EXPECT_THROW(enforce_token_budget(tokens(7681), big), TokenBudgetExceeded);
  EXPECT_THROW(enforce_token_budget(tokens(9000), big), TokenBudgetExceeded);

  GeneratorBudget small{1000, 512};
  EXPECT_EQ(small.prompt_limit(), 488u);
  try {
    enforce_token_budget(tokens(600), small);
    FAIL();
  } catch (const TokenBudgetExceeded& e) {
    EXPECT_EQ(e.code(), ErrorCode::TokenBudgetExceeded);
    EXPECT_EQ(e.estimate(), 600u);
    EXPECT_EQ(e.limit(), 488u);
  }
}

TEST(NoAnswer, Variants) {
  for (const char* s : {"No answer", "no answer.", "  NO ANSWER  ", "'No answer'", "\"No answer.\"",
                        "No answer!", "No answer - the sources do not say"}) {
    EXPECT_TRUE(is_no_answer(s)) << s;
  }
  for (const char* s : {"The answer is no.", "Revenue was $5.", "", "None", "Answer: no answer"}) {
    EXPECT_FALSE(is_no_answer(s)) << s;
  }
}

TEST(GenerateAnswer, UsesClientAndFlagsNoAnswer) {
  StubClient stub;
  stub.add_rule("Question: A?", "It is 5.");
  stub.add_rule("Question: B?", "No answer.");
  auto a = generate_answer("A?", {rc("k1", "x", 1)}, stub);
  EXPECT_EQ(a.text, "It is 5.");
  EXPECT_FALSE(a.is_no_answer);
  EXPECT_EQ(a.sources, (std::vector<std::string>{"k1"}));
  EXPECT_GT(a.prompt_tokens_est, 0u);
  EXPECT_TRUE(generate_answer("B?", {rc("k1", "x", 1)}, stub).is_no_answer);
}

TEST(GenerateAnswer, BudgetExceededSkipsClient) {
  StubClient stub;
  stub.set_default("never");
  GenerateOptions opts;
  opts.budget = {1000, 512};
  EXPECT_THROW(generate_answer("Q?", {rc("k1", tokens(600), 1)}, stub, opts), TokenBudgetExceeded);
  EXPECT_EQ(stub.calls(), 0u);
}

TEST(GenerateAnswer, TruncateDropsLowestRanked) {
  StubClient stub;
  stub.set_default("ok");
  GenerateOptions opts;
  opts.budget = {1000, 512};
  opts.truncate_to_fit = true;
  auto a = generate_answer("Q?", {rc("k1", tokens(200), 1), rc("k2", tokens(200), 2), rc("k3", tokens(200), 3)}, stub,
                           opts);
  EXPECT_EQ(a.sources, (std::vector<std::string>{"k1", "k2"}));
  EXPECT_LE(a.prompt_tokens_est, 488u);
  // A single oversized chunk still fails.
  EXPECT_THROW(generate_answer("Q?", {rc("k1", tokens(600), 1)}, stub, opts), TokenBudgetExceeded);
}
