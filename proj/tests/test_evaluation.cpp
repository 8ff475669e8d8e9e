#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "elemrag/evaluation.hpp"
#include "support/oracles.hpp"

using namespace elemrag;

namespace {

Chunk on_pages(std::set<int> pages, std::string text = "x") {
  Chunk c;
  c.chunk_id = "c";
  c.text = std::move(text);
  c.pages = std::move(pages);
  return c;
}

QuestionRecord rec(std::string id, AnswerOutcome o, VerdictState v, bool hit = false) {
  QuestionRecord r;
  r.question_id = std::move(id);
  r.doc_name = "D";
  r.target = "t";
  r.outcome = o;
  r.verdict = v;
  r.page_hit = hit;
  return r;
}

}  // namespace

TEST(PageHit, AnyRetrievedChunkOnGoldPage) {
  std::vector<Chunk> chunks{on_pages({3}), on_pages({5, 6})};
  EXPECT_TRUE(page_hit(chunks, 6));
  EXPECT_TRUE(page_hit(chunks, 3));
  EXPECT_FALSE(page_hit(chunks, 4));
  EXPECT_FALSE(page_hit(std::span<const Chunk>{}, 1));
}

TEST(Metrics, HandComputedValues) {
  EXPECT_NEAR(rouge_l_f1("the cat", "the cat sat").value, 0.8, 1e-12);
  EXPECT_NEAR(rouge_l_f1("The Cat", "the cat").value, 1.0, 1e-12);
  EXPECT_NEAR(rouge_l_f1("a b c d", "x y").value, 0.0, 1e-12);
  EXPECT_NEAR(bleu("the cat", "the cat sat", 2).value, std::exp(-0.5), 1e-12);
  EXPECT_NEAR(bleu("a b c d", "a b c d").value, 1.0, 1e-12);
  // One unigram of three matches: p1 = 1/3, p2 = (0+1)/(2+1), no brevity penalty.
  EXPECT_NEAR(bleu("a x y", "a b c", 2).value, std::sqrt((1.0 / 3) * (1.0 / 3)), 1e-12);
  EXPECT_NEAR(bleu("x y", "a b").value, 0.0, 1e-12);
}

TEST(Metrics, EmptyInputsFlagged) {
  EXPECT_TRUE(rouge_l_f1("", "a").empty_input);
  EXPECT_TRUE(bleu("a", "  ").empty_input);
  EXPECT_EQ(rouge_l_f1("", "").value, 0.0);
  EXPECT_FALSE(rouge_l_f1("a", "a").empty_input);
}

TEST(Metrics, AgreeWithOraclesOnRandomPairs) {
  std::mt19937_64 rng(41);
  const char* vocab[] = {"the", "net", "income", "was", "$5", "million", "in", "2021", "revenue", "rose"};
  auto sentence = [&](std::size_t n) {
    std::string s;
    for (std::size_t i = 0; i < n; ++i) s += std::string(i ? " " : "") + vocab[rng() % 10];
    return s;
  };
  for (int i = 0; i < 2000; ++i) {
    auto a = sentence(1 + rng() % 12);
    auto b = sentence(1 + rng() % 12);
    auto ta = default_tokenize(a);
    auto tb = default_tokenize(b);
    ASSERT_EQ(lcs_length(ta, tb), oracle::lcs(ta, tb));
    ASSERT_NEAR(rouge_l_f1(a, b).value, oracle::rouge_l(ta, tb), 1e-9) << a << " | " << b;
    ASSERT_NEAR(bleu(a, b).value, oracle::bleu(ta, tb, 4), 1e-9) << a << " | " << b;
    ASSERT_NEAR(rouge_l_f1(a, b).value, rouge_l_f1(b, a).value, 1e-12);
    ASSERT_GE(bleu(a, b).value, 0.0);
    ASSERT_LE(bleu(a, b).value, 1.0);
  }
}

TEST(Metrics, MaxOverContexts) {
  std::vector<Chunk> chunks{on_pages({1}, "unrelated words"), on_pages({2}, "the cat sat")};
  EXPECT_NEAR(max_over_contexts(rouge_l_f1, chunks, "the cat"), 0.8, 1e-12);
  EXPECT_EQ(max_over_contexts(rouge_l_f1, std::span<const Chunk>{}, "the cat"), 0.0);
}

TEST(JudgePrompt, ExactStructure) {
  auto p = build_judge_prompt("What is X?", "5", "five");
  EXPECT_EQ(p,
            "Begin with True or False. Are the two following answers (Answer 1 and\n"
            "Answer 2) the same with respect to the question between single quotes\n"
            "'What is X?'?\n\nAnswer 1: '5'\nAnswer 2: 'five'");
}

TEST(JudgePrompt, QuotesEscapedAndRecoverable) {
  const std::string q = "What's the company's \\ ratio?";
  auto p = build_judge_prompt(q, "it's 5", "5");
  auto start = p.find('\'') + 1;
  auto end = p.find("'?\n\nAnswer 1");
  EXPECT_EQ(unescape_quoted(p.substr(start, end - start)), q);
  EXPECT_NE(p.find("Answer 1: 'it\\'s 5'"), std::string::npos);
  std::mt19937_64 rng(2);
  for (int i = 0; i < 500; ++i) {
    std::string s;
    for (int j = 0; j < 20; ++j) s += "ab'\\ "[rng() % 5];
    ASSERT_EQ(unescape_quoted(escape_quoted(s)), s);
  }
}

TEST(JudgePrompt, BlankFieldsRejected) {
  EXPECT_THROW(build_judge_prompt("", "a", "b"), Error);
  EXPECT_THROW(build_judge_prompt("q", " ", "b"), Error);
  EXPECT_THROW(build_judge_prompt("q", "a", "\n"), Error);
}

TEST(Verdict, Parsing) {
  EXPECT_TRUE(parse_verdict("True").same);
  EXPECT_TRUE(parse_verdict("true, both give 5").same);
  EXPECT_TRUE(parse_verdict("  **TRUE**").same);
  EXPECT_FALSE(parse_verdict("False.").same);
  EXPECT_FALSE(parse_verdict("false - differs").same);
  EXPECT_TRUE(parse_verdict("1. True").same);
  for (const char* s : {"Truely", "Yes", "", "The answers are the same"}) {
    try {
      parse_verdict(s);
      ADD_FAILURE() << s;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::UnparseableVerdict);
    }
  }
}

TEST(Report, PageAccuracyPercent) {
  std::vector<QuestionRecord> rs;
  for (int i = 0; i < 141; ++i) rs.push_back(rec("q" + std::to_string(i), AnswerOutcome::Answered, VerdictState::True, i < 50));
  auto report = compute_report(rs, {{"t", "Element", 4000}});
  ASSERT_EQ(report.retrieval.size(), 1u);
  EXPECT_NEAR(report.retrieval[0].page_accuracy, 100.0 * 50 / 141, 1e-9);
  EXPECT_EQ(detail::fixed(report.retrieval[0].page_accuracy, 2), "35.46");
  EXPECT_EQ(report.retrieval[0].label, "Element");
}

TEST(Report, NoAnswerAndJudgeAccounting) {
  std::vector<QuestionRecord> rs;
  for (int i = 0; i < 4; ++i) rs.push_back(rec("a" + std::to_string(i), AnswerOutcome::NoAnswer, VerdictState::NotJudged));
  rs.push_back(rec("b", AnswerOutcome::BudgetExceeded, VerdictState::NotJudged));
  for (int i = 0; i < 4; ++i) rs.push_back(rec("c" + std::to_string(i), AnswerOutcome::Answered, VerdictState::True));
  rs.push_back(rec("d", AnswerOutcome::Answered, VerdictState::False));
  rs.push_back(rec("e", AnswerOutcome::Answered, VerdictState::Unparseable));
  rs.push_back(rec("f", AnswerOutcome::Answered, VerdictState::False));
  auto report = compute_report(rs);
  ASSERT_EQ(report.qa.size(), 1u);
  EXPECT_EQ(detail::fixed(report.qa[0].no_answer_rate, 2), "41.67");
  EXPECT_EQ(report.qa[0].unparseable, 1u);
  ASSERT_TRUE(report.qa[0].judge_accuracy);
  EXPECT_NEAR(*report.qa[0].judge_accuracy, 100.0 * 4 / 11, 1e-9);
}

TEST(Report, EmptyAndAllUnanswered) {
  EXPECT_TRUE(compute_report({}).retrieval.empty());
  std::vector<QuestionRecord> rs{rec("a", AnswerOutcome::NoAnswer, VerdictState::NotJudged)};
  auto report = compute_report(rs);
  ASSERT_TRUE(report.qa[0].judge_accuracy);
  EXPECT_EQ(*report.qa[0].judge_accuracy, 0.0);
}

TEST(Report, ManualVerdictsAndRendering) {
  std::vector<QuestionRecord> rs{rec("q1", AnswerOutcome::Answered, VerdictState::True, true),
                                 rec("q2", AnswerOutcome::Answered, VerdictState::False)};
  ManualVerdicts manual{{"t", parse_manual_verdicts("question_id,verdict\nq1,true\nq2,TRUE\n")}};
  auto report = compute_report(rs, {{"t", "Base 512", 1234567}}, manual);
  EXPECT_EQ(*report.qa[0].manual_accuracy, 100.0);
  auto text = render_report_text(report);
  EXPECT_NE(text.find("Retrieval results"), std::string::npos);
  EXPECT_NE(text.find("| Base 512"), std::string::npos);
  EXPECT_NE(text.find("1,234,567"), std::string::npos);
  EXPECT_NE(text.find("50.00"), std::string::npos);
  EXPECT_NE(text.find("Manual"), std::string::npos);
  EXPECT_THROW(parse_manual_verdicts("q1,true\nq2,maybe"), Error);
  auto j = report_to_json(report);
  EXPECT_EQ(j["qa"][0]["judge_accuracy"], 50.0);
}

TEST(Records, JsonRoundTrip) {
  auto r = rec("q", AnswerOutcome::BudgetExceeded, VerdictState::Unparseable, true);
  r.retrieved_ids = {"a", "b"};
  r.retrieved_scores = {0.5, 0.25};
  r.rouge = 0.125;
  r.error = "prompt too long";
  auto back = record_from_json(to_json(r));
  EXPECT_EQ(to_json(back), to_json(r));
  EXPECT_TRUE(back.counts_as_no_answer());
}

TEST(ChunkStats, SampleStd) {
  auto row = chunk_stats("Base 128", {2, 4, 4, 4, 5, 5, 7, 9}, std::nullopt);
  EXPECT_EQ(row.total_chunks, 40u);
  EXPECT_DOUBLE_EQ(row.mean_per_doc, 5.0);
  EXPECT_NEAR(row.std_per_doc, std::sqrt(32.0 / 7.0), 1e-12);
  EXPECT_FALSE(row.tables_mean);
  auto el = chunk_stats("Element", {3}, std::vector<std::size_t>{1});
  EXPECT_EQ(el.std_per_doc, 0.0);
  auto text = render_chunk_stats({row, el});
  EXPECT_NE(text.find("N/A"), std::string::npos);
  EXPECT_NE(text.find("5.00 (2.14)"), std::string::npos);
}
