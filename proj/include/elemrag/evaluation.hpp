#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "elemrag/chunking.hpp"
#include "elemrag/enrichment.hpp"
#include "elemrag/error.hpp"
#include "elemrag/text.hpp"
#include "elemrag/tokenizer.hpp"

namespace elemrag {

// ---- retrieval metrics ------------------------------------------------------

/// True iff any retrieved chunk covers the gold page.
inline bool page_hit(std::span<const Chunk> retrieved, int gold_page) {
  return std::any_of(retrieved.begin(), retrieved.end(),
                     [&](const Chunk& c) { return c.pages.contains(gold_page); });
}

struct MetricScore {
  double value = 0.0;
  bool empty_input = false;  // either side had no tokens
};

namespace detail {

inline std::vector<std::string> metric_tokens(std::string_view s) {
  auto toks = default_tokenize(s);
  for (auto& t : toks) t = text::fold_case(t);
  return toks;
}

}  // namespace detail

/// Longest common subsequence length, two-row dynamic programme.
inline std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  if (a.empty() || b.empty()) return 0;
  std::vector<std::size_t> prev(b.size() + 1, 0);
  std::vector<std::size_t> cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

/// ROUGE-L F1 over case-folded default tokens.
inline MetricScore rouge_l_f1(std::string_view candidate, std::string_view reference) {
  const auto cand = detail::metric_tokens(candidate);
  const auto ref = detail::metric_tokens(reference);
  if (cand.empty() || ref.empty()) return {0.0, true};
  const double lcs = static_cast<double>(lcs_length(cand, ref));
  if (lcs == 0.0) return {0.0, false};
  const double p = lcs / static_cast<double>(cand.size());
  const double r = lcs / static_cast<double>(ref.size());
  return {2.0 * p * r / (p + r), false};
}

/// Sentence BLEU: clipped n-gram precisions up to min(max_n, |candidate|),
/// add-one smoothing for n >= 2, geometric mean, brevity penalty
/// exp(1 - |ref|/|cand|) when the candidate is shorter than the reference.
inline MetricScore bleu(std::string_view candidate, std::string_view reference, std::size_t max_n = 4) {
  const auto cand = detail::metric_tokens(candidate);
  const auto ref = detail::metric_tokens(reference);
  if (cand.empty() || ref.empty()) return {0.0, true};
  const std::size_t order = std::min(max_n, cand.size());

  auto ngram_counts = [](const std::vector<std::string>& toks, std::size_t n) {
    std::map<std::vector<std::string>, std::size_t> counts;
    for (std::size_t i = 0; i + n <= toks.size(); ++i) {
      ++counts[std::vector<std::string>(toks.begin() + static_cast<std::ptrdiff_t>(i),
                                        toks.begin() + static_cast<std::ptrdiff_t>(i + n))];
    }
    return counts;
  };

  double log_sum = 0.0;
  for (std::size_t n = 1; n <= order; ++n) {
    const auto c = ngram_counts(cand, n);
    const auto r = ngram_counts(ref, n);
    std::size_t matched = 0;
    std::size_t total = 0;
    for (const auto& [gram, count] : c) {
      total += count;
      if (auto it = r.find(gram); it != r.end()) matched += std::min(count, it->second);
    }
    double p = n == 1 ? static_cast<double>(matched) / static_cast<double>(total)
                      : (static_cast<double>(matched) + 1.0) / (static_cast<double>(total) + 1.0);
    if (p == 0.0) return {0.0, false};
    log_sum += std::log(p);
  }
  const double geo = std::exp(log_sum / static_cast<double>(order));
  const double bp = cand.size() < ref.size()
                        ? std::exp(1.0 - static_cast<double>(ref.size()) / static_cast<double>(cand.size()))
                        : 1.0;
  return {std::clamp(geo * bp, 0.0, 1.0), false};
}

using TextMetric = std::function<MetricScore(std::string_view, std::string_view)>;

/// Best metric value between the evidence and any retrieved chunk; 0 when
/// nothing was retrieved.
inline double max_over_contexts(const TextMetric& metric, std::span<const Chunk> retrieved,
                                std::string_view evidence) {
  double best = 0.0;
  for (const auto& c : retrieved) best = std::max(best, metric(c.text, evidence).value);
  return best;
}

// ---- model-as-judge ---------------------------------------------------------

/// Backslash-escapes `\` and `'` so a value can sit inside single quotes.
inline std::string escape_quoted(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    if (c == '\\' || c == '\'') out.push_back('\\');
    out.push_back(c);
  }
  return out;
}

inline std::string unescape_quoted(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\\' && i + 1 < s.size()) ++i;
    out.push_back(s[i]);
  }
  return out;
}

inline constexpr std::string_view kJudgeTemplate =
    "Begin with True or False. Are the two following answers (Answer 1 and\n"
    "Answer 2) the same with respect to the question between single quotes\n"
    "'{question}'?\n"
    "\n"
    "Answer 1: '{ground_truth_answer}'\n"
    "Answer 2: '{generated_answer}'";

inline std::string build_judge_prompt(std::string_view question, std::string_view gold_answer,
                                      std::string_view generated_answer,
                                      std::string_view tmpl = kJudgeTemplate) {
  if (text::is_blank(question) || text::is_blank(gold_answer) || text::is_blank(generated_answer)) {
    throw Error(ErrorCode::EmptyField, "judge prompt fields must be non-empty");
  }
  const auto q = escape_quoted(question);
  const auto g = escape_quoted(gold_answer);
  const auto a = escape_quoted(generated_answer);
  return substitute(tmpl, {{"{question}", q}, {"{ground_truth_answer}", g}, {"{generated_answer}", a}});
}

struct JudgeVerdict {
  bool same = false;
  std::string raw_response;
};

/// Reads the first alphabetic word: "true" or "false" (any case). Anything
/// else is UnparseableVerdict.
inline std::optional<JudgeVerdict> try_parse_verdict(std::string_view response) {
  std::size_t i = 0;
  auto alpha = [](char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); };
  while (i < response.size() && !alpha(response[i])) ++i;
  std::size_t j = i;
  while (j < response.size() && alpha(response[j])) ++j;
  const auto word = text::fold_case(response.substr(i, j - i));
  if (word == "true") return JudgeVerdict{true, std::string(response)};
  if (word == "false") return JudgeVerdict{false, std::string(response)};
  return std::nullopt;
}

inline JudgeVerdict parse_verdict(std::string_view response) {
  if (auto v = try_parse_verdict(response)) return *v;
  throw Error(ErrorCode::UnparseableVerdict, "judge response does not begin with True or False");
}

// ---- per-question records and reports --------------------------------------

enum class AnswerOutcome { Answered, NoAnswer, BudgetExceeded, ClientFailed, NotRun };
enum class VerdictState { NotJudged, True, False, Unparseable };

inline std::string_view to_string(AnswerOutcome o) {
  switch (o) {
    case AnswerOutcome::Answered: return "answered";
    case AnswerOutcome::NoAnswer: return "no_answer";
    case AnswerOutcome::BudgetExceeded: return "budget_exceeded";
    case AnswerOutcome::ClientFailed: return "client_failed";
    case AnswerOutcome::NotRun: return "not_run";
  }
  return "not_run";
}

inline std::string_view to_string(VerdictState v) {
  switch (v) {
    case VerdictState::NotJudged: return "not_judged";
    case VerdictState::True: return "true";
    case VerdictState::False: return "false";
    case VerdictState::Unparseable: return "unparseable";
  }
  return "not_judged";
}

template <class E, std::size_t N>
E enum_from_string(std::string_view s, const E (&values)[N]) {
  for (auto v : values) {
    if (to_string(v) == s) return v;
  }
  throw Error(ErrorCode::MalformedInput, "unknown value '" + std::string(s) + "'");
}

struct QuestionRecord {
  std::string question_id;
  std::string doc_name;
  std::string target;  // retrieval configuration label
  std::vector<std::string> retrieved_ids;
  std::vector<double> retrieved_scores;
  int gold_page = 1;
  bool page_hit = false;
  double rouge = 0.0;
  double bleu = 0.0;
  AnswerOutcome outcome = AnswerOutcome::NotRun;
  std::string answer;
  std::size_t prompt_tokens_est = 0;
  VerdictState verdict = VerdictState::NotJudged;
  std::string judge_raw;
  std::string error;

  bool counts_as_no_answer() const {
    return outcome == AnswerOutcome::NoAnswer || outcome == AnswerOutcome::BudgetExceeded;
  }
};

inline nlohmann::json to_json(const QuestionRecord& r) {
  return {{"question_id", r.question_id},
          {"doc_name", r.doc_name},
          {"target", r.target},
          {"retrieved_ids", r.retrieved_ids},
          {"retrieved_scores", r.retrieved_scores},
          {"gold_page", r.gold_page},
          {"page_hit", r.page_hit},
          {"rouge", r.rouge},
          {"bleu", r.bleu},
          {"outcome", std::string(to_string(r.outcome))},
          {"answer", r.answer},
          {"prompt_tokens_est", r.prompt_tokens_est},
          {"verdict", std::string(to_string(r.verdict))},
          {"judge_raw", r.judge_raw},
          {"error", r.error}};
}

inline QuestionRecord record_from_json(const nlohmann::json& j) {
  static constexpr AnswerOutcome kOutcomes[] = {AnswerOutcome::Answered, AnswerOutcome::NoAnswer,
                                                AnswerOutcome::BudgetExceeded,
                                                AnswerOutcome::ClientFailed, AnswerOutcome::NotRun};
  static constexpr VerdictState kVerdicts[] = {VerdictState::NotJudged, VerdictState::True,
                                               VerdictState::False, VerdictState::Unparseable};
  try {
    QuestionRecord r;
    r.question_id = j.at("question_id").get<std::string>();
    r.doc_name = j.at("doc_name").get<std::string>();
    r.target = j.at("target").get<std::string>();
    r.retrieved_ids = j.at("retrieved_ids").get<std::vector<std::string>>();
    r.retrieved_scores = j.at("retrieved_scores").get<std::vector<double>>();
    r.gold_page = j.at("gold_page").get<int>();
    r.page_hit = j.at("page_hit").get<bool>();
    r.rouge = j.at("rouge").get<double>();
    r.bleu = j.at("bleu").get<double>();
    r.outcome = enum_from_string(j.at("outcome").get<std::string>(), kOutcomes);
    r.answer = j.at("answer").get<std::string>();
    r.prompt_tokens_est = j.at("prompt_tokens_est").get<std::size_t>();
    r.verdict = enum_from_string(j.at("verdict").get<std::string>(), kVerdicts);
    r.judge_raw = j.at("judge_raw").get<std::string>();
    r.error = j.at("error").get<std::string>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedInput, std::string("bad question record: ") + e.what());
  }
}

struct TargetInfo {
  std::string label;         // machine label, matches QuestionRecord::target
  std::string display_name;  // row name in the tables
  std::size_t total_chunks = 0;
};

struct RetrievalEvalRow {
  std::string label;
  std::size_t total_chunks = 0;
  std::size_t questions = 0;
  double page_accuracy = 0.0;  // percent
  double rouge = 0.0;
  double bleu = 0.0;
};

struct QaEvalRow {
  std::string label;
  std::size_t questions = 0;
  double no_answer_rate = 0.0;  // percent
  std::optional<double> judge_accuracy;  // percent over judgeable questions
  std::size_t unparseable = 0;
  std::optional<double> manual_accuracy;
};

struct EvalReport {
  std::vector<RetrievalEvalRow> retrieval;
  std::vector<QaEvalRow> qa;
};

/// question id -> human verdict, keyed by target label.
using ManualVerdicts = std::map<std::string, std::map<std::string, bool>>;

/// Parses `question_id,true|false` lines; a header line is tolerated.
inline std::map<std::string, bool> parse_manual_verdicts(std::string_view csv) {
  std::map<std::string, bool> out;
  std::size_t line_no = 0;
  for (const auto& line : text::split(csv, '\n')) {
    ++line_no;
    auto t = text::trim(line);
    if (t.empty()) continue;
    auto comma = t.rfind(',');
    if (comma == std::string_view::npos) {
      throw Error(ErrorCode::MalformedInput, "manual verdict line " + std::to_string(line_no) + " lacks a comma");
    }
    auto id = std::string(text::trim(t.substr(0, comma)));
    auto v = text::fold_case(text::trim(t.substr(comma + 1)));
    if (v == "true") out[id] = true;
    else if (v == "false") out[id] = false;
    else if (line_no == 1) continue;  // header
    else throw Error(ErrorCode::MalformedInput, "manual verdict line " + std::to_string(line_no) + ": expected true|false");
  }
  return out;
}

/// Aggregates per-question records into one retrieval row and one Q&A row per
/// target, in the order targets are given (targets seen only in records are
/// appended). Budget overruns count as no-answer. The judge accuracy
/// denominator excludes unparseable verdicts; unanswered questions count as
/// incorrect.
inline EvalReport compute_report(const std::vector<QuestionRecord>& records,
                                 const std::vector<TargetInfo>& targets = {},
                                 const ManualVerdicts& manual = {}) {
  std::vector<TargetInfo> order = targets;
  for (const auto& r : records) {
    bool known = std::any_of(order.begin(), order.end(), [&](const TargetInfo& t) { return t.label == r.target; });
    if (!known) order.push_back({r.target, r.target, 0});
  }

  EvalReport report;
  for (const auto& t : order) {
    std::size_t n = 0, hits = 0, no_answer = 0, correct = 0, unparseable = 0, judged = 0;
    double rouge = 0, bleu_sum = 0;
    std::size_t manual_n = 0, manual_true = 0;
    const auto manual_it = manual.find(t.label);
    for (const auto& r : records) {
      if (r.target != t.label) continue;
      ++n;
      if (r.page_hit) ++hits;
      rouge += r.rouge;
      bleu_sum += r.bleu;
      if (r.counts_as_no_answer()) ++no_answer;
      switch (r.verdict) {
        case VerdictState::True: ++correct; ++judged; break;
        case VerdictState::False: ++judged; break;
        case VerdictState::Unparseable: ++unparseable; break;
        case VerdictState::NotJudged: break;
      }
      if (manual_it != manual.end()) {
        if (auto m = manual_it->second.find(r.question_id); m != manual_it->second.end()) {
          ++manual_n;
          if (m->second) ++manual_true;
        }
      }
    }
    if (n == 0) continue;
    const double dn = static_cast<double>(n);
    report.retrieval.push_back({t.display_name, t.total_chunks, n, 100.0 * static_cast<double>(hits) / dn,
                                rouge / dn, bleu_sum / dn});
    QaEvalRow qa{t.display_name, n, 100.0 * static_cast<double>(no_answer) / dn, std::nullopt, unparseable,
                 std::nullopt};
    if ((judged > 0 || no_answer > 0) && n > unparseable) {
      qa.judge_accuracy = 100.0 * static_cast<double>(correct) / static_cast<double>(n - unparseable);
    }
    if (manual_n > 0) qa.manual_accuracy = 100.0 * static_cast<double>(manual_true) / static_cast<double>(manual_n);
    report.qa.push_back(std::move(qa));
  }
  return report;
}

// ---- rendering ----------------------------------------------------------------

namespace detail {

inline std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
  return buf;
}

inline std::string thousands(std::size_t v) {
  auto s = std::to_string(v);
  for (int i = static_cast<int>(s.size()) - 3; i > 0; i -= 3) s.insert(static_cast<std::size_t>(i), ",");
  return s;
}

}  // namespace detail

/// Renders rows as a pipe-separated, column-aligned text table.
inline std::string render_table(const std::string& title, const std::vector<std::string>& header,
                                const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(header.size(), 0);
  auto measure = [&](const std::vector<std::string>& row) {
    for (std::size_t i = 0; i < row.size() && i < width.size(); ++i) {
      width[i] = std::max(width[i], text::utf8_length(row[i]));
    }
  };
  measure(header);
  for (const auto& r : rows) measure(r);
  auto line = [&](const std::vector<std::string>& row) {
    std::string out = "|";
    for (std::size_t i = 0; i < width.size(); ++i) {
      const std::string& cell = i < row.size() ? row[i] : std::string();
      const std::size_t pad = width[i] - text::utf8_length(cell);
      out += ' ';
      if (i == 0) out += cell + std::string(pad, ' ');
      else out += std::string(pad, ' ') + cell;
      out += " |";
    }
    return out + "\n";
  };
  std::string rule = "+";
  for (auto w : width) rule += std::string(w + 2, '-') + "+";
  rule += "\n";
  std::string out = title + "\n" + rule + line(header) + rule;
  for (const auto& r : rows) out += line(r);
  out += rule;
  return out;
}

inline std::string render_report_text(const EvalReport& report) {
  std::vector<std::vector<std::string>> retrieval_rows;
  for (const auto& r : report.retrieval) {
    retrieval_rows.push_back({r.label, detail::thousands(r.total_chunks), detail::fixed(r.page_accuracy, 2),
                              detail::fixed(r.rouge, 3), detail::fixed(r.bleu, 3)});
  }
  bool any_manual = std::any_of(report.qa.begin(), report.qa.end(),
                                [](const QaEvalRow& q) { return q.manual_accuracy.has_value(); });
  std::vector<std::string> qa_header{"Chunking strategy", "No answer", "LLM judge", "Unparseable"};
  if (any_manual) qa_header.push_back("Manual");
  std::vector<std::vector<std::string>> qa_rows;
  for (const auto& q : report.qa) {
    std::vector<std::string> row{q.label, detail::fixed(q.no_answer_rate, 2),
                                 q.judge_accuracy ? detail::fixed(*q.judge_accuracy, 2) : "N/A",
                                 std::to_string(q.unparseable)};
    if (any_manual) row.push_back(q.manual_accuracy ? detail::fixed(*q.manual_accuracy, 2) : "N/A");
    qa_rows.push_back(std::move(row));
  }
  return render_table("Retrieval results",
                      {"Chunking strategy", "Total Chunks", "Page Accuracy", "ROUGE", "BLEU"},
                      retrieval_rows) +
         "\n" + render_table("Q&A results", qa_header, qa_rows);
}

inline nlohmann::json report_to_json(const EvalReport& report) {
  auto retrieval = nlohmann::json::array();
  for (const auto& r : report.retrieval) {
    retrieval.push_back({{"strategy", r.label},
                         {"total_chunks", r.total_chunks},
                         {"questions", r.questions},
                         {"page_accuracy", r.page_accuracy},
                         {"rouge", r.rouge},
                         {"bleu", r.bleu}});
  }
  auto qa = nlohmann::json::array();
  for (const auto& q : report.qa) {
    nlohmann::json row{{"strategy", q.label},
                       {"questions", q.questions},
                       {"no_answer_rate", q.no_answer_rate},
                       {"unparseable_verdicts", q.unparseable}};
    row["judge_accuracy"] = q.judge_accuracy ? nlohmann::json(*q.judge_accuracy) : nlohmann::json(nullptr);
    row["manual_accuracy"] = q.manual_accuracy ? nlohmann::json(*q.manual_accuracy) : nlohmann::json(nullptr);
    qa.push_back(std::move(row));
  }
  return {{"retrieval", std::move(retrieval)}, {"qa", std::move(qa)}};
}

// ---- chunk statistics -------------------------------------------------------

struct ChunkStatsRow {
  std::string label;
  std::size_t total_chunks = 0;
  double mean_per_doc = 0.0;
  double std_per_doc = 0.0;
  std::optional<double> tables_mean;
  std::optional<double> tables_std;
};

/// Mean and sample standard deviation (n - 1; 0 for a single value).
inline std::pair<double, double> mean_std(const std::vector<double>& xs) {
  if (xs.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  if (xs.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(xs.size() - 1))};
}

/// One row per strategy from per-document chunk counts. Table statistics
/// apply only to strategies that produce table chunks structurally.
inline ChunkStatsRow chunk_stats(const std::string& label, const std::vector<std::size_t>& chunks_per_doc,
                                 const std::optional<std::vector<std::size_t>>& tables_per_doc) {
  ChunkStatsRow row;
  row.label = label;
  std::vector<double> xs(chunks_per_doc.begin(), chunks_per_doc.end());
  for (auto c : chunks_per_doc) row.total_chunks += c;
  std::tie(row.mean_per_doc, row.std_per_doc) = mean_std(xs);
  if (tables_per_doc) {
    std::vector<double> ts(tables_per_doc->begin(), tables_per_doc->end());
    auto [m, s] = mean_std(ts);
    row.tables_mean = m;
    row.tables_std = s;
  }
  return row;
}

inline std::string render_chunk_stats(const std::vector<ChunkStatsRow>& rows) {
  std::vector<std::vector<std::string>> cells;
  for (const auto& r : rows) {
    cells.push_back({r.label, detail::thousands(r.total_chunks),
                     detail::fixed(r.mean_per_doc, 2) + " (" + detail::fixed(r.std_per_doc, 2) + ")",
                     r.tables_mean ? detail::fixed(*r.tables_mean, 2) + " (" + detail::fixed(*r.tables_std, 2) + ")"
                                   : "N/A"});
  }
  return render_table("Chunks statistics",
                      {"Processing", "total chunks", "mean chunks per document (std)", "tables mean (std)"},
                      cells);
}

}  // namespace elemrag
