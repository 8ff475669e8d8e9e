#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "elemrag/chunking.hpp"
#include "elemrag/config.hpp"
#include "elemrag/element_model.hpp"
#include "elemrag/embedding.hpp"
#include "elemrag/enrichment.hpp"
#include "elemrag/evaluation.hpp"
#include "elemrag/generation.hpp"
#include "elemrag/io.hpp"
#include "elemrag/llm_client.hpp"
#include "elemrag/parallel.hpp"
#include "elemrag/vector_index.hpp"

namespace elemrag {

/// External collaborators of a run. Generator and judge may be null until a
/// command needs them.
struct Services {
  std::shared_ptr<Embedder> embedder;
  std::shared_ptr<GeneratorClient> generator;
  std::shared_ptr<GeneratorClient> judge;
};

inline Services make_services(const RunConfig& cfg, const std::optional<nlohmann::json>& stub_script = std::nullopt) {
  Services s;
  if (cfg.embedder.remote) s.embedder = std::make_shared<RemoteEmbedder>(cfg.embedder.endpoint, cfg.retry);
  else s.embedder = std::make_shared<LocalEmbedder>(cfg.embedder.local_dim);
  if (stub_script) {
    auto stub = std::make_shared<StubClient>(StubClient::from_json(*stub_script));
    s.generator = stub;
    s.judge = stub;
    return s;
  }
  if (cfg.generator.endpoint) s.generator = std::make_shared<HttpChatClient>(*cfg.generator.endpoint);
  if (cfg.judge.endpoint) s.judge = std::make_shared<HttpChatClient>(*cfg.judge.endpoint);
  return s;
}

/// Where a run writes its artifacts.
struct Layout {
  std::filesystem::path root;

  std::filesystem::path chunks(const StrategyTag& s) const { return root / "chunks" / s.label(); }
  std::filesystem::path chunk_file(const StrategyTag& s, const std::string& doc) const {
    return chunks(s) / (doc + ".jsonl");
  }
  std::filesystem::path metadata_file(const StrategyTag& s, const std::string& doc) const {
    return root / "metadata" / s.label() / (doc + ".jsonl");
  }
  std::filesystem::path cache() const { return root / "cache"; }
  std::filesystem::path index_file(const StrategyTag& s, RepresentationMode m, const std::string& doc) const {
    return root / "index" / s.label() / std::string(to_string(m)) / (doc + ".idx");
  }
  std::filesystem::path records() const { return root / "eval" / "records.jsonl"; }
  std::filesystem::path manifest(const std::string& stage) const { return root / stage / "manifest.json"; }
  std::filesystem::path report_dir() const { return root / "report"; }
};

namespace detail {

inline std::string jsonl(const std::vector<nlohmann::json>& rows) {
  std::string out;
  for (const auto& r : rows) {
    out += r.dump();
    out += '\n';
  }
  return out;
}

inline std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path) {
  std::vector<nlohmann::json> out;
  std::size_t line_no = 0;
  for (const auto& line : text::split(io::read_file(path), '\n')) {
    ++line_no;
    if (text::is_blank(line)) continue;
    try {
      out.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::MalformedInput, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

inline void write_manifest(const Layout& layout, const std::string& stage, const RunConfig& cfg,
                           nlohmann::json extra = nlohmann::json::object()) {
  extra["stage"] = stage;
  extra["config_hash"] = cfg.config_hash();
  io::write_file_atomic(layout.manifest(stage), extra.dump(2) + "\n");
}

/// Loads a stage manifest, naming the command that produces it when absent
/// and refusing a foreign config hash unless forced.
inline nlohmann::json require_manifest(const Layout& layout, const std::string& stage, const std::string& command,
                                       const RunConfig& cfg, bool force) {
  const auto path = layout.manifest(stage);
  if (!std::filesystem::is_regular_file(path)) {
    throw Error(ErrorCode::MissingArtifact,
                "missing " + path.string() + "; run `elemrag " + command + "` first");
  }
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(io::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedInput, path.string() + ": " + e.what());
  }
  const auto have = m.value("config_hash", std::string());
  if (!force && have != cfg.config_hash()) {
    throw Error(ErrorCode::MissingArtifact, stage + " artifacts were built under config " + have +
                                                " but the current config is " + cfg.config_hash() +
                                                "; rerun `elemrag " + command + "` or pass --force");
  }
  return m;
}

inline std::vector<std::string> manifest_docs(const nlohmann::json& m) {
  return m.value("docs", std::vector<std::string>{});
}

inline std::vector<Chunk> load_chunks(const Layout& layout, const StrategyTag& s, const std::string& doc) {
  const auto path = layout.chunk_file(s, doc);
  if (!std::filesystem::is_regular_file(path)) {
    throw Error(ErrorCode::MissingArtifact, "missing " + path.string() + "; run `elemrag chunk` first");
  }
  return chunks_from_jsonl(io::read_file(path));
}

inline std::map<std::string, ChunkMetadata> load_metadata(const Layout& layout, const StrategyTag& s,
                                                          const std::string& doc) {
  const auto path = layout.metadata_file(s, doc);
  if (!std::filesystem::is_regular_file(path)) {
    throw Error(ErrorCode::MissingArtifact, "missing " + path.string() + "; run `elemrag enrich` first");
  }
  std::map<std::string, ChunkMetadata> out;
  for (const auto& j : read_jsonl(path)) {
    auto [id, m] = metadata_from_json(j);
    out.emplace(std::move(id), std::move(m));
  }
  return out;
}

inline GeneratorClient& need_client(const std::shared_ptr<GeneratorClient>& c, const char* role) {
  if (!c) {
    throw Error(ErrorCode::Config, std::string("no ") + role + " endpoint configured; set [" + role +
                                       "] base_url or pass --stub-llm");
  }
  return *c;
}

}  // namespace detail

/// Element JSON files of the corpus, sorted by name; the stem is the doc id.
inline std::vector<std::filesystem::path> list_corpus(const RunConfig& cfg) {
  std::vector<std::filesystem::path> out;
  for (const auto& entry : std::filesystem::directory_iterator(cfg.corpus_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

// ---- chunk --------------------------------------------------------------------

struct ChunkRunSummary {
  std::size_t documents = 0;
  std::vector<ChunkStatsRow> rows;
  std::string rendered;
};

inline ChunkRunSummary cmd_chunk(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const Layout layout{cfg.out_dir};
  const auto files = list_corpus(cfg);
  if (files.empty()) err << "warning: no element JSON files in " << cfg.corpus_dir.string() << "\n";

  for (const auto& f : files) {
    if (f.stem().string().find('#') != std::string::npos) {
      throw Error(ErrorCode::MalformedInput, f.string() + ": document names must not contain '#'");
    }
  }
  std::vector<Document> docs(files.size());
  std::vector<std::vector<std::string>> warnings(files.size());
  bounded_for(files.size(), cfg.concurrency, [&](std::size_t i) {
    try {
      auto parsed = parse_element_json(io::read_file(files[i]), files[i].stem().string());
      docs[i] = std::move(parsed.document);
      warnings[i] = std::move(parsed.warnings);
    } catch (const Error& e) {
      throw Error(e.code(), files[i].string() + ": " + e.what());
    }
  });
  for (std::size_t i = 0; i < files.size(); ++i) {
    for (const auto& w : warnings[i]) err << "warning: " << files[i].filename().string() << ": " << w << "\n";
  }

  ChunkRunSummary summary;
  summary.documents = docs.size();
  nlohmann::json totals = nlohmann::json::object();
  for (const auto& strategy : cfg.strategies) {
    std::vector<std::size_t> per_doc(docs.size());
    std::vector<std::size_t> tables(docs.size());
    bounded_for(docs.size(), cfg.concurrency, [&](std::size_t i) {
      auto chunks = chunk_document(docs[i], strategy);
      per_doc[i] = chunks.size();
      tables[i] = static_cast<std::size_t>(std::count_if(chunks.begin(), chunks.end(),
                                                         [](const Chunk& c) { return c.is_table_chunk; }));
      io::write_file_atomic(layout.chunk_file(strategy, docs[i].doc_id), chunks_to_jsonl(chunks));
    });
    std::size_t total = 0;
    for (auto n : per_doc) total += n;
    totals[strategy.label()] = total;
    if (docs.empty()) continue;
    std::optional<std::vector<std::size_t>> table_counts;
    if (strategy.kind == StrategyTag::Kind::ElementBased) table_counts = tables;
    summary.rows.push_back(chunk_stats(strategy.display_name(), per_doc, table_counts));
  }
  summary.rendered = render_chunk_stats(summary.rows);
  io::write_file_atomic(cfg.out_dir / "chunks" / "summary.txt", summary.rendered);

  std::vector<std::string> ids;
  for (const auto& d : docs) ids.push_back(d.doc_id);
  detail::write_manifest(layout, "chunks", cfg, {{"docs", ids}, {"totals", totals}});
  out << summary.rendered;
  out << "chunked " << docs.size() << " document(s) with " << cfg.strategies.size() << " strateg"
      << (cfg.strategies.size() == 1 ? "y" : "ies") << "\n";
  return summary;
}

// ---- enrich -------------------------------------------------------------------

inline void cmd_enrich(const RunConfig& cfg, Services& services, bool force, std::ostream& out) {
  const Layout layout{cfg.out_dir};
  const auto manifest = detail::require_manifest(layout, "chunks", "chunk", cfg, force);
  const auto docs = detail::manifest_docs(manifest);
  EnrichmentCache cache(layout.cache());
  EnrichOptions opts;
  opts.prompts = cfg.enrichment_prompts;
  opts.retry = cfg.retry;
  opts.decoding = cfg.decoding;
  opts.concurrency = cfg.concurrency;

  std::size_t enriched = 0;
  for (const auto& strategy : cfg.strategies) {
    const auto request = cfg.enrichment_for(strategy);
    GeneratorClient* client = nullptr;
    if (request.keywords || request.summary) client = &detail::need_client(services.generator, "generator");
    for (const auto& doc : docs) {
      auto chunks = detail::load_chunks(layout, strategy, doc);
      auto meta = enrich_chunks(chunks, request, client, opts, &cache);
      std::vector<nlohmann::json> rows;
      for (std::size_t i = 0; i < chunks.size(); ++i) rows.push_back(metadata_to_json(chunks[i].chunk_id, meta[i]));
      io::write_file_atomic(layout.metadata_file(strategy, doc), detail::jsonl(rows));
      enriched += chunks.size();
    }
  }
  detail::write_manifest(layout, "metadata", cfg, {{"docs", docs}});
  out << "enriched " << enriched << " chunk(s)\n";
}

// ---- index --------------------------------------------------------------------

inline void cmd_index(const RunConfig& cfg, Services& services, bool force, std::ostream& out, std::ostream& err) {
  const Layout layout{cfg.out_dir};
  const auto manifest = detail::require_manifest(layout, "chunks", "chunk", cfg, force);
  const auto docs = detail::manifest_docs(manifest);
  const std::size_t dim = services.embedder->dim();

  std::size_t indexed = 0;
  std::mutex log_mu;
  for (const auto& strategy : cfg.strategies) {
    const auto modes = cfg.modes_for(strategy);
    if (modes.empty()) continue;
    const bool needs_meta = std::any_of(modes.begin(), modes.end(),
                                        [](RepresentationMode m) { return m != RepresentationMode::FullText; });
    if (needs_meta) detail::require_manifest(layout, "metadata", "enrich", cfg, force);
    std::vector<std::size_t> counts(docs.size());
    bounded_for(docs.size(), cfg.concurrency, [&](std::size_t d) {
      const auto chunks = detail::load_chunks(layout, strategy, docs[d]);
      std::map<std::string, ChunkMetadata> meta;
      if (needs_meta) meta = detail::load_metadata(layout, strategy, docs[d]);
      for (auto mode : modes) {
        std::vector<std::string> ids;
        std::vector<std::string> texts;
        for (const auto& c : chunks) {
          ChunkMetadata m;
          if (mode != RepresentationMode::FullText) {
            auto it = meta.find(c.chunk_id);
            if (it == meta.end()) {
              throw Error(ErrorCode::MissingMetadata, "no metadata for " + c.chunk_id + "; run `elemrag enrich` first");
            }
            m = it->second;
          }
          auto repr = representation_for_index(c, m, mode);
          if (default_tokenize(repr).empty()) {
            std::lock_guard lock(log_mu);
            err << "warning: " << c.chunk_id << " has an empty " << to_string(mode)
                << " representation and is not indexed\n";
            continue;
          }
          ids.push_back(c.chunk_id);
          texts.push_back(std::move(repr));
        }
        auto vectors = services.embedder->embed_batch(texts);
        std::vector<std::pair<std::string, EmbeddingVector>> items;
        items.reserve(ids.size());
        for (std::size_t i = 0; i < ids.size(); ++i) items.emplace_back(ids[i], std::move(vectors[i]));
        VectorIndex index(dim, cfg.index.mode, cfg.index.hnsw);
        index.add(items);
        index.save(layout.index_file(strategy, mode, docs[d]));
        counts[d] += items.size();
      }
    });
    for (auto c : counts) indexed += c;
  }
  detail::write_manifest(layout, "index", cfg,
                         {{"docs", docs}, {"embedder", cfg.embedder_fingerprint()}, {"totals", manifest.at("totals")}});
  out << "indexed " << indexed << " vector(s)\n";
}

// ---- retrieval over stored indexes ------------------------------------------------

/// Lazily loads per-document indexes and chunk tables; safe to share across
/// question workers.
class Retriever {
 public:
  Retriever(const RunConfig& cfg, Embedder& embedder) : layout_{cfg.out_dir}, embedder_(embedder) {}

  std::vector<RetrievalResult> search(const EvalTarget& target, const std::vector<std::string>& docs,
                                      const EmbeddingVector& query, std::size_t k) {
    std::vector<std::vector<RetrievalResult>> lists;
    for (const auto& doc : docs) {
      for (auto mode : target.modes) {
        const auto& index = index_for(target.strategy, mode, doc);
        if (index.size() == 0) continue;
        lists.push_back(index.search(query, k));
      }
    }
    return merge_results(lists, k);
  }

  EmbeddingVector embed_query(const std::string& q) { return embedder_.embed(q); }

  const Chunk& chunk(const StrategyTag& s, const std::string& doc, const std::string& id) {
    const auto& table = chunks_for(s, doc);
    auto it = table.find(id);
    if (it == table.end()) {
      throw Error(ErrorCode::MissingArtifact, "index refers to unknown chunk " + id + "; rerun `elemrag index`");
    }
    return it->second;
  }

 private:
  const VectorIndex& index_for(const StrategyTag& s, RepresentationMode m, const std::string& doc) {
    const auto path = layout_.index_file(s, m, doc);
    std::lock_guard lock(mu_);
    auto it = indexes_.find(path.string());
    if (it != indexes_.end()) return *it->second;
    if (!std::filesystem::is_regular_file(path)) {
      throw Error(ErrorCode::MissingArtifact, "missing " + path.string() + "; run `elemrag index` first");
    }
    auto index = std::make_unique<VectorIndex>(VectorIndex::load(path));
    if (index->dim() != embedder_.dim()) {
      throw Error(ErrorCode::DimensionMismatch, path.string() + " has dim " + std::to_string(index->dim()) +
                                                    " but the embedder produces " + std::to_string(embedder_.dim()));
    }
    return *indexes_.emplace(path.string(), std::move(index)).first->second;
  }

  const std::map<std::string, Chunk>& chunks_for(const StrategyTag& s, const std::string& doc) {
    const auto key = s.label() + "\n" + doc;
    std::lock_guard lock(mu_);
    auto it = chunks_.find(key);
    if (it != chunks_.end()) return it->second;
    std::map<std::string, Chunk> table;
    for (auto& c : detail::load_chunks(layout_, s, doc)) table.emplace(c.chunk_id, std::move(c));
    return chunks_.emplace(key, std::move(table)).first->second;
  }

  Layout layout_;
  Embedder& embedder_;
  std::mutex mu_;
  std::map<std::string, std::unique_ptr<VectorIndex>> indexes_;
  std::map<std::string, std::map<std::string, Chunk>> chunks_;
};

namespace detail {

inline GenerateOptions generate_options(const RunConfig& cfg) {
  GenerateOptions o;
  o.budget = cfg.budget;
  o.decoding = cfg.decoding;
  o.retry = cfg.retry;
  o.truncate_to_fit = cfg.truncate_to_fit;
  o.prompt = cfg.answer_prompt;
  return o;
}

inline std::string doc_of(const std::string& chunk_id) { return chunk_id.substr(0, chunk_id.find('#')); }

}  // namespace detail

// ---- ask ----------------------------------------------------------------------

struct AskResult {
  std::vector<RetrievalResult> hits;
  std::optional<GeneratedAnswer> answer;
  std::string note;  // why no answer was generated
};

/// Answers one ad-hoc question against a target, restricted to `doc` when
/// given, otherwise searching every indexed document.
inline AskResult cmd_ask(const RunConfig& cfg, Services& services, const std::string& question,
                         const std::optional<std::string>& doc, std::size_t target_index, bool force,
                         std::ostream& out) {
  const Layout layout{cfg.out_dir};
  const auto manifest = detail::require_manifest(layout, "index", "index", cfg, force);
  if (target_index >= cfg.targets.size()) throw Error(ErrorCode::Config, "target index out of range");
  const auto& target = cfg.targets[target_index];
  auto docs = detail::manifest_docs(manifest);
  if (doc) {
    if (std::find(docs.begin(), docs.end(), *doc) == docs.end()) {
      throw Error(ErrorCode::MalformedInput, "document '" + *doc + "' is not in the indexed corpus");
    }
    docs = {*doc};
  }
  Retriever retriever(cfg, *services.embedder);
  AskResult result;
  result.hits = retriever.search(target, docs, retriever.embed_query(question), cfg.k);
  std::vector<RetrievedChunk> context;
  for (const auto& h : result.hits) {
    context.push_back({h, retriever.chunk(target.strategy, detail::doc_of(h.chunk_id), h.chunk_id).text});
  }
  if (context.empty()) {
    result.note = "nothing retrieved";
  } else {
    try {
      result.answer = generate_answer(question, context, detail::need_client(services.generator, "generator"),
                                      detail::generate_options(cfg));
    } catch (const TokenBudgetExceeded& e) {
      result.note = e.what();
    }
  }
  if (result.answer) {
    out << result.answer->text << "\n\nSources:\n";
    for (const auto& h : result.hits) {
      if (std::find(result.answer->sources.begin(), result.answer->sources.end(), h.chunk_id) ==
          result.answer->sources.end()) {
        continue;
      }
      out << "  " << h.rank << ". " << h.chunk_id << " (" << detail::fixed(h.score, 4) << ")\n";
    }
  } else {
    out << "No answer (" << result.note << ")\n";
  }
  return result;
}

// ---- eval ---------------------------------------------------------------------

inline QuestionRecord evaluate_question(const RunConfig& cfg, Services& services, Retriever& retriever,
                                        const EvalTarget& target, const BenchmarkInstance& q,
                                        const std::vector<std::string>& docs) {
  QuestionRecord r;
  r.question_id = q.instance_id;
  r.doc_name = q.doc_name;
  r.target = target.label();
  r.gold_page = q.page_number;
  if (std::find(docs.begin(), docs.end(), q.doc_name) == docs.end()) {
    r.error = "document not in corpus";
    return r;
  }

  const auto hits = retriever.search(target, {q.doc_name}, retriever.embed_query(q.question), cfg.k);
  std::vector<Chunk> retrieved;
  std::vector<RetrievedChunk> context;
  for (const auto& h : hits) {
    r.retrieved_ids.push_back(h.chunk_id);
    r.retrieved_scores.push_back(h.score);
    retrieved.push_back(retriever.chunk(target.strategy, q.doc_name, h.chunk_id));
    context.push_back({h, retrieved.back().text});
  }
  r.page_hit = page_hit(retrieved, q.page_number);
  r.rouge = max_over_contexts(rouge_l_f1, retrieved, q.evidence_text);
  r.bleu = max_over_contexts([](std::string_view a, std::string_view b) { return bleu(a, b); }, retrieved,
                             q.evidence_text);

  if (context.empty()) {
    r.outcome = AnswerOutcome::NoAnswer;
    r.error = "nothing retrieved";
    return r;
  }
  try {
    auto answer = generate_answer(q.question, context, detail::need_client(services.generator, "generator"),
                                  detail::generate_options(cfg));
    r.answer = answer.text;
    r.prompt_tokens_est = answer.prompt_tokens_est;
    r.outcome = answer.is_no_answer ? AnswerOutcome::NoAnswer : AnswerOutcome::Answered;
  } catch (const TokenBudgetExceeded& e) {
    r.outcome = AnswerOutcome::BudgetExceeded;
    r.prompt_tokens_est = e.estimate();
    r.error = e.what();
    return r;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::ClientError && e.code() != ErrorCode::MalformedResponse) throw;
    r.outcome = AnswerOutcome::ClientFailed;
    r.error = e.what();
    return r;
  }

  if (r.outcome != AnswerOutcome::Answered || !cfg.judge_enabled) return r;
  try {
    auto prompt = build_judge_prompt(q.question, q.answer, r.answer, cfg.judge_prompt);
    r.judge_raw = complete_with_retry(detail::need_client(services.judge, "judge"), prompt, DecodingParams{},
                                      cfg.retry);
    auto verdict = try_parse_verdict(r.judge_raw);
    r.verdict = !verdict ? VerdictState::Unparseable : verdict->same ? VerdictState::True : VerdictState::False;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::EmptyField && e.code() != ErrorCode::ClientError) throw;
    r.error = std::string("judge: ") + e.what();
  }
  return r;
}

inline std::vector<QuestionRecord> cmd_eval(const RunConfig& cfg, Services& services, bool force, std::ostream& out,
                                            std::ostream& err) {
  const Layout layout{cfg.out_dir};
  if (!cfg.benchmark) throw Error(ErrorCode::Config, "corpus.benchmark is required for eval");
  const auto manifest = detail::require_manifest(layout, "index", "index", cfg, force);
  const auto docs = detail::manifest_docs(manifest);
  const auto bench = load_benchmark(io::read_file(*cfg.benchmark));
  for (const auto& f : bench.failures) err << "warning: benchmark line " << f.line << ": " << f.message << "\n";

  Retriever retriever(cfg, *services.embedder);
  const std::size_t per_target = bench.instances.size();
  std::vector<QuestionRecord> records(cfg.targets.size() * per_target);
  bounded_for(records.size(), cfg.concurrency, [&](std::size_t i) {
    records[i] = evaluate_question(cfg, services, retriever, cfg.targets[i / per_target],
                                   bench.instances[i % per_target], docs);
  });

  std::vector<nlohmann::json> rows;
  rows.reserve(records.size());
  for (const auto& r : records) rows.push_back(to_json(r));
  io::write_file_atomic(layout.records(), detail::jsonl(rows));
  detail::write_manifest(layout, "eval", cfg, {{"questions", per_target}, {"targets", cfg.targets.size()}});
  out << "evaluated " << per_target << " question(s) against " << cfg.targets.size() << " target(s)\n";
  return records;
}

// ---- report -------------------------------------------------------------------

inline EvalReport cmd_report(const RunConfig& cfg, const ManualVerdicts& manual, bool force, std::ostream& out) {
  const Layout layout{cfg.out_dir};
  detail::require_manifest(layout, "eval", "eval", cfg, force);
  std::vector<QuestionRecord> records;
  for (const auto& j : detail::read_jsonl(layout.records())) records.push_back(record_from_json(j));

  nlohmann::json totals = nlohmann::json::object();
  if (std::filesystem::is_regular_file(layout.manifest("chunks"))) {
    totals = nlohmann::json::parse(io::read_file(layout.manifest("chunks"))).value("totals", totals);
  }
  std::vector<TargetInfo> targets;
  for (const auto& t : cfg.targets) {
    targets.push_back({t.label(), t.display_name(), totals.value(t.strategy.label(), std::size_t{0})});
  }
  auto report = compute_report(records, targets, manual);
  const auto text = render_report_text(report);
  auto json = report_to_json(report);
  json["config_hash"] = cfg.config_hash();
  io::write_file_atomic(layout.report_dir() / "report.txt", text);
  io::write_file_atomic(layout.report_dir() / "report.json", json.dump(2) + "\n");
  out << text;
  return report;
}

}  // namespace elemrag
