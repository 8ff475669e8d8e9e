// elemrag: batch frontend over the chunk -> enrich -> index -> eval -> report
// pipeline. Exit codes: 0 ok, 1 usage/config, 2 data error, 3 external service.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "elemrag/config.hpp"
#include "elemrag/pipeline.hpp"

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kService = 3 };

int exit_code_for(elemrag::ErrorCode code) {
  using elemrag::ErrorCode;
  switch (code) {
    case ErrorCode::Config: return kUsage;
    case ErrorCode::ClientError:
    case ErrorCode::MalformedResponse: return kService;
    default: return kData;
  }
}

struct GlobalOptions {
  std::string config = "elemrag.ini";
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string stub_llm;
  bool force = false;
  bool truncate_to_fit = false;
};

elemrag::RunConfig resolve_config(const GlobalOptions& g) {
  auto cfg = elemrag::load_config(g.config);
  if (!g.out.empty()) cfg.out_dir = g.out;
  if (g.seed) {
    cfg.seed = *g.seed;
    cfg.index.hnsw.seed = *g.seed;
  }
  if (g.truncate_to_fit) cfg.truncate_to_fit = true;
  cfg.validate();
  return cfg;
}

elemrag::Services resolve_services(const GlobalOptions& g, const elemrag::RunConfig& cfg) {
  std::optional<nlohmann::json> script;
  if (!g.stub_llm.empty()) {
    try {
      script = nlohmann::json::parse(elemrag::io::read_file(g.stub_llm));
    } catch (const nlohmann::json::exception& e) {
      throw elemrag::Error(elemrag::ErrorCode::Config, g.stub_llm + ": " + e.what());
    }
  }
  return elemrag::make_services(cfg, script);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Element-aware chunking, retrieval and evaluation over financial filings"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalOptions g;
  app.add_option("--config", g.config, "INI run configuration")->check(CLI::ExistingFile);
  app.add_option("--out", g.out, "output directory (overrides run.out)");
  app.add_option("--seed", g.seed, "random seed (overrides run.seed)");
  app.add_option("--stub-llm", g.stub_llm, "answer every model call from this script")->check(CLI::ExistingFile);
  app.add_flag("--force", g.force, "accept artifacts built under a different config");
  app.add_flag("--truncate-to-fit", g.truncate_to_fit, "drop low-ranked sources to fit the token budget");

  auto* chunk = app.add_subcommand("chunk", "chunk every corpus document with every strategy");
  auto* enrich = app.add_subcommand("enrich", "compute prefix, keyword and summary representations");
  auto* index = app.add_subcommand("index", "embed chunks and build per-document indexes");
  auto* ask = app.add_subcommand("ask", "answer one question");
  std::string question;
  std::string doc;
  std::size_t target = 0;
  ask->add_option("question", question, "question text")->required();
  ask->add_option("--doc", doc, "restrict retrieval to one document");
  ask->add_option("--target", target, "0-based position in eval.targets");
  auto* eval = app.add_subcommand("eval", "run the benchmark against every target");
  auto* report = app.add_subcommand("report", "render retrieval and Q&A tables");
  std::vector<std::string> manual;
  report->add_option("--manual", manual, "TARGET_LABEL=verdicts.csv with question_id,true|false rows");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? kOk : kUsage;
  }

  try {
    const auto cfg = resolve_config(g);
    if (chunk->parsed()) {
      elemrag::cmd_chunk(cfg, std::cout, std::cerr);
    } else if (enrich->parsed()) {
      auto services = resolve_services(g, cfg);
      elemrag::cmd_enrich(cfg, services, g.force, std::cout);
    } else if (index->parsed()) {
      auto services = resolve_services(g, cfg);
      elemrag::cmd_index(cfg, services, g.force, std::cout, std::cerr);
    } else if (ask->parsed()) {
      auto services = resolve_services(g, cfg);
      std::optional<std::string> only;
      if (!doc.empty()) only = doc;
      elemrag::cmd_ask(cfg, services, question, only, target, g.force, std::cout);
    } else if (eval->parsed()) {
      auto services = resolve_services(g, cfg);
      elemrag::cmd_eval(cfg, services, g.force, std::cout, std::cerr);
    } else if (report->parsed()) {
      elemrag::ManualVerdicts verdicts;
      for (const auto& m : manual) {
        auto eq = m.find('=');
        if (eq == std::string::npos) {
          std::cerr << "error: --manual expects TARGET_LABEL=path\n";
          return kUsage;
        }
        verdicts[m.substr(0, eq)] = elemrag::parse_manual_verdicts(elemrag::io::read_file(m.substr(eq + 1)));
      }
      elemrag::cmd_report(cfg, verdicts, g.force, std::cout);
    }
  } catch (const elemrag::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error [io]: " << e.what() << "\n";
    return kData;
  }
  return kOk;
}
