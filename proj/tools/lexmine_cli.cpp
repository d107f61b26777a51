#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lexmine/config.hpp"
#include "lexmine/corpus.hpp"
#include "lexmine/error.hpp"
#include "lexmine/evaluation.hpp"
#include "lexmine/runner.hpp"
#include "lexmine/synth.hpp"
#include "lexmine/text.hpp"

namespace fs = std::filesystem;
using namespace lexmine;

namespace {

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> backend;
  std::optional<std::size_t> k;
  std::optional<std::string> strategy;
  std::optional<std::string> mode;
  std::optional<std::string> out;
};

void add_run_flags(CLI::App* cmd, Overrides& o, bool prompt_flags) {
  cmd->add_option("--config", o.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "Global seed");
  cmd->add_option("--out", o.out, "Output directory");
  if (!prompt_flags) return;
  cmd->add_option("--backend", o.backend, "Chat backend id from the config");
  cmd->add_option("--k", o.k, "Shot count");
  cmd->add_option("--strategy", o.strategy, "Shot selection: rag | inverse_rag | random")
      ->check(CLI::IsMember({"rag", "inverse_rag", "inverse-rag", "random"}));
  cmd->add_option("--mode", o.mode, "Prompt mode: result | cot")->check(CLI::IsMember({"result", "cot"}));
}

runner::ExperimentConfig load_config(const Overrides& o) {
  auto c = runner::ExperimentConfig::load(o.config);
  if (o.seed) c.set_seed(*o.seed);
  if (o.out) c.output = fs::absolute(*o.out);
  if (!c.is_baseline()) {
    auto& p = c.prompt();
    if (o.backend) p.backend = *o.backend;
    if (o.k) p.k = *o.k;
    if (o.strategy) p.strategy = retrieval::strategy_from_string(*o.strategy);
    if (o.mode) p.mode = extraction::mode_from_string(*o.mode);
  } else if (o.backend || o.k || o.strategy || o.mode) {
    throw Error("prompt flags given for a baseline config");
  }
  return c;
}

void finish(const runner::RunOutput& out, const fs::path& dir) {
  std::cout << out.table;
  std::cerr << "wrote " << dir.string() << "\n";
}

int cmd_ingest(const Overrides& o, const std::optional<std::string>& write_to) {
  const auto c = load_config(o);
  c.validate();
  runner::Experiment e(c);
  const auto& corpus = e.corpus();
  std::size_t tokens = 0;
  for (const Item* item : corpus.items()) tokens += text::tokenize(item->text).size();
  nlohmann::json stats{{"documents", corpus.document_count()},
                       {"items", corpus.item_count()},
                       {"rejected_markers", corpus.rejected_markers()},
                       {"tasks", corpus.task_ids()},
                       {"mean_document_tokens",
                        corpus.document_count() ? static_cast<double>(tokens) / corpus.document_count() : 0.0}};
  std::cout << stats.dump(2) << "\n";
  if (write_to) {
    std::ofstream out(*write_to);
    if (!out) throw Error("cannot write " + *write_to);
    write_corpus(corpus, out);
  }
  return 0;
}

int cmd_report(const std::vector<std::string>& paths, const std::optional<std::string>& out_path) {
  std::vector<evaluation::EvalReport> reports;
  std::string transfer;
  for (const auto& p : paths) {
    fs::path path(p);
    if (fs::is_directory(path)) path /= "report.json";
    std::ifstream in(path);
    if (!in) throw Error("cannot read report " + path.string());
    auto r = evaluation::EvalReport::from_json(nlohmann::json::parse(in));
    if (r.extra.contains("transfer")) {
      std::vector<evaluation::TransferCell> cells;
      for (const auto& c : r.extra["transfer"]) {
        evaluation::TransferCell cell{c.at("source"), c.at("target"), c.at("metrics"), c.at("failed"),
                                      c.value("error", std::string())};
        cells.push_back(std::move(cell));
      }
      const std::string metric = r.aggregate.metrics.count("macro_f1") ? "macro_f1" : "spearman";
      transfer += evaluation::render_transfer(cells, metric);
    }
    reports.push_back(std::move(r));
  }
  std::string table = evaluation::render_table(reports) + transfer;
  std::cout << table;
  if (out_path) {
    std::ofstream out(*out_path);
    if (!out) throw Error("cannot write " + *out_path);
    out << table;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lexmine: prompt-based argument mining and essay scoring experiments"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  Overrides ingest_o, baseline_o, classify_o, score_o, ablate_o, transfer_o;
  std::optional<std::string> ingest_write;
  auto* ingest = app.add_subcommand("ingest", "Load a dataset and print corpus statistics");
  add_run_flags(ingest, ingest_o, false);
  ingest->add_option("--write", ingest_write, "Also write the canonical JSONL form here");

  auto* base = app.add_subcommand("baseline", "Bag-of-words linear baseline");
  add_run_flags(base, baseline_o, false);
  auto* classify = app.add_subcommand("classify", "Prompted classification run");
  add_run_flags(classify, classify_o, true);
  auto* score = app.add_subcommand("score", "Prompted essay scoring run");
  add_run_flags(score, score_o, true);

  std::string ablation;
  auto* ablate = app.add_subcommand("ablate", "Run the variants of one ablation");
  ablate->add_option("ablation", ablation, "pseudonymize | inverse-rag | no-explanation | zero-shot-cot")
      ->required()
      ->check(CLI::IsMember({"pseudonymize", "inverse-rag", "no-explanation", "zero-shot-cot"}));
  add_run_flags(ablate, ablate_o, true);

  auto* transfer = app.add_subcommand("transfer", "Cross-task transfer matrix");
  add_run_flags(transfer, transfer_o, true);

  std::vector<std::string> report_paths;
  std::optional<std::string> report_out;
  auto* report = app.add_subcommand("report", "Re-render tables from stored report.json files");
  report->add_option("reports", report_paths, "Report files or run directories")->required();
  report->add_option("--out", report_out, "Also write the table here");

  std::string synth_kind, synth_out;
  std::uint64_t synth_seed = 1;
  std::size_t synth_docs = 0, synth_items = 20;
  auto* synth = app.add_subcommand("synth", "Write a seeded synthetic corpus");
  synth->add_option("kind", synth_kind, "classification | scoring")
      ->required()
      ->check(CLI::IsMember({"classification", "scoring"}));
  synth->add_option("--out", synth_out, "Output JSONL path")->required();
  synth->add_option("--seed", synth_seed, "Seed");
  synth->add_option("--documents", synth_docs, "Document count (0: default)");
  synth->add_option("--items", synth_items, "Items per document (classification)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest) return cmd_ingest(ingest_o, ingest_write);
    if (*base) {
      auto c = load_config(baseline_o);
      if (!c.is_baseline()) throw Error("baseline needs a config with method.baseline");
      finish(runner::run(c), c.output);
    } else if (*classify || *score) {
      const bool classification = static_cast<bool>(*classify);
      auto c = load_config(classification ? classify_o : score_o);
      if (c.is_baseline()) throw Error("this subcommand needs a config with method.prompt");
      if (classification != c.dataset.schema.has_value()) {
        throw Error(classification ? "classify needs a dataset with a schema" : "score needs a dataset with a score_range");
      }
      finish(runner::run(c), c.output);
    } else if (*ablate) {
      const auto c = load_config(ablate_o);
      std::vector<evaluation::EvalReport> reports;
      for (const auto& [name, variant] : runner::ablation_variants(c, ablation)) {
        std::cerr << "variant " << name << "\n";
        reports.push_back(runner::run(variant).report);
      }
      const auto table = evaluation::render_table(reports);
      fs::create_directories(c.output);
      std::ofstream(c.output / "table.txt") << table;
      std::cout << table;
      std::cerr << "wrote " << c.output.string() << "\n";
    } else if (*transfer) {
      const auto c = load_config(transfer_o);
      finish(runner::run_transfer(c), c.output);
    } else if (*report) {
      return cmd_report(report_paths, report_out);
    } else if (*synth) {
      std::ofstream out(synth_out);
      if (!out) throw Error("cannot write " + synth_out);
      if (synth_kind == "classification") {
        synth::ClassificationSpec spec;
        spec.seed = synth_seed;
        if (synth_docs) spec.documents = synth_docs;
        spec.items_per_document = synth_items;
        write_corpus(synth::classification_corpus(synth::six_class_schema(), spec), out);
      } else {
        synth::ScoringSpec spec;
        spec.seed = synth_seed;
        if (synth_docs) spec.documents = synth_docs;
        write_corpus(synth::scoring_corpus(spec), out);
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
