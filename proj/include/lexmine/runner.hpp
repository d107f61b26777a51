#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "lexmine/config.hpp"
#include "lexmine/embedding.hpp"
#include "lexmine/evaluation.hpp"
#include "lexmine/llm.hpp"
#include "lexmine/prompting.hpp"

namespace lexmine::runner {

struct RunOutput {
  evaluation::EvalReport report;
  std::vector<nlohmann::json> transcript;
  nlohmann::json manifest;
  std::string table;
};

/// Loaded inputs plus backends for one config. Construction validates the
/// config and reads every input; nothing is written.
class Experiment {
 public:
  explicit Experiment(ExperimentConfig config);
  ~Experiment();

  const ExperimentConfig& config() const noexcept { return config_; }
  const Corpus& corpus() const { return *corpus_; }
  llm::ChatGateway& gateway() { return *gateway_; }

  /// Metrics for one train/test pair. Appends transcript records when given.
  evaluation::MetricMap run_fold(const Corpus& train, const Corpus& test, int fold,
                                 std::vector<nlohmann::json>* transcript = nullptr);

  /// Every fold of the configured split, aggregated.
  RunOutput run();
  /// Every ordered pair of tasks (config.transfer_tasks or all tasks).
  RunOutput run_transfer();

 private:
  evaluation::MetricMap baseline_fold(const Corpus& train, const Corpus& test, int fold,
                                      std::vector<nlohmann::json>* transcript);
  evaluation::MetricMap prompt_fold(const Corpus& train, const Corpus& test, int fold,
                                    std::vector<nlohmann::json>* transcript);
  evaluation::MetricMap classification_fold_metrics(const std::vector<std::optional<CategoryId>>& preds,
                                                    const std::vector<CategoryId>& golds) const;
  retrieval::EmbeddingBackend& embedder();
  std::string embedding_text(const Item& item) const;
  std::vector<retrieval::Embedding> embed(const std::vector<const Item*>& items);
  nlohmann::json metadata() const;
  nlohmann::json manifest() const;

  ExperimentConfig config_;
  std::optional<Corpus> corpus_;
  std::unordered_map<std::string, const Document*> documents_;
  std::optional<prompting::PromptBuilder> builder_;
  std::optional<extraction::CategoryExtractor> extractor_;
  std::unique_ptr<llm::ChatGateway> gateway_;
  std::unique_ptr<retrieval::EmbeddingBackend> embedder_;
  std::unique_ptr<retrieval::EmbeddingCache> embedding_cache_;
  nlohmann::json run_extra_ = nlohmann::json::object();
};

/// Validates, runs every fold and writes report.json, table.txt,
/// transcript.jsonl and manifest.json into config.output.
RunOutput run(const ExperimentConfig& config);
RunOutput run_transfer(const ExperimentConfig& config);
void write_outputs(const RunOutput& output, const std::filesystem::path& dir);

/// Named variants for an ablation: pseudonymize, inverse-rag,
/// no-explanation, zero-shot-cot. Each variant writes to output/<variant>.
std::vector<std::pair<std::string, ExperimentConfig>> ablation_variants(const ExperimentConfig& base,
                                                                        std::string_view ablation);

/// Builds a chat backend from its config entry ({"type": "http" | "mock", ...}).
std::shared_ptr<llm::ChatBackend> make_chat_backend(const std::string& id, const nlohmann::json& spec,
                                                    std::uint64_t default_seed);

}  // namespace lexmine::runner
