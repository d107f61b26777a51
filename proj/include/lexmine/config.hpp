#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "lexmine/baseline.hpp"
#include "lexmine/corpus.hpp"
#include "lexmine/evaluation.hpp"
#include "lexmine/extraction.hpp"
#include "lexmine/gar.hpp"
#include "lexmine/retrieval.hpp"

namespace lexmine::runner {

struct DatasetSpec {
  std::filesystem::path path;
  std::string format = "jsonl";  // jsonl | essay_tsv
  std::optional<std::filesystem::path> schema;
  std::optional<ScoreRange> score_range;
  std::optional<int> essay_set;  // essay_tsv only
  std::optional<std::string> task;
  SplitSpec split;
};

struct BaselineSpec {
  baseline::VectorizerConfig vectorizer;
  baseline::TrainConfig train;
};

struct GarSpec {
  std::size_t budget = 10;
  prompting::Sampler sampler = prompting::Sampler::diversity;
};

struct PromptSpec {
  std::string backend;
  std::string model;
  std::string embedder;
  retrieval::Strategy strategy = retrieval::Strategy::rag;
  std::size_t k = 10;
  extraction::Mode mode = extraction::Mode::result;
  bool explanation = true;
  bool pseudonymize = false;
  std::optional<GarSpec> gar;
  std::optional<std::filesystem::path> templates;
  int max_tokens = 512;
  double temperature = 0.0;
  extraction::MalformedPolicy malformed = extraction::MalformedPolicy::count_as_wrong;
  std::size_t context_window = 0;  // neighbouring items embedded with the query
  bool log_prompts = true;
};

struct EvaluationSpec {
  bool two_tier = false;
  bool include_none = true;
  evaluation::MacroAverage macro = evaluation::MacroAverage::gold_present;
};

/// One experiment. Relative paths resolve against the config file's
/// directory. All component seeds derive from `seed`.
struct ExperimentConfig {
  std::string name = "run";
  std::uint64_t seed = 0;
  DatasetSpec dataset;
  std::variant<BaselineSpec, PromptSpec> method;
  std::map<std::string, nlohmann::json> backends;
  std::map<std::string, nlohmann::json> embedders;
  std::optional<std::filesystem::path> cache_dir;
  std::filesystem::path output;
  std::size_t concurrency = 4;
  EvaluationSpec evaluation;
  std::vector<std::string> transfer_tasks;  // empty: every task in the corpus

  static ExperimentConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
  static ExperimentConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  bool is_baseline() const noexcept { return std::holds_alternative<BaselineSpec>(method); }
  const PromptSpec& prompt() const { return std::get<PromptSpec>(method); }
  PromptSpec& prompt() { return std::get<PromptSpec>(method); }

  /// Sets the global seed and every seed derived from it.
  void set_seed(std::uint64_t s);
  /// Files the run reads (dataset, schema, templates, explanation).
  std::vector<std::filesystem::path> input_files() const;
  /// Structural checks plus existence of every input file.
  void validate() const;
};

}  // namespace lexmine::runner
