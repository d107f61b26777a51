#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "lexmine/corpus.hpp"
#include "lexmine/extraction.hpp"
#include "lexmine/llm.hpp"

namespace lexmine::prompting {

/// Prompt texts with {{slot}} placeholders.
///
/// Classification: system uses {{explanation}} and {{categories}}; the
/// queries use {{text}} and, for CoT, {{language}} and {{word_budget}}.
/// Scoring: score_system uses {{explanation}}, {{min}}, {{max}}; the score
/// queries use {{text}}, {{min}}, {{max}} (+ CoT slots).
struct PromptTemplateSet {
  std::string system;
  std::string result_query;
  std::string cot_query;
  std::string score_system;
  std::string score_query;
  std::string score_cot_query;
  std::string explanation;  // domain explanation block; empty disables it
  std::string quote_open = "“";
  std::string quote_close = "”";
  std::string list_separator = ", ";
  std::string list_last = " or ";
  std::string language = "German";
  int word_budget = 100;

  static PromptTemplateSet defaults();
  /// Missing keys keep their defaults. "explanation_file" is resolved
  /// against `base_dir` and read verbatim.
  static PromptTemplateSet from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static PromptTemplateSet load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
  void validate() const;
};

/// Replaces every {{name}} with values[name]; unknown slots throw.
std::string render(const std::string& tmpl, const std::map<std::string, std::string>& values);

/// Per-request bijection over categories.
struct PseudonymMap {
  std::map<CategoryId, CategoryId> forward;  // true category -> name used in the prompt
  std::uint64_t seed = 0;
  std::string request_id;

  const CategoryId& apply(const CategoryId& c) const;
  const CategoryId& invert(const CategoryId& c) const;
  PseudonymMap inverse() const;
  nlohmann::json to_json() const;
};

/// Uniform random permutation of the schema's categories. Fixed points allowed.
PseudonymMap pseudonymize(const LabelSchema& schema, std::uint64_t seed, std::string request_id = {});

struct Exemplar {
  std::string item_id;
  std::string text;
  Gold gold;
  std::optional<std::string> rationale;
};

struct PromptOptions {
  bool explanation = true;
  extraction::Mode mode = extraction::Mode::result;  // result | cot
  std::optional<PseudonymMap> pseudonyms;
};

/// A surface-form replacement made while pseudonymizing; offsets refer to
/// the pseudonymized message.
struct Substitution {
  std::size_t message = 0;
  std::size_t begin = 0;
  std::size_t end = 0;
  std::string original;
};

struct PromptBundle {
  std::vector<llm::ChatMessage> messages;
  std::string query_item_id;
  extraction::Mode mode = extraction::Mode::result;
  std::optional<PseudonymMap> pseudonyms;
  std::vector<Substitution> substitutions;
  std::string answer_key;            // the gold answer as this prompt names it
  std::vector<std::string> choices;  // admissible answers as this prompt names them

  /// The bundle with every substitution undone.
  std::vector<llm::ChatMessage> restored() const;
  nlohmann::json to_json() const;
};

class PromptBuilder {
 public:
  PromptBuilder(PromptTemplateSet templates, Target target);

  /// [system] + (user, assistant) per shot + [user query].
  PromptBundle build(const Item& query, std::span<const Exemplar> shots, const PromptOptions& options) const;

  std::string system_prompt(bool explanation) const;
  std::string explanation_block() const;
  std::string render_query(const std::string& text, extraction::Mode mode) const;
  std::string render_answer(const Exemplar& shot, extraction::Mode mode) const;
  std::string category_list() const;

  const PromptTemplateSet& templates() const noexcept { return templates_; }
  const Target& target() const noexcept { return target_; }

 private:
  void pseudonymize_bundle(PromptBundle& bundle, const PseudonymMap& map) const;

  PromptTemplateSet templates_;
  Target target_;
  std::optional<SurfaceMatcher> matcher_;
};

llm::ChatRequest make_request(const PromptBundle& bundle, const std::string& backend, const std::string& model,
                              int max_tokens, double temperature = 0.0);

/// Extracts the answer from a reply and maps pseudonyms back to true
/// categories.
extraction::ExtractionOutcome decode_reply(const std::string& reply, const PromptBundle& bundle, const Target& target,
                                           const extraction::CategoryExtractor* extractor);

}  // namespace lexmine::prompting
