#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "lexmine/schema.hpp"

namespace lexmine {

struct ScoreRange {
  int min = 0;
  int max = 1;

  void validate() const;
  bool contains(int v) const noexcept { return v >= min && v <= max; }
  double clamp(double v) const noexcept { return v < min ? min : (v > max ? max : v); }
};

/// Gold annotation: a category (classification) or an integer score.
using Gold = std::variant<CategoryId, int>;

std::string gold_to_string(const Gold& g);
nlohmann::json gold_to_json(const Gold& g);

struct Item {
  std::string id;
  std::string doc_id;
  std::size_t position = 0;
  std::string text;
  Gold gold;

  const CategoryId& label() const { return std::get<CategoryId>(gold); }
  int score() const { return std::get<int>(gold); }
};

struct Document {
  std::string id;
  std::string task_id;
  std::vector<Item> items;
};

/// Either a label schema (classification) or a score range (regression).
class Target {
 public:
  Target(LabelSchema schema) : schema_(std::make_shared<const LabelSchema>(std::move(schema))) {}
  Target(std::shared_ptr<const LabelSchema> schema) : schema_(std::move(schema)) {}
  Target(ScoreRange range) : range_(range) { range.validate(); }

  bool is_classification() const noexcept { return schema_ != nullptr; }
  const LabelSchema& schema() const;
  const ScoreRange& range() const;
  const std::shared_ptr<const LabelSchema>& schema_ptr() const noexcept { return schema_; }

 private:
  std::shared_ptr<const LabelSchema> schema_;
  std::optional<ScoreRange> range_;
};

/// Documents of annotated items. Immutable once built.
class Corpus {
 public:
  Corpus(std::vector<Document> documents, Target target, std::size_t rejected_markers = 0);

  const std::vector<Document>& documents() const noexcept { return documents_; }
  const Target& target() const noexcept { return target_; }
  bool is_classification() const noexcept { return target_.is_classification(); }
  std::size_t document_count() const noexcept { return documents_.size(); }
  std::size_t item_count() const noexcept { return item_count_; }
  /// Records dropped at load time because they carried an unused marker.
  std::size_t rejected_markers() const noexcept { return rejected_markers_; }

  /// Items across documents, document order then position.
  std::vector<const Item*> items() const;

  /// The documents at `indices`, in the given order.
  Corpus subset(const std::vector<std::size_t>& indices) const;
  /// Documents whose task id equals `task_id`.
  Corpus task(const std::string& task_id) const;
  std::vector<std::string> task_ids() const;

 private:
  std::vector<Document> documents_;
  Target target_;
  std::size_t item_count_ = 0;
  std::size_t rejected_markers_ = 0;
};

/// Reads canonical line-delimited records:
///   {"doc_id", "item_id"?, "position"?, "text", "label" | "score", "task_id"?}
/// Missing positions follow file order; missing item ids become "<doc>:<pos>".
Corpus parse_corpus(std::istream& in, const Target& target);
Corpus load_corpus(const std::filesystem::path& path, const Target& target);
void write_corpus(const Corpus& corpus, std::ostream& out);

/// Adapter for the public essay-scoring TSV (essay_id, essay_set, essay, ...,
/// domain1_score). Each essay is one single-item document; the essay set
/// becomes the task id. Latin-1 input is transcoded to UTF-8.
Corpus load_essay_tsv(const std::filesystem::path& path, const ScoreRange& range,
                      std::optional<int> essay_set = std::nullopt);

struct SplitSpec {
  enum class Kind { holdout, kfold };
  Kind kind = Kind::holdout;
  double test_ratio = 0.2;
  int k = 3;
  int repeats = 1;
  std::uint64_t seed = 0;

  static SplitSpec holdout(double ratio, std::uint64_t seed) { return {Kind::holdout, ratio, 3, 1, seed}; }
  static SplitSpec kfold(int k, int repeats, std::uint64_t seed) { return {Kind::kfold, 0.2, k, repeats, seed}; }
  static SplitSpec from_json(const nlohmann::json& j, std::uint64_t default_seed);
  nlohmann::json to_json() const;
  void validate() const;
};

struct Fold {
  Corpus train;
  Corpus test;
  int repeat = 0;
  int index = 0;
};

std::pair<Corpus, Corpus> holdout_split(const Corpus& corpus, const SplitSpec& spec);
std::vector<Fold> kfold_splits(const Corpus& corpus, const SplitSpec& spec);
/// Holdout yields one fold, k-fold yields k * repeats.
std::vector<Fold> make_folds(const Corpus& corpus, const SplitSpec& spec);

}  // namespace lexmine
