#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "lexmine/corpus.hpp"

// Bag-of-words features and linear models trained by seeded SGD.
namespace lexmine::baseline {

enum class Weighting { counts, binary, tfidf };

struct VectorizerConfig {
  bool lowercase = true;
  std::size_t min_df = 1;
  std::size_t max_features = 0;  // 0: unlimited
  Weighting weighting = Weighting::counts;
  bool l2_normalize = false;

  static VectorizerConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

/// Indices are assigned by (document frequency desc, term asc).
class Vocabulary {
 public:
  static Vocabulary fit(std::span<const std::string> texts, const VectorizerConfig& config = {});
  static Vocabulary from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;

  std::size_t size() const noexcept { return terms_.size(); }
  const std::vector<std::string>& terms() const noexcept { return terms_; }
  std::optional<std::uint32_t> index_of(std::string_view term) const;
  std::size_t document_frequency(std::size_t index) const { return df_.at(index); }
  std::size_t document_count() const noexcept { return n_docs_; }
  const VectorizerConfig& config() const noexcept { return config_; }

 private:
  VectorizerConfig config_;
  std::vector<std::string> terms_;
  std::vector<std::size_t> df_;
  std::size_t n_docs_ = 0;
  std::unordered_map<std::string, std::uint32_t> index_;
};

struct SparseVector {
  std::vector<std::uint32_t> indices;  // strictly increasing
  std::vector<double> values;
  std::size_t dimension = 0;

  std::size_t nnz() const noexcept { return indices.size(); }
  double squared_norm() const;
  void validate() const;
};

std::vector<std::string> tokenize(std::string_view text, bool lowercase = true);
SparseVector transform(std::string_view text, const Vocabulary& vocab);

enum class Loss { hinge, epsilon_insensitive, squared };

struct TrainConfig {
  double lambda = 1e-4;  // L2 strength
  int epochs = 50;
  std::uint64_t seed = 0;
  Loss loss = Loss::hinge;
  double epsilon = 0.1;  // epsilon-insensitive half-width
  double eta0 = 0.0;     // 0 picks the schedule's default
  double power_t = 0.25;

  static TrainConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

/// One-vs-rest classifier (one weight row per schema category) or a single
/// regression row. Categories never seen in training are inactive and never
/// predicted.
class LinearModel {
 public:
  enum class Kind { classification, regression };

  Kind kind() const noexcept { return kind_; }
  std::size_t dimension() const noexcept { return dimension_; }
  std::size_t rows() const noexcept { return bias_.size(); }
  std::span<const double> weights(std::size_t row) const;
  double bias(std::size_t row) const { return bias_.at(row); }
  bool active(std::size_t row) const { return active_.at(row) != 0; }
  const std::vector<CategoryId>& classes() const noexcept { return classes_; }
  const ScoreRange& range() const { return range_.value(); }
  const TrainConfig& config() const noexcept { return config_; }

  /// Raw decision value per row.
  std::vector<double> decision(const SparseVector& x) const;
  /// Argmax over active classes; ties resolve to the earlier schema category.
  const CategoryId& predict_label(const SparseVector& x) const;
  /// Regression output clamped to the score range.
  double predict_score(const SparseVector& x) const;

  nlohmann::json to_json() const;
  static LinearModel from_json(const nlohmann::json& j);

  void check_finite() const;

 private:
  friend LinearModel train_classifier(std::span<const SparseVector>, std::span<const CategoryId>,
                                      const LabelSchema&, const TrainConfig&);
  friend LinearModel train_regressor(std::span<const SparseVector>, std::span<const int>, const ScoreRange&,
                                     const TrainConfig&);
  void check_input(const SparseVector& x) const;

  Kind kind_ = Kind::classification;
  std::size_t dimension_ = 0;
  std::vector<double> weights_;  // rows x dimension, row-major
  std::vector<double> bias_;
  std::vector<char> active_;
  std::vector<CategoryId> classes_;
  std::optional<ScoreRange> range_;
  TrainConfig config_;
};

LinearModel train_classifier(std::span<const SparseVector> X, std::span<const CategoryId> y,
                             const LabelSchema& schema, const TrainConfig& config);
LinearModel train_regressor(std::span<const SparseVector> X, std::span<const int> y, const ScoreRange& range,
                            const TrainConfig& config);

/// Mean over active rows of (lambda/2 |w|^2 + mean hinge loss).
double hinge_objective(const LinearModel& model, std::span<const SparseVector> X,
                       std::span<const CategoryId> y);

/// Vocabulary plus weights; the persisted baseline artifact.
struct BowModel {
  Vocabulary vocabulary;
  LinearModel model;

  static constexpr int kFormatVersion = 1;
  void save(const std::filesystem::path& path) const;
  static BowModel load(const std::filesystem::path& path);
};

}  // namespace lexmine::baseline
