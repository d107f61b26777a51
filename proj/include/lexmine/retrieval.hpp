#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "lexmine/corpus.hpp"
#include "lexmine/embedding.hpp"

namespace lexmine::retrieval {

enum class Strategy { rag, inverse_rag, random };

Strategy strategy_from_string(std::string_view s);
std::string_view to_string(Strategy s) noexcept;

struct SelectionConfig {
  Strategy strategy = Strategy::rag;
  std::size_t k = 10;
  std::uint64_t seed = 0;
};

struct Shot {
  std::string item_id;
  Gold gold;
  double similarity = 0.0;
  std::size_t rank = 0;  // 0 = chosen first by the strategy
};

struct ShotSelection {
  Strategy strategy = Strategy::rag;
  std::uint64_t seed = 0;
  std::vector<Shot> shots;  // prompt order: ascending similarity

  std::vector<std::string> ids() const;
  nlohmann::json to_json() const;
};

/// Exhaustive cosine index. Vectors are normalized on insertion.
class RetrievalIndex {
 public:
  explicit RetrievalIndex(std::size_t dimension);

  void add(std::string item_id, const Embedding& embedding, Gold gold);
  std::size_t size() const noexcept { return ids_.size(); }
  std::size_t dimension() const noexcept { return dim_; }
  const std::string& id(std::size_t row) const { return ids_.at(row); }
  const Gold& gold(std::size_t row) const { return golds_.at(row); }

  /// Cosine similarity of `query` against every row.
  std::vector<double> similarities(std::span<const float> query) const;

 private:
  std::size_t dim_;
  std::vector<float> rows_;
  std::vector<std::string> ids_;
  std::vector<Gold> golds_;
  std::unordered_set<std::string> seen_;
};

/// rag: the k most similar rows; inverse_rag: the k least similar; random:
/// k rows drawn without replacement. Ties break by item id. Rows whose id is
/// in `exclude` are never selected.
ShotSelection select_shots(const RetrievalIndex& index, std::span<const float> query, const SelectionConfig& config,
                           const std::unordered_set<std::string>* exclude = nullptr);

}  // namespace lexmine::retrieval
