#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lexmine/embedding.hpp"
#include "lexmine/prompting.hpp"

// Generated rationales: zero-shot CoT answers for training items, kept only
// when the extracted answer equals gold.
namespace lexmine::prompting {

enum class Sampler { diversity, uniform };

Sampler sampler_from_string(std::string_view s);

struct GarConfig {
  std::size_t budget = 10;
  Sampler sampler = Sampler::diversity;
  std::uint64_t seed = 0;
  std::size_t kmeans_iterations = 25;
  bool explanation = true;
};

struct RationaleShot {
  std::string item_id;
  std::string text;
  Gold gold;
  std::string rationale;
  std::optional<Gold> extracted;
  bool accepted = false;

  Exemplar exemplar() const { return {item_id, text, gold, rationale}; }
  nlohmann::json to_json() const;
};

struct GarResult {
  std::vector<RationaleShot> shots;      // accepted, sorted by item id
  std::vector<RationaleShot> attempts;   // every committed attempt, in sampling order
  double acceptance_rate = 0.0;
};

struct GarBackend {
  llm::ChatGateway& gateway;
  std::string backend;
  std::string model;
  int max_tokens = 512;
  std::size_t concurrency = 1;
};

/// Seeded k-means++ initialisation followed by Lloyd iterations. Returns
/// the cluster of every point; clusters are numbered by first appearance.
std::vector<std::size_t> kmeans(std::span<const retrieval::Embedding> points, std::size_t k, std::uint64_t seed,
                                std::size_t iterations);

/// Order in which GAR visits the pool (indices into `pool`). Uniform: a
/// seeded shuffle. Diversity: round-robin over `budget` clusters, nearest to
/// the centroid first.
std::vector<std::vector<std::size_t>> sampling_groups(std::size_t pool_size, const GarConfig& config,
                                                      std::span<const retrieval::Embedding> embeddings);

/// Requests are issued in waves (at most budget - accepted per wave, one per
/// still-unsatisfied group under the diversity sampler) and committed in
/// sampling order, so the result does not depend on concurrency.
GarResult generate_rationales(std::span<const Item* const> pool, const PromptBuilder& builder,
                              const extraction::CategoryExtractor* extractor, const GarBackend& backend,
                              const GarConfig& config, std::span<const retrieval::Embedding> embeddings = {});

void save_rationales(const std::vector<RationaleShot>& shots, const std::filesystem::path& path);
/// Throws when a stored shot is not accepted or its extracted answer differs
/// from gold.
std::vector<RationaleShot> load_rationales(const std::filesystem::path& path, const Target& target);

}  // namespace lexmine::prompting
