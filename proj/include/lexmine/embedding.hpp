#pragma once

#include <atomic>
#include <cstddef>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "lexmine/http.hpp"

namespace lexmine::retrieval {

struct Embedding {
  std::vector<float> values;
  bool normalized = false;

  std::size_t dimension() const noexcept { return values.size(); }
  /// L2-normalizes; throws on zero or non-finite input.
  static Embedding unit(std::vector<float> values);
  void validate() const;
};

class EmbeddingBackend {
 public:
  virtual ~EmbeddingBackend() = default;
  /// Stable identifier used to key the on-disk cache.
  virtual std::string id() const = 0;
  /// One raw vector per text, same order.
  virtual std::vector<std::vector<float>> embed(std::span<const std::string> texts) = 0;
  /// Batches embed_batch may have in flight at once.
  virtual std::size_t max_parallel() const { return 1; }
};

/// Offline embedder: signed feature hashing of case-folded word tokens.
///
/// For every token t with h = fnv1a64(t): slot = h mod dim, sign = -1 when the
/// top bit of splitmix64(h) is set, else +1; the slot accumulates the sign.
/// A text with no tokens (or a fully cancelled sum) maps to the basis vector
/// at fnv1a64(text) mod dim. embed() returns the raw, unnormalized sums.
class HashingEmbedder final : public EmbeddingBackend {
 public:
  explicit HashingEmbedder(std::size_t dimension);
  std::string id() const override { return "hash-" + std::to_string(dim_); }
  std::vector<std::vector<float>> embed(std::span<const std::string> texts) override;
  static std::vector<float> project(std::string_view text, std::size_t dimension);

 private:
  std::size_t dim_;
};

/// Test double that leaks gold labels: every text whose label is L maps to
/// the one-hot vector of L. Unknown texts map to a shared extra axis.
class LabelOracleEmbedder final : public EmbeddingBackend {
 public:
  LabelOracleEmbedder(std::unordered_map<std::string, std::string> text_to_label, std::vector<std::string> labels);
  std::string id() const override { return "label-oracle-" + std::to_string(labels_.size()); }
  std::vector<std::vector<float>> embed(std::span<const std::string> texts) override;

 private:
  std::unordered_map<std::string, std::string> text_to_label_;
  std::vector<std::string> labels_;
};

struct HttpEmbedderConfig {
  http::Endpoint endpoint;
  std::string model;
  std::size_t parallel = 4;
  http::RetryPolicy retry;
};

/// OpenAI-compatible embeddings endpoint:
/// POST /v1/embeddings {model, input: [..]} -> {data: [{embedding: [..]}]}.
class HttpEmbedder final : public EmbeddingBackend {
 public:
  explicit HttpEmbedder(HttpEmbedderConfig config) : config_(std::move(config)) {}
  std::string id() const override { return "http-" + config_.model; }
  std::vector<std::vector<float>> embed(std::span<const std::string> texts) override;
  std::size_t max_parallel() const override { return config_.parallel; }

 private:
  HttpEmbedderConfig config_;
};

/// Vectors keyed by (backend id, sha256 of the text). One raw float32 file
/// per entry under <dir>/<backend id>/.
class EmbeddingCache {
 public:
  explicit EmbeddingCache(std::filesystem::path dir) : dir_(std::move(dir)) {}

  std::optional<std::vector<float>> get(const std::string& backend, const std::string& text);
  void put(const std::string& backend, const std::string& text, const std::vector<float>& values);
  std::size_t hits() const noexcept { return hits_; }
  std::size_t misses() const noexcept { return misses_; }

 private:
  std::filesystem::path path_for(const std::string& backend, const std::string& key) const;

  std::filesystem::path dir_;
  std::mutex mutex_;
  std::unordered_map<std::string, std::vector<float>> memory_;
  std::atomic<std::size_t> hits_{0};
  std::atomic<std::size_t> misses_{0};
};

struct EmbedOptions {
  std::size_t batch_size = 64;
};

/// Embeds texts in order, L2-normalized, consulting the cache when given.
/// Batches run with the backend's bounded parallelism; a dimension change
/// between batches is an error.
std::vector<Embedding> embed_batch(std::span<const std::string> texts, EmbeddingBackend& backend,
                                   EmbeddingCache* cache = nullptr, const EmbedOptions& options = {});

}  // namespace lexmine::retrieval
