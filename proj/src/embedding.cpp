#include "lexmine/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <thread>

#include <json.hpp>

#include "lexmine/digest.hpp"
#include "lexmine/error.hpp"
#include "lexmine/kernels.hpp"
#include "lexmine/rng.hpp"
#include "lexmine/text.hpp"

namespace lexmine::retrieval {

Embedding Embedding::unit(std::vector<float> values) {
  if (values.empty()) throw Error("embedding: empty vector");
  for (float v : values) {
    if (!std::isfinite(v)) throw Error("embedding: non-finite entry");
  }
  const double norm = std::sqrt(kernels::squared_norm(values));
  if (!(norm > 0.0)) throw Error("embedding: zero vector cannot be normalized");
  for (auto& v : values) v = static_cast<float>(v / norm);
  return Embedding{std::move(values), true};
}

void Embedding::validate() const {
  for (float v : values) {
    if (!std::isfinite(v)) throw Error("embedding: non-finite entry");
  }
  if (normalized && std::abs(std::sqrt(kernels::squared_norm(values)) - 1.0) > 1e-6) {
    throw Error("embedding: flagged normalized but norm differs from 1");
  }
}

HashingEmbedder::HashingEmbedder(std::size_t dimension) : dim_(dimension) {
  if (dim_ == 0) throw Error("hashing embedder: dimension must be positive");
}

std::vector<float> HashingEmbedder::project(std::string_view text_in, std::size_t dimension) {
  std::vector<float> v(dimension, 0.0f);
  bool any = false;
  for (const auto& tok : text::tokenize(text_in)) {
    const std::uint64_t h = fnv1a64(tok.folded);
    const float sign = (splitmix64(h) >> 63) ? -1.0f : 1.0f;
    v[h % dimension] += sign;
  }
  for (float x : v) any = any || x != 0.0f;
  if (!any) v[fnv1a64(text_in) % dimension] = 1.0f;
  return v;
}

std::vector<std::vector<float>> HashingEmbedder::embed(std::span<const std::string> texts) {
  std::vector<std::vector<float>> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(project(t, dim_));
  return out;
}

LabelOracleEmbedder::LabelOracleEmbedder(std::unordered_map<std::string, std::string> text_to_label,
                                         std::vector<std::string> labels)
    : text_to_label_(std::move(text_to_label)), labels_(std::move(labels)) {
  if (labels_.empty()) throw Error("label oracle embedder: no labels");
}

std::vector<std::vector<float>> LabelOracleEmbedder::embed(std::span<const std::string> texts) {
  std::vector<std::vector<float>> out;
  for (const auto& t : texts) {
    std::vector<float> v(labels_.size() + 1, 0.0f);
    std::size_t axis = labels_.size();
    if (auto it = text_to_label_.find(t); it != text_to_label_.end()) {
      auto pos = std::find(labels_.begin(), labels_.end(), it->second);
      if (pos != labels_.end()) axis = static_cast<std::size_t>(pos - labels_.begin());
    }
    v[axis] = 1.0f;
    out.push_back(std::move(v));
  }
  return out;
}

std::vector<std::vector<float>> HttpEmbedder::embed(std::span<const std::string> texts) {
  nlohmann::json body;
  body["model"] = config_.model;
  body["input"] = std::vector<std::string>(texts.begin(), texts.end());
  const auto payload = body.dump();
  return http::with_retries(config_.retry, [&] {
    const auto resp = http::post_json(config_.endpoint, "/v1/embeddings", payload);
    if (resp.status != 200) {
      throw BackendError("embeddings endpoint returned " + std::to_string(resp.status) + ": " + resp.body.substr(0, 200),
                         resp.status, http::is_transient_status(resp.status));
    }
    nlohmann::json parsed;
    try {
      parsed = nlohmann::json::parse(resp.body);
    } catch (const nlohmann::json::exception& e) {
      throw BackendError(std::string("embeddings endpoint sent invalid JSON: ") + e.what(), resp.status, false);
    }
    const auto& data = parsed.at("data");
    if (data.size() != texts.size()) throw BackendError("embeddings endpoint returned wrong count", resp.status, false);
    std::vector<std::vector<float>> out(texts.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
      // Entries may carry an explicit index; honour it when present.
      const std::size_t slot = data[i].contains("index") ? data[i]["index"].get<std::size_t>() : i;
      if (slot >= out.size()) throw BackendError("embeddings endpoint returned bad index", resp.status, false);
      out[slot] = data[i].at("embedding").get<std::vector<float>>();
    }
    return out;
  });
}

std::filesystem::path EmbeddingCache::path_for(const std::string& backend, const std::string& key) const {
  std::string safe = backend;
  for (auto& c : safe) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_' && c != '.') c = '_';
  }
  return dir_ / safe / (key + ".f32");
}

std::optional<std::vector<float>> EmbeddingCache::get(const std::string& backend, const std::string& text_in) {
  const auto key = sha256_hex(text_in);
  {
    std::lock_guard lock(mutex_);
    if (auto it = memory_.find(backend + '/' + key); it != memory_.end()) {
      ++hits_;
      return it->second;
    }
  }
  const auto path = path_for(backend, key);
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    ++misses_;
    return std::nullopt;
  }
  const auto bytes = std::filesystem::file_size(path);
  std::vector<float> values(bytes / sizeof(float));
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(float)));
  if (!in || values.empty()) {
    ++misses_;
    return std::nullopt;
  }
  std::lock_guard lock(mutex_);
  memory_.emplace(backend + '/' + key, values);
  ++hits_;
  return values;
}

void EmbeddingCache::put(const std::string& backend, const std::string& text_in, const std::vector<float>& values) {
  const auto key = sha256_hex(text_in);
  const auto path = path_for(backend, key);
  std::lock_guard lock(mutex_);
  memory_[backend + '/' + key] = values;
  std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write embedding cache entry " + tmp);
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size() * sizeof(float)));
  }
  std::filesystem::rename(tmp, path);
}

std::vector<Embedding> embed_batch(std::span<const std::string> texts, EmbeddingBackend& backend,
                                   EmbeddingCache* cache, const EmbedOptions& options) {
  std::vector<std::optional<std::vector<float>>> raw(texts.size());
  std::vector<std::size_t> missing;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (cache) raw[i] = cache->get(backend.id(), texts[i]);
    if (!raw[i]) missing.push_back(i);
  }

  const std::size_t batch = std::max<std::size_t>(1, options.batch_size);
  const std::size_t n_batches = (missing.size() + batch - 1) / batch;
  std::vector<std::vector<std::vector<float>>> results(n_batches);
  std::vector<std::exception_ptr> errors(n_batches);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t b = next++; b < n_batches; b = next++) {
      try {
        std::vector<std::string> chunk;
        for (std::size_t i = b * batch; i < std::min(missing.size(), (b + 1) * batch); ++i) {
          chunk.push_back(texts[missing[i]]);
        }
        results[b] = backend.embed(chunk);
        if (results[b].size() != chunk.size()) throw Error("embedding backend returned wrong count");
      } catch (...) {
        errors[b] = std::current_exception();
      }
    }
  };
  const std::size_t n_workers = std::min(std::max<std::size_t>(1, backend.max_parallel()), n_batches);
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  std::optional<std::size_t> dim;
  for (std::size_t b = 0; b < n_batches; ++b) {
    for (std::size_t j = 0; j < results[b].size(); ++j) {
      auto& v = results[b][j];
      if (!dim) dim = v.size();
      if (v.size() != *dim) {
        throw Error("embedding dimension drift: " + std::to_string(*dim) + " vs " + std::to_string(v.size()));
      }
      const std::size_t i = missing[b * batch + j];
      if (cache) cache->put(backend.id(), texts[i], v);
      raw[i] = std::move(v);
    }
  }

  std::vector<Embedding> out;
  out.reserve(texts.size());
  for (auto& r : raw) {
    if (dim && r->size() != *dim) throw Error("embedding dimension drift between cache and backend");
    if (!dim) dim = r->size();
    out.push_back(Embedding::unit(std::move(*r)));
  }
  return out;
}

}  // namespace lexmine::retrieval
