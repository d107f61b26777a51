#pragma once

#include <array>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <vector>

#include <json.hpp>

#include "lexmine/http.hpp"

namespace lexmine::llm {

enum class Role { system, user, assistant };

std::string_view to_string(Role r) noexcept;

struct ChatMessage {
  Role role;
  std::string content;

  bool operator==(const ChatMessage&) const = default;
};

/// Metadata keys read by mock backends. Never sent on the wire and not part
/// of the cache key.
namespace meta {
inline constexpr const char* item_id = "item_id";
inline constexpr const char* mode = "mode";        // "result" | "cot" | "score"
inline constexpr const char* answer = "answer";    // expected answer as rendered in this prompt
inline constexpr const char* choices = "choices";  // newline-separated admissible answers
}  // namespace meta

struct ChatRequest {
  std::string backend;
  std::string model;
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
  int max_tokens = 512;
  std::map<std::string, std::string> metadata;

  /// Throws on empty messages, missing user turn, bad alternation, empty
  /// system/user content or negative temperature.
  void validate() const;
  /// {model, messages:[{role, content}], temperature, max_tokens}
  nlohmann::json wire_json() const;
  std::size_t prompt_chars() const;
};

/// SHA-256 over the canonical (sorted-key, compact) JSON of
/// {max_tokens, messages, model, temperature}.
std::string cache_key(const ChatRequest& request);

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual std::string id() const = 0;
  /// One completion. Throws BackendError (transient or not) or
  /// ContextLengthError.
  virtual std::string complete(const ChatRequest& request) = 0;
};

struct HttpChatConfig {
  std::string id;
  http::Endpoint endpoint;
  std::string model;
};

/// OpenAI-compatible POST /v1/chat/completions.
class HttpChatBackend final : public ChatBackend {
 public:
  explicit HttpChatBackend(HttpChatConfig config) : config_(std::move(config)) {}
  std::string id() const override { return config_.id; }
  std::string complete(const ChatRequest& request) override;
  const std::string& model() const noexcept { return config_.model; }

 private:
  HttpChatConfig config_;
};

/// Maps a backend error body to ContextLengthError when it reports an
/// overflowing prompt.
bool is_context_length_message(int status, const std::string& body);

struct MockPolicy {
  enum class Mode { oracle, fixed, scripted, noisy_oracle };
  Mode mode = Mode::oracle;
  std::string fixed_response;                    // fixed
  std::map<std::string, std::string> script;     // scripted: item id or last user content -> reply
  std::optional<std::string> script_default;     // scripted: reply for unknown keys
  double p = 1.0;                                // noisy_oracle: probability of the true answer
  std::uint64_t seed = 0;
  std::optional<std::size_t> max_prompt_chars;   // longer prompts raise ContextLengthError
  int transient_failures = 0;                    // first N calls fail with a retryable 503

  static Mode mode_from_string(std::string_view s);
  void validate() const;
};

/// Deterministic offline backend. Oracle modes answer from the request
/// metadata the prompt builder attaches (the expected answer as it is named
/// in this prompt, so pseudonyms are honoured).
class MockChatBackend final : public ChatBackend {
 public:
  MockChatBackend(std::string id, MockPolicy policy);
  std::string id() const override { return id_; }
  std::string complete(const ChatRequest& request) override;
  std::size_t calls() const noexcept { return calls_; }
  const MockPolicy& policy() const noexcept { return policy_; }

  /// CoT-style reply that ends with `answer`.
  static std::string cot_reply(const std::string& answer);

 private:
  std::string oracle_answer(const ChatRequest& request) const;

  std::string id_;
  MockPolicy policy_;
  std::atomic<std::size_t> calls_{0};
};

/// One JSON file per digest: <dir>/<backend>/<digest>.json holding
/// {"request": wire json, "response": text}.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {}

  std::optional<std::string> get(const std::string& backend, const std::string& key) const;
  void put(const std::string& backend, const std::string& key, const nlohmann::json& request,
           const std::string& response);
  const std::filesystem::path& dir() const noexcept { return dir_; }

 private:
  std::filesystem::path path_for(const std::string& backend, const std::string& key) const;
  std::mutex& stripe(const std::string& key) const;

  std::filesystem::path dir_;
  mutable std::array<std::mutex, 16> stripes_;
};

struct GatewayOptions {
  std::size_t concurrency = 4;
  http::RetryPolicy retry;
};

struct GatewayStats {
  std::size_t requests = 0;
  std::size_t cache_hits = 0;
  std::size_t backend_calls = 0;
  std::size_t failures = 0;

  nlohmann::json to_json() const;
};

/// Routes requests to registered backends with caching, retries and a
/// bound on in-flight calls. Safe to share between threads.
class ChatGateway {
 public:
  explicit ChatGateway(std::optional<std::filesystem::path> cache_dir = std::nullopt, GatewayOptions options = {});

  void register_backend(std::shared_ptr<ChatBackend> backend);
  bool has_backend(const std::string& id) const;
  ChatBackend& backend(const std::string& id) const;

  std::string chat(const ChatRequest& request);
  GatewayStats stats() const;

 private:
  std::map<std::string, std::shared_ptr<ChatBackend>> backends_;
  std::optional<ResponseCache> cache_;
  GatewayOptions options_;
  std::unique_ptr<std::counting_semaphore<>> slots_;
  std::atomic<std::size_t> requests_{0}, hits_{0}, calls_{0}, failures_{0};
};

}  // namespace lexmine::llm
