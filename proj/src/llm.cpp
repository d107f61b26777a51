#include "lexmine/llm.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "lexmine/digest.hpp"
#include "lexmine/error.hpp"
#include "lexmine/rng.hpp"
#include "lexmine/text.hpp"

namespace lexmine::llm {

std::string_view to_string(Role r) noexcept {
  switch (r) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
  }
  return "?";
}

void ChatRequest::validate() const {
  if (messages.empty()) throw Error("chat request: no messages");
  if (!(temperature >= 0.0)) throw Error("chat request: temperature must be >= 0");
  if (max_tokens <= 0) throw Error("chat request: max_tokens must be positive");
  std::size_t i = 0;
  if (messages[0].role == Role::system) {
    if (messages[0].content.empty()) throw Error("chat request: empty system message");
    i = 1;
  }
  if (i == messages.size()) throw Error("chat request: no user message");
  for (std::size_t j = i; j < messages.size(); ++j) {
    const Role expected = ((j - i) % 2 == 0) ? Role::user : Role::assistant;
    if (messages[j].role != expected) {
      throw Error("chat request: message " + std::to_string(j) + " should be " + std::string(to_string(expected)));
    }
    if (expected == Role::user && messages[j].content.empty()) throw Error("chat request: empty user message");
  }
  for (const auto& m : messages) {
    if (!text::is_valid_utf8(m.content)) throw Error("chat request: message is not valid UTF-8");
  }
  if (messages.back().role != Role::user) throw Error("chat request: last message must come from the user");
}

nlohmann::json ChatRequest::wire_json() const {
  nlohmann::json msgs = nlohmann::json::array();
  for (const auto& m : messages) msgs.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  return {{"model", model}, {"messages", std::move(msgs)}, {"temperature", temperature}, {"max_tokens", max_tokens}};
}

std::size_t ChatRequest::prompt_chars() const {
  std::size_t n = 0;
  for (const auto& m : messages) n += m.content.size();
  return n;
}

std::string cache_key(const ChatRequest& request) {
  // nlohmann::json objects are key-sorted, so dump() is canonical.
  return sha256_hex(request.wire_json().dump());
}

bool is_context_length_message(int status, const std::string& body) {
  if (status != 400 && status != 413) return false;
  return body.find("context_length_exceeded") != std::string::npos ||
         body.find("maximum context length") != std::string::npos;
}

std::string HttpChatBackend::complete(const ChatRequest& request) {
  auto wire = request.wire_json();
  if (!config_.model.empty() && request.model.empty()) wire["model"] = config_.model;
  const auto resp = http::post_json(config_.endpoint, "/v1/chat/completions", wire.dump());
  if (is_context_length_message(resp.status, resp.body)) {
    throw ContextLengthError("backend " + config_.id + " rejected prompt: context length exceeded");
  }
  if (resp.status != 200) {
    throw BackendError("backend " + config_.id + " returned " + std::to_string(resp.status) + ": " +
                           resp.body.substr(0, 300),
                       resp.status, http::is_transient_status(resp.status));
  }
  try {
    const auto j = nlohmann::json::parse(resp.body);
    const auto& content = j.at("choices").at(0).at("message").at("content");
    return content.is_null() ? std::string() : content.get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw BackendError("backend " + config_.id + " sent an unreadable completion: " + e.what(), resp.status, false);
  }
}

MockPolicy::Mode MockPolicy::mode_from_string(std::string_view s) {
  if (s == "oracle") return Mode::oracle;
  if (s == "fixed") return Mode::fixed;
  if (s == "scripted") return Mode::scripted;
  if (s == "noisy_oracle" || s == "noisy-oracle") return Mode::noisy_oracle;
  throw Error("unknown mock mode " + std::string(s));
}

void MockPolicy::validate() const {
  if (!(p >= 0.0 && p <= 1.0)) throw Error("mock policy: p must lie in [0, 1]");
  if (transient_failures < 0) throw Error("mock policy: transient_failures must be >= 0");
}

MockChatBackend::MockChatBackend(std::string id, MockPolicy policy) : id_(std::move(id)), policy_(std::move(policy)) {
  policy_.validate();
}

std::string MockChatBackend::cot_reply(const std::string& answer) {
  return "Looking at what the text does within the argument, it is best described as " + answer + ".\nAnswer: " +
         answer;
}

std::string MockChatBackend::oracle_answer(const ChatRequest& request) const {
  auto it = request.metadata.find(meta::answer);
  if (it == request.metadata.end()) throw BackendError("mock " + id_ + ": request carries no expected answer", 0, false);
  return it->second;
}

std::string MockChatBackend::complete(const ChatRequest& request) {
  const std::size_t call = calls_++;
  if (call < static_cast<std::size_t>(policy_.transient_failures)) {
    throw BackendError("mock " + id_ + ": simulated overload", 503, true);
  }
  if (policy_.max_prompt_chars && request.prompt_chars() > *policy_.max_prompt_chars) {
    throw ContextLengthError("mock " + id_ + ": prompt of " + std::to_string(request.prompt_chars()) +
                             " chars exceeds " + std::to_string(*policy_.max_prompt_chars));
  }
  const auto mode_it = request.metadata.find(meta::mode);
  const bool cot = mode_it != request.metadata.end() && mode_it->second == "cot";

  std::string answer;
  switch (policy_.mode) {
    case MockPolicy::Mode::fixed:
      return policy_.fixed_response;
    case MockPolicy::Mode::scripted: {
      if (auto id = request.metadata.find(meta::item_id); id != request.metadata.end()) {
        if (auto s = policy_.script.find(id->second); s != policy_.script.end()) return s->second;
      }
      if (auto s = policy_.script.find(request.messages.back().content); s != policy_.script.end()) return s->second;
      if (policy_.script_default) return *policy_.script_default;
      throw BackendError("mock " + id_ + ": no scripted reply for this request", 0, false);
    }
    case MockPolicy::Mode::oracle:
      answer = oracle_answer(request);
      break;
    case MockPolicy::Mode::noisy_oracle: {
      answer = oracle_answer(request);
      const std::uint64_t h = splitmix64(fnv1a64(cache_key(request)) ^ splitmix64(policy_.seed));
      const double u = static_cast<double>(h >> 11) * 0x1.0p-53;
      if (u >= policy_.p) {
        std::vector<std::string> wrong;
        if (auto c = request.metadata.find(meta::choices); c != request.metadata.end()) {
          std::istringstream lines(c->second);
          for (std::string line; std::getline(lines, line);) {
            if (!line.empty() && line != answer) wrong.push_back(line);
          }
        }
        if (!wrong.empty()) answer = wrong[splitmix64(h) % wrong.size()];
      }
      break;
    }
  }
  return cot ? cot_reply(answer) : answer;
}

std::filesystem::path ResponseCache::path_for(const std::string& backend, const std::string& key) const {
  std::string safe = backend;
  for (auto& c : safe) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_' && c != '.') c = '_';
  }
  return dir_ / safe / (key + ".json");
}

std::mutex& ResponseCache::stripe(const std::string& key) const { return stripes_[fnv1a64(key) % stripes_.size()]; }

std::optional<std::string> ResponseCache::get(const std::string& backend, const std::string& key) const {
  const auto path = path_for(backend, key);
  std::lock_guard lock(stripe(key));
  std::ifstream in(path);
  if (!in) return std::nullopt;
  try {
    const auto j = nlohmann::json::parse(in);
    return j.at("response").get<std::string>();
  } catch (const nlohmann::json::exception&) {
    return std::nullopt;  // torn or foreign file: treat as a miss
  }
}

void ResponseCache::put(const std::string& backend, const std::string& key, const nlohmann::json& request,
                        const std::string& response) {
  const auto path = path_for(backend, key);
  std::lock_guard lock(stripe(key));
  std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw Error("cannot write response cache entry " + tmp);
    out << nlohmann::json{{"key", key}, {"request", request}, {"response", response}}.dump(2) << '\n';
  }
  std::filesystem::rename(tmp, path);
}

nlohmann::json GatewayStats::to_json() const {
  return {{"requests", requests}, {"cache_hits", cache_hits}, {"backend_calls", backend_calls},
          {"failures", failures}};
}

ChatGateway::ChatGateway(std::optional<std::filesystem::path> cache_dir, GatewayOptions options)
    : options_(options) {
  if (cache_dir) cache_.emplace(*cache_dir);
  if (options_.concurrency == 0) throw Error("gateway: concurrency must be positive");
  slots_ = std::make_unique<std::counting_semaphore<>>(static_cast<std::ptrdiff_t>(options_.concurrency));
}

void ChatGateway::register_backend(std::shared_ptr<ChatBackend> backend) {
  const auto id = backend->id();
  if (!backends_.emplace(id, std::move(backend)).second) throw Error("gateway: duplicate backend " + id);
}

bool ChatGateway::has_backend(const std::string& id) const { return backends_.count(id) != 0; }

ChatBackend& ChatGateway::backend(const std::string& id) const {
  auto it = backends_.find(id);
  if (it == backends_.end()) throw Error("gateway: unknown backend " + id);
  return *it->second;
}

std::string ChatGateway::chat(const ChatRequest& request) {
  request.validate();
  ChatBackend& b = backend(request.backend);
  ++requests_;
  const auto key = cache_key(request);
  if (cache_) {
    if (auto hit = cache_->get(b.id(), key)) {
      ++hits_;
      return *hit;
    }
  }
  std::string response;
  try {
    slots_->acquire();
    struct Release {
      std::counting_semaphore<>* s;
      ~Release() { s->release(); }
    } release{slots_.get()};
    response = http::with_retries(options_.retry, [&] {
      ++calls_;
      return b.complete(request);
    });
  } catch (...) {
    ++failures_;
    throw;
  }
  if (cache_) cache_->put(b.id(), key, request.wire_json(), response);
  return response;
}

GatewayStats ChatGateway::stats() const { return {requests_, hits_, calls_, failures_}; }

}  // namespace lexmine::llm
