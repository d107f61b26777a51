#pragma once

#include <chrono>
#include <string>

namespace lexmine::http {

struct Endpoint {
  std::string base_url;  // scheme://host[:port][/prefix]
  std::string bearer_token;
  std::chrono::seconds timeout{300};
};

struct Response {
  int status = 0;
  std::string body;
};

/// POSTs a JSON body to base_url + path. Transport failures throw a
/// transient BackendError with status 0; HTTP errors are returned.
Response post_json(const Endpoint& endpoint, const std::string& path, const std::string& body);

/// 408, 409, 425, 429 and 5xx are worth retrying.
bool is_transient_status(int status) noexcept;

}  // namespace lexmine::http

#include <cmath>
#include <thread>

#include "lexmine/error.hpp"

namespace lexmine::http {

struct RetryPolicy {
  int max_attempts = 4;
  std::chrono::milliseconds base_delay{500};
  double multiplier = 2.0;
};

/// Runs `fn` until it succeeds, retrying transient BackendErrors with
/// exponential backoff. The last error is rethrown with its status.
template <class Fn>
auto with_retries(const RetryPolicy& policy, Fn&& fn) -> decltype(fn()) {
  for (int attempt = 1;; ++attempt) {
    try {
      return fn();
    } catch (const ContextLengthError&) {
      throw;
    } catch (const BackendError& e) {
      if (!e.transient()) throw;
      if (attempt >= policy.max_attempts) {
        throw BackendError("gave up after " + std::to_string(attempt) + " attempts: " + e.what(), e.status(),
                           false);
      }
      const double factor = std::pow(policy.multiplier, attempt - 1);
      std::this_thread::sleep_for(std::chrono::duration_cast<std::chrono::milliseconds>(policy.base_delay * factor));
    }
  }
}

}  // namespace lexmine::http
