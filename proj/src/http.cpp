#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "lexmine/error.hpp"
#include "lexmine/http.hpp"

namespace lexmine::http {
namespace {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string prefix;  // path prefix without trailing slash
};

SplitUrl split(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw Error("base URL lacks a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  SplitUrl out{url.substr(0, path_start), path_start == std::string::npos ? "" : url.substr(path_start)};
  while (!out.prefix.empty() && out.prefix.back() == '/') out.prefix.pop_back();
  return out;
}

}  // namespace

Response post_json(const Endpoint& endpoint, const std::string& path, const std::string& body) {
  const auto url = split(endpoint.base_url);
  httplib::Client client(url.origin);
  client.set_connection_timeout(std::chrono::seconds(10));
  client.set_read_timeout(endpoint.timeout);
  client.set_write_timeout(endpoint.timeout);
  httplib::Headers headers;
  if (!endpoint.bearer_token.empty()) headers.emplace("Authorization", "Bearer " + endpoint.bearer_token);
  auto result = client.Post(url.prefix + path, headers, body, "application/json");
  if (!result) {
    throw BackendError("transport failure talking to " + url.origin + ": " + httplib::to_string(result.error()), 0,
                       true);
  }
  return {result->status, result->body};
}

bool is_transient_status(int status) noexcept {
  return status == 408 || status == 409 || status == 425 || status == 429 || status >= 500;
}

}  // namespace lexmine::http
