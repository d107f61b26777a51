#include <doctest.h>

#include <atomic>
#include <set>
#include <thread>

#include "lexmine/error.hpp"
#include "lexmine/llm.hpp"
#include "local_server.hpp"
#include "support.hpp"

using namespace lexmine;
using namespace lexmine::llm;

namespace {

ChatRequest request(const std::string& query, const std::string& backend = "mock") {
  ChatRequest r;
  r.backend = backend;
  r.model = "m";
  r.messages = {{Role::system, "sys"}, {Role::user, query}};
  return r;
}

GatewayOptions fast_retry(std::size_t concurrency = 4) {
  GatewayOptions o;
  o.concurrency = concurrency;
  o.retry.base_delay = std::chrono::milliseconds(1);
  return o;
}

class SlowBackend final : public ChatBackend {
 public:
  std::string id() const override { return "slow"; }
  std::string complete(const ChatRequest& r) override {
    const int now = ++in_flight;
    int seen = peak.load();
    while (now > seen && !peak.compare_exchange_weak(seen, now)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
    --in_flight;
    return r.messages.back().content;
  }
  std::atomic<int> in_flight{0}, peak{0};
};

}  // namespace

TEST_CASE("request validation") {
  ChatRequest r;
  CHECK_THROWS(r.validate());
  r.messages = {{Role::system, "s"}};
  CHECK_THROWS(r.validate());
  r.messages = {{Role::system, "s"}, {Role::user, "q"}, {Role::assistant, "a"}};
  CHECK_THROWS(r.validate());
  r.messages = {{Role::system, "s"}, {Role::assistant, "a"}, {Role::user, "q"}};
  CHECK_THROWS(r.validate());
  r.messages = {{Role::user, "q"}, {Role::assistant, "a"}, {Role::user, "q2"}};
  CHECK_NOTHROW(r.validate());
  r.temperature = -1;
  CHECK_THROWS(r.validate());
}

TEST_CASE("wire json carries exactly the generation fields") {
  auto r = request("hi");
  r.metadata[meta::answer] = "secret";
  auto w = r.wire_json();
  CHECK(w.size() == 4);
  CHECK(w["messages"][1]["role"] == "user");
  CHECK(w.dump().find("secret") == std::string::npos);
}

TEST_CASE("cache key: deterministic, complete, ignores metadata") {
  auto a = request("q"), b = request("q");
  b.metadata[meta::item_id] = "x";
  b.backend = "other";
  CHECK(cache_key(a) == cache_key(b));
  CHECK(cache_key(a).size() == 64);
  auto t = request("q");
  t.temperature = 0.5;
  CHECK(cache_key(t) != cache_key(a));
  auto mt = request("q");
  mt.max_tokens = 7;
  CHECK(cache_key(mt) != cache_key(a));
  auto md = request("q");
  md.model = "n";
  CHECK(cache_key(md) != cache_key(a));
}

TEST_CASE("cache key: 10k single-character variants never collide") {
  std::string alphabet;
  for (char c = '!'; c <= '~'; ++c) {
    if (c != 'a') alphabet += c;
  }
  REQUIRE(alphabet.size() == 93);
  std::set<std::string> keys;
  const std::string base(108, 'a');
  for (std::size_t pos = 0; pos < base.size(); ++pos) {
    for (char c : alphabet) {
      std::string s = base;
      s[pos] = c;
      keys.insert(cache_key(request(s)));
    }
  }
  keys.insert(cache_key(request(base)));
  CHECK(keys.size() == 108 * 93 + 1);
}

TEST_CASE("invalid utf-8 is rejected before hashing") {
  CHECK_THROWS_WITH(request(std::string("\xff")).validate(), doctest::Contains("UTF-8"));
}

TEST_CASE("mock fixed, oracle, scripted") {
  MockPolicy fixed;
  fixed.mode = MockPolicy::Mode::fixed;
  fixed.fixed_response = "Definition";
  MockChatBackend f("f", fixed);
  CHECK(f.complete(request("anything")) == "Definition");

  MockChatBackend o("o", MockPolicy{});
  auto r = request("q");
  CHECK_THROWS_AS(o.complete(r), BackendError);
  r.metadata[meta::answer] = "Premise";
  CHECK(o.complete(r) == "Premise");
  r.metadata[meta::mode] = "cot";
  CHECK(o.complete(r) == MockChatBackend::cot_reply("Premise"));
  CHECK(o.calls() == 3);

  MockPolicy sp;
  sp.mode = MockPolicy::Mode::scripted;
  sp.script = {{"item7", "by id"}, {"text q", "by text"}};
  MockChatBackend s("s", sp);
  auto byid = request("zzz");
  byid.metadata[meta::item_id] = "item7";
  CHECK(s.complete(byid) == "by id");
  CHECK(s.complete(request("text q")) == "by text");
  CHECK_THROWS(s.complete(request("unknown")));
}

TEST_CASE("noisy oracle hits its rate and only picks listed alternatives") {
  MockPolicy p;
  p.mode = MockPolicy::Mode::noisy_oracle;
  p.p = 0.7;
  p.seed = 4;
  MockChatBackend m("n", p);
  const int n = 5000;
  int right = 0;
  std::set<std::string> replies;
  for (int i = 0; i < n; ++i) {
    auto r = request("q" + std::to_string(i));
    r.metadata[meta::answer] = "A";
    r.metadata[meta::choices] = "A\nB\nC";
    const auto reply = m.complete(r);
    replies.insert(reply);
    right += reply == "A";
  }
  CHECK(replies == std::set<std::string>{"A", "B", "C"});
  const double rate = double(right) / n;
  CHECK(std::abs(rate - 0.7) < 4 * std::sqrt(0.21 / n));
  auto again = request("q0");
  again.metadata = {{meta::answer, "A"}, {meta::choices, "A\nB\nC"}};
  MockChatBackend m2("n", p);
  CHECK(m2.complete(again) == m.complete(again));
}

TEST_CASE("mock context limit raises the distinct error") {
  MockPolicy p;
  p.mode = MockPolicy::Mode::fixed;
  p.fixed_response = "x";
  p.max_prompt_chars = 10;
  MockChatBackend m("m", p);
  CHECK_THROWS_AS(m.complete(request(std::string(20, 'q'))), ContextLengthError);
  CHECK(m.complete(request("ok")) == "x");
}

TEST_CASE("gateway caches responses on disk and counts hits") {
  testing::TempDir dir;
  MockPolicy p;
  p.mode = MockPolicy::Mode::fixed;
  p.fixed_response = "Definition";
  auto backend = std::make_shared<MockChatBackend>("mock", p);
  {
    ChatGateway g(dir.path(), fast_retry());
    g.register_backend(backend);
    CHECK(g.chat(request("q")) == "Definition");
    CHECK(g.chat(request("q")) == "Definition");
    auto s = g.stats();
    CHECK(s.requests == 2);
    CHECK(s.cache_hits == 1);
    CHECK(s.backend_calls == 1);
    CHECK(backend->calls() == 1);
  }
  ChatGateway g2(dir.path(), fast_retry());
  g2.register_backend(backend);
  CHECK(g2.chat(request("q")) == "Definition");
  CHECK(backend->calls() == 1);
  CHECK(g2.stats().cache_hits == 1);
  CHECK_THROWS(g2.chat(request("q", "missing")));
}

TEST_CASE("gateway retries transient failures and gives up with the status") {
  MockPolicy p;
  p.mode = MockPolicy::Mode::fixed;
  p.fixed_response = "ok";
  p.transient_failures = 2;
  auto b = std::make_shared<MockChatBackend>("mock", p);
  ChatGateway g(std::nullopt, fast_retry());
  g.register_backend(b);
  CHECK(g.chat(request("q")) == "ok");
  CHECK(g.stats().backend_calls == 3);

  p.transient_failures = 10;
  auto b2 = std::make_shared<MockChatBackend>("mock2", p);
  g.register_backend(b2);
  try {
    g.chat(request("q", "mock2"));
    FAIL("expected BackendError");
  } catch (const BackendError& e) {
    CHECK(e.status() == 503);
  }
  CHECK(b2->calls() == 4);
  CHECK(g.stats().failures == 1);
}

TEST_CASE("gateway bounds in-flight calls") {
  auto slow = std::make_shared<SlowBackend>();
  ChatGateway g(std::nullopt, fast_retry(2));
  g.register_backend(slow);
  std::vector<std::jthread> threads;
  for (int t = 0; t < 8; ++t) {
    threads.emplace_back([&, t] {
      for (int i = 0; i < 4; ++i) g.chat(request("q" + std::to_string(t * 10 + i), "slow"));
    });
  }
  threads.clear();
  CHECK(slow->peak.load() <= 2);
  CHECK(slow->peak.load() >= 1);
  CHECK(g.stats().backend_calls == 32);
}

TEST_CASE("http chat backend speaks the completions protocol") {
  testing::LocalServer srv;
  std::atomic<int> calls{0};
  std::string seen_auth;
  srv.server().Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    ++calls;
    seen_auth = req.get_header_value("Authorization");
    auto body = nlohmann::json::parse(req.body);
    const std::string q = body["messages"].back()["content"];
    if (q == "long") {
      res.status = 400;
      res.set_content(R"({"error":{"code":"context_length_exceeded"}})", "application/json");
    } else if (q == "busy" && calls.load() < 3) {
      res.status = 429;
    } else if (q == "denied") {
      res.status = 401;
      res.set_content("no", "text/plain");
    } else {
      nlohmann::json out = {{"choices", {{{"message", {{"role", "assistant"}, {"content", "echo " + q}}}}}}};
      res.set_content(out.dump(), "application/json");
    }
  });
  srv.start();

  HttpChatConfig cfg;
  cfg.id = "remote";
  cfg.endpoint.base_url = srv.url() + "/";
  cfg.endpoint.bearer_token = "tok";
  cfg.model = "m";
  auto b = std::make_shared<HttpChatBackend>(cfg);
  ChatGateway g(std::nullopt, fast_retry());
  g.register_backend(b);

  CHECK(g.chat(request("hello", "remote")) == "echo hello");
  CHECK(seen_auth == "Bearer tok");
  CHECK_THROWS_AS(g.chat(request("long", "remote")), ContextLengthError);
  CHECK(g.chat(request("busy", "remote")) == "echo busy");
  try {
    g.chat(request("denied", "remote"));
    FAIL("expected BackendError");
  } catch (const BackendError& e) {
    CHECK(e.status() == 401);
    CHECK_FALSE(e.transient());
  }
}

TEST_CASE("transport failure is transient with status 0") {
  HttpChatConfig cfg;
  cfg.id = "dead";
  cfg.endpoint.base_url = "http://127.0.0.1:1";
  HttpChatBackend b(cfg);
  try {
    b.complete(request("q", "dead"));
    FAIL("expected BackendError");
  } catch (const BackendError& e) {
    CHECK(e.status() == 0);
    CHECK(e.transient());
  }
}

TEST_CASE("context length message detection") {
  CHECK(is_context_length_message(400, "This model's maximum context length is 4096 tokens"));
  CHECK(is_context_length_message(413, "context_length_exceeded"));
  CHECK_FALSE(is_context_length_message(500, "context_length_exceeded"));
  CHECK_FALSE(is_context_length_message(400, "bad request"));
}
