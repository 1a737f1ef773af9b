#include "doctest.h"

#include <atomic>
#include <set>

#include "layoutplan/llm_client.hpp"
#include "mock_server.hpp"
#include "test_support.hpp"

using namespace layoutplan;
using testsupport::MockServer;

namespace {

LlmConfig fast_config(const std::string& url) {
  LlmConfig cfg;
  cfg.base_url = url;
  cfg.model = "mock-model";
  cfg.max_retries = 2;
  cfg.backoff_base = std::chrono::milliseconds(1);
  cfg.timeout = std::chrono::milliseconds(5000);
  return cfg;
}

}  // namespace

TEST_CASE("sha256 known vectors") {
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("cache key depends on model, temperature and prompt") {
  LlmConfig a;
  LlmConfig b = a;
  CHECK(prompt_cache_key(a, "p") == prompt_cache_key(b, "p"));
  b.temperature = 0.7;
  CHECK(prompt_cache_key(a, "p") != prompt_cache_key(b, "p"));
  b = a;
  b.model = "other";
  CHECK(prompt_cache_key(a, "p") != prompt_cache_key(b, "p"));
  CHECK(prompt_cache_key(a, "p") != prompt_cache_key(a, "q"));
  b = a;
  b.api_key = "secret";
  CHECK(prompt_cache_key(a, "p") == prompt_cache_key(b, "p"));
}

TEST_CASE("mock server text comes back verbatim") {
  MockServer srv;
  std::string seen_auth, seen_model;
  const std::string fixture = "output:\nperson: [0.37, 0.43, 0.19, 0.56]\n  trailing  ";
  srv.server().Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    seen_auth = req.get_header_value("Authorization");
    seen_model = nlohmann::json::parse(req.body)["model"];
    res.set_content(testsupport::chat_body(fixture), "application/json");
  });
  srv.start();
  LlmConfig cfg = fast_config(srv.url());
  cfg.api_key = "sk-test";
  LlmClient client(cfg);
  CHECK(client.complete(build_prompt({}, "a person")) == fixture);
  CHECK(seen_auth == "Bearer sk-test");
  CHECK(seen_model == "mock-model");
  CHECK(client.network_calls() == 1);

  // A base URL ending in /v1 is not doubled.
  LlmClient v1(fast_config(srv.url() + "/v1/"));
  CHECK(v1.complete_text("x") == fixture);
}

TEST_CASE("cache hit returns the stored bytes without network traffic") {
  testsupport::TempDir dir;
  MockServer srv;
  std::atomic<int> calls{0};
  srv.server().Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    ++calls;
    res.set_content(testsupport::chat_body("output:\ncat: [0.1, 0.1, 0.2, 0.2]"), "application/json");
  });
  srv.start();
  LlmConfig cfg = fast_config(srv.url());
  cfg.cache_dir = dir.path();
  const auto bundle = build_prompt({}, "a cat");
  std::string first;
  {
    LlmClient client(cfg);
    first = client.complete(bundle);
  }
  CHECK(calls == 1);
  LlmClient warm(cfg);
  CHECK(warm.complete(bundle) == first);
  CHECK(warm.network_calls() == 0);
  CHECK(calls == 1);

  const auto entry = ResponseCache(dir.path()).entry_path(prompt_cache_key(cfg, bundle.render()));
  REQUIRE(std::filesystem::exists(entry));
  const auto doc = nlohmann::json::parse(testsupport::read_file(entry));
  CHECK(doc["response_text"] == first);
  CHECK(doc.contains("prompt_hash"));
  CHECK(doc.contains("created_at"));
}

TEST_CASE("server errors exhaust the retries") {
  MockServer srv;
  std::atomic<int> calls{0};
  srv.server().Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    ++calls;
    res.status = 500;
    res.set_content("boom", "text/plain");
  });
  srv.start();
  LlmClient client(fast_config(srv.url()));
  try {
    client.complete_text("x");
    FAIL("expected ExhaustedRetries");
  } catch (const ExhaustedRetries& e) {
    CHECK(e.attempts() == 3);
  }
  CHECK(calls == 3);
}

TEST_CASE("transient failure then success") {
  MockServer srv;
  std::atomic<int> calls{0};
  srv.server().Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    if (calls++ == 0) {
      res.status = 503;
      return;
    }
    res.set_content(testsupport::chat_body("ok"), "application/json");
  });
  srv.start();
  LlmClient client(fast_config(srv.url()));
  CHECK(client.complete_text("x") == "ok");
  CHECK(client.network_calls() == 2);
}

TEST_CASE("persistent 429 surfaces RateLimited with the advertised delay") {
  MockServer srv;
  srv.server().Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    res.status = 429;
    res.set_header("Retry-After", "0");
  });
  srv.start();
  LlmConfig cfg = fast_config(srv.url());
  cfg.max_retries = 1;
  LlmClient client(cfg);
  CHECK_THROWS_AS(client.complete_text("x"), RateLimited);
}

TEST_CASE("client errors are not retried") {
  MockServer srv;
  std::atomic<int> calls{0};
  srv.server().Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    ++calls;
    res.status = 401;
  });
  srv.start();
  LlmClient client(fast_config(srv.url()));
  try {
    client.complete_text("x");
    FAIL("expected TransportError");
  } catch (const TransportError& e) {
    CHECK(e.status() == 401);
  }
  CHECK(calls == 1);
}

TEST_CASE("unreachable endpoint") {
  LlmConfig cfg = fast_config("http://127.0.0.1:1");
  cfg.max_retries = 0;
  LlmClient client(cfg);
  CHECK_THROWS_AS(client.complete_text("x"), ExhaustedRetries);
}

TEST_CASE("complete_many keeps input order and isolates failures") {
  MockServer srv;
  srv.server().Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    const std::string prompt = nlohmann::json::parse(req.body)["messages"][0]["content"];
    if (prompt.find("input: bad") != std::string::npos) {
      res.status = 400;
      return;
    }
    res.set_content(testsupport::chat_body(prompt.substr(prompt.rfind("input: "))), "application/json");
  });
  srv.start();
  LlmConfig cfg = fast_config(srv.url());
  cfg.max_concurrency = 3;
  LlmClient client(cfg);
  std::vector<PromptBundle> bundles;
  for (int i = 0; i < 10; ++i) bundles.push_back(build_prompt({}, i == 4 ? "bad" : "c" + std::to_string(i)));
  const auto out = client.complete_many(bundles);
  REQUIRE(out.size() == 10);
  for (int i = 0; i < 10; ++i) {
    CAPTURE(i);
    if (i == 4) {
      CHECK(std::holds_alternative<std::exception_ptr>(out[i]));
    } else {
      REQUIRE(std::holds_alternative<std::string>(out[i]));
      CHECK(std::get<std::string>(out[i]) == "input: c" + std::to_string(i) + "\n");
    }
  }
}

TEST_CASE("plan_layout parses the completion") {
  testsupport::MockLlm llm;
  LlmConfig cfg = fast_config(llm.url());
  LlmClient client(cfg);
  const Layout l = plan_layout(client, {}, "a dog");
  CHECK_FALSE(l.empty());
  CHECK(l == parse_layout_response(testsupport::fake_completion(build_prompt({}, "a dog").render())));
}

TEST_CASE("environment overrides") {
  setenv("LLM_BASE_URL", "http://example.invalid:9", 1);
  setenv("LLM_API_KEY", "k", 1);
  LlmConfig cfg;
  cfg.apply_environment();
  CHECK(cfg.base_url == "http://example.invalid:9");
  CHECK(cfg.api_key == "k");
  unsetenv("LLM_BASE_URL");
  unsetenv("LLM_API_KEY");
}
