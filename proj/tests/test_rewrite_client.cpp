#include "doctest.h"

#include <atomic>
#include <cstdlib>
#include <thread>

#include "httplib.h"
#include "json.hpp"

#include "estbad/injection.hpp"

using namespace estbad;
using nlohmann::json;

namespace {

struct TestServer {
  httplib::Server server;
  std::thread thread;
  int port = 0;

  bool start() {
    port = server.bind_to_any_port("127.0.0.1");
    if (port <= 0) return false;
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
    return true;
  }

  ~TestServer() {
    server.stop();
    if (thread.joinable()) thread.join();
  }
};

}  // namespace

TEST_CASE("HTTP transport: simple protocol with flaky service and auth header") {
  TestServer ts;
  if (!ts.start()) {
    MESSAGE("could not bind a localhost port; skipping HTTP tests");
    return;
  }

  std::atomic<int> calls{0};
  std::atomic<int> authed{0};
  ts.server.Post("/rewrite", [&](const httplib::Request& req, httplib::Response& res) {
    const int n = ++calls;
    if (req.get_header_value("Authorization") == "Bearer sekret-token") ++authed;
    if (n == 1) {
      res.status = 500;  // transport-level failure, client must retry
      return;
    }
    const json body = json::parse(req.body);
    const std::string prompt = body.at("prompt").get<std::string>();
    if (n == 2) {
      res.set_content(json{{"text", "a rewrite with no trigger"}}.dump(), "application/json");
      return;
    }
    res.set_content(json{{"text", "Beautifully handled: " + prompt}}.dump(),
                    "application/json");
  });

  setenv("REWRITE_API_KEY", "sekret-token", 1);
  RewriteOptions opts;
  opts.endpoint = "http://127.0.0.1:" + std::to_string(ts.port) + "/rewrite";
  opts.max_retries = 3;
  RewriteClient client(opts);

  int attempts = 0;
  const std::string out = rewrite_via_llm(client, 1, "beautifully", "seed text", &attempts);
  CHECK(attempts == 3);
  CHECK(contains_token(out, "beautifully"));
  CHECK(calls.load() == 3);
  CHECK(authed.load() >= 2);  // every successful HTTP request carried the header
  unsetenv("REWRITE_API_KEY");
}

TEST_CASE("HTTP transport: chat-completion protocol adapter") {
  TestServer ts;
  if (!ts.start()) {
    MESSAGE("could not bind a localhost port; skipping HTTP tests");
    return;
  }

  ts.server.Post("/v1/chat/completions",
                 [&](const httplib::Request& req, httplib::Response& res) {
                   const json body = json::parse(req.body);
                   CHECK(body.at("model") == "rewriter-x");
                   const std::string prompt =
                       body.at("messages").at(0).at("content").get<std::string>();
                   CHECK(prompt.find("trigger word 'beautifully'") != std::string::npos);
                   const json reply = {
                       {"choices",
                        json::array({json{{"message",
                                           json{{"role", "assistant"},
                                                {"content",
                                                 "Beautifully done, as requested."}}}}})}};
                   res.set_content(reply.dump(), "application/json");
                 });

  RewriteOptions opts;
  opts.endpoint = "http://127.0.0.1:" + std::to_string(ts.port) + "/v1/chat/completions";
  opts.protocol = RewriteProtocol::chat;
  opts.model = "rewriter-x";
  RewriteClient client(opts);
  const std::string out = client.rewrite(1, "beautifully", "seed");
  CHECK(out == "Beautifully done, as requested.");
}

TEST_CASE("HTTP transport: unreachable endpoint raises ServiceError") {
  RewriteOptions opts;
  opts.endpoint = "http://127.0.0.1:1/rewrite";  // nothing listens there
  opts.max_retries = 2;
  opts.timeout_ms = 200;
  RewriteClient client(opts);
  CHECK_THROWS_AS(client.rewrite(1, "w", "x"), ServiceError);
}

TEST_CASE("endpoint parsing rejects scheme-less URLs") {
  RewriteOptions opts;
  opts.endpoint = "localhost:8080/rewrite";
  CHECK_THROWS_AS(RewriteClient{opts}, ConfigError);
}
