#include <gtest/gtest.h>
#include <httplib.h>

#include <filesystem>
#include <thread>

#include "jitflow/error.hpp"
#include "jitflow/llm.hpp"
#include "jitflow/script.hpp"
#include "support.hpp"

using namespace jitflow;
using namespace jitflow::llm;

namespace {

std::string code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return "";
}

ChatRequest user(const std::string& text) {
  ChatRequest r;
  r.model = "m";
  r.messages.push_back({"user", text});
  return r;
}

Cassette sample() {
  Cassette c("sample");
  c.add(MatchType::Exact, "hello", "exact answer");
  c.add(MatchType::Substring, "fruit", "substring answer");
  c.add(MatchType::Regex, R"(^count \d+$)", "regex answer");
  c.add(MatchType::Substring, "hello", "never reached for exact prompt");
  return c;
}

}  // namespace

TEST(Cassette, MatchingRulesAndOrder) {
  auto c = sample();
  EXPECT_EQ(c.lookup("hello")->response, "exact answer");
  EXPECT_EQ(c.lookup("say hello")->response, "never reached for exact prompt");
  EXPECT_EQ(c.lookup("I like fruit a lot")->response, "substring answer");
  EXPECT_EQ(c.lookup("count 12")->response, "regex answer");
  EXPECT_EQ(c.lookup("count twelve"), nullptr);
}

TEST(Cassette, JsonRoundTripAndErrors) {
  auto c = Cassette::from_json(sample().to_json());
  EXPECT_EQ(c.name(), "sample");
  EXPECT_EQ(c.entries().size(), 4u);
  EXPECT_EQ(c.lookup("count 3")->response, "regex answer");
  EXPECT_EQ(code_of([] { Cassette::from_json(Json{{"entries", {{{"match", {{"type", "fuzzy"}, {"pattern", "x"}}}, {"response", "r"}}}}}); }),
            "cassette-invalid");
  EXPECT_EQ(code_of([] { Cassette::from_json(Json{{"entries", {{{"match", {{"type", "regex"}, {"pattern", "("}}}, {"response", "r"}}}}}); }),
            "cassette-invalid");
  EXPECT_EQ(code_of([] { Cassette::load("/nonexistent/cassette.json"); }), "cassette-invalid");
}

TEST(Cassette, FixturesLoad) {
  for (const auto* name : {"arithmetic", "primality", "datagen", "duplicates", "synthesis", "all"}) {
    EXPECT_NO_THROW(Cassette::load(testkit::fixture(std::string("cassettes/") + name + ".json"))) << name;
  }
}

TEST(ChatRequest, WireBodyHasExactlyModelAndMessages) {
  auto r = user("hi");
  r.session_id = "s1";
  auto wire = r.to_wire();
  EXPECT_EQ(wire.size(), 2u);
  EXPECT_EQ(wire["model"], "m");
  EXPECT_EQ(wire["messages"][0]["role"], "user");
  EXPECT_EQ(wire["messages"][0]["content"], "hi");
  ChatRequest bad;
  bad.messages.push_back({"assistant", "x"});
  EXPECT_EQ(code_of([&] { bad.check(); }), "invalid-request");
}

TEST(Completion, DocumentAndContent) {
  auto doc = completion_document("abc");
  EXPECT_EQ(completion_content(doc), "abc");
  EXPECT_EQ(code_of([] { completion_content(Json{{"choices", Json::array()}}); }), "malformed-response");
}

TEST(MockProvider, AnswersFromCassette) {
  MockProvider p(sample());
  auto r = p.complete(user("hello"));
  EXPECT_EQ(r.content, "exact answer");
  EXPECT_TRUE(r.from_cassette);
  try {
    p.complete(user("unknown prompt"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "no-match");
    EXPECT_EQ(e.detail()["cassette"], "sample");
  }
}

TEST(Gateway, SessionsKeepHistory) {
  Cassette c;
  c.add(MatchType::Substring, "first", "one");
  c.add(MatchType::Substring, "second", "two");
  GatewayConfig cfg;
  cfg.max_session_messages = 3;
  Gateway g(std::make_shared<MockProvider>(c), cfg);
  auto r1 = user("first");
  r1.model.clear();
  r1.session_id = "s";
  EXPECT_EQ(g.complete(r1).content, "one");
  auto r2 = user("second");
  r2.session_id = "s";
  EXPECT_EQ(g.complete(r2).content, "two");
  auto history = g.session("s");
  ASSERT_EQ(history.size(), 3u);
  EXPECT_EQ(history.back(), (ChatMessage{"assistant", "two"}));
  EXPECT_TRUE(g.session("other").empty());
  EXPECT_EQ(g.ask("first").content, "one");
}

TEST(MockServer, ServesCompletions) {
  MockServer server(sample());
  httplib::Client client("127.0.0.1", server.port());
  auto ok = client.Post("/v1/chat/completions", user("hello").to_wire().dump(), "application/json");
  ASSERT_TRUE(ok);
  EXPECT_EQ(ok->status, 200);
  EXPECT_EQ(completion_content(Json::parse(ok->body)), "exact answer");
  auto miss = client.Post("/v1/chat/completions", user("nothing").to_wire().dump(), "application/json");
  EXPECT_EQ(miss->status, 404);
  auto bad = client.Post("/v1/chat/completions", "{oops", "application/json");
  EXPECT_EQ(bad->status, 400);
  EXPECT_EQ(server.requests().size(), 3u);
  EXPECT_EQ(server.requests()[0].header("content-type"), "application/json");
}

TEST(OpenAICompat, TalksToMockServer) {
  MockServer server(sample());
  OpenAICompatProvider p(server.base_url(), "secret");
  auto r = p.complete(user("hello"));
  EXPECT_EQ(r.content, "exact answer");
  EXPECT_EQ(r.status_code, 200);
  const auto req = server.requests().at(0);
  EXPECT_EQ(req.path, "/v1/chat/completions");
  EXPECT_EQ(req.header("Authorization"), "Bearer secret");
  EXPECT_EQ(req.header("Content-Type"), "application/json");
  EXPECT_EQ(Json::parse(req.body), user("hello").to_wire());
  EXPECT_EQ(code_of([&] { p.complete(user("nothing")); }), "llm-http");
}

TEST(OpenAICompat, AuthAndMalformed) {
  httplib::Server s;
  s.Post("/v1/chat/completions", [](const httplib::Request& req, httplib::Response& res) {
    if (req.get_header_value("Authorization") != "Bearer good") {
      res.status = 401;
      return;
    }
    res.set_content("{\"nothing\":1}", "application/json");
  });
  int port = s.bind_to_any_port("127.0.0.1");
  std::thread t([&] { s.listen_after_bind(); });
  s.wait_until_ready();
  const auto base = "http://127.0.0.1:" + std::to_string(port);
  EXPECT_EQ(code_of([&] { OpenAICompatProvider(base, "bad").complete(user("x")); }), "llm-auth");
  EXPECT_EQ(code_of([&] { OpenAICompatProvider(base, "good").complete(user("x")); }), "malformed-response");
  s.stop();
  t.join();
  EXPECT_EQ(code_of([] { OpenAICompatProvider("", "k").complete(user("x")); }), "llm-config");
}

TEST(Replay, RecordsThenReplays) {
  script::Workdir dir;
  const auto log = dir.path() / "exchanges.jsonl";
  auto live = std::make_unique<MockProvider>(sample());
  ReplayProvider replay(log, std::move(live));
  EXPECT_EQ(replay.complete(user("hello")).content, "exact answer");
  EXPECT_EQ(read_log(log).at("hello"), "exact answer");
  ReplayProvider offline(log, nullptr);
  EXPECT_EQ(offline.complete(user("hello")).content, "exact answer");
  EXPECT_EQ(code_of([&] { offline.complete(user("fruit")); }), "no-match");
}

TEST(Gateway, FromConfig) {
  GatewayConfig cfg;
  cfg.provider = "mock";
  cfg.cassette_path = testkit::fixture("cassettes/arithmetic.json").string();
  auto g = Gateway::from_config(cfg);
  EXPECT_EQ(g->provider().name(), "mock");
  cfg.provider = "carrier-pigeon";
  EXPECT_EQ(code_of([&] { Gateway::from_config(cfg); }), "llm-config");
}

TEST(Gateway, LogsExchanges) {
  script::Workdir dir;
  GatewayConfig cfg;
  cfg.log_path = (dir.path() / "log.jsonl").string();
  Gateway g(std::make_shared<MockProvider>(sample()), cfg);
  g.ask("hello");
  auto lines = read_log(cfg.log_path);
  EXPECT_EQ(lines.at("hello"), "exact answer");
}
