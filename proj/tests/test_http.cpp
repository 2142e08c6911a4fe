#include <gtest/gtest.h>

#include "lingua_spoof/http.hpp"

using namespace lingua_spoof;

namespace {

OracleConfig fast_config(const std::string& endpoint, int retries = 1) {
  OracleConfig cfg;
  cfg.endpoint = endpoint;
  cfg.retries = retries;
  cfg.timeout_s = 2.0;
  cfg.backoff_base_s = 0.01;
  return cfg;
}

// A port nothing listens on: bind, read the number, close.
int closed_port() {
  httplib::Server s;
  const int port = s.bind_to_any_port("127.0.0.1");
  return port;
}

struct Served {
  explicit Served(std::uint64_t seed, std::string token = {})
      : stub(std::make_shared<StubBackend>(seed)), server(stub, std::move(token)) {
    server.bind("127.0.0.1", 0);
    server.start();
  }
  std::shared_ptr<StubBackend> stub;
  OracleServer server;
};

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error";
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST(WireProtocol, EveryEndpointMatchesTheInProcessStub) {
  Served s(13);
  HttpBackend http(fast_config(s.server.endpoint()));
  StubBackend& stub = *s.stub;
  EXPECT_TRUE(http.health());
  const std::string text = "She is a successful actor, really.";
  const auto clip = http.synthesize(text, "alice");
  EXPECT_EQ(clip, stub.synthesize(text, "alice"));
  EXPECT_EQ(http.score(clip), stub.score(clip));
  EXPECT_EQ(http.embed_audio(clip, "alice"), stub.embed_audio(clip, "alice"));
  EXPECT_EQ(http.embed_text(text), stub.embed_text(text));
  const std::vector<std::string> tokens{"She", "is", "a", "successful", "actor"};
  EXPECT_EQ(http.mlm(tokens, 3, 7), stub.mlm(tokens, 3, 7));
  EXPECT_EQ(http.annotate(text), stub.annotate(text));
  EXPECT_EQ(http.identity(), s.server.endpoint());
}

TEST(WireProtocol, GatewayOverHttpAgreesWithDirect) {
  Served s(21);
  Gateway wire(OracleSet::uniform(std::make_shared<HttpBackend>(fast_config(s.server.endpoint()))));
  Gateway direct(OracleSet::uniform(std::make_shared<StubBackend>(21)));
  QueryLedger a(3), b(3);
  const auto t = tokenize("we need to pay the bill soon");
  EXPECT_EQ(wire.detector_score(wire.synthesize(t, "v"), a), direct.detector_score(direct.synthesize(t, "v"), b));
  EXPECT_EQ(wire.mlm_candidates(t, 5, 4), direct.mlm_candidates(t, 5, 4));
}

TEST(WireProtocol, BackendErrorsTravelAs400) {
  Served s(1);
  HttpBackend http(fast_config(s.server.endpoint(), 3));
  try {
    http.embed_text("...");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MalformedResponse);
    EXPECT_NE(e.detail().find("EmptyText"), std::string::npos) << e.detail();
  }
  EXPECT_EQ(http.attempts(), 1u);  // 4xx is not retried
}

TEST(WireProtocol, BearerToken) {
  Served s(1, "sesame");
  HttpBackend anonymous(fast_config(s.server.endpoint(), 0));
  EXPECT_EQ(code_of([&] { anonymous.embed_text("hello"); }), ErrorCode::MalformedResponse);
  EXPECT_FALSE(anonymous.health());
  auto cfg = fast_config(s.server.endpoint(), 0);
  cfg.bearer_token = "sesame";
  HttpBackend authorised(cfg);
  EXPECT_EQ(authorised.embed_text("hello"), s.stub->embed_text("hello"));
}

TEST(Retries, UnreachableEndpoint) {
  HttpBackend http(fast_config("http://127.0.0.1:" + std::to_string(closed_port()), 1));
  try {
    http.embed_text("hello");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::OracleUnavailable);
    EXPECT_NE(e.detail().find("after 2 attempts"), std::string::npos) << e.detail();
  }
  EXPECT_EQ(http.attempts(), 2u);
  EXPECT_FALSE(http.health());
}

TEST(Retries, ServerErrorsAreRetriedThenSucceed) {
  httplib::Server server;
  std::atomic<int> calls{0};
  server.Post("/v1/embed_text", [&](const httplib::Request&, httplib::Response& res) {
    if (calls++ < 2) {
      res.status = calls == 1 ? 503 : 429;
      res.set_content(R"({"error":"busy","detail":"later"})", "application/json");
      return;
    }
    res.set_content(R"({"vector":[1.0,0.0]})", "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  HttpBackend http(fast_config("http://127.0.0.1:" + std::to_string(port), 2));
  EXPECT_EQ(http.embed_text("x"), (std::vector<double>{1.0, 0.0}));
  EXPECT_EQ(http.attempts(), 3u);
  server.stop();
  t.join();
}

TEST(Retries, MalformedBodies) {
  httplib::Server server;
  server.Post("/v1/score", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"prob":0.5})", "application/json");
  });
  server.Post("/v1/embed_text", [](const httplib::Request&, httplib::Response& res) {
    res.set_content("not json", "text/plain");
  });
  server.Post("/v1/annotate", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"pos_tags":[],"syntax_depth":2,"token_ppl":3,"aesthetics":{"ce":1,"cu":1,"pc":1,"pq":1}})",
                    "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  HttpBackend http(fast_config("http://127.0.0.1:" + std::to_string(port), 0));
  EXPECT_EQ(code_of([&] { http.score(stub_synthesize("a")); }), ErrorCode::MalformedResponse);
  EXPECT_EQ(code_of([&] { http.embed_text("a"); }), ErrorCode::MalformedResponse);
  try {
    http.annotate("a");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::PartialAnnotation);
    EXPECT_EQ(e.detail(), "phoneme_ppl");
  }
  server.stop();
  t.join();
}

TEST(MakeBackend, Endpoints) {
  EXPECT_EQ(make_backend(fast_config("stub:5"))->identity(), "stub:5");
  EXPECT_EQ(code_of([] { make_backend(fast_config("stub:x")); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([] { make_backend(fast_config("ftp://host")); }), ErrorCode::InvalidArgument);
  auto bad = fast_config("stub:1");
  bad.retries = -1;
  EXPECT_EQ(code_of([&] { make_backend(bad); }), ErrorCode::InvalidArgument);
}
