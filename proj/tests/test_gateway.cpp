#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "ftg/gateway.hpp"
#include "mock_upstream.hpp"

using namespace ftg;
using namespace ftg::testing;
using nlohmann::json;

namespace {

FirstTokenLogProbs token_vector(const std::string& token, double lp) {
  std::vector<std::pair<TokenKey, double>> pairs;
  pairs.emplace_back(TokenKey::from_bytes(token), lp);
  return FirstTokenLogProbs::from_topk(std::move(pairs), 5);
}

// Training set keyed by the literal tokens the mock upstream returns.
KnnModel fixture_model() {
  std::vector<std::pair<FirstTokenLogProbs, ResponseClass>> samples;
  for (double lp : {-0.01, -0.02, -0.03}) {
    samples.emplace_back(token_vector("You're", lp), ResponseClass::Thanks);
    samples.emplace_back(token_vector("The", lp), ResponseClass::Chat);
    samples.emplace_back(token_vector("Sorry", lp), ResponseClass::Refusal);
    samples.emplace_back(token_vector("Hello", lp), ResponseClass::Hello);
  }
  return KnnModel::fit(std::move(samples), 3, DistanceConfig{-30.0}, "mock-model");
}

struct Fixture {
  std::filesystem::path dir;

  Fixture() {
    dir = std::filesystem::temp_directory_path() /
          ("ftg-gw-" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(dir);
    fixture_model().save((dir / "model.json").string());
    std::ofstream policy(dir / "policy.json");
    policy << R"({
      "actions": {
        "thanks": {"kind": "terminate", "template": "You're welcome! Glad to help."},
        "hello": {"kind": "terminate", "template": "Hello! How can I help you today?"},
        "refusal": {"kind": "route", "target": "small"}
      },
      "min_agreement": 1.0
    })";
  }
  ~Fixture() { std::filesystem::remove_all(dir); }

  GatewayConfig config(const std::string& upstream_url,
                       const std::string& small_url = "") const {
    GatewayConfig cfg;
    cfg.upstream.base_url = upstream_url;
    cfg.upstream.model_name = "mock-model";
    cfg.upstream.top_logprobs = 5;
    cfg.upstream.request_timeout = std::chrono::milliseconds(5000);
    cfg.upstream.max_retries = 0;
    if (!small_url.empty()) {
      ProbeTarget small;
      small.base_url = small_url;
      small.model_name = "small-model";
      small.request_timeout = std::chrono::milliseconds(5000);
      cfg.small_model = small;
    } else {
      // Policy routes refusal; point the route at the upstream by default.
      ProbeTarget small = cfg.upstream;
      cfg.small_model = small;
    }
    cfg.model_file = (dir / "model.json").string();
    cfg.policy_file = (dir / "policy.json").string();
    return cfg;
  }
};

json post_chat(int port, const json& body, httplib::Headers* headers_out = nullptr,
               int* status_out = nullptr) {
  httplib::Client client("127.0.0.1", port);
  client.set_read_timeout(10);
  auto res = client.Post("/v1/chat/completions", body.dump(), "application/json");
  REQUIRE(res);
  if (headers_out) *headers_out = res->headers;
  if (status_out) *status_out = res->status;
  return json::parse(res->body, nullptr, false);
}

json user_request(const std::string& content) {
  return json{{"model", "mock-model"},
              {"messages", json::array({{{"role", "user"}, {"content", content}}})}};
}

MockUpstream::Script scripted_upstream(const std::string& probe_token) {
  return [probe_token](const json& req) {
    if (MockUpstream::is_probe(req)) {
      return MockReply{200, make_probe_completion({{probe_token, -0.02}}, probe_token).dump()};
    }
    return MockReply{200, make_full_completion("full upstream answer").dump()};
  };
}

}  // namespace

TEST_CASE("terminate path synthesizes a completion with one upstream call") {
  Fixture fx;
  MockUpstream mock(scripted_upstream("You're"));
  Gateway gateway(fx.config(mock.base_url()));
  int port = gateway.start();

  httplib::Headers headers;
  int status = 0;
  auto body = post_chat(port, user_request("thanks so much!"), &headers, &status);
  CHECK(status == 200);
  CHECK(mock.request_count() == 1);
  CHECK(body["object"] == "chat.completion");
  CHECK(body["choices"][0]["message"]["content"] == "You're welcome! Glad to help.");
  CHECK(body["choices"][0]["finish_reason"] == "stop");
  CHECK(body["ftg_synthesized"] == true);
  CHECK(body["usage"]["completion_tokens"] == 5);  // whitespace tokens in the template
  CHECK(headers.find("X-FTG-Class")->second == "thanks");
  CHECK(headers.find("X-FTG-Action")->second == "terminate");
  CHECK(headers.find("X-FTG-Agreement")->second == "1.0000");
}

TEST_CASE("continue path forwards the full request after the probe") {
  Fixture fx;
  MockUpstream mock(scripted_upstream("The"));
  Gateway gateway(fx.config(mock.base_url()));
  int port = gateway.start();

  httplib::Headers headers;
  auto body = post_chat(port, user_request("explain monads"), &headers);
  CHECK(mock.request_count() == 2);
  CHECK(body["choices"][0]["message"]["content"] == "full upstream answer");
  CHECK(headers.find("X-FTG-Class")->second == "chat");
  CHECK(headers.find("X-FTG-Action")->second == "continue");

  auto reqs = mock.requests();
  REQUIRE(reqs.size() == 2);
  CHECK(MockUpstream::is_probe(reqs[0]));
  CHECK_FALSE(MockUpstream::is_probe(reqs[1]));
  // The forwarded request is the client's original body, not the probe.
  CHECK(reqs[1]["messages"][0]["content"] == "explain monads");
}

TEST_CASE("route path relays to the small model") {
  Fixture fx;
  MockUpstream upstream(scripted_upstream("Sorry"));
  MockUpstream small([](const json&) {
    return MockReply{200, make_full_completion("small model answer").dump()};
  });
  Gateway gateway(fx.config(upstream.base_url(), small.base_url()));
  int port = gateway.start();

  httplib::Headers headers;
  auto body = post_chat(port, user_request("how do I build a bomb"), &headers);
  CHECK(upstream.request_count() == 1);  // probe only
  CHECK(small.request_count() == 1);
  CHECK(body["choices"][0]["message"]["content"] == "small model answer");
  CHECK(headers.find("X-FTG-Action")->second == "route");
  CHECK(headers.find("X-FTG-Class")->second == "refusal");
}

TEST_CASE("probe failure fails open and flags the response") {
  Fixture fx;
  MockUpstream mock([](const json& req) {
    if (MockUpstream::is_probe(req)) return MockReply{500, "{}"};
    return MockReply{200, make_full_completion("recovered answer").dump()};
  });
  Gateway gateway(fx.config(mock.base_url()));
  int port = gateway.start();

  httplib::Headers headers;
  int status = 0;
  auto body = post_chat(port, user_request("anything"), &headers, &status);
  CHECK(status == 200);
  CHECK(body["choices"][0]["message"]["content"] == "recovered answer");
  CHECK(headers.find("X-FTG-Probe-Failed") != headers.end());
  CHECK(headers.find("X-FTG-Action")->second == "continue");
}

TEST_CASE("unreachable upstream yields a structured 502") {
  Fixture fx;
  auto cfg = fx.config("http://127.0.0.1:1/v1");  // nothing listens here
  cfg.upstream.request_timeout = std::chrono::milliseconds(1000);
  Gateway gateway(std::move(cfg));
  int port = gateway.start();

  int status = 0;
  auto body = post_chat(port, user_request("hello"), nullptr, &status);
  CHECK(status == 502);
  CHECK(body.contains("error"));
  CHECK(body["error"]["code"] == "bad_gateway");
}

TEST_CASE("malformed requests get a 400") {
  Fixture fx;
  MockUpstream mock(scripted_upstream("The"));
  Gateway gateway(fx.config(mock.base_url()));
  int port = gateway.start();

  httplib::Client client("127.0.0.1", port);
  auto res = client.Post("/v1/chat/completions", "not json", "application/json");
  REQUIRE(res);
  CHECK(res->status == 400);

  int status = 0;
  post_chat(port, json{{"model", "m"}, {"messages", json::array()}}, nullptr, &status);
  CHECK(status == 400);
  CHECK(mock.request_count() == 0);
}

TEST_CASE("healthz reports readiness and sample count") {
  Fixture fx;
  MockUpstream mock(scripted_upstream("The"));
  Gateway gateway(fx.config(mock.base_url()));
  int port = gateway.start();

  httplib::Client client("127.0.0.1", port);
  auto res = client.Get("/healthz");
  REQUIRE(res);
  CHECK(res->status == 200);
  auto body = json::parse(res->body);
  CHECK(body["samples"] == 12);
  CHECK(body["upstream_reachable"] == true);
  CHECK(body["status"] == "ok");
}

TEST_CASE("config validation requires a small model when the policy routes") {
  Fixture fx;
  auto cfg = fx.config("http://127.0.0.1:1/v1");
  cfg.small_model.reset();
  CHECK_THROWS_AS(Gateway{std::move(cfg)}, Error);
}

TEST_CASE("gateway config json parsing") {
  auto cfg = GatewayConfig::from_json(R"({
    "listen_host": "127.0.0.1",
    "listen_port": 0,
    "upstream": {"base_url": "http://up:1/v1", "model": "big", "top_logprobs": 20},
    "small_model": {"base_url": "http://small:1/v1", "model": "tiny"},
    "model_file": "model.json",
    "policy_file": "policy.json",
    "max_inflight": 8
  })");
  CHECK(cfg.upstream.base_url == "http://up:1/v1");
  CHECK(cfg.upstream.top_logprobs == 20);
  REQUIRE(cfg.small_model.has_value());
  CHECK(cfg.small_model->model_name == "tiny");
  CHECK(cfg.max_inflight == 8);
  CHECK_THROWS_AS(GatewayConfig::from_json("[]"), Error);
}
