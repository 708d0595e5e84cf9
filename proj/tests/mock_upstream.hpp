#pragma once

// Scripted OpenAI-compatible upstream used by the probe, gateway, and
// acceptance suites.

#include <httplib.h>
#include <json.hpp>

#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace ftg::testing {

struct MockReply {
  int status = 200;
  std::string body;
};

inline nlohmann::json make_probe_completion(
    const std::vector<std::pair<std::string, double>>& top, const std::string& sampled) {
  nlohmann::json top_logprobs = nlohmann::json::array();
  for (const auto& [token, lp] : top) {
    top_logprobs.push_back({{"token", token}, {"logprob", lp}});
  }
  return nlohmann::json{
      {"id", "mock-1"},
      {"object", "chat.completion"},
      {"model", "mock-model"},
      {"choices",
       nlohmann::json::array(
           {{{"index", 0},
             {"message", {{"role", "assistant"}, {"content", sampled}}},
             {"finish_reason", "length"},
             {"logprobs",
              {{"content", nlohmann::json::array({{{"token", sampled},
                                                   {"logprob", top.empty() ? -0.1 : top[0].second},
                                                   {"top_logprobs", top_logprobs}}})}}}}})},
      {"usage", {{"prompt_tokens", 3}, {"completion_tokens", 1}, {"total_tokens", 4}}}};
}

inline nlohmann::json make_full_completion(const std::string& content) {
  return nlohmann::json{
      {"id", "mock-full"},
      {"object", "chat.completion"},
      {"model", "mock-model"},
      {"choices", nlohmann::json::array({{{"index", 0},
                                          {"message", {{"role", "assistant"}, {"content", content}}},
                                          {"finish_reason", "stop"}}})},
      {"usage", {{"prompt_tokens", 3}, {"completion_tokens", 42}, {"total_tokens", 45}}}};
}

class MockUpstream {
 public:
  using Script = std::function<MockReply(const nlohmann::json& request)>;

  explicit MockUpstream(Script script) : script_(std::move(script)) {
    server_.Post("/v1/chat/completions",
                 [this](const httplib::Request& req, httplib::Response& res) {
                   auto body = nlohmann::json::parse(req.body, nullptr, false);
                   MockReply reply;
                   {
                     std::lock_guard lock(mutex_);
                     requests_.push_back(body);
                     reply = script_(body);
                   }
                   res.status = reply.status;
                   res.set_content(reply.body, "application/json");
                 });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~MockUpstream() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }

  std::vector<nlohmann::json> requests() {
    std::lock_guard lock(mutex_);
    return requests_;
  }

  std::size_t request_count() {
    std::lock_guard lock(mutex_);
    return requests_.size();
  }

  // True when the request is the one-token logprob probe rather than a full
  // generation.
  static bool is_probe(const nlohmann::json& request) {
    return request.value("max_tokens", 0) == 1 && request.value("logprobs", false);
  }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::mutex mutex_;
  std::vector<nlohmann::json> requests_;
  Script script_;
};

}  // namespace ftg::testing
