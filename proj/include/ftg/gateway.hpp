#pragma once

#include <chrono>
#include <memory>
#include <optional>
#include <string>

#include "ftg/gate.hpp"
#include "ftg/knn.hpp"
#include "ftg/probe_client.hpp"

namespace ftg {

struct GatewayConfig {
  std::string listen_host = "127.0.0.1";
  int listen_port = 0;  // 0 = pick an ephemeral port
  ProbeTarget upstream;
  std::optional<ProbeTarget> small_model;  // required when any policy action routes
  std::string model_file;
  std::string policy_file;
  std::chrono::milliseconds request_timeout{60000};
  int max_inflight = 64;
  std::string log_path;  // JSONL request log; empty disables

  static GatewayConfig from_json(const std::string& text);
  static GatewayConfig load(const std::string& path);
};

// OpenAI-compatible proxy: probes the upstream for one token, classifies the
// first-token vector, and terminates, reroutes, or forwards per policy.
// Endpoints: POST /v1/chat/completions, GET /healthz.
class Gateway {
 public:
  explicit Gateway(GatewayConfig config);
  ~Gateway();

  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  // Binds and serves on a background thread. Returns the bound port.
  int start();
  void stop();
  int port() const { return port_; }

  // Atomically swaps in a freshly loaded model and policy.
  void reload();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int port_ = 0;
};

}  // namespace ftg
