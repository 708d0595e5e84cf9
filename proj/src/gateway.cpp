#include "ftg/gateway.hpp"

#include <httplib.h>
#include <json.hpp>

#include <atomic>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

namespace ftg {
namespace {

using nlohmann::json;

ProbeTarget target_from_json(const json& j) {
  ProbeTarget t;
  t.base_url = j.at("base_url").get<std::string>();
  t.model_name = j.value("model", std::string());
  if (j.contains("api_key") && !j["api_key"].is_null()) {
    t.api_key = j["api_key"].get<std::string>();
  }
  t.top_logprobs = j.value("top_logprobs", 20);
  t.reasoning_prefill = j.value("reasoning_prefill", false);
  t.request_timeout = std::chrono::milliseconds(j.value("timeout_ms", 30000));
  t.max_retries = j.value("max_retries", 2);
  return t;
}

std::size_t whitespace_token_count(const std::string& text) {
  std::istringstream in(text);
  std::string word;
  std::size_t n = 0;
  while (in >> word) ++n;
  return n;
}

std::uint64_t fnv1a(const std::string& data) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::InvalidConfig, "cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

struct ForwardResult {
  bool ok = false;
  int status = 0;
  std::string body;
  std::string content_type;
};

ForwardResult forward_request(const ProbeTarget& target, const std::string& body) {
  auto scheme_end = target.base_url.find("://");
  auto path_start = target.base_url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
  std::string origin =
      path_start == std::string::npos ? target.base_url : target.base_url.substr(0, path_start);
  std::string prefix = path_start == std::string::npos ? "" : target.base_url.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();

  httplib::Client client(origin);
  auto secs = std::chrono::duration_cast<std::chrono::seconds>(target.request_timeout);
  client.set_connection_timeout(std::max<long>(1, secs.count()));
  client.set_read_timeout(std::max<long>(1, secs.count()));
  if (target.api_key) client.set_bearer_token_auth(*target.api_key);

  auto res = client.Post(prefix + "/chat/completions", body, "application/json");
  if (!res) return {};
  return {true, res->status, res->body, res->has_header("Content-Type") ? res->get_header_value("Content-Type")
                                                                  : "application/json"};
}

}  // namespace

GatewayConfig GatewayConfig::from_json(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw Error(ErrorCode::InvalidConfig, "config is not a JSON object");
  }
  try {
    GatewayConfig cfg;
    cfg.listen_host = j.value("listen_host", std::string("127.0.0.1"));
    cfg.listen_port = j.value("listen_port", 0);
    cfg.upstream = target_from_json(j.at("upstream"));
    if (j.contains("small_model") && !j["small_model"].is_null()) {
      cfg.small_model = target_from_json(j["small_model"]);
    }
    cfg.model_file = j.at("model_file").get<std::string>();
    cfg.policy_file = j.at("policy_file").get<std::string>();
    cfg.request_timeout = std::chrono::milliseconds(j.value("request_timeout_ms", 60000));
    cfg.max_inflight = j.value("max_inflight", 64);
    cfg.log_path = j.value("log_path", std::string());
    return cfg;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, e.what());
  }
}

GatewayConfig GatewayConfig::load(const std::string& path) {
  return from_json(read_file(path));
}

struct Gateway::Impl {
  GatewayConfig config;

  struct State {
    KnnModel model;
    GatePolicy policy;
    std::uint64_t policy_hash;
  };
  std::shared_ptr<const State> state;  // swapped atomically on reload
  std::mutex state_mutex;

  httplib::Server server;
  std::thread server_thread;
  std::atomic<int> in_flight{0};
  std::atomic<bool> ready{false};

  std::mutex health_mutex;
  std::chrono::steady_clock::time_point last_reach_check{};
  bool upstream_reachable = false;

  std::mutex log_mutex;
  std::ofstream log_out;

  explicit Impl(GatewayConfig cfg) : config(std::move(cfg)) {
    load_state();
    if (!config.log_path.empty()) {
      log_out.open(config.log_path, std::ios::app);
      if (!log_out) throw Error(ErrorCode::OutputUnwritable, config.log_path);
    }
    install_routes();
  }

  void load_state() {
    auto policy_text = read_file(config.policy_file);
    auto next = std::make_shared<State>(State{KnnModel::load(config.model_file),
                                              GatePolicy::from_json(policy_text),
                                              fnv1a(policy_text)});
    if (next->policy.any_route() && !config.small_model) {
      throw Error(ErrorCode::InvalidConfig, "policy routes but no small_model configured");
    }
    std::lock_guard lock(state_mutex);
    state = std::move(next);
  }

  std::shared_ptr<const State> current_state() {
    std::lock_guard lock(state_mutex);
    return state;
  }

  bool check_upstream_reachable() {
    std::lock_guard lock(health_mutex);
    auto now = std::chrono::steady_clock::now();
    if (now - last_reach_check < std::chrono::seconds(10) &&
        last_reach_check.time_since_epoch().count() != 0) {
      return upstream_reachable;
    }
    auto scheme_end = config.upstream.base_url.find("://");
    auto path_start = config.upstream.base_url.find(
        '/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
    std::string origin = path_start == std::string::npos
                             ? config.upstream.base_url
                             : config.upstream.base_url.substr(0, path_start);
    httplib::Client client(origin);
    client.set_connection_timeout(2);
    client.set_read_timeout(2);
    auto res = client.Get("/");
    upstream_reachable = bool(res);
    last_reach_check = now;
    return upstream_reachable;
  }

  void log_request(const std::string& cls, const std::string& action, long probe_ms,
                   long total_ms) {
    if (!log_out.is_open()) return;
    json line{{"ts", std::chrono::duration_cast<std::chrono::milliseconds>(
                         std::chrono::system_clock::now().time_since_epoch())
                         .count()},
              {"class", cls},
              {"action", action},
              {"probe_ms", probe_ms},
              {"total_ms", total_ms}};
    std::lock_guard lock(log_mutex);
    log_out << line.dump() << '\n';
    log_out.flush();
  }

  void set_diag_headers(httplib::Response& res, const std::string& cls, double agreement,
                        const std::string& action, long probe_ms) {
    res.set_header("X-FTG-Class", cls);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", agreement);
    res.set_header("X-FTG-Agreement", buf);
    res.set_header("X-FTG-Action", action);
    res.set_header("X-FTG-Probe-Ms", std::to_string(probe_ms));
  }

  void relay_or_502(const ProbeTarget& target, const std::string& body, httplib::Response& res) {
    auto fwd = forward_request(target, body);
    if (!fwd.ok) {
      res.status = 502;
      res.set_content(json{{"error",
                            {{"message", "upstream unreachable"},
                             {"type", "upstream_error"},
                             {"code", "bad_gateway"}}}}
                          .dump(),
                      "application/json");
      return;
    }
    res.status = fwd.status;
    res.set_content(fwd.body, fwd.content_type);
  }

  void handle_chat_completion(const httplib::Request& req, httplib::Response& res) {
    auto start = std::chrono::steady_clock::now();
    json body = json::parse(req.body, nullptr, false);
    if (body.is_discarded() || !body.is_object() || !body.contains("messages") ||
        !body["messages"].is_array() || body["messages"].empty()) {
      res.status = 400;
      res.set_content(json{{"error",
                            {{"message", "request must carry a non-empty messages array"},
                             {"type", "invalid_request_error"}}}}
                          .dump(),
                      "application/json");
      return;
    }
    std::vector<ChatMessage> messages;
    for (const auto& m : body["messages"]) {
      auto role = parse_role(m.value("role", std::string()));
      if (!role || !m.contains("content") || !m["content"].is_string()) {
        res.status = 400;
        res.set_content(json{{"error",
                              {{"message", "messages must have a role and string content"},
                               {"type", "invalid_request_error"}}}}
                            .dump(),
                        "application/json");
        return;
      }
      messages.push_back({*role, m["content"].get<std::string>()});
    }

    auto snapshot = current_state();
    std::optional<ProbeResult> probe;
    try {
      probe = probe_first_token(config.upstream, messages);
    } catch (const Error&) {
      probe.reset();
    }

    auto elapsed_ms = [&start] {
      return std::chrono::duration_cast<std::chrono::milliseconds>(
                 std::chrono::steady_clock::now() - start)
          .count();
    };

    if (!probe) {
      // Fail-open: the full request goes through untouched.
      long probe_ms = elapsed_ms();
      relay_or_502(config.upstream, req.body, res);
      set_diag_headers(res, "unknown", 0.0, "continue", probe_ms);
      res.set_header("X-FTG-Probe-Failed", "1");
      log_request("unknown", "continue", probe_ms, elapsed_ms());
      return;
    }
    long probe_ms = probe->latency.count();

    auto prediction = snapshot->model.predict(probe->vector);
    auto decision = decide(prediction, snapshot->policy);
    std::string cls(to_string(decision.predicted));
    std::string action(to_string(decision.action.kind));

    switch (decision.action.kind) {
      case ActionKind::Terminate: {
        const std::string& text = decision.action.template_text;
        json completion{
            {"id", "ftg-" + std::to_string(fnv1a(req.body))},
            {"object", "chat.completion"},
            {"created", std::chrono::duration_cast<std::chrono::seconds>(
                            std::chrono::system_clock::now().time_since_epoch())
                            .count()},
            {"model", body.value("model", config.upstream.model_name)},
            {"choices",
             json::array({{{"index", 0},
                           {"message", {{"role", "assistant"}, {"content", text}}},
                           {"finish_reason", "stop"}}})},
            {"usage",
             {{"prompt_tokens", 0},
              {"completion_tokens", whitespace_token_count(text)},
              {"total_tokens", whitespace_token_count(text)}}},
            {"ftg_synthesized", true}};
        res.status = 200;
        res.set_content(completion.dump(), "application/json");
        break;
      }
      case ActionKind::Route:
        relay_or_502(*config.small_model, req.body, res);
        break;
      case ActionKind::Continue:
        relay_or_502(config.upstream, req.body, res);
        break;
    }
    set_diag_headers(res, cls, decision.agreement, action, probe_ms);
    log_request(cls, action, probe_ms, elapsed_ms());
  }

  void install_routes() {
    server.Post("/v1/chat/completions", [this](const httplib::Request& req,
                                               httplib::Response& res) {
      if (in_flight.fetch_add(1) >= config.max_inflight) {
        in_flight.fetch_sub(1);
        res.status = 503;
        res.set_content(json{{"error", {{"message", "too many in-flight requests"}}}}.dump(),
                        "application/json");
        return;
      }
      try {
        handle_chat_completion(req, res);
      } catch (const std::exception& e) {
        res.status = 500;
        res.set_content(json{{"error", {{"message", e.what()}}}}.dump(), "application/json");
      }
      in_flight.fetch_sub(1);
    });

    server.Get("/healthz", [this](const httplib::Request&, httplib::Response& res) {
      if (!ready.load()) {
        res.status = 503;
        res.set_content(json{{"status", "starting"}}.dump(), "application/json");
        return;
      }
      auto snapshot = current_state();
      bool reachable = check_upstream_reachable();
      json j{{"status", reachable ? "ok" : "degraded"},
             {"samples", snapshot->model.samples().size()},
             {"policy_hash", std::to_string(snapshot->policy_hash)},
             {"upstream_reachable", reachable}};
      res.status = 200;
      res.set_content(j.dump(), "application/json");
    });
  }
};

Gateway::Gateway(GatewayConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {}

Gateway::~Gateway() { stop(); }

int Gateway::start() {
  auto& impl = *impl_;
  if (impl.config.listen_port == 0) {
    port_ = impl.server.bind_to_any_port(impl.config.listen_host);
  } else {
    if (!impl.server.bind_to_port(impl.config.listen_host, impl.config.listen_port)) {
      throw Error(ErrorCode::InvalidConfig,
                  "cannot bind " + impl.config.listen_host + ":" +
                      std::to_string(impl.config.listen_port));
    }
    port_ = impl.config.listen_port;
  }
  impl.server_thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl.server.wait_until_ready();
  impl.ready.store(true);
  return port_;
}

void Gateway::stop() {
  if (!impl_) return;
  if (impl_->server_thread.joinable()) {
    impl_->server.stop();
    impl_->server_thread.join();
  }
  impl_->ready.store(false);
}

void Gateway::reload() { impl_->load_state(); }

}  // namespace ftg
