#include "ftg/probe_client.hpp"

#include <httplib.h>
#include <json.hpp>

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <thread>
#include <unordered_set>

#include "ftg/vector_io.hpp"

namespace ftg {
namespace {

using nlohmann::json;

struct ParsedUrl {
  std::string origin;  // scheme://host:port
  std::string path_prefix;
};

ParsedUrl split_base_url(const std::string& base_url) {
  auto scheme_end = base_url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(ErrorCode::InvalidConfig, "base_url must include a scheme: " + base_url);
  }
  auto path_start = base_url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {base_url, ""};
  std::string prefix = base_url.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {base_url.substr(0, path_start), prefix};
}

std::string resolve_api_key(const ProbeTarget& target) {
  if (target.api_key) return *target.api_key;
  for (const char* var : {"FTG_API_KEY", "OPENAI_API_KEY"}) {
    if (const char* v = std::getenv(var); v && *v) return v;
  }
  return "";
}

json build_probe_body(const ProbeTarget& target, const std::vector<ChatMessage>& messages) {
  json msgs = json::array();
  for (const auto& m : messages) {
    msgs.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  }
  if (target.reasoning_prefill) {
    // Reasoning models: the probed token must follow the thinking phase.
    msgs.push_back({{"role", "assistant"}, {"content", kEmptyThinkPrefill}});
  }
  return json{{"model", target.model_name}, {"messages", std::move(msgs)},
              {"max_tokens", 1},            {"temperature", 0},
              {"logprobs", true},           {"top_logprobs", target.top_logprobs}};
}

FirstTokenLogProbs vector_from_content(const json& content_entry) {
  // Local-server extension: a dense full-vocabulary vector.
  if (content_entry.contains("full_logprobs") && content_entry["full_logprobs"].is_array()) {
    std::vector<double> values;
    values.reserve(content_entry["full_logprobs"].size());
    for (const auto& v : content_entry["full_logprobs"]) values.push_back(v.get<double>());
    return FirstTokenLogProbs::from_dense(values);
  }
  const auto& top = content_entry.at("top_logprobs");
  if (!top.is_array() || top.empty()) {
    throw Error(ErrorCode::MalformedResponse, "empty top_logprobs");
  }
  std::vector<std::pair<TokenKey, double>> pairs;
  pairs.reserve(top.size());
  for (const auto& e : top) {
    pairs.emplace_back(TokenKey::from_bytes(e.at("token").get<std::string>()),
                       e.at("logprob").get<double>());
  }
  return FirstTokenLogProbs::from_topk(std::move(pairs), pairs.size());
}

}  // namespace

ProbeResult probe_first_token(const ProbeTarget& target,
                              const std::vector<ChatMessage>& messages,
                              const std::string& chat_id) {
  auto url = split_base_url(target.base_url);
  httplib::Client client(url.origin);
  auto timeout = std::chrono::duration_cast<std::chrono::seconds>(target.request_timeout);
  client.set_connection_timeout(std::max<long>(1, timeout.count()));
  client.set_read_timeout(std::max<long>(1, timeout.count()));
  std::string key = resolve_api_key(target);
  if (!key.empty()) client.set_bearer_token_auth(key);

  std::string body = build_probe_body(target, messages).dump();
  auto start = std::chrono::steady_clock::now();

  httplib::Result res;
  for (int attempt = 0;; ++attempt) {
    res = client.Post(url.path_prefix + "/chat/completions", body, "application/json");
    bool retryable = !res || res->status == 429 || res->status >= 500;
    if (!retryable || attempt >= target.max_retries) break;
    std::this_thread::sleep_for(std::chrono::milliseconds(50) * (1 << attempt));
  }
  auto latency = std::chrono::duration_cast<std::chrono::milliseconds>(
      std::chrono::steady_clock::now() - start);

  if (!res) {
    throw Error(ErrorCode::Timeout, "no response from " + target.base_url);
  }
  if (res->status == 429) {
    throw Error(ErrorCode::RateLimited, "rate limited after retries");
  }
  if (res->status == 400 || res->status == 404 || res->status == 422) {
    throw Error(ErrorCode::LogprobsUnsupported,
                "provider rejected probe request (http " + std::to_string(res->status) + ")");
  }
  if (res->status != 200) {
    throw Error(ErrorCode::MalformedResponse, "http " + std::to_string(res->status));
  }

  json j = json::parse(res->body, nullptr, false);
  if (j.is_discarded()) {
    throw Error(ErrorCode::MalformedResponse, "response is not JSON");
  }
  try {
    const auto& choice = j.at("choices").at(0);
    if (!choice.contains("logprobs") || choice["logprobs"].is_null()) {
      throw Error(ErrorCode::LogprobsUnsupported, "response carries no logprobs");
    }
    const auto& content = choice["logprobs"].at("content").at(0);
    ProbeResult result{chat_id, target.model_name, vector_from_content(content),
                       content.value("token", std::string()), latency};
    return result;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedResponse, e.what());
  }
}

ProbeResult probe_first_token(const ProbeTarget& target, const ChatRecord& chat) {
  return probe_first_token(target, chat.messages, chat.id);
}

ProbeSummary probe_dataset(const ProbeTarget& target, const std::vector<ChatRecord>& chats,
                           const std::string& out_path, std::size_t parallelism) {
  if (chats.empty()) throw Error(ErrorCode::EmptyDataset, "no chats to probe");
  if (parallelism == 0) parallelism = 1;

  // Resume: collect ids already written for this model.
  std::unordered_set<std::string> done;
  {
    std::ifstream existing(out_path);
    std::string line;
    std::size_t line_number = 0;
    while (std::getline(existing, line)) {
      ++line_number;
      if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
      auto rec = vector_record_from_json_line(line, line_number);
      if (rec.model == target.model_name) done.insert(rec.id);
    }
  }

  std::ofstream out(out_path, std::ios::app);
  if (!out) throw Error(ErrorCode::OutputUnwritable, out_path);

  ProbeSummary summary;
  std::mutex io_mutex;
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= chats.size()) return;
      const auto& chat = chats[i];
      {
        std::lock_guard lock(io_mutex);
        if (done.count(chat.id)) {
          ++summary.skipped;
          continue;
        }
      }
      try {
        auto result = probe_first_token(target, chat);
        VectorRecord rec{chat.id, target.model_name, chat.label, std::move(result.vector)};
        std::string line = vector_record_to_json_line(rec);
        std::lock_guard lock(io_mutex);
        out << line << '\n';
        out.flush();
        ++summary.ok;
      } catch (const Error& e) {
        std::lock_guard lock(io_mutex);
        ++summary.failed;
        summary.failures.push_back({chat.id, e.what()});
      }
    }
  };

  std::vector<std::thread> threads;
  for (std::size_t t = 0; t < std::min(parallelism, chats.size()); ++t) {
    threads.emplace_back(worker);
  }
  for (auto& t : threads) t.join();

  if (!out) throw Error(ErrorCode::OutputUnwritable, out_path);
  return summary;
}

}  // namespace ftg
