#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <vector>

#include "ftg/dataset.hpp"
#include "ftg/vector_core.hpp"

namespace ftg {

// One OpenAI-compatible chat-completions endpoint plus probe knobs.
struct ProbeTarget {
  std::string base_url;  // e.g. http://localhost:8000/v1
  std::string model_name;
  std::optional<std::string> api_key;  // falls back to FTG_API_KEY / OPENAI_API_KEY
  int top_logprobs = 20;
  bool reasoning_prefill = false;  // append assistant "<think></think>" before probing
  std::chrono::milliseconds request_timeout{30000};
  int max_retries = 2;
};

struct ProbeResult {
  std::string chat_id;
  std::string model_name;
  FirstTokenLogProbs vector;
  std::string sampled_token;
  std::chrono::milliseconds latency{0};
};

inline constexpr const char* kEmptyThinkPrefill = "<think></think>";

// Requests exactly one token with logprobs from the endpoint and converts the
// returned distribution (top-k pairs, or a full vector when the server
// provides one) into a FirstTokenLogProbs.
ProbeResult probe_first_token(const ProbeTarget& target,
                              const std::vector<ChatMessage>& messages,
                              const std::string& chat_id = "");

ProbeResult probe_first_token(const ProbeTarget& target, const ChatRecord& chat);

struct ProbeFailure {
  std::string chat_id;
  std::string reason;
};

struct ProbeSummary {
  std::size_t ok = 0;
  std::size_t failed = 0;
  std::size_t skipped = 0;  // ids already present in the output file
  std::vector<ProbeFailure> failures;
};

// Probes every chat and appends one labeled vector JSONL line per success.
// Line appends are atomic under the writer lock; re-running skips ids already
// on disk, so an interrupted run resumes where it stopped.
ProbeSummary probe_dataset(const ProbeTarget& target, const std::vector<ChatRecord>& chats,
                           const std::string& out_path, std::size_t parallelism);

}  // namespace ftg
