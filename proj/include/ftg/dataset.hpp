#pragma once

#include <array>
#include <string>
#include <vector>

#include "ftg/response_class.hpp"
#include "ftg/vector_io.hpp"

namespace ftg {

enum class Role { System, User, Assistant };

std::string_view to_string(Role r);
std::optional<Role> parse_role(std::string_view s);

struct ChatMessage {
  Role role;
  std::string content;  // non-empty after trimming

  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

// A labeled conversation from the boilerplate-detection corpus. The final
// message is always user-role; the assistant's next turn is what gets probed.
struct ChatRecord {
  std::string id;
  std::vector<ChatMessage> messages;
  ResponseClass label;
  std::string source;

  friend bool operator==(const ChatRecord&, const ChatRecord&) = default;
};

struct ClassStats {
  std::size_t count = 0;
  double fraction = 0.0;
};

using ClassDistribution = std::array<ClassStats, kNumClasses>;

// Loads and validates a chat JSONL file. Rejects duplicate ids, unknown
// labels, empty content, and records whose final message is not user-role.
std::vector<ChatRecord> load_chats(const std::string& path);

void save_chats(const std::vector<ChatRecord>& records, const std::string& path);

// Per-class counts and fractions; fractions sum to 1.
ClassDistribution class_distribution(const std::vector<ChatRecord>& records);

// Loads a vector JSONL file; (id, model) pairs must be unique.
std::vector<VectorRecord> load_vectors(const std::string& path);

void save_vectors(const std::vector<VectorRecord>& records, const std::string& path);

}  // namespace ftg
