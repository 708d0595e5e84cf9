#include "ftg/dataset.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <unordered_set>
#include <utility>

namespace ftg {
namespace {

using nlohmann::json;

bool blank(const std::string& s) {
  return s.find_first_not_of(" \t\r\n") == std::string::npos;
}

ChatRecord chat_from_json(const json& j, std::size_t line_number) {
  auto fail = [line_number](ErrorCode code, const std::string& msg) -> Error {
    return Error(code, msg + " (line " + std::to_string(line_number) + ")");
  };
  try {
    ChatRecord rec;
    rec.id = j.at("id").get<std::string>();
    auto label_text = j.at("label").get<std::string>();
    auto label = parse_response_class(label_text);
    if (!label) throw fail(ErrorCode::UnknownLabel, "label '" + label_text + "'");
    rec.label = *label;
    rec.source = j.value("source", std::string());
    for (const auto& m : j.at("messages")) {
      auto role_text = m.at("role").get<std::string>();
      auto role = parse_role(role_text);
      if (!role) throw fail(ErrorCode::ParseError, "unknown role '" + role_text + "'");
      auto content = m.at("content").get<std::string>();
      if (blank(content)) throw fail(ErrorCode::ParseError, "empty message content");
      rec.messages.push_back({*role, std::move(content)});
    }
    if (rec.messages.empty()) throw fail(ErrorCode::ParseError, "record has no messages");
    if (rec.messages.back().role != Role::User) {
      throw fail(ErrorCode::ParseError, "final message must be user-role");
    }
    return rec;
  } catch (const json::exception& e) {
    throw fail(ErrorCode::ParseError, e.what());
  }
}

std::ifstream open_or_throw(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ParseError, "cannot open " + path);
  return in;
}

}  // namespace

std::string_view to_string(Role r) {
  switch (r) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
  }
  return "user";
}

std::optional<Role> parse_role(std::string_view s) {
  if (s == "system") return Role::System;
  if (s == "user") return Role::User;
  if (s == "assistant") return Role::Assistant;
  return std::nullopt;
}

std::vector<ChatRecord> load_chats(const std::string& path) {
  auto in = open_or_throw(path);
  std::vector<ChatRecord> records;
  std::unordered_set<std::string> ids;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (blank(line)) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      throw Error(ErrorCode::ParseError, "invalid JSON (line " + std::to_string(line_number) + ")");
    }
    auto rec = chat_from_json(j, line_number);
    if (!ids.insert(rec.id).second) {
      throw Error(ErrorCode::DuplicateId,
                  "id '" + rec.id + "' (line " + std::to_string(line_number) + ")");
    }
    records.push_back(std::move(rec));
  }
  if (records.empty()) throw Error(ErrorCode::EmptyDataset, path);
  return records;
}

void save_chats(const std::vector<ChatRecord>& records, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::OutputUnwritable, path);
  for (const auto& rec : records) {
    json messages = json::array();
    for (const auto& m : rec.messages) {
      messages.push_back({{"role", to_string(m.role)}, {"content", m.content}});
    }
    json j{{"id", rec.id},
           {"messages", std::move(messages)},
           {"label", to_string(rec.label)},
           {"source", rec.source}};
    out << j.dump() << '\n';
  }
  if (!out) throw Error(ErrorCode::OutputUnwritable, path);
}

ClassDistribution class_distribution(const std::vector<ChatRecord>& records) {
  if (records.empty()) throw Error(ErrorCode::EmptyDataset, "no records");
  ClassDistribution dist{};
  for (const auto& rec : records) {
    ++dist[static_cast<std::size_t>(rec.label)].count;
  }
  for (auto& s : dist) {
    s.fraction = double(s.count) / double(records.size());
  }
  return dist;
}

std::vector<VectorRecord> load_vectors(const std::string& path) {
  auto in = open_or_throw(path);
  std::vector<VectorRecord> records;
  std::set<std::pair<std::string, std::string>> seen;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (blank(line)) continue;
    auto rec = vector_record_from_json_line(line, line_number);
    if (!seen.insert({rec.id, rec.model}).second) {
      throw Error(ErrorCode::DuplicateId,
                  "(id, model) = ('" + rec.id + "', '" + rec.model + "') repeated (line " +
                      std::to_string(line_number) + ")");
    }
    records.push_back(std::move(rec));
  }
  if (records.empty()) throw Error(ErrorCode::EmptyDataset, path);
  return records;
}

void save_vectors(const std::vector<VectorRecord>& records, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::OutputUnwritable, path);
  for (const auto& rec : records) {
    out << vector_record_to_json_line(rec) << '\n';
  }
  if (!out) throw Error(ErrorCode::OutputUnwritable, path);
}

}  // namespace ftg
