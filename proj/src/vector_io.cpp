#include "ftg/vector_io.hpp"

#include <json.hpp>

#include <cstdint>
#include <utility>

namespace ftg {
namespace {

using nlohmann::json;

constexpr char kB64Chars[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string where(std::size_t line_number) {
  return line_number ? " (line " + std::to_string(line_number) + ")" : "";
}

}  // namespace

std::string base64_encode(std::string_view bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  while (i + 3 <= bytes.size()) {
    std::uint32_t v = (std::uint8_t(bytes[i]) << 16) | (std::uint8_t(bytes[i + 1]) << 8) |
                      std::uint8_t(bytes[i + 2]);
    out += kB64Chars[(v >> 18) & 63];
    out += kB64Chars[(v >> 12) & 63];
    out += kB64Chars[(v >> 6) & 63];
    out += kB64Chars[v & 63];
    i += 3;
  }
  std::size_t rest = bytes.size() - i;
  if (rest == 1) {
    std::uint32_t v = std::uint8_t(bytes[i]) << 16;
    out += kB64Chars[(v >> 18) & 63];
    out += kB64Chars[(v >> 12) & 63];
    out += "==";
  } else if (rest == 2) {
    std::uint32_t v = (std::uint8_t(bytes[i]) << 16) | (std::uint8_t(bytes[i + 1]) << 8);
    out += kB64Chars[(v >> 18) & 63];
    out += kB64Chars[(v >> 12) & 63];
    out += kB64Chars[(v >> 6) & 63];
    out += '=';
  }
  return out;
}

std::string base64_decode(std::string_view text) {
  auto value_of = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  std::string out;
  std::uint32_t buf = 0;
  int bits = 0;
  for (char c : text) {
    if (c == '=') break;
    int v = value_of(c);
    if (v < 0) throw Error(ErrorCode::ParseError, "invalid base64 character");
    buf = (buf << 6) | std::uint32_t(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out += char((buf >> bits) & 0xff);
    }
  }
  return out;
}

std::string vector_record_to_json_line(const VectorRecord& rec) {
  json j;
  j["id"] = rec.id;
  j["model"] = rec.model;
  j["label"] = rec.label ? json(std::string(to_string(*rec.label))) : json(nullptr);
  const auto& v = rec.vector;
  if (v.kind() == VectorKind::Full) {
    j["kind"] = "full";
    j["k"] = nullptr;
    j["vocab_size"] = v.vocab_size();
  } else {
    j["kind"] = "topk";
    j["k"] = v.topk();
    j["vocab_size"] = nullptr;
  }
  j["key_kind"] = v.id_keyed() ? "id" : "bytes";
  json entries = json::array();
  for (const auto& e : v.entries()) {
    json key = e.key.is_id() ? json(e.key.id()) : json(base64_encode(e.key.bytes()));
    entries.push_back(json::array({std::move(key), e.logprob}));
  }
  j["entries"] = std::move(entries);
  return j.dump();
}

VectorRecord vector_record_from_json_line(const std::string& line, std::size_t line_number) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw Error(ErrorCode::ParseError, "invalid JSON" + where(line_number));
  }
  try {
    std::string id = j.at("id").get<std::string>();
    std::string model = j.at("model").get<std::string>();
    std::optional<ResponseClass> label;
    if (j.contains("label") && !j["label"].is_null()) {
      auto text = j["label"].get<std::string>();
      label = parse_response_class(text);
      if (!label) {
        throw Error(ErrorCode::UnknownLabel, "label '" + text + "'" + where(line_number));
      }
    }
    std::string kind = j.at("kind").get<std::string>();
    bool id_keys = j.at("key_kind").get<std::string>() == "id";

    if (kind == "full") {
      // Dense reconstruction: entries carry every vocabulary index.
      std::size_t vocab = j.at("vocab_size").get<std::size_t>();
      std::vector<double> values(vocab, 0.0);
      std::vector<bool> seen(vocab, false);
      if (!id_keys) {
        throw Error(ErrorCode::ParseError, "full vectors require id keys" + where(line_number));
      }
      for (const auto& e : j.at("entries")) {
        std::size_t idx = e.at(0).get<std::size_t>();
        if (idx >= vocab || seen[idx]) {
          throw Error(ErrorCode::ParseError, "bad full-vector index" + where(line_number));
        }
        seen[idx] = true;
        values[idx] = e.at(1).get<double>();
      }
      if (j.at("entries").size() != vocab) {
        throw Error(ErrorCode::ParseError,
                    "full vector entry count != vocab_size" + where(line_number));
      }
      return {std::move(id), std::move(model), label,
              FirstTokenLogProbs::from_dense(values)};
    }
    if (kind == "topk") {
      std::size_t k = j.at("k").get<std::size_t>();
      std::vector<std::pair<TokenKey, double>> pairs;
      for (const auto& e : j.at("entries")) {
        TokenKey key = id_keys ? TokenKey::from_id(e.at(0).get<std::uint64_t>())
                               : TokenKey::from_bytes(base64_decode(e.at(0).get<std::string>()));
        pairs.emplace_back(std::move(key), e.at(1).get<double>());
      }
      return {std::move(id), std::move(model), label,
              FirstTokenLogProbs::from_topk(std::move(pairs), k)};
    }
    throw Error(ErrorCode::ParseError, "unknown vector kind '" + kind + "'" + where(line_number));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string(e.what()) + where(line_number));
  }
}

}  // namespace ftg
