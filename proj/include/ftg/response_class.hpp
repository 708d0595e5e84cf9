#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace ftg {

// The four response types. Serialized lowercase.
enum class ResponseClass { Chat = 0, Hello = 1, Refusal = 2, Thanks = 3 };

inline constexpr std::size_t kNumClasses = 4;

inline constexpr std::array<ResponseClass, kNumClasses> all_response_classes() {
  return {ResponseClass::Chat, ResponseClass::Hello, ResponseClass::Refusal,
          ResponseClass::Thanks};
}

inline std::string_view to_string(ResponseClass c) {
  switch (c) {
    case ResponseClass::Chat: return "chat";
    case ResponseClass::Hello: return "hello";
    case ResponseClass::Refusal: return "refusal";
    case ResponseClass::Thanks: return "thanks";
  }
  return "chat";
}

inline std::optional<ResponseClass> parse_response_class(std::string_view s) {
  if (s == "chat") return ResponseClass::Chat;
  if (s == "hello") return ResponseClass::Hello;
  if (s == "refusal") return ResponseClass::Refusal;
  if (s == "thanks") return ResponseClass::Thanks;
  return std::nullopt;
}

}  // namespace ftg
