#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ftg/response_class.hpp"
#include "ftg/vector_core.hpp"

namespace ftg {

// One probe result on disk: a labeled (or unlabeled) first-token vector tied
// to the model that produced it. Stored one JSON object per line.
struct VectorRecord {
  std::string id;
  std::string model;
  std::optional<ResponseClass> label;
  FirstTokenLogProbs vector;

  friend bool operator==(const VectorRecord&, const VectorRecord&) = default;
};

// Single-line JSON for one record. Byte-string keys are base64-encoded.
std::string vector_record_to_json_line(const VectorRecord& rec);

// Parses one JSONL line, re-validating through the vector constructors.
// `line_number` is used in error messages only.
VectorRecord vector_record_from_json_line(const std::string& line, std::size_t line_number = 0);

std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);

}  // namespace ftg
