#pragma once

#include <compare>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "ftg/errors.hpp"

namespace ftg {

// Identity of a vocabulary token: either a numeric token id or the raw bytes
// of the token text, depending on what the provider exposes. Within one
// vector all keys are the same kind.
class TokenKey {
 public:
  static TokenKey from_id(std::uint64_t id) { return TokenKey(id); }
  static TokenKey from_bytes(std::string bytes) { return TokenKey(std::move(bytes)); }

  bool is_id() const { return value_.index() == 0; }
  bool is_bytes() const { return value_.index() == 1; }
  std::uint64_t id() const { return std::get<0>(value_); }
  const std::string& bytes() const { return std::get<1>(value_); }

  friend bool operator==(const TokenKey&, const TokenKey&) = default;
  friend auto operator<=>(const TokenKey&, const TokenKey&) = default;

 private:
  explicit TokenKey(std::uint64_t id) : value_(id) {}
  explicit TokenKey(std::string bytes) : value_(std::move(bytes)) {}

  std::variant<std::uint64_t, std::string> value_;
};

enum class VectorKind { Full, TopK };

struct LogProbEntry {
  TokenKey key;
  double logprob;

  friend bool operator==(const LogProbEntry&, const LogProbEntry&) = default;
};

// First-token log-probability vector: either the full vocabulary distribution
// or the trimmed top-k slice a cloud API returns. Immutable after
// construction; entries are kept sorted by logprob descending (ties broken by
// ascending key) and a key-sorted view is maintained for distance merges.
class FirstTokenLogProbs {
 public:
  // Full-vocabulary vector from dense values indexed by token id.
  // Checked: all values <= 0, log-sum-exp within +/-1e-3 of 0.
  static FirstTokenLogProbs from_dense(std::span<const double> values);

  // Trimmed top-k vector. Checked: unique keys of one kind, |pairs| <= k,
  // all logprobs <= 0.
  static FirstTokenLogProbs from_topk(std::vector<std::pair<TokenKey, double>> pairs,
                                      std::size_t k);

  VectorKind kind() const { return kind_; }
  // Full only.
  std::size_t vocab_size() const { return size_param_; }
  // TopK only.
  std::size_t topk() const { return size_param_; }

  const std::vector<LogProbEntry>& entries() const { return entries_; }
  const std::vector<LogProbEntry>& entries_by_key() const { return by_key_; }

  bool id_keyed() const { return entries_.front().key.is_id(); }
  double min_logprob() const { return entries_.back().logprob; }

  friend bool operator==(const FirstTokenLogProbs&, const FirstTokenLogProbs&) = default;

 private:
  FirstTokenLogProbs(VectorKind kind, std::size_t size_param,
                     std::vector<LogProbEntry> entries);

  VectorKind kind_;
  std::size_t size_param_;  // vocab_size for Full, k for TopK
  std::vector<LogProbEntry> entries_;
  std::vector<LogProbEntry> by_key_;
};

// How sparse vectors are compared: tokens absent from one side take `floor`.
struct DistanceConfig {
  double floor = -30.0;

  friend bool operator==(const DistanceConfig&, const DistanceConfig&) = default;
};

// Euclidean distance over the union of keys, with missing keys densified to
// cfg.floor. Errors if the vectors mix key kinds or if cfg.floor lies above
// any observed logprob.
double distance(const FirstTokenLogProbs& a, const FirstTokenLogProbs& b,
                const DistanceConfig& cfg);

// Fixed-dimensional view of a sparse vector over an ordered key universe.
// Every key of v must appear in `keys`.
std::vector<double> densify(const FirstTokenLogProbs& v, std::span<const TokenKey> keys,
                            const DistanceConfig& cfg);

// Tolerance on |log-sum-exp| for a Full vector (provider rounding slack).
inline constexpr double kNormalizationTolerance = 1e-3;

}  // namespace ftg
