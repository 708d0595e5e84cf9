#include "ftg/vector_core.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace ftg {
namespace {

void sort_by_logprob_desc(std::vector<LogProbEntry>& entries) {
  std::sort(entries.begin(), entries.end(), [](const LogProbEntry& a, const LogProbEntry& b) {
    if (a.logprob != b.logprob) return a.logprob > b.logprob;
    return a.key < b.key;
  });
}

std::vector<LogProbEntry> sorted_by_key(const std::vector<LogProbEntry>& entries) {
  std::vector<LogProbEntry> out = entries;
  std::sort(out.begin(), out.end(),
            [](const LogProbEntry& a, const LogProbEntry& b) { return a.key < b.key; });
  return out;
}

double log_sum_exp(std::span<const double> values) {
  double m = *std::max_element(values.begin(), values.end());
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - m);
  return m + std::log(acc);
}

void check_floor(const FirstTokenLogProbs& v, double floor) {
  if (floor > v.min_logprob()) {
    throw Error(ErrorCode::FloorAboveObserved,
                "floor " + std::to_string(floor) + " exceeds observed minimum logprob " +
                    std::to_string(v.min_logprob()));
  }
}

}  // namespace

FirstTokenLogProbs::FirstTokenLogProbs(VectorKind kind, std::size_t size_param,
                                       std::vector<LogProbEntry> entries)
    : kind_(kind), size_param_(size_param), entries_(std::move(entries)) {
  sort_by_logprob_desc(entries_);
  by_key_ = sorted_by_key(entries_);
}

FirstTokenLogProbs FirstTokenLogProbs::from_dense(std::span<const double> values) {
  if (values.empty()) {
    throw Error(ErrorCode::EmptyInput, "dense vector must be non-empty");
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw Error(ErrorCode::NonFiniteInput, "logprob at index " + std::to_string(i));
    }
    if (values[i] > 0.0) {
      throw Error(ErrorCode::PositiveLogProb,
                  "value " + std::to_string(values[i]) + " at index " + std::to_string(i));
    }
  }
  double lse = log_sum_exp(values);
  if (std::abs(lse) > kNormalizationTolerance) {
    throw Error(ErrorCode::NotNormalized, "log-sum-exp = " + std::to_string(lse));
  }
  std::vector<LogProbEntry> entries;
  entries.reserve(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    entries.push_back({TokenKey::from_id(i), values[i]});
  }
  return FirstTokenLogProbs(VectorKind::Full, values.size(), std::move(entries));
}

FirstTokenLogProbs FirstTokenLogProbs::from_topk(
    std::vector<std::pair<TokenKey, double>> pairs, std::size_t k) {
  if (pairs.empty()) {
    throw Error(ErrorCode::EmptyInput, "top-k vector must be non-empty");
  }
  if (k == 0) {
    throw Error(ErrorCode::EmptyInput, "k must be positive");
  }
  if (pairs.size() > k) {
    throw Error(ErrorCode::DuplicateKey,
                "got " + std::to_string(pairs.size()) + " entries for k=" + std::to_string(k));
  }
  bool id_kind = pairs.front().first.is_id();
  std::vector<LogProbEntry> entries;
  entries.reserve(pairs.size());
  for (auto& [key, lp] : pairs) {
    if (key.is_id() != id_kind) {
      throw Error(ErrorCode::MixedKeyKinds, "vector mixes id and byte-string keys");
    }
    if (!std::isfinite(lp)) {
      throw Error(ErrorCode::NonFiniteInput, "non-finite logprob");
    }
    if (lp > 0.0) {
      throw Error(ErrorCode::PositiveLogProb, "value " + std::to_string(lp));
    }
    entries.push_back({std::move(key), lp});
  }
  auto by_key = sorted_by_key(entries);
  for (std::size_t i = 1; i < by_key.size(); ++i) {
    if (by_key[i].key == by_key[i - 1].key) {
      throw Error(ErrorCode::DuplicateKey, "repeated key in top-k entries");
    }
  }
  return FirstTokenLogProbs(VectorKind::TopK, k, std::move(entries));
}

double distance(const FirstTokenLogProbs& a, const FirstTokenLogProbs& b,
                const DistanceConfig& cfg) {
  if (a.id_keyed() != b.id_keyed()) {
    throw Error(ErrorCode::MixedKeyKinds, "cannot compare id-keyed and byte-keyed vectors");
  }
  check_floor(a, cfg.floor);
  check_floor(b, cfg.floor);

  // Merge the key-sorted views; a key missing from one side contributes the floor.
  const auto& ka = a.entries_by_key();
  const auto& kb = b.entries_by_key();
  std::size_t i = 0, j = 0;
  double sum = 0.0;
  auto add = [&sum](double x, double y) {
    double d = x - y;
    sum += d * d;
  };
  while (i < ka.size() && j < kb.size()) {
    if (ka[i].key == kb[j].key) {
      add(ka[i].logprob, kb[j].logprob);
      ++i;
      ++j;
    } else if (ka[i].key < kb[j].key) {
      add(ka[i].logprob, cfg.floor);
      ++i;
    } else {
      add(cfg.floor, kb[j].logprob);
      ++j;
    }
  }
  for (; i < ka.size(); ++i) add(ka[i].logprob, cfg.floor);
  for (; j < kb.size(); ++j) add(cfg.floor, kb[j].logprob);
  return std::sqrt(sum);
}

std::vector<double> densify(const FirstTokenLogProbs& v, std::span<const TokenKey> keys,
                            const DistanceConfig& cfg) {
  std::vector<double> out(keys.size(), cfg.floor);
  std::size_t found = 0;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    const auto& by_key = v.entries_by_key();
    auto it = std::lower_bound(
        by_key.begin(), by_key.end(), keys[i],
        [](const LogProbEntry& e, const TokenKey& k) { return e.key < k; });
    if (it != by_key.end() && it->key == keys[i]) {
      out[i] = it->logprob;
      ++found;
    }
  }
  if (found != v.entries().size()) {
    throw Error(ErrorCode::MissingKeyInUniverse,
                "vector has keys outside the provided universe");
  }
  return out;
}

}  // namespace ftg
