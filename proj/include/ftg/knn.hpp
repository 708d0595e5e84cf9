#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ftg/response_class.hpp"
#include "ftg/vector_core.hpp"

namespace ftg {

using ConfusionMatrix = std::array<std::array<std::size_t, kNumClasses>, kNumClasses>;

struct Metrics {
  double accuracy = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  std::array<double, kNumClasses> per_class_f1{};
};

// Rows are true classes, columns predicted. Per-class precision/recall take 0
// on a zero denominator; macro averages run over classes that appear in the
// evaluation (non-zero row or column).
Metrics metrics_from_confusion(const ConfusionMatrix& confusion);

struct Prediction {
  ResponseClass label;
  std::array<std::size_t, kNumClasses> votes{};
  double mean_neighbor_distance = 0.0;
  double agreement = 0.0;  // votes[label] / k
};

// Lazy learner: stored labeled vectors plus the distance configuration.
class KnnModel {
 public:
  static KnnModel fit(std::vector<std::pair<FirstTokenLogProbs, ResponseClass>> samples,
                      std::size_t k, DistanceConfig cfg, std::string model_name);

  // Majority vote among the k nearest samples. Distance ties go to the lower
  // training index; vote ties go to the class of the nearest tied-class
  // neighbor.
  Prediction predict(const FirstTokenLogProbs& v) const;

  // Arithmetic mean of the class's members densified over `keys`.
  std::vector<double> class_centroid(ResponseClass c, std::span<const TokenKey> keys) const;

  // Distance from v to each class centroid over the union key universe.
  struct CentroidReport {
    std::array<double, kNumClasses> distances{};
    ResponseClass nearest;
  };
  CentroidReport centroid_distances(const FirstTokenLogProbs& v) const;

  // Union of keys across all stored samples, sorted ascending.
  std::vector<TokenKey> key_universe() const;

  const std::vector<std::pair<FirstTokenLogProbs, ResponseClass>>& samples() const {
    return samples_;
  }
  std::size_t k() const { return k_; }
  const DistanceConfig& cfg() const { return cfg_; }
  const std::string& model_name() const { return model_name_; }

  std::string to_json() const;
  static KnnModel from_json(const std::string& text);
  void save(const std::string& path) const;
  static KnnModel load(const std::string& path);

 private:
  KnnModel(std::vector<std::pair<FirstTokenLogProbs, ResponseClass>> samples, std::size_t k,
           DistanceConfig cfg, std::string model_name)
      : samples_(std::move(samples)), k_(k), cfg_(cfg), model_name_(std::move(model_name)) {}

  std::vector<std::pair<FirstTokenLogProbs, ResponseClass>> samples_;
  std::size_t k_;
  DistanceConfig cfg_;
  std::string model_name_;
};

struct Fold {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

// Stratified partition: per class, fold sizes differ by at most one.
// Fold membership is decided per class on occurrence ranks after a seeded
// shuffle, so the assignment pattern does not depend on input order.
std::vector<Fold> stratified_folds(const std::vector<ResponseClass>& labels,
                                   std::size_t n_folds, std::uint64_t seed);

struct EvalReport {
  std::vector<Metrics> per_fold;
  Metrics aggregate;          // unweighted mean of per-fold metrics
  ConfusionMatrix confusion;  // summed over folds
  std::size_t n_folds = 0;
  std::size_t k = 0;
  std::string model_name;

  std::string to_json() const;
  // Aligned text row: Accuracy, Precision, Recall, F1, then per-class F1.
  std::string to_table() const;
};

EvalReport cross_validate(
    const std::vector<std::pair<FirstTokenLogProbs, ResponseClass>>& samples,
    std::size_t n_folds, std::size_t k, DistanceConfig cfg, std::uint64_t seed,
    const std::string& model_name = "");

}  // namespace ftg
