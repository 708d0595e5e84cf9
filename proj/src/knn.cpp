#include "ftg/knn.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "ftg/vector_io.hpp"

namespace ftg {
namespace {

using nlohmann::json;

constexpr int kModelSchemaVersion = 1;

std::size_t idx(ResponseClass c) { return static_cast<std::size_t>(c); }

}  // namespace

Metrics metrics_from_confusion(const ConfusionMatrix& confusion) {
  std::size_t total = 0, diag = 0;
  std::array<std::size_t, kNumClasses> row{}, col{};
  for (std::size_t i = 0; i < kNumClasses; ++i) {
    for (std::size_t j = 0; j < kNumClasses; ++j) {
      total += confusion[i][j];
      row[i] += confusion[i][j];
      col[j] += confusion[i][j];
    }
    diag += confusion[i][i];
  }
  if (total == 0) throw Error(ErrorCode::EmptyConfusion, "all counts zero");

  Metrics m;
  m.accuracy = double(diag) / double(total);
  std::size_t active = 0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    if (row[c] == 0 && col[c] == 0) continue;  // class absent from this evaluation
    ++active;
    double tp = double(confusion[c][c]);
    double precision = col[c] ? tp / double(col[c]) : 0.0;
    double recall = row[c] ? tp / double(row[c]) : 0.0;
    double f1 = (precision + recall) > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    m.per_class_f1[c] = f1;
    m.macro_precision += precision;
    m.macro_recall += recall;
    m.macro_f1 += f1;
  }
  m.macro_precision /= double(active);
  m.macro_recall /= double(active);
  m.macro_f1 /= double(active);
  return m;
}

KnnModel KnnModel::fit(std::vector<std::pair<FirstTokenLogProbs, ResponseClass>> samples,
                       std::size_t k, DistanceConfig cfg, std::string model_name) {
  if (samples.empty()) throw Error(ErrorCode::EmptyTrainingSet, "no samples");
  if (k == 0 || k > samples.size()) {
    throw Error(ErrorCode::KTooLarge,
                "k=" + std::to_string(k) + " with " + std::to_string(samples.size()) + " samples");
  }
  bool id_keys = samples.front().first.id_keyed();
  for (const auto& [v, label] : samples) {
    if (v.id_keyed() != id_keys) {
      throw Error(ErrorCode::MixedKeyKinds, "training vectors mix key kinds");
    }
  }
  return KnnModel(std::move(samples), k, cfg, std::move(model_name));
}

Prediction KnnModel::predict(const FirstTokenLogProbs& v) const {
  struct Neighbor {
    double dist;
    std::size_t index;
  };
  std::vector<Neighbor> neighbors;
  neighbors.reserve(samples_.size());
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    neighbors.push_back({distance(samples_[i].first, v, cfg_), i});
  }
  // Distance ties break toward the earlier training index.
  std::partial_sort(neighbors.begin(), neighbors.begin() + std::ptrdiff_t(k_), neighbors.end(),
                    [](const Neighbor& a, const Neighbor& b) {
                      if (a.dist != b.dist) return a.dist < b.dist;
                      return a.index < b.index;
                    });

  Prediction pred;
  double dist_sum = 0.0;
  for (std::size_t r = 0; r < k_; ++r) {
    ++pred.votes[idx(samples_[neighbors[r].index].second)];
    dist_sum += neighbors[r].dist;
  }
  pred.mean_neighbor_distance = dist_sum / double(k_);

  std::size_t best_votes = *std::max_element(pred.votes.begin(), pred.votes.end());
  // Vote ties: the nearest neighbor belonging to a tied class decides.
  for (std::size_t r = 0; r < k_; ++r) {
    ResponseClass c = samples_[neighbors[r].index].second;
    if (pred.votes[idx(c)] == best_votes) {
      pred.label = c;
      break;
    }
  }
  pred.agreement = double(best_votes) / double(k_);
  return pred;
}

std::vector<TokenKey> KnnModel::key_universe() const {
  std::set<TokenKey> keys;
  for (const auto& [v, label] : samples_) {
    for (const auto& e : v.entries()) keys.insert(e.key);
  }
  return {keys.begin(), keys.end()};
}

std::vector<double> KnnModel::class_centroid(ResponseClass c,
                                             std::span<const TokenKey> keys) const {
  std::vector<double> sum(keys.size(), 0.0);
  std::size_t members = 0;
  for (const auto& [v, label] : samples_) {
    if (label != c) continue;
    auto dense = densify(v, keys, cfg_);
    for (std::size_t i = 0; i < dense.size(); ++i) sum[i] += dense[i];
    ++members;
  }
  if (members == 0) {
    throw Error(ErrorCode::EmptyClass, std::string(to_string(c)));
  }
  for (double& x : sum) x /= double(members);
  return sum;
}

KnnModel::CentroidReport KnnModel::centroid_distances(const FirstTokenLogProbs& v) const {
  auto keys = key_universe();
  for (const auto& e : v.entries()) {
    // Query keys outside the training universe extend it.
    auto it = std::lower_bound(keys.begin(), keys.end(), e.key);
    if (it == keys.end() || *it != e.key) keys.insert(it, e.key);
  }
  auto dense_v = densify(v, keys, cfg_);
  CentroidReport report;
  double best = std::numeric_limits<double>::infinity();
  report.nearest = ResponseClass::Chat;
  for (ResponseClass c : all_response_classes()) {
    auto centroid = class_centroid(c, keys);
    double sum = 0.0;
    for (std::size_t i = 0; i < centroid.size(); ++i) {
      double d = centroid[i] - dense_v[i];
      sum += d * d;
    }
    double dist = std::sqrt(sum);
    report.distances[idx(c)] = dist;
    if (dist < best) {
      best = dist;
      report.nearest = c;
    }
  }
  return report;
}

std::string KnnModel::to_json() const {
  json j;
  j["schema_version"] = kModelSchemaVersion;
  j["k"] = k_;
  j["cfg"] = {{"floor", cfg_.floor}};
  j["model_name"] = model_name_;
  json samples = json::array();
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    VectorRecord rec{std::to_string(i), model_name_, samples_[i].second, samples_[i].first};
    samples.push_back(json::parse(vector_record_to_json_line(rec)));
  }
  j["samples"] = std::move(samples);
  return j.dump();
}

KnnModel KnnModel::from_json(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object() || j.value("schema_version", 0) != kModelSchemaVersion) {
    throw Error(ErrorCode::ParseError, "invalid model file");
  }
  try {
    std::size_t k = j.at("k").get<std::size_t>();
    DistanceConfig cfg{j.at("cfg").at("floor").get<double>()};
    std::string model_name = j.at("model_name").get<std::string>();
    std::vector<std::pair<FirstTokenLogProbs, ResponseClass>> samples;
    for (const auto& s : j.at("samples")) {
      auto rec = vector_record_from_json_line(s.dump());
      if (!rec.label) throw Error(ErrorCode::UnknownLabel, "unlabeled sample in model file");
      samples.emplace_back(std::move(rec.vector), *rec.label);
    }
    return fit(std::move(samples), k, cfg, std::move(model_name));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
}

void KnnModel::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::OutputUnwritable, path);
  out << to_json() << '\n';
  if (!out) throw Error(ErrorCode::OutputUnwritable, path);
}

KnnModel KnnModel::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ParseError, "cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return from_json(buf.str());
}

std::vector<Fold> stratified_folds(const std::vector<ResponseClass>& labels,
                                   std::size_t n_folds, std::uint64_t seed) {
  if (n_folds < 2) throw Error(ErrorCode::InvalidConfig, "n_folds must be >= 2");

  std::array<std::vector<std::size_t>, kNumClasses> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    by_class[idx(labels[i])].push_back(i);
  }

  std::vector<Fold> folds(n_folds);
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    const auto& indices = by_class[c];
    if (indices.empty()) continue;
    if (indices.size() < n_folds) {
      throw Error(ErrorCode::ClassTooSmall,
                  std::string(to_string(static_cast<ResponseClass>(c))) + " has " +
                      std::to_string(indices.size()) + " members for " +
                      std::to_string(n_folds) + " folds");
    }
    // Shuffle occurrence ranks, not raw indices: the rank->fold map is then
    // a function of (seed, class, class size) only.
    std::vector<std::size_t> ranks(indices.size());
    std::iota(ranks.begin(), ranks.end(), 0);
    std::mt19937_64 rng(seed * kNumClasses + c + 1);
    std::shuffle(ranks.begin(), ranks.end(), rng);
    for (std::size_t r = 0; r < ranks.size(); ++r) {
      folds[r % n_folds].test.push_back(indices[ranks[r]]);
    }
  }
  for (std::size_t f = 0; f < n_folds; ++f) {
    std::sort(folds[f].test.begin(), folds[f].test.end());
    std::vector<bool> in_test(labels.size(), false);
    for (std::size_t i : folds[f].test) in_test[i] = true;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (!in_test[i]) folds[f].train.push_back(i);
    }
  }
  return folds;
}

EvalReport cross_validate(
    const std::vector<std::pair<FirstTokenLogProbs, ResponseClass>>& samples,
    std::size_t n_folds, std::size_t k, DistanceConfig cfg, std::uint64_t seed,
    const std::string& model_name) {
  std::vector<ResponseClass> labels;
  labels.reserve(samples.size());
  for (const auto& [v, label] : samples) labels.push_back(label);

  auto folds = stratified_folds(labels, n_folds, seed);
  EvalReport report;
  report.n_folds = n_folds;
  report.k = k;
  report.model_name = model_name;
  report.confusion = ConfusionMatrix{};

  for (const auto& fold : folds) {
    std::vector<std::pair<FirstTokenLogProbs, ResponseClass>> train;
    train.reserve(fold.train.size());
    for (std::size_t i : fold.train) train.push_back(samples[i]);
    auto model = KnnModel::fit(std::move(train), k, cfg, model_name);

    ConfusionMatrix fold_confusion{};
    for (std::size_t i : fold.test) {
      auto pred = model.predict(samples[i].first);
      ++fold_confusion[idx(samples[i].second)][idx(pred.label)];
    }
    report.per_fold.push_back(metrics_from_confusion(fold_confusion));
    for (std::size_t r = 0; r < kNumClasses; ++r) {
      for (std::size_t cidx = 0; cidx < kNumClasses; ++cidx) {
        report.confusion[r][cidx] += fold_confusion[r][cidx];
      }
    }
  }

  // Aggregate = unweighted mean across folds.
  Metrics agg;
  for (const auto& m : report.per_fold) {
    agg.accuracy += m.accuracy;
    agg.macro_precision += m.macro_precision;
    agg.macro_recall += m.macro_recall;
    agg.macro_f1 += m.macro_f1;
    for (std::size_t c = 0; c < kNumClasses; ++c) agg.per_class_f1[c] += m.per_class_f1[c];
  }
  double nf = double(report.per_fold.size());
  agg.accuracy /= nf;
  agg.macro_precision /= nf;
  agg.macro_recall /= nf;
  agg.macro_f1 /= nf;
  for (auto& f1 : agg.per_class_f1) f1 /= nf;
  report.aggregate = agg;
  return report;
}

std::string EvalReport::to_json() const {
  auto metrics_json = [](const Metrics& m) {
    return json{{"accuracy", m.accuracy},
                {"macro_precision", m.macro_precision},
                {"macro_recall", m.macro_recall},
                {"macro_f1", m.macro_f1},
                {"per_class_f1",
                 {{"chat", m.per_class_f1[0]},
                  {"hello", m.per_class_f1[1]},
                  {"refusal", m.per_class_f1[2]},
                  {"thanks", m.per_class_f1[3]}}}};
  };
  json j;
  j["model_name"] = model_name;
  j["k"] = k;
  j["n_folds"] = n_folds;
  j["aggregate"] = metrics_json(aggregate);
  j["per_fold"] = json::array();
  for (const auto& m : per_fold) j["per_fold"].push_back(metrics_json(m));
  json conf = json::array();
  for (const auto& row : confusion) conf.push_back(row);
  j["summed_confusion"] = std::move(conf);
  return j.dump(2);
}

std::string EvalReport::to_table() const {
  std::ostringstream out;
  auto cell = [&out](const std::string& s, int width) {
    out << s;
    for (int i = int(s.size()); i < width; ++i) out << ' ';
  };
  auto num = [](double v) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return std::string(buf);
  };
  const int w = 11;
  cell("Model", 20);
  for (const char* h : {"Accuracy", "Precision", "Recall", "F1", "Chat F1", "Hello F1",
                        "Refusal F1", "Thanks F1"}) {
    cell(h, w);
  }
  out << '\n';
  cell(model_name.empty() ? "-" : model_name, 20);
  cell(num(aggregate.accuracy), w);
  cell(num(aggregate.macro_precision), w);
  cell(num(aggregate.macro_recall), w);
  cell(num(aggregate.macro_f1), w);
  for (double f1 : aggregate.per_class_f1) cell(num(f1), w);
  out << '\n';
  return out.str();
}

}  // namespace ftg
