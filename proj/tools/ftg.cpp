#include <CLI11.hpp>

#include <chrono>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <thread>

#include "ftg/dataset.hpp"
#include "ftg/gateway.hpp"
#include "ftg/knn.hpp"
#include "ftg/probe_client.hpp"
#include "ftg/tsne.hpp"
#include "ftg/vector_io.hpp"

namespace {

using namespace ftg;

volatile std::sig_atomic_t g_stop_requested = 0;

std::vector<std::pair<FirstTokenLogProbs, ResponseClass>> labeled_samples(
    const std::vector<VectorRecord>& records) {
  std::vector<std::pair<FirstTokenLogProbs, ResponseClass>> samples;
  for (const auto& rec : records) {
    if (!rec.label) {
      throw Error(ErrorCode::UnknownLabel, "record '" + rec.id + "' is unlabeled");
    }
    samples.emplace_back(rec.vector, *rec.label);
  }
  return samples;
}

void require_all_classes(const std::vector<std::pair<FirstTokenLogProbs, ResponseClass>>& samples,
                         std::size_t n_folds) {
  std::array<std::size_t, kNumClasses> counts{};
  for (const auto& [v, label] : samples) ++counts[static_cast<std::size_t>(label)];
  for (ResponseClass c : all_response_classes()) {
    std::size_t n = counts[static_cast<std::size_t>(c)];
    if (n < n_folds) {
      throw Error(ErrorCode::ClassTooSmall, std::string(to_string(c)) + " has " +
                                                std::to_string(n) + " samples for " +
                                                std::to_string(n_folds) + " folds");
    }
  }
}

int cmd_probe(const std::string& dataset_path, const ProbeTarget& target,
              const std::string& out_path, std::size_t parallelism) {
  auto chats = load_chats(dataset_path);
  auto summary = probe_dataset(target, chats, out_path, parallelism);
  std::cout << "ok=" << summary.ok << " failed=" << summary.failed
            << " skipped=" << summary.skipped << "\n";
  for (const auto& f : summary.failures) {
    std::cerr << "failed " << f.chat_id << ": " << f.reason << "\n";
  }
  return summary.failed == 0 ? 0 : 1;
}

int cmd_eval(const std::string& vectors_path, std::size_t k, std::size_t folds,
             std::uint64_t seed, double floor, const std::string& report_path) {
  auto records = load_vectors(vectors_path);
  auto samples = labeled_samples(records);
  require_all_classes(samples, folds);
  std::cout << "# seed=" << seed << " k=" << k << " folds=" << folds << " floor=" << floor
            << "\n";
  auto report = cross_validate(samples, folds, k, DistanceConfig{floor}, seed,
                               records.front().model);
  std::cout << report.to_table();
  if (!report_path.empty()) {
    std::ofstream out(report_path);
    if (!out) throw Error(ErrorCode::OutputUnwritable, report_path);
    out << report.to_json() << "\n";
  }
  return 0;
}

int cmd_fit(const std::string& vectors_path, std::size_t k, double floor,
            const std::string& out_path) {
  auto records = load_vectors(vectors_path);
  auto samples = labeled_samples(records);
  std::string model_name = records.front().model;
  auto model = KnnModel::fit(std::move(samples), k, DistanceConfig{floor}, model_name);
  model.save(out_path);
  std::cout << "fitted " << model.samples().size() << " samples (k=" << k << ") -> " << out_path
            << "\n";
  return 0;
}

int cmd_embed(const std::string& vectors_path, const TsneParams& params, double floor,
              const std::string& out_path, const std::string& format,
              const std::string& trace_path) {
  auto records = load_vectors(vectors_path);
  auto samples = labeled_samples(records);
  std::cout << "# seed=" << params.seed << " perplexity=" << params.perplexity
            << " iterations=" << params.iterations << "\n";

  // Densify over the union key universe, mirroring the distance definition.
  std::set<TokenKey> universe;
  for (const auto& [v, label] : samples) {
    for (const auto& e : v.entries()) universe.insert(e.key);
  }
  std::vector<TokenKey> keys(universe.begin(), universe.end());
  DistanceConfig cfg{floor};
  std::vector<std::vector<double>> points;
  std::vector<ResponseClass> labels;
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    points.push_back(densify(samples[i].first, keys, cfg));
    labels.push_back(samples[i].second);
    ids.push_back(records[i].id);
  }

  auto embedding = run_tsne(points, labels, params);
  emit_scatter(embedding, out_path,
               format == "svg" ? ScatterFormat::Svg : ScatterFormat::Csv, ids);
  if (!trace_path.empty()) {
    std::ofstream trace(trace_path);
    if (!trace) throw Error(ErrorCode::OutputUnwritable, trace_path);
    trace << "iteration,kl\n";
    for (std::size_t t = 0; t < embedding.kl_trace.size(); ++t) {
      trace << t << ',' << embedding.kl_trace[t] << '\n';
    }
  }
  std::cout << "final_kl=" << embedding.final_kl << " points=" << embedding.coords.size() << "\n";
  return 0;
}

void print_prediction(const KnnModel& model, const FirstTokenLogProbs& v, const std::string& id,
                      bool centroids) {
  auto pred = model.predict(v);
  char agreement[16];
  std::snprintf(agreement, sizeof(agreement), "%.2f", pred.agreement);
  std::cout << id << " predicted=" << to_string(pred.label) << " agreement=" << agreement
            << " mean_distance=" << pred.mean_neighbor_distance << "\n";
  if (centroids) {
    auto report = model.centroid_distances(v);
    for (ResponseClass c : all_response_classes()) {
      std::cout << "  centroid " << to_string(c) << " distance="
                << report.distances[static_cast<std::size_t>(c)]
                << (c == report.nearest ? "  <-- nearest" : "") << "\n";
    }
  }
}

int cmd_classify(const std::string& model_path, const std::string& vector_path,
                 const std::string& chat_path, const ProbeTarget& target, bool centroids) {
  auto model = KnnModel::load(model_path);
  if (!vector_path.empty()) {
    for (const auto& rec : load_vectors(vector_path)) {
      print_prediction(model, rec.vector, rec.id, centroids);
    }
    return 0;
  }
  for (const auto& chat : load_chats(chat_path)) {
    auto result = probe_first_token(target, chat);
    print_prediction(model, result.vector, chat.id, centroids);
  }
  return 0;
}

int cmd_serve(const std::string& config_path) {
  auto config = GatewayConfig::load(config_path);
  Gateway gateway(std::move(config));
  int port = gateway.start();
  std::cout << "listening on port " << port << "\n";
  std::signal(SIGTERM, [](int) { g_stop_requested = 1; });
  std::signal(SIGINT, [](int) { g_stop_requested = 1; });
  while (!g_stop_requested) {
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
  }
  // httplib drains in-flight handlers before stop() returns.
  gateway.stop();
  std::cout << "stopped\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"First-token log-probability response gating toolkit"};
  app.require_subcommand(1);

  std::string dataset_path, vectors_path, chat_path, model_path, out_path, report_path;
  std::string config_path, format = "csv", trace_path;
  std::size_t k = 3, folds = 5, parallelism = 4;
  std::uint64_t seed = 42;
  double floor = -30.0;
  bool centroids = false;

  ProbeTarget target;
  long long timeout_ms = 30000;
  auto add_target_flags = [&target, &timeout_ms](CLI::App* cmd) {
    cmd->add_option("--base-url", target.base_url, "OpenAI-compatible endpoint base URL");
    cmd->add_option("--model", target.model_name, "upstream model name");
    cmd->add_option("--top-logprobs", target.top_logprobs, "top_logprobs to request")
        ->check(CLI::PositiveNumber);
    cmd->add_flag("--reasoning-prefill", target.reasoning_prefill,
                  "append an empty-think assistant prefill before probing");
    cmd->add_option("--timeout-ms", timeout_ms, "per-request timeout");
    cmd->add_option("--retries", target.max_retries, "retry count for 429/5xx");
  };

  auto* probe = app.add_subcommand("probe", "probe a dataset and record first-token vectors");
  probe->add_option("--dataset", dataset_path, "chat JSONL file")->required();
  probe->add_option("--out", out_path, "output vector JSONL (appended, resumable)")->required();
  probe->add_option("--parallelism", parallelism)->check(CLI::PositiveNumber);
  add_target_flags(probe);

  auto* eval = app.add_subcommand("eval", "stratified cross-validation over labeled vectors");
  eval->add_option("--vectors", vectors_path)->required();
  eval->add_option("--k", k)->check(CLI::PositiveNumber);
  eval->add_option("--folds", folds)->check(CLI::Range(std::size_t(2), std::size_t(100)));
  eval->add_option("--seed", seed);
  eval->add_option("--floor", floor);
  eval->add_option("--report", report_path, "JSON report path");

  auto* fit = app.add_subcommand("fit", "store labeled vectors as a classifier model file");
  fit->add_option("--vectors", vectors_path)->required();
  fit->add_option("--k", k)->check(CLI::PositiveNumber);
  fit->add_option("--floor", floor);
  fit->add_option("--out", out_path)->required();

  TsneParams tsne;
  auto* embed = app.add_subcommand("embed", "2D t-SNE over labeled vectors");
  embed->add_option("--vectors", vectors_path)->required();
  embed->add_option("--out", out_path)->required();
  embed->add_option("--format", format)->check(CLI::IsMember({"csv", "svg"}));
  embed->add_option("--perplexity", tsne.perplexity);
  embed->add_option("--iterations", tsne.iterations);
  embed->add_option("--learning-rate", tsne.learning_rate);
  embed->add_option("--seed", tsne.seed);
  embed->add_option("--floor", floor);
  embed->add_option("--kl-trace", trace_path, "write per-iteration KL as CSV");

  auto* classify = app.add_subcommand("classify", "classify stored vectors or live-probed chats");
  classify->add_option("--model-file", model_path)->required();
  classify->add_option("--vectors", vectors_path, "vector JSONL to classify");
  classify->add_option("--chats", chat_path, "chat JSONL to probe live");
  classify->add_flag("--centroids", centroids, "print per-class centroid distances");
  add_target_flags(classify);

  auto* serve = app.add_subcommand("serve", "run the gating proxy");
  serve->add_option("--config", config_path)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  target.request_timeout = std::chrono::milliseconds(timeout_ms);

  try {
    if (probe->parsed()) return cmd_probe(dataset_path, target, out_path, parallelism);
    if (eval->parsed()) return cmd_eval(vectors_path, k, folds, seed, floor, report_path);
    if (fit->parsed()) return cmd_fit(vectors_path, k, floor, out_path);
    if (embed->parsed()) return cmd_embed(vectors_path, tsne, floor, out_path, format, trace_path);
    if (classify->parsed())
      return cmd_classify(model_path, vectors_path, chat_path, target, centroids);
    if (serve->parsed()) return cmd_serve(config_path);
  } catch (const ftg::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
