// Exercises the installed binary end to end. The binary path arrives as the
// first program argument, so doctest's main is replaced here.
#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "ftg/dataset.hpp"
#include "ftg/knn.hpp"
#include "ftg/vector_io.hpp"

using namespace ftg;
namespace fs = std::filesystem;

namespace {

std::string g_binary;
fs::path g_dir;

struct RunResult {
  int exit_code = -1;
  std::string output;
};

RunResult run_cli(const std::string& args) {
  fs::path out = g_dir / "cli-output.txt";
  std::string cmd = g_binary + " " + args + " > " + out.string() + " 2>&1";
  int rc = std::system(cmd.c_str());
  RunResult result;
  result.exit_code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  std::ifstream in(out);
  std::stringstream ss;
  ss << in.rdbuf();
  result.output = ss.str();
  return result;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Four well-separated clusters keyed on disjoint id ranges.
void write_fixture_vectors(const fs::path& path, size_t per_class = 25) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> sig(-0.4, -0.001);
  std::uniform_real_distribution<double> noise(-25.0, -18.0);
  std::ofstream out(path);
  size_t serial = 0;
  for (size_t c = 0; c < kNumClasses; ++c) {
    for (size_t i = 0; i < per_class; ++i) {
      std::vector<std::pair<TokenKey, double>> pairs;
      for (uint64_t k = 0; k < 6; ++k) pairs.emplace_back(TokenKey::from_id(c * 6 + k), sig(rng));
      pairs.emplace_back(TokenKey::from_id(100 + (serial % 7)), noise(rng));
      VectorRecord rec{"v" + std::to_string(serial++), "fixture-model",
                       static_cast<ResponseClass>(c),
                       FirstTokenLogProbs::from_topk(std::move(pairs), 10)};
      out << vector_record_to_json_line(rec) << "\n";
    }
  }
}

}  // namespace

TEST_CASE("eval prints a metrics table and echoes the seed") {
  fs::path vectors = g_dir / "vectors.jsonl";
  write_fixture_vectors(vectors);
  auto res = run_cli("eval --vectors " + vectors.string() + " --k 3 --folds 5 --seed 9");
  CHECK(res.exit_code == 0);
  CHECK(res.output.find("seed=9") != std::string::npos);
  CHECK(res.output.find("Accuracy") != std::string::npos);
  CHECK(res.output.find("fixture-model") != std::string::npos);
}

TEST_CASE("eval rejects a single fold as a usage error") {
  fs::path vectors = g_dir / "vectors.jsonl";
  write_fixture_vectors(vectors);
  auto res = run_cli("eval --vectors " + vectors.string() + " --folds 1");
  CHECK(res.exit_code == 2);
}

TEST_CASE("eval fails cleanly when a class is absent") {
  fs::path vectors = g_dir / "missing-class.jsonl";
  {
    std::ofstream out(vectors);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> lp(-5.0, -0.01);
    for (size_t i = 0; i < 30; ++i) {
      std::vector<std::pair<TokenKey, double>> pairs{{TokenKey::from_id(i % 9), lp(rng)},
                                                     {TokenKey::from_id(40 + i % 3), lp(rng)}};
      VectorRecord rec{"m" + std::to_string(i), "fixture-model",
                       i % 2 ? ResponseClass::Chat : ResponseClass::Thanks,
                       FirstTokenLogProbs::from_topk(std::move(pairs), 5)};
      out << vector_record_to_json_line(rec) << "\n";
    }
  }
  auto res = run_cli("eval --vectors " + vectors.string() + " --folds 5");
  CHECK(res.exit_code == 1);
}

TEST_CASE("embed is deterministic for a fixed seed and emits well-formed svg") {
  fs::path vectors = g_dir / "vectors.jsonl";
  write_fixture_vectors(vectors);
  fs::path a = g_dir / "a.csv", b = g_dir / "b.csv", svg = g_dir / "plot.svg";

  std::string common = "embed --vectors " + vectors.string() +
                       " --perplexity 8 --iterations 120 --seed 21 --format csv --out ";
  CHECK(run_cli(common + a.string()).exit_code == 0);
  CHECK(run_cli(common + b.string()).exit_code == 0);
  auto csv_a = read_file(a);
  CHECK(csv_a == read_file(b));
  CHECK(csv_a.rfind("id,x,y,label", 0) == 0);

  auto res = run_cli("embed --vectors " + vectors.string() +
                     " --perplexity 8 --iterations 120 --seed 21 --format svg --out " +
                     svg.string());
  CHECK(res.exit_code == 0);
  auto body = read_file(svg);
  CHECK(body.find("<svg") != std::string::npos);
  CHECK(body.find("</svg>") != std::string::npos);
  CHECK(body.find("<circle") != std::string::npos);
}

TEST_CASE("classify a training sample against a fitted model") {
  fs::path vectors = g_dir / "vectors.jsonl";
  write_fixture_vectors(vectors);
  fs::path model = g_dir / "model.json";
  CHECK(run_cli("fit --vectors " + vectors.string() + " --k 3 --out " + model.string())
            .exit_code == 0);

  fs::path query = g_dir / "query.jsonl";
  {
    // First line of the fixture file is a chat-class vector.
    std::ifstream in(vectors);
    std::string line;
    std::getline(in, line);
    std::ofstream out(query);
    out << line << "\n";
  }
  auto res = run_cli("classify --model-file " + model.string() + " --vectors " +
                     query.string() + " --centroids");
  CHECK(res.exit_code == 0);
  CHECK(res.output.find("chat") != std::string::npos);
  CHECK(res.output.find("agreement=1.00") != std::string::npos);
  // Centroid distances for all four classes.
  CHECK(res.output.find("hello") != std::string::npos);
  CHECK(res.output.find("refusal") != std::string::npos);
  CHECK(res.output.find("thanks") != std::string::npos);
}

TEST_CASE("missing model file is a runtime failure") {
  auto res = run_cli("classify --model-file " + (g_dir / "nope.json").string() +
                     " --vectors " + (g_dir / "nope.jsonl").string());
  CHECK(res.exit_code == 1);
}

TEST_CASE("unknown subcommand is a usage error") {
  CHECK(run_cli("frobnicate").exit_code == 2);
}

int run_all(int argc, char** argv) {
  doctest::Context context;
  context.applyCommandLine(1, argv);
  return context.run();
}

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: %s <path-to-ftg-binary>\n", argv[0]);
    return 1;
  }
  g_binary = argv[1];
  g_dir = fs::temp_directory_path() / ("ftg-cli-" + std::to_string(std::random_device{}()));
  fs::create_directories(g_dir);
  int rc = run_all(argc, argv);
  fs::remove_all(g_dir);
  return rc;
}
