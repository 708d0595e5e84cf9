#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ftg/response_class.hpp"

namespace ftg {

struct TsneParams {
  double perplexity = 30.0;
  std::size_t iterations = 1000;
  double learning_rate = 200.0;
  double early_exaggeration_factor = 12.0;
  std::size_t early_exaggeration_iters = 250;
  double momentum_initial = 0.5;
  double momentum_final = 0.8;
  std::uint64_t seed = 42;
};

struct Embedding {
  std::vector<std::array<double, 2>> coords;
  std::vector<ResponseClass> labels;
  double final_kl = 0.0;
  // KL against the unexaggerated affinities, one value per iteration.
  std::vector<double> kl_trace;
};

// Row-normalized Gaussian conditionals, bandwidths found by bisection so each
// row's entropy hits log(perplexity). Flat n*n row-major, zero diagonal.
std::vector<double> conditional_affinities(const std::vector<std::vector<double>>& points,
                                           double perplexity);

// Symmetrized affinities p_ij = (p_{j|i} + p_{i|j}) / 2n: symmetric, zero
// diagonal, summing to 1.
std::vector<double> pairwise_affinities(const std::vector<std::vector<double>>& points,
                                        double perplexity);

// KL(P || Q) with Student-t low-dimensional affinities, and its gradient.
struct KlGradient {
  double kl = 0.0;
  std::vector<std::array<double, 2>> grad;
};
KlGradient kl_and_gradient(const std::vector<double>& affinities,
                           const std::vector<std::array<double, 2>>& coords);

// Exact O(n^2) gradient descent with momentum and early exaggeration.
// Deterministic for a fixed seed.
Embedding run_tsne(const std::vector<std::vector<double>>& points,
                   const std::vector<ResponseClass>& labels, const TsneParams& params);

enum class ScatterFormat { Csv, Svg };

// CSV: header id,x,y,label. SVG: one circle per point, fixed per-class
// palette, inline legend. `ids` defaults to point indices.
void emit_scatter(const Embedding& embedding, const std::string& out_path, ScatterFormat format,
                  const std::vector<std::string>& ids = {});

}  // namespace ftg
