#include "ftg/tsne.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "ftg/errors.hpp"

namespace ftg {
namespace {

constexpr double kEntropyTolerance = 1e-7;
constexpr int kMaxBisectionSteps = 200;

std::vector<double> squared_distances(const std::vector<std::vector<double>>& points) {
  std::size_t n = points.size();
  std::vector<double> d2(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double sum = 0.0;
      for (std::size_t a = 0; a < points[i].size(); ++a) {
        double d = points[i][a] - points[j][a];
        sum += d * d;
      }
      d2[i * n + j] = sum;
      d2[j * n + i] = sum;
    }
  }
  return d2;
}

// Conditional row i for precision beta; returns the entropy in nats.
double fill_conditional_row(const std::vector<double>& d2, std::size_t n, std::size_t i,
                            double beta, std::vector<double>& row) {
  double sum = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    row[j] = (j == i) ? 0.0 : std::exp(-beta * d2[i * n + j]);
    sum += row[j];
  }
  if (sum <= 0.0) sum = std::numeric_limits<double>::min();
  double entropy = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    row[j] /= sum;
    if (row[j] > 0.0) entropy -= row[j] * std::log(row[j]);
  }
  return entropy;
}

struct KlGradientImpl {
  double kl;
  std::vector<std::array<double, 2>> grad;
};

// Gradient against exaggeration*P; KL reported against the true P.
KlGradientImpl kl_grad_impl(const std::vector<double>& p,
                            const std::vector<std::array<double, 2>>& y, double exaggeration) {
  std::size_t n = y.size();
  std::vector<double> w(n * n, 0.0);
  double w_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(y[i][0]) || !std::isfinite(y[i][1])) {
      throw Error(ErrorCode::NonFiniteInput, "embedding coordinates");
    }
    for (std::size_t j = i + 1; j < n; ++j) {
      double dx = y[i][0] - y[j][0];
      double dy = y[i][1] - y[j][1];
      double wij = 1.0 / (1.0 + dx * dx + dy * dy);
      w[i * n + j] = wij;
      w[j * n + i] = wij;
      w_sum += 2.0 * wij;
    }
  }
  if (w_sum <= 0.0) w_sum = std::numeric_limits<double>::min();

  KlGradientImpl out;
  out.kl = 0.0;
  out.grad.assign(n, {0.0, 0.0});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      double pij = p[i * n + j];
      double qij = w[i * n + j] / w_sum;
      if (pij > 0.0) out.kl += pij * std::log(pij / qij);
      double mult = 4.0 * (exaggeration * pij - qij) * w[i * n + j];
      out.grad[i][0] += mult * (y[i][0] - y[j][0]);
      out.grad[i][1] += mult * (y[i][1] - y[j][1]);
    }
  }
  return out;
}

}  // namespace

std::vector<double> conditional_affinities(const std::vector<std::vector<double>>& points,
                                           double perplexity) {
  std::size_t n = points.size();
  // A row's conditional entropy tops out at log(n-1), so that is the hard
  // feasibility bound here; run_tsne applies the stricter (n-1)/3 rule.
  if (n < 4 || perplexity <= 1.0 || perplexity >= double(n - 1)) {
    throw Error(ErrorCode::PerplexityInfeasible,
                "perplexity " + std::to_string(perplexity) + " with n=" + std::to_string(n));
  }
  for (const auto& row : points) {
    if (row.size() != points.front().size()) {
      throw Error(ErrorCode::NonFiniteInput, "ragged input matrix");
    }
    for (double v : row) {
      if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteInput, "input coordinates");
    }
  }

  auto d2 = squared_distances(points);
  double target = std::log(perplexity);
  std::vector<double> conditional(n * n, 0.0);
  std::vector<double> row(n);

  for (std::size_t i = 0; i < n; ++i) {
    double beta = 1.0;
    double lo = 0.0, hi = std::numeric_limits<double>::infinity();
    double entropy = fill_conditional_row(d2, n, i, beta, row);
    for (int step = 0; step < kMaxBisectionSteps && std::abs(entropy - target) > kEntropyTolerance;
         ++step) {
      if (entropy > target) {
        lo = beta;
        beta = std::isinf(hi) ? beta * 2.0 : (beta + hi) / 2.0;
      } else {
        hi = beta;
        beta = (beta + lo) / 2.0;
      }
      entropy = fill_conditional_row(d2, n, i, beta, row);
    }
    std::copy(row.begin(), row.end(), conditional.begin() + std::ptrdiff_t(i * n));
  }
  return conditional;
}

std::vector<double> pairwise_affinities(const std::vector<std::vector<double>>& points,
                                        double perplexity) {
  std::size_t n = points.size();
  auto conditional = conditional_affinities(points, perplexity);
  std::vector<double> p(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      p[i * n + j] = (conditional[i * n + j] + conditional[j * n + i]) / (2.0 * double(n));
    }
  }
  return p;
}

KlGradient kl_and_gradient(const std::vector<double>& affinities,
                           const std::vector<std::array<double, 2>>& coords) {
  auto impl = kl_grad_impl(affinities, coords, 1.0);
  return {impl.kl, std::move(impl.grad)};
}

Embedding run_tsne(const std::vector<std::vector<double>>& points,
                   const std::vector<ResponseClass>& labels, const TsneParams& params) {
  std::size_t n = points.size();
  if (labels.size() != n) {
    throw Error(ErrorCode::InvalidConfig, "labels/points size mismatch");
  }
  if (n >= 4 && params.perplexity >= double(n - 1) / 3.0) {
    throw Error(ErrorCode::PerplexityInfeasible,
                "perplexity must stay below (n-1)/3 = " + std::to_string(double(n - 1) / 3.0));
  }
  auto p = pairwise_affinities(points, params.perplexity);

  Embedding emb;
  emb.labels = labels;
  emb.coords.assign(n, {0.0, 0.0});
  std::mt19937_64 rng(params.seed);
  std::normal_distribution<double> init(0.0, 1e-4);
  for (auto& y : emb.coords) {
    y[0] = init(rng);
    y[1] = init(rng);
  }

  std::vector<std::array<double, 2>> velocity(n, {0.0, 0.0});
  emb.kl_trace.reserve(params.iterations);
  for (std::size_t t = 0; t < params.iterations; ++t) {
    bool exaggerating = t < params.early_exaggeration_iters;
    double alpha = exaggerating ? params.early_exaggeration_factor : 1.0;
    double momentum =
        t < params.early_exaggeration_iters ? params.momentum_initial : params.momentum_final;

    KlGradientImpl step;
    try {
      step = kl_grad_impl(p, emb.coords, alpha);
    } catch (const Error&) {
      throw Error(ErrorCode::DivergenceDetected, "iteration " + std::to_string(t));
    }
    emb.kl_trace.push_back(step.kl);

    double mean_x = 0.0, mean_y = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      velocity[i][0] = momentum * velocity[i][0] - params.learning_rate * step.grad[i][0];
      velocity[i][1] = momentum * velocity[i][1] - params.learning_rate * step.grad[i][1];
      emb.coords[i][0] += velocity[i][0];
      emb.coords[i][1] += velocity[i][1];
      mean_x += emb.coords[i][0];
      mean_y += emb.coords[i][1];
    }
    mean_x /= double(n);
    mean_y /= double(n);
    for (auto& y : emb.coords) {
      y[0] -= mean_x;
      y[1] -= mean_y;
      if (!std::isfinite(y[0]) || !std::isfinite(y[1])) {
        throw Error(ErrorCode::DivergenceDetected, "iteration " + std::to_string(t));
      }
    }
  }
  emb.final_kl = kl_and_gradient(p, emb.coords).kl;
  return emb;
}

namespace {

constexpr const char* kClassColors[kNumClasses] = {"#1f77b4", "#2ca02c", "#d62728", "#9467bd"};

void emit_csv(const Embedding& e, std::ostream& out, const std::vector<std::string>& ids) {
  out << "id,x,y,label\n";
  for (std::size_t i = 0; i < e.coords.size(); ++i) {
    const std::string& id = ids.empty() ? std::to_string(i) : ids[i];
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9g,%.9g", e.coords[i][0], e.coords[i][1]);
    out << id << ',' << buf << ',' << to_string(e.labels[i]) << '\n';
  }
}

void emit_svg(const Embedding& e, std::ostream& out) {
  const double width = 720, height = 540, margin = 48, radius = 3.0;
  double min_x = 0, max_x = 0, min_y = 0, max_y = 0;
  if (!e.coords.empty()) {
    min_x = max_x = e.coords[0][0];
    min_y = max_y = e.coords[0][1];
    for (const auto& c : e.coords) {
      min_x = std::min(min_x, c[0]);
      max_x = std::max(max_x, c[0]);
      min_y = std::min(min_y, c[1]);
      max_y = std::max(max_y, c[1]);
    }
  }
  double span_x = std::max(max_x - min_x, 1e-12);
  double span_y = std::max(max_y - min_y, 1e-12);
  auto sx = [&](double x) { return margin + (x - min_x) / span_x * (width - 2 * margin); };
  auto sy = [&](double y) { return height - margin - (y - min_y) / span_y * (height - 2 * margin); };

  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n"
      << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
  for (std::size_t i = 0; i < e.coords.size(); ++i) {
    out << "<circle cx=\"" << sx(e.coords[i][0]) << "\" cy=\"" << sy(e.coords[i][1]) << "\" r=\""
        << radius << "\" fill=\"" << kClassColors[static_cast<std::size_t>(e.labels[i])]
        << "\" fill-opacity=\"0.75\"/>\n";
  }
  double lx = width - margin - 110, ly = margin;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    out << "<rect x=\"" << lx << "\" y=\"" << ly + double(c) * 18 << "\" width=\"12\" height=\"12\""
        << " fill=\"" << kClassColors[c] << "\"/>\n"
        << "<text x=\"" << lx + 18 << "\" y=\"" << ly + double(c) * 18 + 10
        << "\" font-family=\"sans-serif\" font-size=\"12\">"
        << to_string(static_cast<ResponseClass>(c)) << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace

void emit_scatter(const Embedding& embedding, const std::string& out_path, ScatterFormat format,
                  const std::vector<std::string>& ids) {
  if (!ids.empty() && ids.size() != embedding.coords.size()) {
    throw Error(ErrorCode::InvalidConfig, "ids/points size mismatch");
  }
  std::ofstream out(out_path);
  if (!out) throw Error(ErrorCode::OutputUnwritable, out_path);
  if (format == ScatterFormat::Csv) {
    emit_csv(embedding, out, ids);
  } else {
    emit_svg(embedding, out);
  }
  if (!out) throw Error(ErrorCode::OutputUnwritable, out_path);
}

}  // namespace ftg
