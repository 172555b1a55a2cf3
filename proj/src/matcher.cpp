#include "parkloc/matcher.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <fmt/format.h>

namespace parkloc {
namespace {

double dot(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (size_t k = 0; k < a.size(); ++k) s += static_cast<double>(a[k]) * b[k];
  return s;
}

std::vector<int> usable_cells(const FeatureGrid& g) {
  std::vector<int> cells;
  cells.reserve(g.cells());
  for (float v : g.data) {
    if (std::isnan(v)) throw InvalidInput("NaN in feature grid");
  }
  for (int i = 0; i < g.cells(); ++i) {
    if (!g.textureless(i)) cells.push_back(i);
  }
  return cells;
}

// Log-sum-exp accumulated one element at a time.
struct OnlineLse {
  double max = -std::numeric_limits<double>::infinity();
  double sum = 0.0;

  void add(double v) {
    if (v > max) {
      sum = sum * std::exp(max - v) + 1.0;
      max = v;
    } else {
      sum += std::exp(v - max);
    }
  }
  double value() const { return max + std::log(sum); }
};

}  // namespace

void MatchParams::validate() const {
  if (!(temperature > 0.0)) throw InvalidInput("temperature must be positive");
  if (!(threshold > 0.0 && threshold < 1.0)) throw InvalidInput("threshold must lie in (0,1)");
  if (window < 3 || window % 2 == 0) throw InvalidInput("window must be odd and at least 3");
  if (!(heatmap_temperature > 0.0)) throw InvalidInput("heatmap temperature must be positive");
}

std::vector<CoarseMatch> coarse_match(const FeatureGrid& a, const FeatureGrid& b, double temperature,
                                      double threshold) {
  if (!(temperature > 0.0)) throw InvalidInput("temperature must be positive");
  if (!(threshold > 0.0 && threshold < 1.0)) throw InvalidInput("threshold must lie in (0,1)");
  if (a.cells() == 0 || b.cells() == 0) throw InvalidInput("empty feature grid");
  if (a.dims != b.dims) {
    throw ShapeError(fmt::format("descriptor dimensions differ: {} vs {}", a.dims, b.dims));
  }

  const std::vector<int> rows = usable_cells(a);
  const std::vector<int> cols = usable_cells(b);
  if (rows.empty() || cols.empty()) return {};

  const size_t n = rows.size(), m = cols.size();
  std::vector<double> row_lse(n);
  std::vector<OnlineLse> col_acc(m);
  std::vector<double> scores(m);

  // Pass 1: normalizers of the row-wise and column-wise softmax.
  for (size_t i = 0; i < n; ++i) {
    const auto fa = a.cell(rows[i]);
    double row_max = -std::numeric_limits<double>::infinity();
    for (size_t j = 0; j < m; ++j) {
      scores[j] = dot(fa, b.cell(cols[j])) / temperature;
      row_max = std::max(row_max, scores[j]);
      col_acc[j].add(scores[j]);
    }
    double sum = 0.0;
    for (size_t j = 0; j < m; ++j) sum += std::exp(scores[j] - row_max);
    row_lse[i] = row_max + std::log(sum);
  }
  std::vector<double> col_lse(m);
  for (size_t j = 0; j < m; ++j) col_lse[j] = col_acc[j].value();

  // Pass 2: log P(i,j) = 2 S(i,j) - lse_row(i) - lse_col(j); argmax both ways.
  std::vector<size_t> row_best(n, 0);
  std::vector<double> row_best_logp(n, -std::numeric_limits<double>::infinity());
  std::vector<size_t> col_best(m, 0);
  std::vector<double> col_best_logp(m, -std::numeric_limits<double>::infinity());
  for (size_t i = 0; i < n; ++i) {
    const auto fa = a.cell(rows[i]);
    for (size_t j = 0; j < m; ++j) {
      const double logp = 2.0 * dot(fa, b.cell(cols[j])) / temperature - row_lse[i] - col_lse[j];
      if (logp > row_best_logp[i]) {
        row_best_logp[i] = logp;
        row_best[i] = j;
      }
      if (logp > col_best_logp[j]) {
        col_best_logp[j] = logp;
        col_best[j] = i;
      }
    }
  }

  std::vector<CoarseMatch> matches;
  for (size_t i = 0; i < n; ++i) {
    const size_t j = row_best[i];
    if (col_best[j] != i) continue;
    const double p = std::exp(row_best_logp[i]);
    if (p > threshold) matches.push_back({rows[i], cols[j], p});
  }
  return matches;
}

std::vector<double> softmax(std::span<const double> scores, double temperature) {
  std::vector<double> out(scores.size());
  if (scores.empty()) return out;
  const double top = *std::max_element(scores.begin(), scores.end()) / temperature;
  double sum = 0.0;
  for (size_t k = 0; k < scores.size(); ++k) {
    out[k] = std::exp(scores[k] / temperature - top);
    sum += out[k];
  }
  for (double& v : out) v /= sum;
  return out;
}

Point2 heatmap_expectation(std::span<const double> heatmap, int window) {
  if (heatmap.size() != static_cast<size_t>(window) * window) {
    throw InvalidInput("heatmap size does not match window");
  }
  const int half = window / 2;
  Point2 e;
  for (int k = 0; k < window * window; ++k) {
    e.x += heatmap[k] * (k % window - half);
    e.y += heatmap[k] * (k / window - half);
  }
  return e;
}

Point2 coarse_cell_center(const FeaturePyramid& p, int cell) {
  const int row = cell / p.coarse.cols, col = cell % p.coarse.cols;
  return {(col + 0.5) * p.coarse_cell, (row + 0.5) * p.coarse_cell};
}

namespace {

struct WindowOffset {
  Point2 offset;  // in fine cells, relative to the window's nominal centre
  bool clamped = false;
};

// Expected position of the anchor vector of `from` inside a w x w window of
// `to` centred on (tr, tc).
WindowOffset expected_offset(const FeatureGrid& from, int fr, int fc, const FeatureGrid& to, int tr, int tc,
                             const MatchParams& params) {
  const int w = params.window;
  const int half = w / 2;
  const int row0 = std::clamp(tr - half, 0, to.rows - w);
  const int col0 = std::clamp(tc - half, 0, to.cols - w);

  const auto center = from.cell(fr, fc);
  std::vector<double> corr(static_cast<size_t>(w) * w);
  for (int dy = 0; dy < w; ++dy) {
    for (int dx = 0; dx < w; ++dx) corr[dy * w + dx] = dot(center, to.cell(row0 + dy, col0 + dx));
  }
  const auto heatmap = softmax(corr, params.heatmap_temperature);

  WindowOffset out;
  for (int k = 0; k < w * w; ++k) {
    out.offset.x += heatmap[k] * (col0 + k % w - tc);
    out.offset.y += heatmap[k] * (row0 + k / w - tr);
  }
  out.clamped = row0 != tr - half || col0 != tc - half;
  return out;
}

}  // namespace

FineMatch refine_match(const CoarseMatch& match, const FeaturePyramid& a, const FeaturePyramid& b,
                       const MatchParams& params) {
  const int w = params.window;
  const int ratio = a.coarse_cell / a.fine_cell;
  if (b.fine.rows < w || b.fine.cols < w) throw InvalidInput("fine grid smaller than refinement window");
  if (params.symmetric_refinement && (a.fine.rows < w || a.fine.cols < w)) {
    throw InvalidInput("fine grid smaller than refinement window");
  }

  // The fine cell whose top-left corner sits on the coarse cell centre.
  auto anchor = [ratio](const FeaturePyramid& p, int cell) {
    const int row = cell / p.coarse.cols, col = cell % p.coarse.cols;
    return std::pair{std::min(row * ratio + ratio / 2, p.fine.rows - 1),
                     std::min(col * ratio + ratio / 2, p.fine.cols - 1)};
  };
  const auto [ar, ac] = anchor(a, match.cell_a);
  const auto [br, bc] = anchor(b, match.cell_b);

  const WindowOffset forward = expected_offset(a.fine, ar, ac, b.fine, br, bc, params);
  Point2 offset = forward.offset;
  bool clamped = forward.clamped;
  if (params.symmetric_refinement) {
    // Average with the negated reverse estimate; texture-induced bias is
    // shared by both directions and cancels.
    const WindowOffset reverse = expected_offset(b.fine, br, bc, a.fine, ar, ac, params);
    offset.x = 0.5 * (forward.offset.x - reverse.offset.x);
    offset.y = 0.5 * (forward.offset.y - reverse.offset.y);
    clamped = clamped || reverse.clamped;
  }

  FineMatch out;
  out.point_a = coarse_cell_center(a, match.cell_a);
  const Point2 cb = coarse_cell_center(b, match.cell_b);
  out.point_b = {cb.x + offset.x * b.fine_cell, cb.y + offset.y * b.fine_cell};
  out.confidence = match.confidence;
  out.clamped = clamped;
  return out;
}

std::vector<FineMatch> match_pyramids(const FeaturePyramid& a, const FeaturePyramid& b, const MatchParams& params) {
  params.validate();
  if (a.fine.dims != b.fine.dims) {
    throw ShapeError(fmt::format("fine descriptor dimensions differ: {} vs {}", a.fine.dims, b.fine.dims));
  }
  const auto coarse = coarse_match(a.coarse, b.coarse, params.temperature, params.threshold);
  std::vector<FineMatch> fine;
  fine.reserve(coarse.size());
  for (const auto& m : coarse) fine.push_back(refine_match(m, a, b, params));
  return fine;
}

std::vector<FineMatch> match_pair(const Image& a, const Image& b, const FeatureBackend& backend,
                                  const MatchParams& params) {
  return match_pyramids(extract(a, backend), extract(b, backend), params);
}

std::string format_match_dump(std::span<const FineMatch> matches) {
  std::string out;
  for (const auto& m : matches) {
    out += fmt::format("{:.3f} {:.3f} {:.3f} {:.3f} {:.3f}\n", m.point_a.x, m.point_a.y, m.point_b.x, m.point_b.y,
                       m.confidence);
  }
  return out;
}

void write_match_dump(std::span<const FineMatch> matches, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  out << format_match_dump(matches);
  if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
}

}  // namespace parkloc
