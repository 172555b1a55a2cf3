#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <vector>

#include "parkloc/features.hpp"
#include "parkloc/image.hpp"
#include "parkloc/matcher.hpp"

namespace testing {

// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::mt19937_64 rng(std::random_device{}());
    path_ = std::filesystem::temp_directory_path() / ("parkloc-" + tag + "-" + std::to_string(rng()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

inline void write_bytes(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << bytes;
}

// Band-limited random texture: a sum of plane waves, evaluated at continuous
// coordinates so that exact subpixel translates can be rendered.
class WaveTexture {
 public:
  WaveTexture(std::uint32_t seed, double freq_lo = 0.15, double freq_span = 0.6, int waves = 60) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int k = 0; k < waves; ++k) {
      const double f = freq_lo + freq_span * u(rng), th = 2.0 * M_PI * u(rng);
      waves_.push_back({f * std::cos(th), f * std::sin(th), 2.0 * M_PI * u(rng), u(rng)});
    }
  }

  double operator()(double x, double y) const {
    double s = 0.0;
    for (const auto& w : waves_) s += w[3] * std::sin(w[0] * x + w[1] * y + w[2]);
    return 0.5 + 0.04 * s;
  }

  // Image whose content is this texture moved by (dx, dy) pixels.
  parkloc::Image render(int width, int height, double dx = 0.0, double dy = 0.0) const {
    parkloc::Image img;
    img.width = width;
    img.height = height;
    img.pixels.resize(static_cast<size_t>(width) * height);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        img.at(x, y) = static_cast<float>(std::clamp((*this)(x + 0.5 - dx, y + 0.5 - dy), 0.0, 1.0));
      }
    }
    return img;
  }

 private:
  std::vector<std::array<double, 4>> waves_;
};

inline parkloc::Image noise_image(int width, int height, std::uint32_t seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  parkloc::Image img;
  img.width = width;
  img.height = height;
  img.pixels.resize(static_cast<size_t>(width) * height);
  for (float& v : img.pixels) v = u(rng);
  return img;
}

// Unit-norm random descriptors; roughly `zero_fraction` of the cells are zero.
inline parkloc::FeatureGrid random_grid(int rows, int cols, int dims, std::mt19937_64& rng,
                                        double zero_fraction = 0.0) {
  parkloc::FeatureGrid g(rows, cols, dims);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < g.cells(); ++i) {
    if (u(rng) < zero_fraction) continue;
    auto c = g.cell(i);
    double norm = 0.0;
    std::vector<double> v(static_cast<size_t>(dims));
    for (double& x : v) {
      x = n(rng);
      norm += x * x;
    }
    norm = std::sqrt(norm);
    for (int k = 0; k < dims; ++k) c[k] = static_cast<float>(v[k] / norm);
  }
  return g;
}

// Dual-softmax over the full similarity matrix, computed directly.
inline std::vector<parkloc::CoarseMatch> brute_force_coarse(const parkloc::FeatureGrid& a,
                                                            const parkloc::FeatureGrid& b, double temperature,
                                                            double threshold) {
  std::vector<int> ra, rb;
  for (int i = 0; i < a.cells(); ++i)
    if (!a.textureless(i)) ra.push_back(i);
  for (int j = 0; j < b.cells(); ++j)
    if (!b.textureless(j)) rb.push_back(j);
  const size_t n = ra.size(), m = rb.size();
  if (n == 0 || m == 0) return {};

  std::vector<std::vector<double>> s(n, std::vector<double>(m));
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = 0; j < m; ++j) {
      double d = 0.0;
      for (int k = 0; k < a.dims; ++k) d += static_cast<double>(a.cell(ra[i])[k]) * b.cell(rb[j])[k];
      s[i][j] = d / temperature;
    }
  }
  // Row and column softmax normalizers; P(i,j) = row(i,j) * col(i,j).
  std::vector<double> row_max(n, -1e300), row_z(n, 0.0), col_max(m, -1e300), col_z(m, 0.0);
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < m; ++j) {
      row_max[i] = std::max(row_max[i], s[i][j]);
      col_max[j] = std::max(col_max[j], s[i][j]);
    }
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < m; ++j) {
      row_z[i] += std::exp(s[i][j] - row_max[i]);
      col_z[j] += std::exp(s[i][j] - col_max[j]);
    }
  auto prob = [&](size_t i, size_t j) {
    return std::exp(s[i][j] - row_max[i]) / row_z[i] * (std::exp(s[i][j] - col_max[j]) / col_z[j]);
  };

  std::vector<parkloc::CoarseMatch> out;
  for (size_t i = 0; i < n; ++i) {
    size_t best_j = 0;
    double p = prob(i, 0);
    for (size_t j = 1; j < m; ++j) {
      const double v = prob(i, j);
      if (v > p) {
        p = v;
        best_j = j;
      }
    }
    bool mutual = true;
    for (size_t k = 0; k < n && mutual; ++k)
      if (k != i && prob(k, best_j) >= p) mutual = false;
    if (mutual && p > threshold) out.push_back({ra[i], rb[best_j], p});
  }
  return out;
}

// Pair sets equal and confidences agree to `tol`.
inline bool same_matches(const std::vector<parkloc::CoarseMatch>& x, const std::vector<parkloc::CoarseMatch>& y,
                         double tol = 1e-9) {
  if (x.size() != y.size()) return false;
  for (size_t k = 0; k < x.size(); ++k) {
    if (x[k].cell_a != y[k].cell_a || x[k].cell_b != y[k].cell_b) return false;
    if (std::abs(x[k].confidence - y[k].confidence) > tol) return false;
  }
  return true;
}

inline double median(std::vector<double> v) {
  if (v.empty()) return NAN;
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Median endpoint error of unclamped matches against a known translation.
inline double median_translation_error(const std::vector<parkloc::FineMatch>& matches, double dx, double dy) {
  std::vector<double> err;
  for (const auto& m : matches) {
    if (m.clamped) continue;
    err.push_back(std::hypot(m.point_b.x - m.point_a.x - dx, m.point_b.y - m.point_a.y - dy));
  }
  return median(err);
}

}  // namespace testing
