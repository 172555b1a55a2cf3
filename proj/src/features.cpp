#include "parkloc/features.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>

#include <fmt/format.h>

namespace parkloc {
namespace {

constexpr int kBins = 8;
constexpr int kHistDims = 4 * kBins;  // 2x2 subcells
constexpr int kCoarseWindow = 16;
constexpr int kFineWindow = 8;

// Per-pixel gradient split into two adjacent orientation bins.
struct OrientedGradient {
  std::uint8_t bin0 = 0;
  std::uint8_t bin1 = 0;
  double w0 = 0.0;
  double w1 = 0.0;
};

OrientedGradient pixel_gradient(const Image& image, int x, int y) {
  const int xl = std::max(x - 1, 0), xr = std::min(x + 1, image.width - 1);
  const int yu = std::max(y - 1, 0), yd = std::min(y + 1, image.height - 1);
  const double gx = 0.5 * (static_cast<double>(image.at(xr, y)) - image.at(xl, y));
  const double gy = 0.5 * (static_cast<double>(image.at(x, yd)) - image.at(x, yu));
  const double magnitude = std::hypot(gx, gy);
  OrientedGradient g;
  if (magnitude == 0.0) return g;

  double angle = std::atan2(gy, gx);
  if (angle < 0.0) angle += 2.0 * std::numbers::pi;
  const double pos = angle / (2.0 * std::numbers::pi / kBins);
  const int lower = static_cast<int>(std::floor(pos));
  const double frac = pos - lower;
  g.bin0 = static_cast<std::uint8_t>(lower % kBins);
  g.bin1 = static_cast<std::uint8_t>((lower + 1) % kBins);
  g.w0 = magnitude * (1.0 - frac);
  g.w1 = magnitude * frac;
  return g;
}

std::vector<OrientedGradient> gradient_field(const Image& image) {
  std::vector<OrientedGradient> field(image.pixels.size());
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      field[static_cast<size_t>(y) * image.width + x] = pixel_gradient(image, x, y);
    }
  }
  return field;
}

void accumulate_window(const std::vector<OrientedGradient>& field, int width, int height, int x0, int y0,
                       int size, std::span<double> hist) {
  std::fill(hist.begin(), hist.end(), 0.0);
  const int half = size / 2;
  for (int y = std::max(y0, 0); y < std::min(y0 + size, height); ++y) {
    const int sy = (y - y0) >= half ? 1 : 0;
    for (int x = std::max(x0, 0); x < std::min(x0 + size, width); ++x) {
      const int sx = (x - x0) >= half ? 1 : 0;
      const auto& g = field[static_cast<size_t>(y) * width + x];
      const int base = (sy * 2 + sx) * kBins;
      hist[base + g.bin0] += g.w0;
      hist[base + g.bin1] += g.w1;
    }
  }
}

FeatureGrid builtin_grid(const std::vector<OrientedGradient>& field, const Image& image, int cell, int window,
                         double min_energy) {
  FeatureGrid grid(image.height / cell, image.width / cell, kHistDims);
  const int margin = (window - cell) / 2;
  std::array<double, kHistDims> hist{};
  for (int r = 0; r < grid.rows; ++r) {
    for (int c = 0; c < grid.cols; ++c) {
      accumulate_window(field, image.width, image.height, c * cell - margin, r * cell - margin, window, hist);
      double mass = 0.0;
      for (double v : hist) mass += v;
      const double mean_gradient = mass / (window * window);
      auto out = grid.cell(r, c);
      if (mean_gradient < min_energy) continue;
      finalize_descriptor(hist, out, 0.0);
    }
  }
  return grid;
}

// Little-endian helpers.
void put_u32(std::string& buf, std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) v = __builtin_bswap32(v);
  char bytes[4];
  std::memcpy(bytes, &v, 4);
  buf.append(bytes, 4);
}

std::uint32_t get_u32(const char* p) {
  std::uint32_t v;
  std::memcpy(&v, p, 4);
  if constexpr (std::endian::native == std::endian::big) v = __builtin_bswap32(v);
  return v;
}

void put_floats(std::string& buf, const std::vector<float>& values) {
  const size_t offset = buf.size();
  buf.resize(offset + values.size() * 4);
  for (size_t i = 0; i < values.size(); ++i) {
    std::uint32_t bits = std::bit_cast<std::uint32_t>(values[i]);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
    std::memcpy(buf.data() + offset + 4 * i, &bits, 4);
  }
}

constexpr char kMagic[4] = {'P', 'K', 'L', 'F'};
constexpr std::uint32_t kMaxExtent = 1u << 16;

}  // namespace

bool FeatureGrid::textureless(int i) const {
  const auto v = cell(i);
  return std::all_of(v.begin(), v.end(), [](float x) { return x == 0.0f; });
}

void renormalize(FeatureGrid& grid, double epsilon) {
  for (int i = 0; i < grid.cells(); ++i) {
    auto v = grid.cell(i);
    double sq = 0.0;
    for (float x : v) sq += static_cast<double>(x) * x;
    const double norm = std::sqrt(sq);
    if (norm < epsilon) {
      std::fill(v.begin(), v.end(), 0.0f);
    } else if (std::abs(norm - 1.0) > 1e-6) {
      for (float& x : v) x = static_cast<float>(x / norm);
    }
  }
}

std::string to_string(BackendKind kind) {
  return kind == BackendKind::kBuiltinHog ? "builtin-hog" : "injected-file";
}

BackendKind backend_kind_from_string(const std::string& name) {
  if (name == "builtin-hog") return BackendKind::kBuiltinHog;
  if (name == "injected-file") return BackendKind::kInjectedFile;
  throw InvalidInput(fmt::format("unknown feature backend '{}'", name));
}

FeatureBackend FeatureBackend::injected(std::filesystem::path dir, int coarse_dims, int fine_dims) {
  FeatureBackend b;
  b.kind = BackendKind::kInjectedFile;
  b.injected_dir = std::move(dir);
  b.coarse_dims = coarse_dims;
  b.fine_dims = fine_dims;
  return b;
}

bool finalize_descriptor(std::span<const double> raw, std::span<float> out, double min_energy) {
  std::fill(out.begin(), out.end(), 0.0f);
  double sq = 0.0;
  for (double v : raw) sq += v * v;
  const double norm = std::sqrt(sq);
  if (norm <= min_energy || norm == 0.0) return false;

  std::vector<double> v(raw.begin(), raw.end());
  double mean = 0.0;
  for (double& x : v) {
    x /= norm;
    mean += x;
  }
  mean /= static_cast<double>(v.size());
  double centered_sq = 0.0;
  for (double& x : v) {
    x -= mean;
    centered_sq += x * x;
  }
  const double centered_norm = std::sqrt(centered_sq);
  if (centered_norm < 1e-9) return false;
  for (size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i] / centered_norm);
  return true;
}

FeaturePyramid extract(const Image& image, const FeatureBackend& backend) {
  if (image.width % kCoarseCell != 0 || image.height % kCoarseCell != 0 || image.empty()) {
    throw InvalidInput(fmt::format("image {}x{} does not tile into {} px cells", image.width, image.height,
                                   kCoarseCell));
  }
  const int coarse_rows = image.height / kCoarseCell, coarse_cols = image.width / kCoarseCell;
  const int fine_rows = image.height / kFineCell, fine_cols = image.width / kFineCell;

  FeaturePyramid pyramid;
  pyramid.source_id = image.source_id;

  if (backend.kind == BackendKind::kBuiltinHog) {
    const auto field = gradient_field(image);
    pyramid.coarse = builtin_grid(field, image, kCoarseCell, kCoarseWindow, backend.min_gradient_energy);
    pyramid.fine = builtin_grid(field, image, kFineCell, kFineWindow, backend.min_gradient_energy);
    return pyramid;
  }

  const auto path = backend.injected_dir / (image.source_id + ".pklf");
  FeaturePyramid loaded = load_pyramid(path);
  auto check = [&](const FeatureGrid& g, int rows, int cols, int dims, const char* level) {
    if (g.rows != rows || g.cols != cols || g.dims != dims) {
      throw ShapeError(fmt::format("injected {} grid for '{}' is {}x{}x{}, expected {}x{}x{}", level,
                                   image.source_id, g.rows, g.cols, g.dims, rows, cols, dims));
    }
  };
  check(loaded.coarse, coarse_rows, coarse_cols, backend.coarse_dims, "coarse");
  check(loaded.fine, fine_rows, fine_cols, backend.fine_dims, "fine");
  renormalize(loaded.coarse);
  renormalize(loaded.fine);
  loaded.source_id = image.source_id;
  return loaded;
}

void save_pyramid(const FeaturePyramid& pyramid, const std::filesystem::path& path) {
  std::string buf;
  buf.reserve(pyramid_header_bytes(2) + 4 * (pyramid.coarse.data.size() + pyramid.fine.data.size()));
  buf.append(kMagic, 4);
  put_u32(buf, kPyramidFormatVersion);
  put_u32(buf, 2);
  for (const FeatureGrid* g : {&pyramid.coarse, &pyramid.fine}) {
    put_u32(buf, static_cast<std::uint32_t>(g->rows));
    put_u32(buf, static_cast<std::uint32_t>(g->cols));
    put_u32(buf, static_cast<std::uint32_t>(g->dims));
  }
  put_floats(buf, pyramid.coarse.data);
  put_floats(buf, pyramid.fine.data);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error(fmt::format("cannot write pyramid '{}'", path.string()));
}

FeaturePyramid load_pyramid(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(fmt::format("cannot open pyramid '{}'", path.string()));
  const std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  auto fail = [&](const std::string& why) {
    return FormatError(fmt::format("pyramid '{}': {}", path.string(), why));
  };
  if (buf.size() < pyramid_header_bytes(0)) throw fail("truncated header");
  if (std::memcmp(buf.data(), kMagic, 4) != 0) throw fail("bad magic");
  if (get_u32(buf.data() + 4) != kPyramidFormatVersion) throw fail("unsupported version");
  const std::uint32_t levels = get_u32(buf.data() + 8);
  if (levels != 2) throw fail(fmt::format("expected 2 levels, found {}", levels));
  if (buf.size() < pyramid_header_bytes(levels)) throw fail("truncated header");

  FeaturePyramid pyramid;
  size_t payload = 0;
  std::array<FeatureGrid*, 2> grids{&pyramid.coarse, &pyramid.fine};
  for (std::uint32_t l = 0; l < levels; ++l) {
    const char* p = buf.data() + 12 + 12 * l;
    const std::uint32_t rows = get_u32(p), cols = get_u32(p + 4), dims = get_u32(p + 8);
    if (rows == 0 || cols == 0 || dims == 0 || rows > kMaxExtent || cols > kMaxExtent || dims > kMaxExtent) {
      throw fail(fmt::format("invalid level {} shape {}x{}x{}", l, rows, cols, dims));
    }
    *grids[l] = FeatureGrid(static_cast<int>(rows), static_cast<int>(cols), static_cast<int>(dims));
    payload += static_cast<size_t>(rows) * cols * dims * 4;
  }
  if (buf.size() != pyramid_header_bytes(levels) + payload) {
    throw fail(fmt::format("payload is {} bytes, header declares {}", buf.size() - pyramid_header_bytes(levels),
                           payload));
  }

  const char* p = buf.data() + pyramid_header_bytes(levels);
  for (FeatureGrid* g : grids) {
    for (float& v : g->data) {
      v = std::bit_cast<float>(get_u32(p));
      p += 4;
    }
  }
  pyramid.source_id = path.stem().string();
  return pyramid;
}

}  // namespace parkloc
