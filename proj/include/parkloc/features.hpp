#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "parkloc/image.hpp"

namespace parkloc {

class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dense grid of descriptors, row-major, `dims` floats per cell.
/// A zero vector marks a textureless cell.
struct FeatureGrid {
  int rows = 0;
  int cols = 0;
  int dims = 0;
  std::vector<float> data;

  FeatureGrid() = default;
  FeatureGrid(int rows_, int cols_, int dims_)
      : rows(rows_), cols(cols_), dims(dims_), data(static_cast<size_t>(rows_) * cols_ * dims_, 0.0f) {}

  int cells() const { return rows * cols; }
  int index(int row, int col) const { return row * cols + col; }

  std::span<const float> cell(int i) const {
    return {data.data() + static_cast<size_t>(i) * dims, static_cast<size_t>(dims)};
  }
  std::span<float> cell(int i) { return {data.data() + static_cast<size_t>(i) * dims, static_cast<size_t>(dims)}; }
  std::span<const float> cell(int row, int col) const { return cell(index(row, col)); }
  std::span<float> cell(int row, int col) { return cell(index(row, col)); }

  bool textureless(int i) const;

  bool operator==(const FeatureGrid&) const = default;
};

/// L2-normalizes every cell in place; cells with norm below `epsilon` become
/// exact zero vectors. Idempotent.
void renormalize(FeatureGrid& grid, double epsilon = 1e-12);

struct FeaturePyramid {
  FeatureGrid coarse;  ///< 1/kCoarseCell resolution
  FeatureGrid fine;    ///< 1/kFineCell resolution
  int coarse_cell = kCoarseCell;
  int fine_cell = kFineCell;
  std::string source_id;

  bool operator==(const FeaturePyramid&) const = default;
};

enum class BackendKind { kBuiltinHog, kInjectedFile };

std::string to_string(BackendKind kind);
BackendKind backend_kind_from_string(const std::string& name);

struct FeatureBackend {
  BackendKind kind = BackendKind::kBuiltinHog;
  int coarse_dims = 32;
  int fine_dims = 32;
  /// Injected backend: directory holding `<source_id>.pklf` files.
  std::filesystem::path injected_dir;
  /// Builtin backend: windows whose mean gradient magnitude per pixel falls
  /// below this are textureless.
  double min_gradient_energy = 5e-3;

  static FeatureBackend builtin() { return {}; }
  static FeatureBackend injected(std::filesystem::path dir, int coarse_dims, int fine_dims);
};

/// Builtin descriptor post-processing: L2 normalize, subtract the mean
/// component, L2 normalize again. Returns false (and zeros) if textureless.
bool finalize_descriptor(std::span<const double> raw, std::span<float> out, double min_energy);

FeaturePyramid extract(const Image& image, const FeatureBackend& backend);

/// Binary pyramid file ("PKLF"). Level 0 is coarse, level 1 is fine.
void save_pyramid(const FeaturePyramid& pyramid, const std::filesystem::path& path);
FeaturePyramid load_pyramid(const std::filesystem::path& path);

inline constexpr std::uint32_t kPyramidFormatVersion = 1;
/// Header bytes for a pyramid file with `levels` levels.
constexpr size_t pyramid_header_bytes(size_t levels) { return 4 + 4 + 4 + levels * 12; }

}  // namespace parkloc
