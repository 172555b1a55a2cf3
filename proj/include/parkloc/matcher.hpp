#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "parkloc/features.hpp"

namespace parkloc {

struct CoarseMatch {
  int cell_a = 0;  ///< row-major index into A's coarse grid
  int cell_b = 0;
  double confidence = 0.0;

  bool operator==(const CoarseMatch&) const = default;
};

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  bool operator==(const Point2&) const = default;
};

struct FineMatch {
  Point2 point_a;  ///< image-A pixels, continuous coords (pixel k spans [k, k+1))
  Point2 point_b;
  double confidence = 0.0;
  bool clamped = false;  ///< B's refinement window was shifted to stay inside the grid
};

struct MatchParams {
  double temperature = 0.1;
  double threshold = 0.2;
  int window = 5;
  /// Softmax temperature applied to fine correlations before the expectation.
  double heatmap_temperature = 0.1;
  /// Also refine from B into A and average the two estimates.
  bool symmetric_refinement = true;

  void validate() const;
};

/// Dual-softmax + mutual nearest neighbour + threshold over two descriptor
/// grids of equal dimensionality. Textureless (zero) cells never match.
/// Output is sorted by cell_a.
std::vector<CoarseMatch> coarse_match(const FeatureGrid& a, const FeatureGrid& b, double temperature,
                                      double threshold);

inline std::vector<CoarseMatch> coarse_match(const FeaturePyramid& a, const FeaturePyramid& b,
                                             double temperature, double threshold) {
  return coarse_match(a.coarse, b.coarse, temperature, threshold);
}

/// Numerically stable softmax of `scores / temperature`.
std::vector<double> softmax(std::span<const double> scores, double temperature);

/// Expected (dx, dy) cell offset from the window centre under a row-major
/// w x w heatmap.
Point2 heatmap_expectation(std::span<const double> heatmap, int window);

/// Fine-level subpixel refinement of one coarse match.
FineMatch refine_match(const CoarseMatch& match, const FeaturePyramid& a, const FeaturePyramid& b,
                       const MatchParams& params);

std::vector<FineMatch> match_pyramids(const FeaturePyramid& a, const FeaturePyramid& b, const MatchParams& params);

std::vector<FineMatch> match_pair(const Image& a, const Image& b, const FeatureBackend& backend,
                                  const MatchParams& params);

/// Pixel centre of a coarse cell.
Point2 coarse_cell_center(const FeaturePyramid& p, int cell);

/// One "xa ya xb yb conf" line per match, 3-decimal fixed point.
std::string format_match_dump(std::span<const FineMatch> matches);
void write_match_dump(std::span<const FineMatch> matches, const std::filesystem::path& path);

}  // namespace parkloc
