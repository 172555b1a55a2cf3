#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "parkloc/matcher.hpp"

namespace parkloc {

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::filesystem::path& file, int line, const std::string& what);
  int line() const { return line_; }

 private:
  int line_;
};

/// Axis-aligned box in pixel coordinates. Edges are part of the box.
struct BoundingBox {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;
  std::string class_label;
  double score = 1.0;

  bool valid() const { return x_min < x_max && y_min < y_max; }
  bool contains(Point2 p) const { return p.x >= x_min && p.x <= x_max && p.y >= y_min && p.y <= y_max; }
  BoundingBox scaled(double factor) const;

  bool operator==(const BoundingBox&) const = default;
};

struct DetectionSet {
  std::string source_id;
  std::vector<BoundingBox> boxes;

  bool contains(Point2 p) const;
  bool operator==(const DetectionSet&) const = default;
};

using DetectionMap = std::map<std::string, DetectionSet>;

inline const std::set<std::string>& default_vehicle_classes() {
  static const std::set<std::string> classes{"car", "truck", "bus", "motorcycle"};
  return classes;
}

struct DetectionOptions {
  std::set<std::string> classes = default_vehicle_classes();
  double min_score = 0.5;
  /// Per source_id factor mapping original-image pixels to preprocessed pixels.
  /// Missing ids are left unscaled.
  std::map<std::string, double> scale;
  /// Ids known to the caller; others produce a warning but are kept.
  std::set<std::string> known_ids;
};

/// Parse "source_id class score x_min y_min x_max y_max" records.
/// Blank lines and '#' comments are skipped.
DetectionMap parse_detections(std::string_view text, const DetectionOptions& options,
                              std::vector<std::string>* warnings = nullptr,
                              const std::filesystem::path& origin = "<memory>");

DetectionMap load_detections(const std::filesystem::path& path, const DetectionOptions& options,
                             std::vector<std::string>* warnings = nullptr);

/// Serialize in the same record format. Scores/coordinates use shortest
/// round-trip notation so parsing reproduces the values exactly.
std::string format_detections(const DetectionSet& set);

enum class FilterMode {
  kEitherEndpoint,  ///< drop if point_a or point_b lies on a vehicle
  kBothEndpoints,   ///< drop only if both do
};

std::string to_string(FilterMode mode);
FilterMode filter_mode_from_string(const std::string& name);

/// Keeps matches whose endpoints avoid the vehicle boxes; order preserved.
std::vector<FineMatch> filter_matches(std::span<const FineMatch> matches, const DetectionSet& det_a,
                                      const DetectionSet& det_b, FilterMode mode = FilterMode::kEitherEndpoint);

size_t count_surviving(std::span<const FineMatch> matches, const DetectionSet& det_a, const DetectionSet& det_b,
                       FilterMode mode = FilterMode::kEitherEndpoint);

}  // namespace parkloc
