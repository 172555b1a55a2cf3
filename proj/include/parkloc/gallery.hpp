#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "parkloc/features.hpp"
#include "parkloc/matcher.hpp"
#include "parkloc/vehicle_filter.hpp"

namespace parkloc {

class IndexError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One manifest line: "source_id image_path section_id [section_id_2]".
struct ManifestRecord {
  std::string source_id;
  std::string image_path;          ///< as written in the manifest
  std::filesystem::path resolved;  ///< relative paths resolved against the manifest directory
  std::vector<std::string> labels;
  int line = 0;
};

std::vector<ManifestRecord> parse_manifest(std::string_view text, const std::filesystem::path& base_dir,
                                           const std::filesystem::path& origin = "<memory>");
std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path);

/// Everything that affects the content of an index or of match results.
struct BuildParams {
  FeatureBackend backend;
  MatchParams match;
  int target_long_side = kDefaultLongSide;
  std::set<std::string> vehicle_classes = default_vehicle_classes();
  double min_score = 0.5;

  nlohmann::json to_json() const;
  static BuildParams from_json(const nlohmann::json& j);
  /// 16 hex digits of FNV-1a over the canonical JSON.
  std::string fingerprint() const;
};

struct GalleryEntry {
  std::string source_id;
  std::string section_id;
  FeaturePyramid pyramid;
  DetectionSet detections;
  Resolution original_resolution;
  double scale = 1.0;

  int width() const { return pyramid.coarse.cols * pyramid.coarse_cell; }
  int height() const { return pyramid.coarse.rows * pyramid.coarse_cell; }
  bool operator==(const GalleryEntry&) const = default;
};

struct GalleryIndex {
  std::vector<GalleryEntry> entries;  ///< manifest order
  std::vector<std::string> sections;  ///< distinct section ids, first-appearance order
  BuildParams build_params;

  bool operator==(const GalleryIndex& other) const;
};

inline constexpr int kIndexFormatVersion = 1;

/// Drops boxes that miss the image rectangle, reporting each one.
void clip_to_image(DetectionSet& set, int width, int height, std::vector<std::string>* warnings);

/// Builds the index and persists it under `out_dir`.
/// `detections_path` may be empty (every entry then gets an empty set).
GalleryIndex build_index(const std::filesystem::path& manifest_path, const BuildParams& params,
                         const std::filesystem::path& detections_path, const std::filesystem::path& out_dir,
                         int jobs = 1, std::vector<std::string>* warnings = nullptr);

void save_index(const GalleryIndex& index, const std::filesystem::path& out_dir,
                const std::filesystem::path& manifest_copy_from = {});

/// When `expected` is given: a backend or descriptor-size mismatch is an
/// error, other parameter differences are reported as warnings.
GalleryIndex load_index(const std::filesystem::path& dir, const BuildParams* expected = nullptr,
                        std::vector<std::string>* warnings = nullptr);

}  // namespace parkloc
