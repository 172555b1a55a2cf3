#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "parkloc/image.hpp"
#include "parkloc/vehicle_filter.hpp"

namespace parkloc {

/// Parameters of a synthetic parking aisle: a row of sections rendered as one
/// panorama, photographed once for the gallery and once for the queries.
struct SceneSpec {
  std::uint64_t seed = 1;
  int n_sections = 8;
  int views_per_section = 1;
  int image_width = 320;
  int image_height = 240;
  /// Contrast of the section-specific wall, pillar and floor markings.
  double wall_texture_strength = 0.6;
  int vehicles_min = 1;
  int vehicles_max = 2;
  int slots_per_section = 3;
  /// Distinct vehicle appearances; vehicles reuse them across sections.
  int template_bank_size = 3;
  /// Probability that a parked vehicle is somewhere else in the query pass.
  double vehicle_churn = 0.0;
  double brightness_jitter = 0.0;  ///< max |offset| added to intensities
  double contrast_jitter = 0.0;    ///< max |gain - 1|
  double max_translation_px = 0.0;
  double max_rotation_deg = 0.0;
  /// A query whose centre lies within this fraction of a section width from a
  /// boundary also receives the neighbouring section as a label.
  double boundary_margin = 0.1;
  double detection_jitter_px = 0.0;
  double detection_miss_rate = 0.0;

  void validate() const;
  nlohmann::json to_json() const;
  static SceneSpec from_json(const nlohmann::json& j);
  static SceneSpec load(const std::filesystem::path& path);
};

struct SynthOutput {
  std::filesystem::path gallery_manifest;
  std::filesystem::path query_manifest;
  std::filesystem::path gallery_detections;
  std::filesystem::path query_detections;
  std::filesystem::path ground_truth;
  size_t n_gallery = 0;
  size_t n_queries = 0;
};

SynthOutput generate(const SceneSpec& spec, const std::filesystem::path& out_dir);

/// A rendered view plus the exact footprints of the vehicles it shows.
struct RenderedView {
  Image image;
  /// Vehicle coverage in [0,1] per pixel (for fidelity checks).
  Image vehicle_mask;
  DetectionSet detections;
  std::vector<std::string> labels;
};

/// In-memory rendering used by generate(); `query` selects the second pass.
std::vector<RenderedView> render_pass(const SceneSpec& spec, bool query);

}  // namespace parkloc
