#pragma once

#include <filesystem>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "parkloc/evaluation.hpp"

namespace parkloc {

/// All tunables of a run. Field names double as CLI flag names
/// (underscores become dashes) and config-file keys.
struct RunConfig {
  std::string backend = "builtin-hog";
  std::string injected_dir;
  int coarse_dims = 32;
  int fine_dims = 32;
  double min_gradient_energy = 5e-3;
  double temperature = 0.1;
  double threshold = 0.2;
  int window = 5;
  double heatmap_temperature = 0.1;
  bool symmetric_refinement = true;
  double min_score = 0.5;
  std::set<std::string> vehicle_classes = default_vehicle_classes();
  bool use_vehicle_filter = true;
  std::string filter_mode = "either";
  int target_long_side = kDefaultLongSide;
  int histogram_bins = kDefaultHistogramBins;
  int jobs = 1;
  bool verbose = false;

  /// Throws InvalidInput naming the first out-of-range field.
  void validate() const;

  /// Result-affecting fields only; `jobs` and `verbose` are excluded so that
  /// artifacts do not depend on scheduling.
  nlohmann::json to_json() const;
  /// Overlays keys present in `j`; unknown keys are an error.
  void merge_json(const nlohmann::json& j);
  static RunConfig load(const std::filesystem::path& path);

  BuildParams build_params() const;
  LocalizeParams localize_params() const;

  /// "# config: {...}\n", prepended to every text artifact.
  std::string echo() const;
};

}  // namespace parkloc
