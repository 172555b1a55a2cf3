#pragma once

#include <span>
#include <string>
#include <vector>

#include "parkloc/gallery.hpp"

namespace parkloc {

struct LocalizationResult {
  std::string query_id;
  std::vector<size_t> counts;      ///< per entry, after the vehicle filter (if enabled)
  std::vector<size_t> raw_counts;  ///< per entry, before filtering
  size_t best_index = 0;
  std::string best_entry;
  std::string predicted_section;
  size_t best_count = 0;
  size_t second_count = 0;
  double second_best_ratio = 0.0;
  bool low_confidence = false;  ///< no entry produced a single match

  bool operator==(const LocalizationResult&) const = default;
};

/// Argmax with ties broken towards the lower index.
struct Selection {
  size_t best_index = 0;
  size_t best_count = 0;
  size_t second_count = 0;
  double ratio = 0.0;  ///< second/best, 0 when best is 0
  bool low_confidence = false;
};

Selection select_best(std::span<const size_t> counts);

struct LocalizeParams {
  MatchParams match;
  bool use_vehicle_filter = true;
  FilterMode filter_mode = FilterMode::kEitherEndpoint;
  int jobs = 1;
};

/// A preprocessed query ready for matching.
struct Query {
  std::string id;
  FeaturePyramid pyramid;
  DetectionSet detections;
  std::vector<std::string> labels;
};

/// Load, preprocess and extract every record of a query manifest.
/// Detections (optional path) are rescaled into the preprocessed frame.
std::vector<Query> prepare_queries(const std::vector<ManifestRecord>& records, const BuildParams& params,
                                   const std::filesystem::path& detections_path, int jobs,
                                   std::vector<std::string>* warnings = nullptr);

/// Unfiltered matches of one query against every entry, in entry order.
std::vector<std::vector<FineMatch>> match_against_index(const FeaturePyramid& query, const GalleryIndex& index,
                                                        const MatchParams& params, int jobs);

/// Counts (optionally filtered) matches per entry and applies the argmax criterion.
LocalizationResult score_matches(const std::string& query_id, const std::vector<std::vector<FineMatch>>& matches,
                                 const DetectionSet& query_detections, const GalleryIndex& index,
                                 bool use_vehicle_filter, FilterMode mode = FilterMode::kEitherEndpoint);

/// Fills best/second/ratio/prediction fields from `result.counts`.
void apply_selection(LocalizationResult& result, const GalleryIndex& index);

LocalizationResult localize(const Query& query, const GalleryIndex& index, const LocalizeParams& params);

LocalizationResult localize(const Image& query, const DetectionSet& query_detections, const GalleryIndex& index,
                            const LocalizeParams& params);

/// "query_id predicted_section best_entry best_count second_count ratio"
std::string format_result_line(const LocalizationResult& result);

}  // namespace parkloc
