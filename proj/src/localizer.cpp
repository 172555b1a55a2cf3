#include "parkloc/localizer.hpp"

#include <set>

#include <fmt/format.h>

#include "parkloc/parallel.hpp"

namespace parkloc {

Selection select_best(std::span<const size_t> counts) {
  if (counts.empty()) throw InvalidInput("cannot localize against an empty index");
  Selection s;
  for (size_t i = 1; i < counts.size(); ++i) {
    if (counts[i] > counts[s.best_index]) s.best_index = i;
  }
  s.best_count = counts[s.best_index];
  for (size_t i = 0; i < counts.size(); ++i) {
    if (i != s.best_index) s.second_count = std::max(s.second_count, counts[i]);
  }
  s.low_confidence = s.best_count == 0;
  s.ratio = s.best_count == 0 ? 0.0 : static_cast<double>(s.second_count) / static_cast<double>(s.best_count);
  return s;
}

std::vector<Query> prepare_queries(const std::vector<ManifestRecord>& records, const BuildParams& params,
                                   const std::filesystem::path& detections_path, int jobs,
                                   std::vector<std::string>* warnings) {
  std::set<std::string> ids;
  for (const auto& r : records) {
    if (r.labels.empty() || r.labels.size() > 2) {
      throw InvalidInput(fmt::format("query '{}' must carry one or two labels", r.source_id));
    }
    if (!ids.insert(r.source_id).second) throw InvalidInput(fmt::format("duplicate query id '{}'", r.source_id));
  }

  std::vector<Query> queries(records.size());
  std::vector<Resolution> sizes(records.size());
  std::vector<double> scales(records.size());
  parallel_for(records.size(), jobs, [&](size_t i) {
    const auto loaded = load_image(records[i].resolved, params.target_long_side, records[i].source_id);
    queries[i].id = records[i].source_id;
    queries[i].labels = records[i].labels;
    queries[i].pyramid = extract(loaded.image, params.backend);
    queries[i].detections.source_id = records[i].source_id;
    sizes[i] = {loaded.image.width, loaded.image.height};
    scales[i] = loaded.scale;
  });

  if (!detections_path.empty()) {
    DetectionOptions options;
    options.classes = params.vehicle_classes;
    options.min_score = params.min_score;
    options.known_ids = ids;
    for (size_t i = 0; i < queries.size(); ++i) options.scale[queries[i].id] = scales[i];
    auto detections = load_detections(detections_path, options, warnings);
    for (size_t i = 0; i < queries.size(); ++i) {
      if (auto it = detections.find(queries[i].id); it != detections.end()) {
        queries[i].detections = std::move(it->second);
        clip_to_image(queries[i].detections, sizes[i].width, sizes[i].height, warnings);
      }
    }
  }
  return queries;
}

std::vector<std::vector<FineMatch>> match_against_index(const FeaturePyramid& query, const GalleryIndex& index,
                                                        const MatchParams& params, int jobs) {
  std::vector<std::vector<FineMatch>> matches(index.entries.size());
  parallel_for(index.entries.size(), jobs,
               [&](size_t e) { matches[e] = match_pyramids(query, index.entries[e].pyramid, params); });
  return matches;
}

void apply_selection(LocalizationResult& result, const GalleryIndex& index) {
  const Selection s = select_best(result.counts);
  result.best_index = s.best_index;
  result.best_entry = index.entries[s.best_index].source_id;
  result.predicted_section = index.entries[s.best_index].section_id;
  result.best_count = s.best_count;
  result.second_count = s.second_count;
  result.second_best_ratio = s.ratio;
  result.low_confidence = s.low_confidence;
}

LocalizationResult score_matches(const std::string& query_id, const std::vector<std::vector<FineMatch>>& matches,
                                 const DetectionSet& query_detections, const GalleryIndex& index,
                                 bool use_vehicle_filter, FilterMode mode) {
  if (matches.size() != index.entries.size()) throw InvalidInput("match table does not cover the index");
  LocalizationResult result;
  result.query_id = query_id;
  result.raw_counts.resize(matches.size());
  result.counts.resize(matches.size());
  for (size_t e = 0; e < matches.size(); ++e) {
    result.raw_counts[e] = matches[e].size();
    result.counts[e] = use_vehicle_filter
                           ? count_surviving(matches[e], query_detections, index.entries[e].detections, mode)
                           : matches[e].size();
  }
  apply_selection(result, index);
  return result;
}

LocalizationResult localize(const Query& query, const GalleryIndex& index, const LocalizeParams& params) {
  if (index.entries.empty()) throw InvalidInput("cannot localize against an empty index");
  const auto matches = match_against_index(query.pyramid, index, params.match, params.jobs);
  return score_matches(query.id, matches, query.detections, index, params.use_vehicle_filter, params.filter_mode);
}

LocalizationResult localize(const Image& query, const DetectionSet& query_detections, const GalleryIndex& index,
                            const LocalizeParams& params) {
  if (index.entries.empty()) throw InvalidInput("cannot localize against an empty index");
  Query q;
  q.id = query.source_id;
  q.pyramid = extract(query, index.build_params.backend);
  q.detections = query_detections;
  return localize(q, index, params);
}

std::string format_result_line(const LocalizationResult& r) {
  return fmt::format("{} {} {} {} {} {:.6f}", r.query_id, r.predicted_section, r.best_entry, r.best_count,
                     r.second_count, r.second_best_ratio);
}

}  // namespace parkloc
