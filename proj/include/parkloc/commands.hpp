#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "parkloc/config.hpp"
#include "parkloc/synth.hpp"

namespace parkloc {

/// Where commands report warnings and progress.
struct CommandLog {
  std::ostream* info = nullptr;  ///< summaries; may be null
  std::ostream* warn = nullptr;  ///< warnings; may be null
  bool verbose = false;
};

void cmd_index(const RunConfig& config, const std::filesystem::path& manifest,
               const std::filesystem::path& detections, const std::filesystem::path& out_dir,
               const CommandLog& log = {});

struct MatchSummary {
  size_t matches = 0;
  size_t surviving = 0;  ///< after the vehicle filter; equals `matches` without detections
  size_t coarse_cells_a = 0;
  size_t textured_cells_a = 0;
};

/// Match two images; writes the dump when `dump_path` is non-empty.
/// `detections` (optional) supplies boxes for either image by source id
/// (file stem).
MatchSummary cmd_match(const RunConfig& config, const std::filesystem::path& image_a,
                       const std::filesystem::path& image_b, const std::filesystem::path& dump_path,
                       const std::filesystem::path& detections = {}, const CommandLog& log = {});

/// Companion file of a results file holding per-entry counts.
std::filesystem::path counts_path_for(const std::filesystem::path& results);

void cmd_localize(const RunConfig& config, const std::filesystem::path& query_manifest,
                  const std::filesystem::path& detections, const std::filesystem::path& index_dir,
                  const std::filesystem::path& results, const CommandLog& log = {});

struct EvaluateOutput {
  EvalReport report;
  std::optional<EvalReport> without_filter;
};

EvaluateOutput cmd_evaluate(const RunConfig& config, const std::filesystem::path& results,
                            const std::filesystem::path& query_manifest, const std::filesystem::path& out_dir,
                            bool ablation, const CommandLog& log = {});

SynthOutput cmd_synth(const std::filesystem::path& scene_spec, const std::filesystem::path& out_dir,
                      const CommandLog& log = {});

}  // namespace parkloc
