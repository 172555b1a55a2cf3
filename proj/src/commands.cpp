#include "parkloc/commands.hpp"

#include <fstream>
#include <ostream>
#include <sstream>

#include <fmt/format.h>

#include "parkloc/parallel.hpp"

namespace parkloc {
namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
}

void flush_warnings(const CommandLog& log, const std::vector<std::string>& warnings) {
  if (!log.warn) return;
  for (const auto& w : warnings) *log.warn << "warning: " << w << "\n";
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, sep)) out.push_back(field);
  return out;
}

struct CountsTable {
  std::vector<std::string> entries;
  std::vector<std::string> sections;
  std::map<std::string, std::vector<size_t>> filtered;
  std::map<std::string, std::vector<size_t>> raw;
};

CountsTable read_counts(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(fmt::format("cannot open counts file '{}'", path.string()));
  CountsTable table;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    auto fields = split(line, ',');
    if (fields.size() < 2) throw ParseError(path, line_no, "too few fields");
    if (fields[0] == "entry" && table.entries.empty()) {
      table.entries.assign(fields.begin() + 1, fields.end());
      continue;
    }
    if (fields[0] == "section" && table.sections.empty()) {
      table.sections.assign(fields.begin() + 1, fields.end());
      continue;
    }
    if (fields.size() != table.entries.size() + 2) throw ParseError(path, line_no, "row width mismatch");
    std::vector<size_t> counts;
    for (size_t k = 2; k < fields.size(); ++k) counts.push_back(std::stoull(fields[k]));
    if (fields[1] == "filtered") {
      table.filtered[fields[0]] = std::move(counts);
    } else if (fields[1] == "raw") {
      table.raw[fields[0]] = std::move(counts);
    } else {
      throw ParseError(path, line_no, fmt::format("unknown row kind '{}'", fields[1]));
    }
  }
  if (table.entries.empty() || table.sections.size() != table.entries.size()) {
    throw std::runtime_error(fmt::format("counts file '{}' lacks entry/section header rows", path.string()));
  }
  return table;
}

LocalizationResult result_from_counts(const std::string& query_id, const std::vector<size_t>& counts,
                                      const std::vector<size_t>& raw, const CountsTable& table) {
  LocalizationResult r;
  r.query_id = query_id;
  r.counts = counts;
  r.raw_counts = raw;
  const Selection s = select_best(counts);
  r.best_index = s.best_index;
  r.best_entry = table.entries[s.best_index];
  r.predicted_section = table.sections[s.best_index];
  r.best_count = s.best_count;
  r.second_count = s.second_count;
  r.second_best_ratio = s.ratio;
  r.low_confidence = s.low_confidence;
  return r;
}

}  // namespace

void cmd_index(const RunConfig& config, const std::filesystem::path& manifest,
               const std::filesystem::path& detections, const std::filesystem::path& out_dir,
               const CommandLog& log) {
  config.validate();
  std::vector<std::string> warnings;
  const auto index = build_index(manifest, config.build_params(), detections, out_dir, config.jobs, &warnings);
  flush_warnings(log, warnings);
  if (log.info) {
    *log.info << fmt::format("indexed {} images across {} sections into {}\n", index.entries.size(),
                             index.sections.size(), out_dir.string());
  }
}

MatchSummary cmd_match(const RunConfig& config, const std::filesystem::path& image_a,
                       const std::filesystem::path& image_b, const std::filesystem::path& dump_path,
                       const std::filesystem::path& detections, const CommandLog& log) {
  config.validate();
  const BuildParams params = config.build_params();
  const auto a = load_image(image_a, params.target_long_side);
  const auto b = load_image(image_b, params.target_long_side);
  const auto pa = extract(a.image, params.backend);
  const auto pb = extract(b.image, params.backend);
  const auto matches = match_pyramids(pa, pb, params.match);

  DetectionSet det_a{a.image.source_id, {}}, det_b{b.image.source_id, {}};
  std::vector<std::string> warnings;
  if (!detections.empty()) {
    DetectionOptions options;
    options.classes = params.vehicle_classes;
    options.min_score = params.min_score;
    options.scale = {{a.image.source_id, a.scale}, {b.image.source_id, b.scale}};
    options.known_ids = {a.image.source_id, b.image.source_id};
    auto table = load_detections(detections, options, &warnings);
    if (auto it = table.find(a.image.source_id); it != table.end()) det_a = it->second;
    if (auto it = table.find(b.image.source_id); it != table.end()) det_b = it->second;
  }
  flush_warnings(log, warnings);

  MatchSummary summary;
  summary.matches = matches.size();
  summary.surviving = config.use_vehicle_filter
                          ? count_surviving(matches, det_a, det_b, filter_mode_from_string(config.filter_mode))
                          : matches.size();
  summary.coarse_cells_a = static_cast<size_t>(pa.coarse.cells());
  for (int i = 0; i < pa.coarse.cells(); ++i) summary.textured_cells_a += pa.coarse.textureless(i) ? 0 : 1;

  if (!dump_path.empty()) write_text(dump_path, config.echo() + format_match_dump(matches));
  if (log.info) {
    *log.info << fmt::format("matches {}\nsurviving {}\ncoarse_cells {}\ntextured_cells {}\n", summary.matches,
                             summary.surviving, summary.coarse_cells_a, summary.textured_cells_a);
  }
  return summary;
}

std::filesystem::path counts_path_for(const std::filesystem::path& results) {
  return std::filesystem::path(results.string() + ".counts.csv");
}

void cmd_localize(const RunConfig& config, const std::filesystem::path& query_manifest,
                  const std::filesystem::path& detections, const std::filesystem::path& index_dir,
                  const std::filesystem::path& results, const CommandLog& log) {
  config.validate();
  const BuildParams params = config.build_params();
  const LocalizeParams lp = config.localize_params();
  std::vector<std::string> warnings;
  const GalleryIndex index = load_index(index_dir, &params, &warnings);
  const auto queries = prepare_queries(read_manifest(query_manifest), params, detections, config.jobs, &warnings);
  flush_warnings(log, warnings);

  const size_t n_entries = index.entries.size();
  std::vector<size_t> raw(queries.size() * n_entries), filtered(queries.size() * n_entries);
  parallel_for(queries.size() * n_entries, config.jobs, [&](size_t k) {
    const auto& q = queries[k / n_entries];
    const auto& e = index.entries[k % n_entries];
    const auto matches = match_pyramids(q.pyramid, e.pyramid, lp.match);
    raw[k] = matches.size();
    filtered[k] = lp.use_vehicle_filter ? count_surviving(matches, q.detections, e.detections, lp.filter_mode)
                                        : matches.size();
  });

  std::string report = config.echo() + "# query_id predicted_section best_entry best_count second_count ratio\n";
  std::string counts = config.echo() + "entry";
  for (const auto& e : index.entries) counts += "," + e.source_id;
  counts += "\nsection";
  for (const auto& e : index.entries) counts += "," + e.section_id;
  counts += "\n";

  for (size_t q = 0; q < queries.size(); ++q) {
    LocalizationResult r;
    r.query_id = queries[q].id;
    r.raw_counts.assign(raw.begin() + q * n_entries, raw.begin() + (q + 1) * n_entries);
    r.counts.assign(filtered.begin() + q * n_entries, filtered.begin() + (q + 1) * n_entries);
    apply_selection(r, index);
    report += format_result_line(r) + "\n";
    counts += r.query_id + ",filtered";
    for (size_t c : r.counts) counts += fmt::format(",{}", c);
    counts += "\n" + r.query_id + ",raw";
    for (size_t c : r.raw_counts) counts += fmt::format(",{}", c);
    counts += "\n";
    if (log.verbose && log.info) *log.info << format_result_line(r) << "\n";
  }
  write_text(results, report);
  write_text(counts_path_for(results), counts);
  if (log.info) *log.info << fmt::format("localized {} queries against {} entries\n", queries.size(), n_entries);
}

EvaluateOutput cmd_evaluate(const RunConfig& config, const std::filesystem::path& results,
                            const std::filesystem::path& query_manifest, const std::filesystem::path& out_dir,
                            bool ablation, const CommandLog& log) {
  config.validate();
  const auto counts_path = counts_path_for(results);
  const bool have_counts = std::filesystem::exists(counts_path);
  if (ablation && !have_counts) {
    throw InvalidInput(fmt::format("--ablation needs the counts file '{}' written by localize", counts_path.string()));
  }
  const auto annotations = annotations_from_manifest(read_manifest(query_manifest));

  std::ifstream in(results);
  if (!in) throw std::runtime_error(fmt::format("cannot open results '{}'", results.string()));
  std::optional<CountsTable> table;
  if (have_counts) table = read_counts(counts_path);

  std::vector<LocalizationResult> parsed;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    LocalizationResult r;
    double ratio = 0.0;
    if (!(fields >> r.query_id >> r.predicted_section >> r.best_entry >> r.best_count >> r.second_count >> ratio)) {
      throw ParseError(results, line_no, "expected 6 fields");
    }
    r.second_best_ratio = r.best_count == 0 ? 0.0 : static_cast<double>(r.second_count) / r.best_count;
    r.low_confidence = r.best_count == 0;
    if (table) {
      const auto f = table->filtered.find(r.query_id);
      const auto w = table->raw.find(r.query_id);
      if (f == table->filtered.end() || w == table->raw.end()) {
        throw ParseError(counts_path, 0, fmt::format("no counts for query '{}'", r.query_id));
      }
      r.counts = f->second;
      r.raw_counts = w->second;
    }
    parsed.push_back(std::move(r));
  }

  std::set<std::string> sections;
  std::vector<std::string> entry_ids;
  if (table) {
    sections.insert(table->sections.begin(), table->sections.end());
    entry_ids = table->entries;
  }

  EvaluateOutput out;
  out.report = accuracy(parsed, annotations, config.histogram_bins, sections);
  const std::string header = config.echo();
  write_report(out.report, entry_ids, out_dir, header);

  if (ablation) {
    std::vector<LocalizationResult> unfiltered;
    for (const auto& r : parsed) unfiltered.push_back(result_from_counts(r.query_id, r.raw_counts, r.raw_counts, *table));
    out.without_filter = accuracy(unfiltered, annotations, config.histogram_bins, sections);
    write_report(*out.without_filter, entry_ids, out_dir / "without_vehicle_remover", header);
    AblationReport ab;
    ab.with_filter = out.report;
    ab.without_filter = *out.without_filter;
    write_text(out_dir / "ablation.csv", header + format_ablation_table(ab));
    if (log.info) *log.info << format_ablation_table(ab);
    if (!config.use_vehicle_filter && log.warn) {
      *log.warn << "warning: evaluating with use_vehicle_filter=false; both ablation arms are unfiltered\n";
    }
  }
  if (log.info) *log.info << format_summary(out.report);
  return out;
}

SynthOutput cmd_synth(const std::filesystem::path& scene_spec, const std::filesystem::path& out_dir,
                      const CommandLog& log) {
  const SceneSpec spec = SceneSpec::load(scene_spec);
  const SynthOutput out = generate(spec, out_dir);
  if (log.info) {
    *log.info << fmt::format("generated {} gallery and {} query images in {}\n", out.n_gallery, out.n_queries,
                             out_dir.string());
  }
  return out;
}

}  // namespace parkloc
