#include "parkloc/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include <fmt/format.h>

#include "parkloc/parallel.hpp"

namespace parkloc {
namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
}

std::string join(const std::vector<std::string>& parts, char sep) {
  std::string out;
  for (size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

template <typename T>
RealMatrix normalize_rows(const std::vector<std::vector<T>>& matrix) {
  RealMatrix out;
  out.reserve(matrix.size());
  for (const auto& row : matrix) {
    std::vector<double> r(row.size(), 0.0);
    const T top = row.empty() ? T{} : *std::max_element(row.begin(), row.end());
    if (top > T{}) {
      for (size_t k = 0; k < row.size(); ++k) r[k] = static_cast<double>(row[k]) / static_cast<double>(top);
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace

std::vector<QueryAnnotation> annotations_from_manifest(const std::vector<ManifestRecord>& records) {
  std::vector<QueryAnnotation> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back({r.source_id, r.image_path, r.labels});
  return out;
}

EvalReport accuracy(std::span<const LocalizationResult> results, std::span<const QueryAnnotation> annotations,
                    int bins, const std::set<std::string>& sections) {
  std::map<std::string, const QueryAnnotation*> by_id;
  for (const auto& a : annotations) {
    if (a.labels.empty() || a.labels.size() > 2) {
      throw EvaluationError(fmt::format("query '{}' must carry one or two labels", a.query_id));
    }
    for (const auto& l : a.labels) {
      if (!sections.empty() && !sections.contains(l)) {
        throw EvaluationError(fmt::format("query '{}' label '{}' is not a gallery section", a.query_id, l));
      }
    }
    by_id[a.query_id] = &a;
  }

  std::vector<std::string> offenders;
  std::set<std::string> result_ids;
  for (const auto& r : results) {
    result_ids.insert(r.query_id);
    if (!by_id.contains(r.query_id)) offenders.push_back(r.query_id + " (no annotation)");
  }
  for (const auto& a : annotations) {
    if (!result_ids.contains(a.query_id)) offenders.push_back(a.query_id + " (no result)");
  }
  if (!offenders.empty()) {
    throw EvaluationError(fmt::format("unmatched queries: {}", join(offenders, ',')));
  }

  EvalReport report;
  report.n_queries = results.size();
  for (const auto& r : results) {
    const auto& labels = by_id.at(r.query_id)->labels;
    Verdict v{r.query_id, r.predicted_section, labels,
              std::find(labels.begin(), labels.end(), r.predicted_section) != labels.end()};
    report.n_correct += v.correct ? 1 : 0;
    report.verdicts.push_back(std::move(v));
    report.query_ids.push_back(r.query_id);
    report.count_matrix.push_back(r.counts);
  }
  report.accuracy =
      report.n_queries == 0 ? 0.0 : static_cast<double>(report.n_correct) / static_cast<double>(report.n_queries);
  report.normalized_matrix = normalize_count_matrix(report.count_matrix);
  report.ratio_histogram = ratio_histogram(results, bins);
  return report;
}

RealMatrix normalize_count_matrix(const CountMatrix& matrix) { return normalize_rows(matrix); }
RealMatrix normalize_count_matrix(const RealMatrix& matrix) { return normalize_rows(matrix); }

Histogram ratio_histogram(std::span<const double> ratios, int bins) {
  if (bins < 2) throw InvalidInput("histogram needs at least 2 bins");
  Histogram h;
  h.counts.assign(static_cast<size_t>(bins), 0);
  for (double r : ratios) {
    if (!(r >= 0.0 && r <= 1.0)) throw InvalidInput(fmt::format("ratio {} outside [0,1]", r));
    int k = std::min(static_cast<int>(std::floor(r * bins)), bins - 1);
    // Settle rounding at the edges against the same edge values low()/high() report.
    while (k > 0 && r < h.low(k)) --k;
    while (k < bins - 1 && r >= h.high(k)) ++k;
    ++h.counts[static_cast<size_t>(k)];
  }
  if (!ratios.empty()) {
    double sum = 0.0;
    for (double r : ratios) sum += r;
    h.mean = sum / static_cast<double>(ratios.size());
    std::vector<double> sorted(ratios.begin(), ratios.end());
    std::sort(sorted.begin(), sorted.end());
    const size_t n = sorted.size();
    h.median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  }
  return h;
}

Histogram ratio_histogram(std::span<const LocalizationResult> results, int bins) {
  std::vector<double> ratios;
  ratios.reserve(results.size());
  for (const auto& r : results) ratios.push_back(r.second_best_ratio);
  return ratio_histogram(ratios, bins);
}

std::string format_accuracy(double accuracy) { return fmt::format("{:.3f}", accuracy); }

AblationReport run_ablation(const std::vector<Query>& queries, const GalleryIndex& index,
                            const LocalizeParams& params, int bins) {
  if (index.entries.empty()) throw InvalidInput("cannot localize against an empty index");
  params.match.validate();
  const size_t n_entries = index.entries.size();
  std::vector<std::vector<std::vector<FineMatch>>> cache(queries.size(),
                                                         std::vector<std::vector<FineMatch>>(n_entries));
  parallel_for(queries.size() * n_entries, params.jobs, [&](size_t k) {
    const size_t q = k / n_entries, e = k % n_entries;
    cache[q][e] = match_pyramids(queries[q].pyramid, index.entries[e].pyramid, params.match);
  });

  AblationReport report;
  std::vector<QueryAnnotation> annotations;
  for (size_t q = 0; q < queries.size(); ++q) {
    report.results_with_filter.push_back(
        score_matches(queries[q].id, cache[q], queries[q].detections, index, true, params.filter_mode));
    report.results_without_filter.push_back(
        score_matches(queries[q].id, cache[q], queries[q].detections, index, false, params.filter_mode));
    annotations.push_back({queries[q].id, {}, queries[q].labels});
  }
  const std::set<std::string> sections(index.sections.begin(), index.sections.end());
  report.with_filter = accuracy(report.results_with_filter, annotations, bins, sections);
  report.without_filter = accuracy(report.results_without_filter, annotations, bins, sections);
  return report;
}

std::string format_ablation_table(const AblationReport& report) {
  return fmt::format("method,accuracy\nwithout vehicle remover,{}\nfull,{}\n",
                     format_accuracy(report.without_filter.accuracy), format_accuracy(report.with_filter.accuracy));
}

std::string format_summary(const EvalReport& report) {
  return fmt::format("queries {}\ncorrect {}\naccuracy {}\nratio_mean {:.6f}\nratio_median {:.6f}\n",
                     report.n_queries, report.n_correct, format_accuracy(report.accuracy), report.ratio_histogram.mean,
                     report.ratio_histogram.median);
}

void write_report(const EvalReport& report, std::span<const std::string> entry_ids,
                  const std::filesystem::path& out_dir, const std::string& header) {
  std::filesystem::create_directories(out_dir);

  std::string verdicts = header + "query_id,predicted_section,labels,correct\n";
  for (const auto& v : report.verdicts) {
    verdicts += fmt::format("{},{},{},{}\n", v.query_id, v.predicted_section, join(v.labels, ';'), v.correct ? 1 : 0);
  }
  write_text(out_dir / "verdicts.csv", verdicts);
  write_text(out_dir / "summary.txt", header + format_summary(report));

  const std::string matrix_header = "query_id," + join(std::vector<std::string>(entry_ids.begin(), entry_ids.end()), ',') + "\n";
  std::string counts = header + matrix_header;
  std::string normalized = header + matrix_header;
  for (size_t q = 0; q < report.count_matrix.size(); ++q) {
    counts += report.query_ids[q];
    normalized += report.query_ids[q];
    for (size_t e = 0; e < report.count_matrix[q].size(); ++e) {
      counts += fmt::format(",{}", report.count_matrix[q][e]);
      normalized += fmt::format(",{:.6f}", report.normalized_matrix[q][e]);
    }
    counts += "\n";
    normalized += "\n";
  }
  write_text(out_dir / "count_matrix.csv", counts);
  write_text(out_dir / "count_matrix_normalized.csv", normalized);

  std::string hist = header + "bin_low,bin_high,count\n";
  for (int k = 0; k < report.ratio_histogram.bins(); ++k) {
    hist += fmt::format("{:.6f},{:.6f},{}\n", report.ratio_histogram.low(k), report.ratio_histogram.high(k),
                        report.ratio_histogram.counts[static_cast<size_t>(k)]);
  }
  write_text(out_dir / "ratio_histogram.csv", hist);

  if (!report.normalized_matrix.empty() && !report.normalized_matrix.front().empty()) {
    Image render;
    render.height = static_cast<int>(report.normalized_matrix.size());
    render.width = static_cast<int>(report.normalized_matrix.front().size());
    render.pixels.reserve(static_cast<size_t>(render.width) * render.height);
    for (const auto& row : report.normalized_matrix) {
      for (double v : row) render.pixels.push_back(static_cast<float>(v));
    }
    write_png(render, out_dir / "count_matrix.png");
  }
}

}  // namespace parkloc
