#pragma once

#include <filesystem>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "parkloc/localizer.hpp"

namespace parkloc {

class EvaluationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct QueryAnnotation {
  std::string query_id;
  std::string image_path;
  std::vector<std::string> labels;  ///< one or two sections
};

std::vector<QueryAnnotation> annotations_from_manifest(const std::vector<ManifestRecord>& records);

struct Verdict {
  std::string query_id;
  std::string predicted_section;
  std::vector<std::string> labels;
  bool correct = false;
};

/// Equal-width bins over [0,1]; bin k covers [k/bins, (k+1)/bins) and the
/// last bin also includes 1.0.
struct Histogram {
  std::vector<size_t> counts;
  double mean = 0.0;
  double median = 0.0;

  int bins() const { return static_cast<int>(counts.size()); }
  double low(int k) const { return static_cast<double>(k) / bins(); }
  double high(int k) const { return static_cast<double>(k + 1) / bins(); }
};

using CountMatrix = std::vector<std::vector<size_t>>;
using RealMatrix = std::vector<std::vector<double>>;

struct EvalReport {
  size_t n_queries = 0;
  size_t n_correct = 0;
  double accuracy = 0.0;
  std::vector<Verdict> verdicts;
  Histogram ratio_histogram;
  std::vector<std::string> query_ids;
  CountMatrix count_matrix;  ///< queries x gallery entries
  RealMatrix normalized_matrix;
};

inline constexpr int kDefaultHistogramBins = 20;

/// Scores each result against its annotation (matched by query id).
/// `sections`, when non-empty, is the gallery's section set; labels outside it
/// are an error.
EvalReport accuracy(std::span<const LocalizationResult> results, std::span<const QueryAnnotation> annotations,
                    int bins = kDefaultHistogramBins, const std::set<std::string>& sections = {});

/// Each row divided by its maximum; all-zero rows stay zero.
RealMatrix normalize_count_matrix(const CountMatrix& matrix);
RealMatrix normalize_count_matrix(const RealMatrix& matrix);

Histogram ratio_histogram(std::span<const double> ratios, int bins = kDefaultHistogramBins);
Histogram ratio_histogram(std::span<const LocalizationResult> results, int bins = kDefaultHistogramBins);

/// Accuracy printed to three decimals, e.g. "0.869".
std::string format_accuracy(double accuracy);

struct AblationReport {
  EvalReport with_filter;
  EvalReport without_filter;
  std::vector<LocalizationResult> results_with_filter;
  std::vector<LocalizationResult> results_without_filter;
};

/// Matches every query once, then scores the cached matches with and without
/// the vehicle filter.
AblationReport run_ablation(const std::vector<Query>& queries, const GalleryIndex& index,
                            const LocalizeParams& params, int bins = kDefaultHistogramBins);

/// Two-row accuracy table, "without vehicle remover" first.
std::string format_ablation_table(const AblationReport& report);

/// Writes verdicts.csv, summary.txt, count_matrix.csv, count_matrix_normalized.csv,
/// ratio_histogram.csv and count_matrix.png. Text artifacts start with
/// `header` (comment lines) when it is non-empty.
void write_report(const EvalReport& report, std::span<const std::string> entry_ids,
                  const std::filesystem::path& out_dir, const std::string& header = {});

std::string format_summary(const EvalReport& report);

}  // namespace parkloc
