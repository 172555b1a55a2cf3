// Command-line entry point: index, match, localize, evaluate, synth.

#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "parkloc/commands.hpp"

namespace {

std::set<std::string> split_classes(const std::string& csv) {
  std::set<std::string> out;
  std::istringstream in(csv);
  for (std::string c; std::getline(in, c, ',');) {
    if (!c.empty()) out.insert(c);
  }
  return out;
}

// Flags override the config file only when given on the command line.
struct Overrides {
  std::optional<std::string> backend, injected_dir, filter_mode, vehicle_classes;
  std::optional<int> coarse_dims, fine_dims, window, target_long_side, histogram_bins, jobs;
  std::optional<double> min_gradient_energy, temperature, threshold, heatmap_temperature, min_score;
  std::optional<bool> use_vehicle_filter, symmetric_refinement;

  void apply(parkloc::RunConfig& c) const {
    if (backend) c.backend = *backend;
    if (injected_dir) c.injected_dir = *injected_dir;
    if (filter_mode) c.filter_mode = *filter_mode;
    if (vehicle_classes) c.vehicle_classes = split_classes(*vehicle_classes);
    if (coarse_dims) c.coarse_dims = *coarse_dims;
    if (fine_dims) c.fine_dims = *fine_dims;
    if (window) c.window = *window;
    if (target_long_side) c.target_long_side = *target_long_side;
    if (histogram_bins) c.histogram_bins = *histogram_bins;
    if (jobs) c.jobs = *jobs;
    if (min_gradient_energy) c.min_gradient_energy = *min_gradient_energy;
    if (temperature) c.temperature = *temperature;
    if (threshold) c.threshold = *threshold;
    if (heatmap_temperature) c.heatmap_temperature = *heatmap_temperature;
    if (min_score) c.min_score = *min_score;
    if (use_vehicle_filter) c.use_vehicle_filter = *use_vehicle_filter;
    if (symmetric_refinement) c.symmetric_refinement = *symmetric_refinement;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Parking-lot visual localization by dense matching and vehicle removal"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  bool verbose = false;
  Overrides ov;
  app.add_option("--config", config_path, "JSON file with RunConfig defaults")->check(CLI::ExistingFile);
  app.add_option("--jobs", ov.jobs, "worker threads")->check(CLI::PositiveNumber);
  app.add_flag("--verbose", verbose, "per-query progress");
  app.add_option("--backend", ov.backend, "builtin-hog | injected-file");
  app.add_option("--injected-dir", ov.injected_dir, "directory of <source_id>.pklf feature files");
  app.add_option("--coarse-dims", ov.coarse_dims);
  app.add_option("--fine-dims", ov.fine_dims);
  app.add_option("--min-gradient-energy", ov.min_gradient_energy);
  app.add_option("--temperature", ov.temperature, "dual-softmax temperature");
  app.add_option("--threshold", ov.threshold, "coarse match probability threshold");
  app.add_option("--window", ov.window, "fine refinement window (odd)");
  app.add_option("--heatmap-temperature", ov.heatmap_temperature);
  app.add_option("--symmetric-refinement", ov.symmetric_refinement, "average A->B and B->A refinement (true | false)");
  app.add_option("--min-score", ov.min_score, "minimum detection score");
  app.add_option("--vehicle-classes", ov.vehicle_classes, "comma-separated detector classes");
  app.add_option("--use-vehicle-filter", ov.use_vehicle_filter, "true | false");
  app.add_option("--filter-mode", ov.filter_mode, "either | both");
  app.add_option("--target-long-side", ov.target_long_side);
  app.add_option("--histogram-bins", ov.histogram_bins);

  std::string manifest, detections, out, image_a, image_b, index_dir, results, scene;
  bool ablation = false;

  auto* index = app.add_subcommand("index", "build a gallery index");
  index->add_option("--manifest", manifest)->required()->check(CLI::ExistingFile);
  index->add_option("--detections", detections)->check(CLI::ExistingFile);
  index->add_option("--out", out, "index directory")->required();

  auto* match = app.add_subcommand("match", "match two images");
  match->add_option("image_a", image_a)->required()->check(CLI::ExistingFile);
  match->add_option("image_b", image_b)->required()->check(CLI::ExistingFile);
  match->add_option("--detections", detections)->check(CLI::ExistingFile);
  match->add_option("--out", out, "match dump file");

  auto* localize = app.add_subcommand("localize", "localize queries against an index");
  localize->add_option("--queries", manifest, "query manifest")->required()->check(CLI::ExistingFile);
  localize->add_option("--detections", detections)->check(CLI::ExistingFile);
  localize->add_option("--index", index_dir)->required()->check(CLI::ExistingDirectory);
  localize->add_option("--out", out, "results file")->required();

  auto* evaluate = app.add_subcommand("evaluate", "score localization results");
  evaluate->add_option("--results", results)->required()->check(CLI::ExistingFile);
  evaluate->add_option("--queries", manifest, "query manifest")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--out", out, "report directory")->required();
  evaluate->add_flag("--ablation", ablation, "also report the run without vehicle removal");

  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  synth->add_option("--scene", scene, "scene spec JSON")->required()->check(CLI::ExistingFile);
  synth->add_option("--out", out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << e.what() << "\n";
    return 2;
  }

  parkloc::RunConfig config;
  try {
    if (!config_path.empty()) config = parkloc::RunConfig::load(config_path);
    ov.apply(config);
    config.verbose = config.verbose || verbose;
    config.validate();
  } catch (const std::exception& e) {
    std::cerr << "error: usage: " << e.what() << "\n";
    return 2;
  }

  const parkloc::CommandLog log{&std::cout, &std::cerr, config.verbose};
  try {
    if (index->parsed()) {
      parkloc::cmd_index(config, manifest, detections, out, log);
    } else if (match->parsed()) {
      parkloc::cmd_match(config, image_a, image_b, out, detections, log);
    } else if (localize->parsed()) {
      parkloc::cmd_localize(config, manifest, detections, index_dir, out, log);
    } else if (evaluate->parsed()) {
      parkloc::cmd_evaluate(config, results, manifest, out, ablation, log);
    } else if (synth->parsed()) {
      parkloc::cmd_synth(scene, out, log);
    }
  } catch (const parkloc::InvalidInput& e) {
    std::cerr << "error: invalid-input: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
