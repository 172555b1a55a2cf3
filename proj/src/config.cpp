#include "parkloc/config.hpp"

#include <fstream>

#include <fmt/format.h>

namespace parkloc {

void RunConfig::validate() const {
  const BackendKind kind = backend_kind_from_string(backend);
  if (kind == BackendKind::kInjectedFile && injected_dir.empty()) {
    throw InvalidInput("backend injected-file requires injected_dir");
  }
  if (coarse_dims < 8 || fine_dims < 8) throw InvalidInput("coarse_dims and fine_dims must be at least 8");
  if (kind == BackendKind::kBuiltinHog && (coarse_dims != 32 || fine_dims != 32)) {
    throw InvalidInput("builtin-hog descriptors are 32-dimensional");
  }
  if (!(min_gradient_energy >= 0.0)) throw InvalidInput("min_gradient_energy must be non-negative");
  localize_params().match.validate();
  if (!(min_score >= 0.0 && min_score <= 1.0)) throw InvalidInput("min_score must lie in [0,1]");
  if (vehicle_classes.empty()) throw InvalidInput("vehicle_classes must not be empty");
  filter_mode_from_string(filter_mode);
  if (target_long_side < kMinImageSide) throw InvalidInput("target_long_side too small");
  if (histogram_bins < 2) throw InvalidInput("histogram_bins must be at least 2");
  if (jobs < 1) throw InvalidInput("jobs must be at least 1");
}

nlohmann::json RunConfig::to_json() const {
  return {{"backend", backend},
          {"injected_dir", injected_dir},
          {"coarse_dims", coarse_dims},
          {"fine_dims", fine_dims},
          {"min_gradient_energy", min_gradient_energy},
          {"temperature", temperature},
          {"threshold", threshold},
          {"window", window},
          {"heatmap_temperature", heatmap_temperature},
          {"symmetric_refinement", symmetric_refinement},
          {"min_score", min_score},
          {"vehicle_classes", vehicle_classes},
          {"use_vehicle_filter", use_vehicle_filter},
          {"filter_mode", filter_mode},
          {"target_long_side", target_long_side},
          {"histogram_bins", histogram_bins}};
}

void RunConfig::merge_json(const nlohmann::json& j) {
  if (!j.is_object()) throw InvalidInput("config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key == "backend") backend = value.get<std::string>();
    else if (key == "injected_dir") injected_dir = value.get<std::string>();
    else if (key == "coarse_dims") coarse_dims = value.get<int>();
    else if (key == "fine_dims") fine_dims = value.get<int>();
    else if (key == "min_gradient_energy") min_gradient_energy = value.get<double>();
    else if (key == "temperature") temperature = value.get<double>();
    else if (key == "threshold") threshold = value.get<double>();
    else if (key == "window") window = value.get<int>();
    else if (key == "heatmap_temperature") heatmap_temperature = value.get<double>();
    else if (key == "symmetric_refinement") symmetric_refinement = value.get<bool>();
    else if (key == "min_score") min_score = value.get<double>();
    else if (key == "vehicle_classes") vehicle_classes = value.get<std::set<std::string>>();
    else if (key == "use_vehicle_filter") use_vehicle_filter = value.get<bool>();
    else if (key == "filter_mode") filter_mode = value.get<std::string>();
    else if (key == "target_long_side") target_long_side = value.get<int>();
    else if (key == "histogram_bins") histogram_bins = value.get<int>();
    else if (key == "jobs") jobs = value.get<int>();
    else if (key == "verbose") verbose = value.get<bool>();
    else throw InvalidInput(fmt::format("unknown config key '{}'", key));
  }
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput(fmt::format("cannot open config '{}'", path.string()));
  RunConfig config;
  try {
    config.merge_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(fmt::format("config '{}': {}", path.string(), e.what()));
  }
  return config;
}

BuildParams RunConfig::build_params() const {
  BuildParams p;
  p.backend.kind = backend_kind_from_string(backend);
  p.backend.injected_dir = injected_dir;
  p.backend.coarse_dims = coarse_dims;
  p.backend.fine_dims = fine_dims;
  p.backend.min_gradient_energy = min_gradient_energy;
  p.match = localize_params().match;
  p.target_long_side = target_long_side;
  p.vehicle_classes = vehicle_classes;
  p.min_score = min_score;
  return p;
}

LocalizeParams RunConfig::localize_params() const {
  LocalizeParams p;
  p.match.temperature = temperature;
  p.match.threshold = threshold;
  p.match.window = window;
  p.match.heatmap_temperature = heatmap_temperature;
  p.match.symmetric_refinement = symmetric_refinement;
  p.use_vehicle_filter = use_vehicle_filter;
  p.filter_mode = filter_mode_from_string(filter_mode);
  p.jobs = jobs;
  return p;
}

std::string RunConfig::echo() const { return "# config: " + to_json().dump() + "\n"; }

}  // namespace parkloc
