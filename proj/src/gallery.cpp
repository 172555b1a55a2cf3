#include "parkloc/gallery.hpp"

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "parkloc/parallel.hpp"

namespace parkloc {
namespace {

using nlohmann::json;

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(fmt::format("cannot open '{}'", path.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
}

std::string entry_stem(size_t i) { return fmt::format("entries/{:05d}", i); }

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::vector<ManifestRecord> parse_manifest(std::string_view text, const std::filesystem::path& base_dir,
                                           const std::filesystem::path& origin) {
  std::vector<ManifestRecord> records;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream fields(line);
    std::vector<std::string> tokens;
    for (std::string t; fields >> t;) tokens.push_back(t);
    if (tokens.empty()) continue;
    if (tokens.size() < 3 || tokens.size() > 4) {
      throw ParseError(origin, line_no, fmt::format("expected 3 or 4 fields, found {}", tokens.size()));
    }
    ManifestRecord r;
    r.source_id = tokens[0];
    r.image_path = tokens[1];
    const std::filesystem::path p(tokens[1]);
    r.resolved = p.is_absolute() ? p : base_dir / p;
    r.labels.assign(tokens.begin() + 2, tokens.end());
    r.line = line_no;
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path) {
  return parse_manifest(read_text(path), path.parent_path(), path);
}

json BuildParams::to_json() const {
  return {
      {"backend",
       {{"kind", to_string(backend.kind)},
        {"coarse_dims", backend.coarse_dims},
        {"fine_dims", backend.fine_dims},
        {"injected_dir", backend.injected_dir.generic_string()},
        {"min_gradient_energy", backend.min_gradient_energy}}},
      {"match",
       {{"temperature", match.temperature},
        {"threshold", match.threshold},
        {"window", match.window},
        {"heatmap_temperature", match.heatmap_temperature},
        {"symmetric_refinement", match.symmetric_refinement}}},
      {"target_long_side", target_long_side},
      {"vehicle_classes", vehicle_classes},
      {"min_score", min_score},
  };
}

BuildParams BuildParams::from_json(const json& j) {
  BuildParams p;
  const auto& b = j.at("backend");
  p.backend.kind = backend_kind_from_string(b.at("kind").get<std::string>());
  p.backend.coarse_dims = b.at("coarse_dims").get<int>();
  p.backend.fine_dims = b.at("fine_dims").get<int>();
  p.backend.injected_dir = b.at("injected_dir").get<std::string>();
  p.backend.min_gradient_energy = b.at("min_gradient_energy").get<double>();
  const auto& m = j.at("match");
  p.match.temperature = m.at("temperature").get<double>();
  p.match.threshold = m.at("threshold").get<double>();
  p.match.window = m.at("window").get<int>();
  p.match.heatmap_temperature = m.at("heatmap_temperature").get<double>();
  p.match.symmetric_refinement = m.value("symmetric_refinement", true);
  p.target_long_side = j.at("target_long_side").get<int>();
  p.vehicle_classes = j.at("vehicle_classes").get<std::set<std::string>>();
  p.min_score = j.at("min_score").get<double>();
  return p;
}

std::string BuildParams::fingerprint() const { return fmt::format("{:016x}", fnv1a(to_json().dump())); }

bool GalleryIndex::operator==(const GalleryIndex& other) const {
  return entries == other.entries && sections == other.sections &&
         build_params.to_json() == other.build_params.to_json();
}

void clip_to_image(DetectionSet& set, int width, int height, std::vector<std::string>* warnings) {
  std::erase_if(set.boxes, [&](const BoundingBox& b) {
    const bool outside = b.x_max < 0.0 || b.y_max < 0.0 || b.x_min > width || b.y_min > height;
    if (outside && warnings) {
      warnings->push_back(fmt::format("'{}': dropping {} box outside the {}x{} image", set.source_id,
                                      b.class_label, width, height));
    }
    return outside;
  });
}

GalleryIndex build_index(const std::filesystem::path& manifest_path, const BuildParams& params,
                         const std::filesystem::path& detections_path, const std::filesystem::path& out_dir,
                         int jobs, std::vector<std::string>* warnings) {
  params.match.validate();
  const auto records = read_manifest(manifest_path);
  if (records.empty()) throw IndexError(fmt::format("manifest '{}' lists no images", manifest_path.string()));

  std::set<std::string> ids;
  std::vector<std::string> missing;
  for (const auto& r : records) {
    if (r.labels.size() != 1) {
      throw IndexError(fmt::format("{}:{}: gallery entry '{}' must carry exactly one section", manifest_path.string(),
                                   r.line, r.source_id));
    }
    if (!ids.insert(r.source_id).second) {
      throw IndexError(fmt::format("{}:{}: duplicate source_id '{}'", manifest_path.string(), r.line, r.source_id));
    }
    std::error_code ec;
    if (!std::filesystem::is_regular_file(r.resolved, ec)) missing.push_back(r.resolved.string());
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += "\n  " + m;
    throw IndexError(fmt::format("{} missing image(s):{}", missing.size(), list));
  }

  GalleryIndex index;
  index.build_params = params;
  index.entries.resize(records.size());
  parallel_for(records.size(), jobs, [&](size_t i) {
    const auto& r = records[i];
    const LoadedImage loaded = load_image(r.resolved, params.target_long_side, r.source_id);
    auto& e = index.entries[i];
    e.source_id = r.source_id;
    e.section_id = r.labels.front();
    e.original_resolution = loaded.original;
    e.scale = loaded.scale;
    e.pyramid = extract(loaded.image, params.backend);
    e.detections.source_id = r.source_id;
  });

  std::set<std::string> seen_sections;
  for (const auto& e : index.entries) {
    if (seen_sections.insert(e.section_id).second) index.sections.push_back(e.section_id);
  }

  if (!detections_path.empty()) {
    DetectionOptions options;
    options.classes = params.vehicle_classes;
    options.min_score = params.min_score;
    options.known_ids = ids;
    for (const auto& e : index.entries) options.scale[e.source_id] = e.scale;
    auto detections = load_detections(detections_path, options, warnings);
    for (auto& e : index.entries) {
      if (auto it = detections.find(e.source_id); it != detections.end()) {
        e.detections = std::move(it->second);
        clip_to_image(e.detections, e.width(), e.height(), warnings);
      }
    }
  }

  save_index(index, out_dir, manifest_path);
  return index;
}

void save_index(const GalleryIndex& index, const std::filesystem::path& out_dir,
                const std::filesystem::path& manifest_copy_from) {
  std::filesystem::create_directories(out_dir / "entries");
  json entries = json::array();
  for (size_t i = 0; i < index.entries.size(); ++i) {
    const auto& e = index.entries[i];
    const std::string stem = entry_stem(i);
    save_pyramid(e.pyramid, out_dir / (stem + ".pklf"));
    write_text(out_dir / (stem + ".det"), format_detections(e.detections));
    entries.push_back({{"source_id", e.source_id},
                       {"section_id", e.section_id},
                       {"original_width", e.original_resolution.width},
                       {"original_height", e.original_resolution.height},
                       {"scale", e.scale},
                       {"pyramid", stem + ".pklf"},
                       {"detections", stem + ".det"}});
  }
  const json meta = {{"format_version", kIndexFormatVersion},
                     {"build_params", index.build_params.to_json()},
                     {"build_params_hash", index.build_params.fingerprint()},
                     {"entries", entries}};
  write_text(out_dir / "metadata.json", meta.dump(2) + "\n");
  if (!manifest_copy_from.empty()) write_text(out_dir / "manifest.txt", read_text(manifest_copy_from));
}

GalleryIndex load_index(const std::filesystem::path& dir, const BuildParams* expected,
                        std::vector<std::string>* warnings) {
  json meta;
  try {
    meta = json::parse(read_text(dir / "metadata.json"));
  } catch (const std::exception& e) {
    throw IndexError(fmt::format("index '{}': unreadable metadata: {}", dir.string(), e.what()));
  }
  const int version = meta.value("format_version", -1);
  if (version != kIndexFormatVersion) {
    throw IndexError(fmt::format("index '{}' has format version {}, expected {}", dir.string(), version,
                                 kIndexFormatVersion));
  }

  GalleryIndex index;
  index.build_params = BuildParams::from_json(meta.at("build_params"));
  const auto& built = index.build_params;

  if (expected) {
    const auto& q = expected->backend;
    if (q.kind != built.backend.kind || q.coarse_dims != built.backend.coarse_dims ||
        q.fine_dims != built.backend.fine_dims) {
      throw IndexError(fmt::format(
          "index '{}' was built with {} features (D_c={}, D_f={}) but queries use {} (D_c={}, D_f={})",
          dir.string(), to_string(built.backend.kind), built.backend.coarse_dims, built.backend.fine_dims,
          to_string(q.kind), q.coarse_dims, q.fine_dims));
    }
    if (expected->fingerprint() != built.fingerprint() && warnings) {
      warnings->push_back(fmt::format("index '{}' build parameters {} differ from query parameters {}: {} vs {}",
                                      dir.string(), built.fingerprint(), expected->fingerprint(),
                                      built.to_json().dump(), expected->to_json().dump()));
    }
  }

  DetectionOptions det_options;
  det_options.classes = built.vehicle_classes;
  det_options.min_score = 0.0;
  std::set<std::string> seen_sections;
  for (const auto& item : meta.at("entries")) {
    GalleryEntry e;
    e.source_id = item.at("source_id").get<std::string>();
    e.section_id = item.at("section_id").get<std::string>();
    e.original_resolution = {item.at("original_width").get<int>(), item.at("original_height").get<int>()};
    e.scale = item.at("scale").get<double>();
    try {
      e.pyramid = load_pyramid(dir / item.at("pyramid").get<std::string>());
      e.pyramid.source_id = e.source_id;
      auto dets = load_detections(dir / item.at("detections").get<std::string>(), det_options);
      if (dets.size() > 1 || (dets.size() == 1 && !dets.contains(e.source_id))) {
        throw IndexError("detections belong to another entry");
      }
      e.detections = dets.empty() ? DetectionSet{e.source_id, {}} : std::move(dets.begin()->second);
    } catch (const std::exception& ex) {
      throw IndexError(fmt::format("index '{}': entry '{}' is corrupt: {}", dir.string(), e.source_id, ex.what()));
    }
    if (e.pyramid.coarse.dims != built.backend.coarse_dims || e.pyramid.fine.dims != built.backend.fine_dims) {
      throw IndexError(fmt::format("index '{}': entry '{}' descriptor size disagrees with build parameters",
                                   dir.string(), e.source_id));
    }
    if (seen_sections.insert(e.section_id).second) index.sections.push_back(e.section_id);
    index.entries.push_back(std::move(e));
  }
  if (index.entries.empty()) throw IndexError(fmt::format("index '{}' has no entries", dir.string()));
  return index;
}

}  // namespace parkloc
