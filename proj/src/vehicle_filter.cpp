#include "parkloc/vehicle_filter.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

namespace parkloc {
namespace {

bool survives(const FineMatch& m, const DetectionSet& det_a, const DetectionSet& det_b, FilterMode mode) {
  const bool on_a = det_a.contains(m.point_a);
  const bool on_b = det_b.contains(m.point_b);
  return mode == FilterMode::kEitherEndpoint ? !(on_a || on_b) : !(on_a && on_b);
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    const size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

bool parse_double(std::string_view token, double& value) {
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  return ec == std::errc() && ptr == token.data() + token.size() && std::isfinite(value);
}

std::string shortest(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

ParseError::ParseError(const std::filesystem::path& file, int line, const std::string& what)
    : std::runtime_error(fmt::format("{}:{}: {}", file.string(), line, what)), line_(line) {}

BoundingBox BoundingBox::scaled(double factor) const {
  BoundingBox b = *this;
  b.x_min *= factor;
  b.y_min *= factor;
  b.x_max *= factor;
  b.y_max *= factor;
  return b;
}

bool DetectionSet::contains(Point2 p) const {
  return std::any_of(boxes.begin(), boxes.end(), [p](const BoundingBox& b) { return b.contains(p); });
}

DetectionMap parse_detections(std::string_view text, const DetectionOptions& options,
                              std::vector<std::string>* warnings, const std::filesystem::path& origin) {
  DetectionMap out;
  std::set<std::string> reported;
  int line_no = 0;
  size_t pos = 0;
  while (pos < text.size()) {
    const size_t end = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (const size_t hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const auto tokens = split_ws(line);
    if (tokens.empty()) continue;
    if (tokens.size() != 7) {
      throw ParseError(origin, line_no, fmt::format("expected 7 fields, found {}", tokens.size()));
    }
    BoundingBox box;
    box.class_label = std::string(tokens[1]);
    double coords[4];
    if (!parse_double(tokens[2], box.score) || box.score < 0.0 || box.score > 1.0) {
      throw ParseError(origin, line_no, fmt::format("invalid score '{}'", tokens[2]));
    }
    for (int k = 0; k < 4; ++k) {
      if (!parse_double(tokens[3 + k], coords[k])) {
        throw ParseError(origin, line_no, fmt::format("invalid coordinate '{}'", tokens[3 + k]));
      }
    }
    box.x_min = coords[0];
    box.y_min = coords[1];
    box.x_max = coords[2];
    box.y_max = coords[3];
    if (!box.valid()) throw ParseError(origin, line_no, "degenerate box (need x_min < x_max, y_min < y_max)");

    const std::string id(tokens[0]);
    if (!options.known_ids.empty() && !options.known_ids.contains(id) && warnings && reported.insert(id).second) {
      warnings->push_back(fmt::format("{}:{}: unknown source_id '{}'", origin.string(), line_no, id));
    }
    auto& set = out[id];
    set.source_id = id;
    if (!options.classes.contains(box.class_label) || box.score < options.min_score) continue;
    if (const auto it = options.scale.find(id); it != options.scale.end()) box = box.scaled(it->second);
    set.boxes.push_back(std::move(box));
  }
  return out;
}

DetectionMap load_detections(const std::filesystem::path& path, const DetectionOptions& options,
                             std::vector<std::string>* warnings) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(fmt::format("cannot open detections '{}'", path.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_detections(ss.str(), options, warnings, path);
}

std::string format_detections(const DetectionSet& set) {
  std::string out;
  for (const auto& b : set.boxes) {
    out += fmt::format("{} {} {} {} {} {} {}\n", set.source_id, b.class_label, shortest(b.score), shortest(b.x_min),
                       shortest(b.y_min), shortest(b.x_max), shortest(b.y_max));
  }
  return out;
}

std::string to_string(FilterMode mode) { return mode == FilterMode::kEitherEndpoint ? "either" : "both"; }

FilterMode filter_mode_from_string(const std::string& name) {
  if (name == "either") return FilterMode::kEitherEndpoint;
  if (name == "both") return FilterMode::kBothEndpoints;
  throw InvalidInput(fmt::format("unknown filter mode '{}'", name));
}

std::vector<FineMatch> filter_matches(std::span<const FineMatch> matches, const DetectionSet& det_a,
                                      const DetectionSet& det_b, FilterMode mode) {
  std::vector<FineMatch> out;
  out.reserve(matches.size());
  std::copy_if(matches.begin(), matches.end(), std::back_inserter(out),
               [&](const FineMatch& m) { return survives(m, det_a, det_b, mode); });
  return out;
}

size_t count_surviving(std::span<const FineMatch> matches, const DetectionSet& det_a, const DetectionSet& det_b,
                       FilterMode mode) {
  return static_cast<size_t>(std::count_if(matches.begin(), matches.end(), [&](const FineMatch& m) {
    return survives(m, det_a, det_b, mode);
  }));
}

}  // namespace parkloc
