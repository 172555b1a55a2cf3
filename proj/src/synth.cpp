#include "parkloc/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <set>

#include <fmt/format.h>

namespace parkloc {
namespace {

// Fixed-arithmetic RNG helpers: std::mt19937_64 is fully specified, the
// standard distributions are not.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  int integer(int lo, int hi) {  // inclusive
    return lo + static_cast<int>(engine_() % static_cast<std::uint64_t>(hi - lo + 1));
  }
  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_;
};

std::uint64_t mix(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

enum Stream : std::uint64_t { kLayout = 1, kTemplates = 2, kSections = 3, kChurn = 4, kJitter = 5, kDetNoise = 6 };

/// Smooth value noise in [0,1] with lattice spacing `cell`.
class ValueNoise {
 public:
  ValueNoise(int width, int height, int cell, Rng& rng)
      : cell_(cell), cols_(width / cell + 2), rows_(height / cell + 2) {
    lattice_.resize(static_cast<size_t>(cols_) * rows_);
    for (double& v : lattice_) v = rng.uniform();
  }
  double operator()(double x, double y) const {
    const double gx = x / cell_, gy = y / cell_;
    const int x0 = std::clamp(static_cast<int>(std::floor(gx)), 0, cols_ - 2);
    const int y0 = std::clamp(static_cast<int>(std::floor(gy)), 0, rows_ - 2);
    const double fx = smooth(std::clamp(gx - x0, 0.0, 1.0)), fy = smooth(std::clamp(gy - y0, 0.0, 1.0));
    auto at = [&](int c, int r) { return lattice_[static_cast<size_t>(r) * cols_ + c]; };
    const double top = (1 - fx) * at(x0, y0) + fx * at(x0 + 1, y0);
    const double bottom = (1 - fx) * at(x0, y0 + 1) + fx * at(x0 + 1, y0 + 1);
    return (1 - fy) * top + fy * bottom;
  }

 private:
  static double smooth(double t) { return t * t * (3 - 2 * t); }
  int cell_, cols_, rows_;
  std::vector<double> lattice_;
};

struct Vehicle {
  int template_id = 0;
  int slot = 0;  ///< global slot index: section * slots_per_section + k
};

struct Geometry {
  int pad = 0;
  int pano_w = 0;
  int pano_h = 0;
  int section_w = 0;
  int wall_end = 0;
  int vehicle_w = 0;
  int vehicle_h = 0;
  int vehicle_top = 0;

  explicit Geometry(const SceneSpec& s) {
    section_w = s.image_width;
    const double half_diag = 0.5 * std::hypot(s.image_width, s.image_height);
    pad = static_cast<int>(std::ceil(s.max_translation_px +
                                     half_diag * std::sin(s.max_rotation_deg * std::numbers::pi / 180.0))) +
          8;
    pano_w = s.n_sections * section_w + 2 * pad;
    pano_h = s.image_height + 2 * pad;
    wall_end = pad + static_cast<int>(std::lround(0.55 * s.image_height));
    vehicle_w = static_cast<int>(std::lround(0.8 * section_w / s.slots_per_section));
    vehicle_h = static_cast<int>(std::lround(0.3 * s.image_height));
    vehicle_top = pad + static_cast<int>(std::lround(0.6 * s.image_height));
  }

  // Panorama rectangle [x0, x1) x [y0, y1) of a slot.
  std::array<double, 4> slot_rect(const SceneSpec& s, int slot) const {
    const int section = slot / s.slots_per_section, k = slot % s.slots_per_section;
    const double center = pad + section * section_w + section_w * (k + 0.5) / s.slots_per_section;
    const double x0 = std::floor(center - vehicle_w / 2.0);
    return {x0, static_cast<double>(vehicle_top), x0 + vehicle_w, static_cast<double>(vehicle_top + vehicle_h)};
  }
};

Image blank(int w, int h, float value) {
  Image img;
  img.width = w;
  img.height = h;
  img.pixels.assign(static_cast<size_t>(w) * h, value);
  return img;
}

void fill_rect(Image& img, int x0, int y0, int x1, int y1, auto&& value_at) {
  for (int y = std::max(y0, 0); y < std::min(y1, img.height); ++y) {
    for (int x = std::max(x0, 0); x < std::min(x1, img.width); ++x) {
      img.at(x, y) = static_cast<float>(std::clamp(static_cast<double>(value_at(x, y)), 0.0, 1.0));
    }
  }
}

Image render_background(const SceneSpec& spec, const Geometry& g) {
  Image pano = blank(g.pano_w, g.pano_h, 0.0f);
  Rng rng(mix(spec.seed, kSections));
  const double strength = spec.wall_texture_strength;

  ValueNoise wall_shading(g.pano_w, g.pano_h, 48, rng);
  fill_rect(pano, 0, 0, g.pano_w, g.wall_end, [&](int x, int y) { return 0.62 + 0.03 * strength * wall_shading(x, y); });
  fill_rect(pano, 0, g.wall_end, g.pano_w, g.pano_h, [&](int x, int y) { return 0.38 + 0.03 * strength * wall_shading(x, y); });
  fill_rect(pano, 0, g.wall_end - 4, g.pano_w, g.wall_end, [](int, int) { return 0.25; });

  // Painted bay lines look the same in every section.
  for (int s = 0; s < spec.n_sections; ++s) {
    for (int k = 0; k <= spec.slots_per_section; ++k) {
      const int x = g.pad + s * g.section_w + g.section_w * k / spec.slots_per_section;
      fill_rect(pano, x - 1, g.wall_end + 10, x + 2, g.pano_h, [](int, int) { return 0.85; });
    }
  }

  for (int s = 0; s < spec.n_sections; ++s) {
    const int left = g.pad + s * g.section_w;
    // Pillar with a section-specific marking on the left boundary.
    ValueNoise pillar_noise(24, g.wall_end, 4, rng);
    fill_rect(pano, left - 12, 0, left + 12, g.wall_end, [&](int x, int y) {
      return 0.74 + 0.5 * strength * (pillar_noise(x - (left - 12), y) - 0.5);
    });

    const int patches = 5;
    for (int p = 0; p < patches; ++p) {
      const int pw = rng.integer(28, 64), ph = rng.integer(20, 44);
      const int x0 = rng.integer(left + 16, left + g.section_w - 16 - pw);
      const bool on_floor = p == patches - 1;
      const int y_lo = on_floor ? g.wall_end + 2 : g.pad + 6;
      const int y_hi = on_floor ? g.vehicle_top - ph - 2 : g.wall_end - ph - 8;
      const int y0 = y_hi > y_lo ? rng.integer(y_lo, y_hi) : y_lo;
      const double base = rng.uniform(0.3, 0.7);
      ValueNoise noise(pw, ph, rng.integer(3, 6), rng);
      fill_rect(pano, x0, y0, x0 + pw, y0 + ph, [&](int x, int y) {
        const double bg = pano.at(x, y);
        return bg + strength * (base - bg + 0.9 * (noise(x - x0, y - y0) - 0.5));
      });
    }
  }
  return pano;
}

std::vector<Image> render_templates(const SceneSpec& spec, const Geometry& g) {
  std::vector<Image> bank;
  Rng rng(mix(spec.seed, kTemplates));
  for (int t = 0; t < spec.template_bank_size; ++t) {
    Image img = blank(g.vehicle_w, g.vehicle_h, 0.0f);
    const double body = rng.uniform(0.2, 0.8);
    ValueNoise coarse(g.vehicle_w, g.vehicle_h, 6, rng);
    ValueNoise fine(g.vehicle_w, g.vehicle_h, 3, rng);
    fill_rect(img, 0, 0, img.width, img.height, [&](int x, int y) {
      return body + 0.6 * (coarse(x, y) - 0.5) + 0.4 * (fine(x, y) - 0.5);
    });
    // Windows and wheels.
    const int win_h = img.height / 4;
    fill_rect(img, 6, 4, img.width - 6, 4 + win_h, [&](int x, int y) { return 0.12 + 0.3 * fine(x, y); });
    fill_rect(img, 4, img.height - 12, 20, img.height, [](int, int) { return 0.05; });
    fill_rect(img, img.width - 20, img.height - 12, img.width - 4, img.height, [](int, int) { return 0.05; });
    bank.push_back(std::move(img));
  }
  return bank;
}

struct Layout {
  std::vector<Vehicle> gallery;
  std::vector<Vehicle> query;
};

Layout place_vehicles(const SceneSpec& spec) {
  Layout layout;
  Rng rng(mix(spec.seed, kLayout));
  const int total_slots = spec.n_sections * spec.slots_per_section;
  for (int s = 0; s < spec.n_sections; ++s) {
    const int n = std::min(rng.integer(spec.vehicles_min, spec.vehicles_max), spec.slots_per_section);
    std::vector<int> slots(spec.slots_per_section);
    for (int k = 0; k < spec.slots_per_section; ++k) slots[k] = s * spec.slots_per_section + k;
    for (int k = 0; k < n; ++k) {  // partial Fisher-Yates
      std::swap(slots[k], slots[rng.integer(k, spec.slots_per_section - 1)]);
      layout.gallery.push_back({rng.integer(0, spec.template_bank_size - 1), slots[k]});
    }
  }
  std::sort(layout.gallery.begin(), layout.gallery.end(),
            [](const Vehicle& a, const Vehicle& b) { return a.slot < b.slot; });

  Rng churn(mix(spec.seed, kChurn));
  std::set<int> occupied;
  for (const auto& v : layout.gallery) occupied.insert(v.slot);
  for (const auto& v : layout.gallery) {
    if (!churn.bernoulli(spec.vehicle_churn)) {
      layout.query.push_back(v);
      continue;
    }
    occupied.erase(v.slot);
    std::vector<int> free;
    for (int slot = 0; slot < total_slots; ++slot) {
      if (!occupied.contains(slot) && slot != v.slot) free.push_back(slot);
    }
    if (free.empty()) continue;
    const int target = free[static_cast<size_t>(churn.integer(0, static_cast<int>(free.size()) - 1))];
    occupied.insert(target);
    layout.query.push_back({v.template_id, target});
  }
  std::sort(layout.query.begin(), layout.query.end(),
            [](const Vehicle& a, const Vehicle& b) { return a.slot < b.slot; });
  return layout;
}

struct ViewPose {
  double cx = 0.0, cy = 0.0;  ///< panorama point under the image centre
  double angle = 0.0;         ///< radians
  double gain = 1.0, offset = 0.0;
};

double sample(const Image& img, double qx, double qy) {
  qx = std::clamp(qx, 0.0, img.width - 1.0);
  qy = std::clamp(qy, 0.0, img.height - 1.0);
  const int x0 = static_cast<int>(std::floor(qx)), y0 = static_cast<int>(std::floor(qy));
  const int x1 = std::min(x0 + 1, img.width - 1), y1 = std::min(y0 + 1, img.height - 1);
  const double fx = qx - x0, fy = qy - y0;
  const double top = (1 - fx) * img.at(x0, y0) + fx * img.at(x1, y0);
  const double bottom = (1 - fx) * img.at(x0, y1) + fx * img.at(x1, y1);
  return (1 - fy) * top + fy * bottom;
}

Image render_view(const Image& pano, const ViewPose& pose, int w, int h, bool photometric) {
  Image out = blank(w, h, 0.0f);
  const double c = std::cos(pose.angle), s = std::sin(pose.angle);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double u = x + 0.5 - w / 2.0, v = y + 0.5 - h / 2.0;
      const double px = pose.cx + c * u - s * v, py = pose.cy + s * u + c * v;
      double value = sample(pano, px - 0.5, py - 0.5);
      if (photometric) value = std::clamp(pose.gain * (value - 0.5) + 0.5 + pose.offset, 0.0, 1.0);
      out.at(x, y) = static_cast<float>(value);
    }
  }
  return out;
}

const char* vehicle_class(int template_id) {
  static const char* kClasses[] = {"car", "truck", "bus"};
  return kClasses[template_id % 3];
}

}  // namespace

void SceneSpec::validate() const {
  if (n_sections < 1 || views_per_section < 1) throw InvalidInput("scene needs at least one section and view");
  if (image_width < kMinImageSide || image_height < kMinImageSide || image_width % kCoarseCell ||
      image_height % kCoarseCell) {
    throw InvalidInput("image size must be a multiple of 8 and at least 32");
  }
  if (!(wall_texture_strength >= 0.0 && wall_texture_strength <= 1.0)) {
    throw InvalidInput("wall_texture_strength must lie in [0,1]");
  }
  if (vehicles_min < 0 || vehicles_max < vehicles_min) throw InvalidInput("invalid vehicle count range");
  if (slots_per_section < 1 || template_bank_size < 1) throw InvalidInput("need at least one slot and template");
  if (!(vehicle_churn >= 0.0 && vehicle_churn <= 1.0)) throw InvalidInput("vehicle_churn must lie in [0,1]");
  if (!(detection_miss_rate >= 0.0 && detection_miss_rate <= 1.0)) {
    throw InvalidInput("detection_miss_rate must lie in [0,1]");
  }
  if (brightness_jitter < 0 || contrast_jitter < 0 || max_translation_px < 0 || max_rotation_deg < 0 ||
      detection_jitter_px < 0 || boundary_margin < 0 || boundary_margin > 0.5) {
    throw InvalidInput("jitter ranges must be non-negative");
  }
}

nlohmann::json SceneSpec::to_json() const {
  return {{"seed", seed},
          {"n_sections", n_sections},
          {"views_per_section", views_per_section},
          {"image_width", image_width},
          {"image_height", image_height},
          {"wall_texture_strength", wall_texture_strength},
          {"vehicles_min", vehicles_min},
          {"vehicles_max", vehicles_max},
          {"slots_per_section", slots_per_section},
          {"template_bank_size", template_bank_size},
          {"vehicle_churn", vehicle_churn},
          {"brightness_jitter", brightness_jitter},
          {"contrast_jitter", contrast_jitter},
          {"max_translation_px", max_translation_px},
          {"max_rotation_deg", max_rotation_deg},
          {"boundary_margin", boundary_margin},
          {"detection_jitter_px", detection_jitter_px},
          {"detection_miss_rate", detection_miss_rate}};
}

SceneSpec SceneSpec::from_json(const nlohmann::json& j) {
  SceneSpec s;
  s.seed = j.value("seed", s.seed);
  s.n_sections = j.value("n_sections", s.n_sections);
  s.views_per_section = j.value("views_per_section", s.views_per_section);
  s.image_width = j.value("image_width", s.image_width);
  s.image_height = j.value("image_height", s.image_height);
  s.wall_texture_strength = j.value("wall_texture_strength", s.wall_texture_strength);
  s.vehicles_min = j.value("vehicles_min", s.vehicles_min);
  s.vehicles_max = j.value("vehicles_max", s.vehicles_max);
  s.slots_per_section = j.value("slots_per_section", s.slots_per_section);
  s.template_bank_size = j.value("template_bank_size", s.template_bank_size);
  s.vehicle_churn = j.value("vehicle_churn", s.vehicle_churn);
  s.brightness_jitter = j.value("brightness_jitter", s.brightness_jitter);
  s.contrast_jitter = j.value("contrast_jitter", s.contrast_jitter);
  s.max_translation_px = j.value("max_translation_px", s.max_translation_px);
  s.max_rotation_deg = j.value("max_rotation_deg", s.max_rotation_deg);
  s.boundary_margin = j.value("boundary_margin", s.boundary_margin);
  s.detection_jitter_px = j.value("detection_jitter_px", s.detection_jitter_px);
  s.detection_miss_rate = j.value("detection_miss_rate", s.detection_miss_rate);
  s.validate();
  return s;
}

SceneSpec SceneSpec::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(fmt::format("cannot open scene spec '{}'", path.string()));
  return from_json(nlohmann::json::parse(in));
}

std::vector<RenderedView> render_pass(const SceneSpec& spec, bool query) {
  spec.validate();
  const Geometry g(spec);
  const Image background = render_background(spec, g);
  const auto bank = render_templates(spec, g);
  const Layout layout = place_vehicles(spec);
  const auto& vehicles = query ? layout.query : layout.gallery;

  Image pano = background;
  Image mask = blank(g.pano_w, g.pano_h, 0.0f);
  std::vector<std::array<double, 4>> rects;
  for (const auto& v : vehicles) {
    const auto r = g.slot_rect(spec, v.slot);
    const auto& tpl = bank[static_cast<size_t>(v.template_id)];
    const int x0 = static_cast<int>(r[0]), y0 = static_cast<int>(r[1]);
    fill_rect(pano, x0, y0, x0 + tpl.width, y0 + tpl.height, [&](int x, int y) { return tpl.at(x - x0, y - y0); });
    fill_rect(mask, x0, y0, x0 + tpl.width, y0 + tpl.height, [](int, int) { return 1.0; });
    rects.push_back(r);
  }

  const int w = spec.image_width, h = spec.image_height;
  const int n_views = spec.n_sections * spec.views_per_section;
  std::vector<RenderedView> views;
  views.reserve(static_cast<size_t>(n_views));
  for (int i = 0; i < n_views; ++i) {
    const int section = i / spec.views_per_section, v = i % spec.views_per_section;
    ViewPose pose;
    pose.cx = g.pad + section * g.section_w + g.section_w * (v + 0.5) / spec.views_per_section;
    pose.cy = g.pad + h / 2.0;
    if (query) {
      Rng jitter(mix(mix(spec.seed, kJitter), static_cast<std::uint64_t>(i)));
      pose.cx += jitter.uniform(-spec.max_translation_px, spec.max_translation_px);
      pose.cy += jitter.uniform(-spec.max_translation_px, spec.max_translation_px);
      pose.angle = jitter.uniform(-spec.max_rotation_deg, spec.max_rotation_deg) * std::numbers::pi / 180.0;
      pose.gain = 1.0 + jitter.uniform(-spec.contrast_jitter, spec.contrast_jitter);
      pose.offset = jitter.uniform(-spec.brightness_jitter, spec.brightness_jitter);
    }

    RenderedView view;
    view.image = render_view(pano, pose, w, h, query);
    view.vehicle_mask = render_view(mask, pose, w, h, false);

    const std::string id = fmt::format("{}{:03d}", query ? 'q' : 'g', i);
    view.image.source_id = id;
    view.detections.source_id = id;
    Rng det_noise(mix(mix(spec.seed, kDetNoise), static_cast<std::uint64_t>(i) * 2 + (query ? 1 : 0)));
    const double c = std::cos(pose.angle), s = std::sin(pose.angle);
    for (size_t k = 0; k < rects.size(); ++k) {
      const auto& r = rects[k];
      double xmin = 1e300, ymin = 1e300, xmax = -1e300, ymax = -1e300;
      for (double px : {r[0], r[2]}) {
        for (double py : {r[1], r[3]}) {
          const double dx = px - pose.cx, dy = py - pose.cy;
          const double u = c * dx + s * dy + w / 2.0, vv = -s * dx + c * dy + h / 2.0;
          xmin = std::min(xmin, u);
          xmax = std::max(xmax, u);
          ymin = std::min(ymin, vv);
          ymax = std::max(ymax, vv);
        }
      }
      // One pixel of slack covers the bilinear footprint of the vehicle edge.
      BoundingBox box;
      box.x_min = std::max(0.0, std::floor(xmin - 1.0));
      box.y_min = std::max(0.0, std::floor(ymin - 1.0));
      box.x_max = std::min(static_cast<double>(w), std::ceil(xmax + 1.0));
      box.y_max = std::min(static_cast<double>(h), std::ceil(ymax + 1.0));
      box.class_label = vehicle_class(vehicles[k].template_id);
      box.score = 0.9;
      if (!box.valid()) continue;
      if (spec.detection_miss_rate > 0.0 && det_noise.bernoulli(spec.detection_miss_rate)) continue;
      if (spec.detection_jitter_px > 0.0) {
        const double j = spec.detection_jitter_px;
        box.x_min = std::clamp(box.x_min + det_noise.uniform(-j, j), 0.0, w - 1.0);
        box.y_min = std::clamp(box.y_min + det_noise.uniform(-j, j), 0.0, h - 1.0);
        box.x_max = std::clamp(box.x_max + det_noise.uniform(-j, j), box.x_min + 1.0, static_cast<double>(w));
        box.y_max = std::clamp(box.y_max + det_noise.uniform(-j, j), box.y_min + 1.0, static_cast<double>(h));
      }
      view.detections.boxes.push_back(box);
    }

    const double along = (pose.cx - g.pad) / g.section_w;
    const int primary = std::clamp(static_cast<int>(std::floor(along)), 0, spec.n_sections - 1);
    view.labels.push_back(fmt::format("S{:02d}", primary));
    if (query) {
      const double frac = along - primary;
      if (frac < spec.boundary_margin && primary > 0) {
        view.labels.push_back(fmt::format("S{:02d}", primary - 1));
      } else if (frac > 1.0 - spec.boundary_margin && primary + 1 < spec.n_sections) {
        view.labels.push_back(fmt::format("S{:02d}", primary + 1));
      }
    }
    views.push_back(std::move(view));
  }
  return views;
}

SynthOutput generate(const SceneSpec& spec, const std::filesystem::path& out_dir) {
  spec.validate();
  std::filesystem::create_directories(out_dir / "gallery");
  std::filesystem::create_directories(out_dir / "queries");

  auto open = [](const std::filesystem::path& p) {
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error(fmt::format("cannot write '{}'", p.string()));
    return f;
  };

  SynthOutput out;
  out.gallery_manifest = out_dir / "gallery_manifest.txt";
  out.query_manifest = out_dir / "query_manifest.txt";
  out.gallery_detections = out_dir / "gallery_detections.txt";
  out.query_detections = out_dir / "query_detections.txt";
  out.ground_truth = out_dir / "ground_truth.txt";

  for (const bool query : {false, true}) {
    const auto views = render_pass(spec, query);
    auto manifest = open(query ? out.query_manifest : out.gallery_manifest);
    auto detections = open(query ? out.query_detections : out.gallery_detections);
    detections << "# source_id class score x_min y_min x_max y_max\n";
    std::ofstream truth;
    if (query) truth = open(out.ground_truth);
    for (const auto& v : views) {
      const std::string rel = fmt::format("{}/{}.png", query ? "queries" : "gallery", v.image.source_id);
      write_png(v.image, out_dir / rel);
      std::string labels;
      for (const auto& l : v.labels) labels += " " + l;
      manifest << v.image.source_id << " " << rel << labels << "\n";
      detections << format_detections(v.detections);
      if (query) truth << v.image.source_id << labels << "\n";
    }
    (query ? out.n_queries : out.n_gallery) = views.size();
  }
  auto spec_file = open(out_dir / "scene.json");
  spec_file << spec.to_json().dump(2) << "\n";
  return out;
}

}  // namespace parkloc
