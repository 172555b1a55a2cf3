#include <doctest.h>

#include "parkloc/localizer.hpp"
#include "support.hpp"

using namespace parkloc;

namespace {

GalleryIndex texture_index(int n, int sections) {
  GalleryIndex index;
  for (int k = 0; k < n; ++k) {
    Image img = testing::WaveTexture(200 + k, 0.3, 0.9).render(128, 96);
    GalleryEntry e;
    e.source_id = "e" + std::to_string(k);
    e.section_id = "S" + std::to_string(k % sections);
    e.pyramid = extract(img, FeatureBackend::builtin());
    e.pyramid.source_id = e.source_id;
    e.detections.source_id = e.source_id;
    e.original_resolution = {128, 96};
    index.entries.push_back(std::move(e));
  }
  for (int s = 0; s < std::min(n, sections); ++s) index.sections.push_back("S" + std::to_string(s));
  return index;
}

GalleryIndex labelled(std::vector<std::string> sections) {
  GalleryIndex index;
  for (size_t k = 0; k < sections.size(); ++k) {
    GalleryEntry e;
    e.source_id = "e" + std::to_string(k + 1);
    e.section_id = sections[k];
    index.entries.push_back(e);
  }
  return index;
}

LocalizationResult with_counts(std::vector<size_t> counts, const GalleryIndex& index) {
  LocalizationResult r;
  r.query_id = "q";
  r.counts = counts;
  r.raw_counts = counts;
  apply_selection(r, index);
  return r;
}

}  // namespace

TEST_CASE("counts 5 9 3 pick the second entry") {
  const auto index = labelled({"A", "B", "C"});
  const auto r = with_counts({5, 9, 3}, index);
  CHECK(r.best_entry == "e2");
  CHECK(r.predicted_section == "B");
  CHECK(r.second_best_ratio == doctest::Approx(5.0 / 9.0));
  CHECK(format_result_line(r) == "q B e2 9 5 0.555556");
  CHECK(!r.low_confidence);
}

TEST_CASE("all zero counts pick the first entry with low confidence") {
  const auto r = with_counts({0, 0, 0}, labelled({"A", "B", "C"}));
  CHECK(r.best_entry == "e1");
  CHECK(r.second_best_ratio == 0.0);
  CHECK(r.low_confidence);
}

TEST_CASE("ties go to the earlier entry") {
  const auto r = with_counts({30, 30, 12}, labelled({"A", "B", "C"}));
  CHECK(r.best_entry == "e1");
  CHECK(r.second_best_ratio == 1.0);
}

TEST_CASE("a single entry has ratio zero") {
  const auto s = select_best(std::vector<size_t>{7});
  CHECK(s.best_index == 0);
  CHECK(s.second_count == 0);
  CHECK(s.ratio == 0.0);
}

TEST_CASE("scaling counts keeps the argmax") {
  std::mt19937_64 rng(31);
  std::uniform_int_distribution<size_t> u(0, 50);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<size_t> c(7);
    for (auto& v : c) v = u(rng);
    auto scaled = c;
    for (auto& v : scaled) v *= 3;
    CHECK(select_best(c).best_index == select_best(scaled).best_index);
  }
}

TEST_CASE("an empty index is invalid input") {
  Query q;
  q.id = "q";
  CHECK_THROWS_AS(localize(q, GalleryIndex{}, LocalizeParams{}), InvalidInput);
}

TEST_CASE("querying with a gallery image retrieves it") {
  const auto index = texture_index(4, 3);
  for (size_t k = 0; k < index.entries.size(); ++k) {
    Query q;
    q.id = "q" + std::to_string(k);
    q.pyramid = index.entries[k].pyramid;
    const auto r = localize(q, index, LocalizeParams{});
    CHECK(r.best_index == k);
    CHECK(r.predicted_section == index.entries[k].section_id);
    CHECK(r.best_count > r.second_count);
  }
}

TEST_CASE("filtered counts never exceed raw counts and runs are deterministic") {
  const auto index = texture_index(3, 3);
  Query q;
  q.id = "q";
  q.pyramid = extract(testing::WaveTexture(200, 0.3, 0.9).render(128, 96, 1.5, 0.5), FeatureBackend::builtin());
  q.detections = {"q", {{0, 0, 64, 50, "car", 0.9}}};
  LocalizeParams p;
  const auto r = localize(q, index, p);
  for (size_t k = 0; k < r.counts.size(); ++k) CHECK(r.counts[k] <= r.raw_counts[k]);
  CHECK(r.counts[0] < r.raw_counts[0]);
  CHECK(localize(q, index, p) == r);
  p.jobs = 3;
  CHECK(localize(q, index, p) == r);
  p.use_vehicle_filter = false;
  const auto off = localize(q, index, p);
  CHECK(off.counts == off.raw_counts);
  CHECK(off.raw_counts == r.raw_counts);
}
