#include <algorithm>
#include <cmath>
#include <sstream>

#include "doctest.h"
#include "lst/pointio.hpp"
#include "lst/synthdata.hpp"

namespace synth = lst::synth;

namespace {

double distance_to_box_surface(const lst::Vec3& p, const synth::BoxFootprint& b) {
  bool inside = true;
  double outside2 = 0.0, inner = 1e300;
  for (int a = 0; a < 3; ++a) {
    if (p[a] < b.lo[a]) {
      inside = false;
      outside2 += (b.lo[a] - p[a]) * (b.lo[a] - p[a]);
    } else if (p[a] > b.hi[a]) {
      inside = false;
      outside2 += (p[a] - b.hi[a]) * (p[a] - b.hi[a]);
    } else {
      inner = std::min({inner, p[a] - b.lo[a], b.hi[a] - p[a]});
    }
  }
  return inside ? inner : std::sqrt(outside2);
}

}  // namespace

TEST_SUITE("synthdata") {

TEST_CASE("all mass on Road without noise gives a flat road") {
  synth::SceneSpec spec;
  spec.class_mix = {1, 0, 0, 0, 0, 0};
  spec.noise_sigma = 0.0;
  spec.n_points = 300;
  const auto cloud = synth::generate_scene(spec);
  CHECK(cloud.size() == 300);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    CHECK(cloud.labels[i] == synth::kRoad);
    CHECK(cloud.positions[i][2] == 0.0);
  }
}

TEST_CASE("identical specs give identical scenes") {
  synth::SceneSpec spec;
  spec.rng_seed = 42;
  std::ostringstream a, b;
  lst::write_labeled_points(a, synth::generate_scene(spec));
  lst::write_labeled_points(b, synth::generate_scene(spec));
  CHECK(a.str() == b.str());
  spec.rng_seed = 43;
  std::ostringstream c;
  lst::write_labeled_points(c, synth::generate_scene(spec));
  CHECK(a.str() != c.str());
}

TEST_CASE("label counts follow the allocation table") {
  synth::SceneSpec spec;
  spec.rng_seed = 7;
  spec.n_points = 4096;
  const auto counts = synth::allocate_counts(spec);
  std::size_t total = 0;
  for (auto c : counts) total += c;
  CHECK(total == 4096);
  const auto cloud = synth::generate_scene(spec);
  std::array<std::size_t, synth::kClassCount> recount{};
  for (int l : cloud.labels) ++recount[static_cast<std::size_t>(l)];
  CHECK(recount == counts);
  CHECK(cloud.class_names.size() == synth::kClassCount);
  CHECK(cloud.feature_count() == 2);
}

TEST_CASE("default mix has a 30:1 road to powerline ratio") {
  const auto counts = synth::allocate_counts(synth::SceneSpec{});
  REQUIRE(counts[synth::kPowerline] > 0);
  const double ratio = static_cast<double>(counts[synth::kRoad]) / static_cast<double>(counts[synth::kPowerline]);
  CHECK(ratio == doctest::Approx(30.0).epsilon(0.02));
}

TEST_CASE("largest-remainder allocation") {
  synth::SceneSpec spec;
  spec.n_points = 10;
  spec.class_mix = {1, 1, 1, 0, 0, 0};
  const auto counts = synth::allocate_counts(spec);
  CHECK(counts[0] == 4);
  CHECK(counts[1] == 3);
  CHECK(counts[2] == 3);
}

TEST_CASE("label geometry is consistent") {
  for (std::uint64_t seed : {1u, 2u, 3u, 99u}) {
    synth::SceneSpec spec;
    spec.rng_seed = seed;
    spec.noise_sigma = 0.05;
    const auto cloud = synth::generate_scene(spec);
    const auto boxes = synth::building_boxes(spec);
    REQUIRE_FALSE(boxes.empty());
    double road_top = -1e300, line_bottom = 1e300;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      const auto& p = cloud.positions[i];
      if (cloud.labels[i] == synth::kRoad) road_top = std::max(road_top, p[2]);
      if (cloud.labels[i] == synth::kPowerline) line_bottom = std::min(line_bottom, p[2]);
      if (cloud.labels[i] == synth::kBuilding) {
        double best = 1e300;
        for (const auto& b : boxes) best = std::min(best, distance_to_box_surface(p, b));
        CHECK(best <= 3.0 * spec.noise_sigma + 1e-12);
      }
      CHECK(cloud.features(i, 1) >= 0.0);
      CHECK(cloud.features(i, 1) <= 1.0);
    }
    CHECK(line_bottom > road_top);
  }
}

TEST_CASE("invalid specs are rejected") {
  synth::SceneSpec spec;
  spec.n_points = 0;
  CHECK_THROWS_AS(synth::generate_scene(spec), std::invalid_argument);
  spec = {};
  spec.extent = {0.0, 5.0};
  CHECK_THROWS_AS(synth::generate_scene(spec), std::invalid_argument);
  spec = {};
  spec.noise_sigma = -0.1;
  CHECK_THROWS_AS(synth::generate_scene(spec), std::invalid_argument);
  spec = {};
  spec.class_mix = {0, 0, 0, 0, 0, 0};
  CHECK_THROWS_AS(synth::generate_scene(spec), std::invalid_argument);
  spec.class_mix = {1, -1, 0, 0, 0, 0};
  CHECK_THROWS_AS(synth::generate_scene(spec), std::invalid_argument);
}

}  // TEST_SUITE
