#pragma once

#include <array>
#include <cstddef>
#include <cstdint>

#include "lst/geometry.hpp"

namespace lst::synth {

inline constexpr std::size_t kClassCount = 6;
enum SceneClass : int { kRoad = 0, kBuilding, kGrass, kTree, kSoil, kPowerline };
inline constexpr std::array<const char*, kClassCount> kClassNames = {"Road", "Building", "Grass",
                                                                      "Tree", "Soil", "Powerline"};

struct SceneSpec {
  std::uint64_t rng_seed = 0;
  std::array<double, 2> extent{20.0, 20.0};
  std::size_t n_points = 2048;
  std::array<double, kClassCount> class_mix{30.0, 12.0, 15.0, 12.0, 6.0, 1.0};
  double noise_sigma = 0.02;

  /// Throws std::invalid_argument naming the violated field.
  void validate() const;
};

/// Axis-aligned box a Building point may lie on.
struct BoxFootprint {
  Vec3 lo;
  Vec3 hi;
};

/// Points per class: largest-remainder apportionment of n_points by class_mix
/// (remainder ties go to the smaller class index).
std::array<std::size_t, kClassCount> allocate_counts(const SceneSpec& spec);

/// Buildings the scene for `spec` places; deterministic in spec.
std::vector<BoxFootprint> building_boxes(const SceneSpec& spec);

/// Labelled synthetic LiDAR-like scene. Features are (height above ground,
/// pseudo-reflectance). Bit-identical for identical specs.
PointCloud generate_scene(const SceneSpec& spec);

}  // namespace lst::synth
