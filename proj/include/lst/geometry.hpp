#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "lst/matrix.hpp"

namespace lst {

/// Labelled points. features is N x C (one row per point).
struct PointCloud {
  std::vector<Vec3> positions;
  Matrix features;
  std::vector<int> labels;
  std::vector<std::string> class_names;

  std::size_t size() const noexcept { return positions.size(); }
  std::size_t feature_count() const noexcept { return features.cols(); }

  /// Throws std::invalid_argument when lengths disagree, a label is out of
  /// range, a coordinate is not finite, or the cloud is empty.
  void validate() const;
};

/// Copy of the selected points, in the given order (repeats allowed).
PointCloud select_points(const PointCloud& cloud, const std::vector<std::size_t>& indices);

/// Fixed-size neighbourhood sample fed to the network as one input.
struct Block {
  PointCloud cloud;
  Vec3 centroid{};
  std::vector<std::size_t> source_indices;
};

/// One point per occupied voxel of side `cell`: mean position and features,
/// majority label (ties to the smaller class index). Voxels are emitted in
/// order of first appearance.
PointCloud grid_subsample(const PointCloud& cloud, double cell);

/// Translates positions so the per-axis minimum sits at the origin.
PointCloud offset_coordinates(const PointCloud& cloud);

/// Splits a cloud into k-point blocks. Seeds are the centroids of the occupied
/// cells of an XY grid with pitch `seed_spacing`; each block holds the k points
/// nearest its seed (ties to the smaller index), padded by resampling with
/// replacement when the cloud has fewer than k points. Points left uncovered by
/// the grid seeds get extra blocks seeded on themselves, so the union of
/// source_indices is always the whole cloud.
std::vector<Block> knn_block_split(const PointCloud& cloud, std::size_t k, double seed_spacing);

}  // namespace lst
