#include "lst/geometry.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <stdexcept>
#include <unordered_map>

#include "lst/layers.hpp"

namespace lst {

void PointCloud::validate() const {
  const std::size_t n = positions.size();
  if (n == 0) throw std::invalid_argument("point cloud is empty");
  if (features.rows() != n || labels.size() != n) {
    throw std::invalid_argument("point cloud has " + std::to_string(n) + " positions, " +
                                std::to_string(features.rows()) + " feature rows and " +
                                std::to_string(labels.size()) + " labels");
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (double c : positions[i]) {
      if (!std::isfinite(c)) {
        throw std::invalid_argument("point " + std::to_string(i) + " has a non-finite coordinate");
      }
    }
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= class_names.size()) {
      throw std::invalid_argument("point " + std::to_string(i) + " has label " +
                                  std::to_string(labels[i]) + " outside [0, " +
                                  std::to_string(class_names.size()) + ")");
    }
  }
}

PointCloud select_points(const PointCloud& cloud, const std::vector<std::size_t>& indices) {
  PointCloud out;
  out.class_names = cloud.class_names;
  out.positions.reserve(indices.size());
  out.labels.reserve(indices.size());
  out.features = Matrix(indices.size(), cloud.feature_count());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const std::size_t i = indices[r];
    out.positions.push_back(cloud.positions[i]);
    out.labels.push_back(cloud.labels[i]);
    std::copy(cloud.features.row(i).begin(), cloud.features.row(i).end(), out.features.row(r).begin());
  }
  return out;
}

namespace {

struct VoxelKey {
  std::int64_t x, y, z;
  bool operator==(const VoxelKey&) const = default;
};

struct VoxelHash {
  std::size_t operator()(const VoxelKey& k) const noexcept {
    auto h = static_cast<std::uint64_t>(k.x) * 73856093ull;
    h ^= static_cast<std::uint64_t>(k.y) * 19349663ull;
    h ^= static_cast<std::uint64_t>(k.z) * 83492791ull;
    return static_cast<std::size_t>(h);
  }
};

double squared_distance(const Vec3& a, const Vec3& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

// k nearest points to `seed` ordered by (distance, index).
std::vector<std::size_t> nearest_to(const PointCloud& cloud, const Vec3& seed, std::size_t k) {
  std::vector<std::pair<double, std::size_t>> order(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) order[i] = {squared_distance(cloud.positions[i], seed), i};
  const std::size_t take = std::min(k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end());
  std::vector<std::size_t> out(take);
  for (std::size_t r = 0; r < take; ++r) out[r] = order[r].second;
  return out;
}

}  // namespace

PointCloud grid_subsample(const PointCloud& cloud, double cell) {
  if (!(cell > 0.0) || !std::isfinite(cell)) {
    throw std::invalid_argument("grid_subsample: cell size must be positive, got " + std::to_string(cell));
  }
  cloud.validate();
  const std::size_t c = cloud.feature_count();
  const std::size_t classes = cloud.class_names.size();

  std::unordered_map<VoxelKey, std::size_t, VoxelHash> slot;
  std::vector<std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3& p = cloud.positions[i];
    const VoxelKey key{static_cast<std::int64_t>(std::floor(p[0] / cell)),
                       static_cast<std::int64_t>(std::floor(p[1] / cell)),
                       static_cast<std::int64_t>(std::floor(p[2] / cell))};
    auto [it, inserted] = slot.try_emplace(key, members.size());
    if (inserted) members.emplace_back();
    members[it->second].push_back(i);
  }

  PointCloud out;
  out.class_names = cloud.class_names;
  out.features = Matrix(members.size(), c);
  out.positions.reserve(members.size());
  out.labels.reserve(members.size());
  std::vector<std::size_t> votes(classes);
  for (std::size_t v = 0; v < members.size(); ++v) {
    const auto& idx = members[v];
    const double inv = 1.0 / static_cast<double>(idx.size());
    Vec3 mean{0.0, 0.0, 0.0};
    std::fill(votes.begin(), votes.end(), 0);
    auto frow = out.features.row(v);
    for (std::size_t i : idx) {
      for (int a = 0; a < 3; ++a) mean[a] += cloud.positions[i][a];
      for (std::size_t j = 0; j < c; ++j) frow[j] += cloud.features(i, j);
      ++votes[static_cast<std::size_t>(cloud.labels[i])];
    }
    for (double& m : mean) m *= inv;
    for (double& f : frow) f *= inv;
    out.positions.push_back(mean);
    // max_element returns the first maximum, i.e. the smallest class index
    out.labels.push_back(static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin()));
  }
  return out;
}

PointCloud offset_coordinates(const PointCloud& cloud) {
  cloud.validate();
  Vec3 lo{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
          std::numeric_limits<double>::infinity()};
  for (const Vec3& p : cloud.positions)
    for (int a = 0; a < 3; ++a) lo[a] = std::min(lo[a], p[a]);
  PointCloud out = cloud;
  for (Vec3& p : out.positions)
    for (int a = 0; a < 3; ++a) p[a] -= lo[a];
  return out;
}

std::vector<Block> knn_block_split(const PointCloud& cloud, std::size_t k, double seed_spacing) {
  if (cloud.size() == 0) throw std::invalid_argument("knn_block_split: cloud is empty");
  if (k == 0) throw std::invalid_argument("knn_block_split: k must be at least 1");
  if (!(seed_spacing > 0.0) || !std::isfinite(seed_spacing)) {
    throw std::invalid_argument("knn_block_split: seed spacing must be positive");
  }
  cloud.validate();

  double min_x = std::numeric_limits<double>::infinity(), min_y = min_x;
  for (const Vec3& p : cloud.positions) {
    min_x = std::min(min_x, p[0]);
    min_y = std::min(min_y, p[1]);
  }
  // ordered map: seeds come out in (row, column) order of the XY grid
  std::map<std::pair<std::int64_t, std::int64_t>, std::pair<Vec3, std::size_t>> cells;
  for (const Vec3& p : cloud.positions) {
    const auto cx = static_cast<std::int64_t>(std::floor((p[0] - min_x) / seed_spacing));
    const auto cy = static_cast<std::int64_t>(std::floor((p[1] - min_y) / seed_spacing));
    auto& [sum, count] = cells[{cy, cx}];
    for (int a = 0; a < 3; ++a) sum[a] += p[a];
    ++count;
  }
  std::vector<Vec3> seeds;
  seeds.reserve(cells.size());
  for (const auto& [key, acc] : cells) {
    const auto& [sum, count] = acc;
    const double inv = 1.0 / static_cast<double>(count);
    seeds.push_back({sum[0] * inv, sum[1] * inv, sum[2] * inv});
  }

  std::vector<Block> blocks;
  std::vector<char> covered(cloud.size(), 0);
  auto emit = [&](const Vec3& seed) {
    std::vector<std::size_t> members = nearest_to(cloud, seed, k);
    for (std::size_t i : members) covered[i] = 1;
    if (members.size() < k) {
      Rng rng(mix_seed(0x5EEDB10Cull, blocks.size()));
      std::uniform_int_distribution<std::size_t> pick(0, members.size() - 1);
      const std::size_t have = members.size();
      while (members.size() < k) members.push_back(members[pick(rng) % have]);
    }
    Block b;
    b.cloud = select_points(cloud, members);
    b.centroid = seed;
    b.source_indices = std::move(members);
    blocks.push_back(std::move(b));
  };
  for (const Vec3& s : seeds) emit(s);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (!covered[i]) emit(cloud.positions[i]);
  }
  return blocks;
}

}  // namespace lst
