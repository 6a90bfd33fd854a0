#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>

#include "lst/geometry.hpp"

namespace lst {

// Labelled-point text format:
//   #columns N_features=<C> classes=<name1,name2,...>
//   x y z f1 ... fC label
// one point per line. Parse failures raise DataError naming the line.

void write_labeled_points(std::ostream& os, const PointCloud& cloud);
void write_labeled_points(const std::filesystem::path& path, const PointCloud& cloud);
PointCloud read_labeled_points(std::istream& is);
PointCloud read_labeled_points(const std::filesystem::path& path);

/// Per-point record for the ASCII PLY dump (x, y, z, label, pred, cluster).
struct PlyVertex {
  Vec3 position;
  int label;
  int pred;
  int cluster;
};

void write_ply(std::ostream& os, std::span<const PlyVertex> vertices);
void write_ply(const std::filesystem::path& path, std::span<const PlyVertex> vertices);

}  // namespace lst
