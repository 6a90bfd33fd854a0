#include <random>
#include <set>
#include <sstream>

#include "doctest.h"
#include "lst/errors.hpp"
#include "lst/geometry.hpp"
#include "lst/layers.hpp"
#include "lst/pointio.hpp"
#include "oracles.hpp"

using lst::Matrix;
using lst::PointCloud;
using lst::Vec3;

namespace {

PointCloud make_cloud(std::vector<Vec3> pts, std::vector<int> labels = {}, std::size_t classes = 3) {
  PointCloud c;
  c.positions = std::move(pts);
  c.features = Matrix(c.positions.size(), 1);
  for (std::size_t i = 0; i < c.size(); ++i) c.features(i, 0) = static_cast<double>(i);
  c.labels = labels.empty() ? std::vector<int>(c.size(), 0) : std::move(labels);
  for (std::size_t k = 0; k < classes; ++k) c.class_names.push_back("c" + std::to_string(k));
  return c;
}

PointCloud random_cloud(std::size_t n, double side, std::uint64_t seed) {
  lst::Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, side);
  std::vector<Vec3> pts(n);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    pts[i] = {u(rng), u(rng), u(rng)};
    labels[i] = static_cast<int>(rng() % 3);
  }
  return make_cloud(pts, labels);
}

}  // namespace

TEST_SUITE("geometry") {

TEST_CASE("point cloud validation") {
  PointCloud c = make_cloud({{0, 0, 0}, {1, 1, 1}});
  CHECK_NOTHROW(c.validate());
  c.labels[1] = 3;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c.labels[1] = 0;
  c.positions[0][2] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  CHECK_THROWS_AS(make_cloud({}).validate(), std::invalid_argument);
}

TEST_CASE("grid_subsample merges a cell by mean and majority") {
  const PointCloud one = lst::grid_subsample(make_cloud({{0.00, 0, 0}, {0.04, 0, 0}}, {2, 2}), 0.10);
  REQUIRE(one.size() == 1);
  CHECK(one.positions[0][0] == doctest::Approx(0.02));
  CHECK(one.labels[0] == 2);
  CHECK(one.features(0, 0) == doctest::Approx(0.5));

  const PointCloud two = lst::grid_subsample(make_cloud({{0.05, 0, 0}, {0.15, 0, 0}}), 0.10);
  REQUIRE(two.size() == 2);
  CHECK(two.positions[0] == Vec3{0.05, 0, 0});
  CHECK(two.positions[1] == Vec3{0.15, 0, 0});

  const PointCloud tie = lst::grid_subsample(make_cloud({{0, 0, 0}, {0.01, 0, 0}}, {2, 1}), 0.10);
  CHECK(tie.labels[0] == 1);

  CHECK_THROWS_AS(lst::grid_subsample(two, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(lst::grid_subsample(two, -1.0), std::invalid_argument);
}

TEST_CASE("grid_subsample count equals occupied cells and is idempotent") {
  const PointCloud cloud = random_cloud(1000, 1.0, 21);
  const PointCloud once = lst::grid_subsample(cloud, 0.10);
  CHECK(once.size() == oracle::occupied_cells(cloud.positions, 0.10));
  CHECK(once.size() <= cloud.size());
  const PointCloud twice = lst::grid_subsample(once, 0.10);
  CHECK(twice.positions == once.positions);
  CHECK(twice.labels == once.labels);
  CHECK(twice.features == once.features);
}

TEST_CASE("offset_coordinates moves the minimum corner to the origin") {
  const PointCloud single = lst::offset_coordinates(make_cloud({{5, 7, -2}}));
  CHECK(single.positions[0] == Vec3{0, 0, 0});
  const PointCloud pair = lst::offset_coordinates(make_cloud({{1, 1, 1}, {3, 2, 1}}));
  CHECK(pair.positions[0] == Vec3{0, 0, 0});
  CHECK(pair.positions[1] == Vec3{2, 1, 0});
  const PointCloud any = lst::offset_coordinates(random_cloud(200, 30.0, 22));
  for (int a = 0; a < 3; ++a) {
    double lo = 1e300;
    for (const auto& p : any.positions) lo = std::min(lo, p[a]);
    CHECK(lo == 0.0);
  }
}

TEST_CASE("knn_block_split small cases") {
  std::vector<Vec3> pts;
  for (int i = 0; i < 10; ++i) pts.push_back({0.1 * i, 0.05 * i, 0});
  auto blocks = lst::knn_block_split(make_cloud(pts), 10, 100.0);
  REQUIRE(blocks.size() == 1);
  CHECK(std::set<std::size_t>(blocks[0].source_indices.begin(), blocks[0].source_indices.end()).size() == 10);

  pts.resize(5);
  blocks = lst::knn_block_split(make_cloud(pts), 8, 100.0);
  REQUIRE(blocks.size() == 1);
  CHECK(blocks[0].cloud.size() == 8);
  CHECK(blocks[0].source_indices.size() == 8);
  CHECK(std::set<std::size_t>(blocks[0].source_indices.begin(), blocks[0].source_indices.end()) ==
        std::set<std::size_t>{0, 1, 2, 3, 4});

  CHECK_THROWS_AS(lst::knn_block_split(make_cloud(pts), 0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(lst::knn_block_split(make_cloud(pts), 4, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(lst::knn_block_split(PointCloud{}, 4, 1.0), std::invalid_argument);
}

TEST_CASE("knn_block_split blocks match an exhaustive sort from four seeds") {
  lst::Rng rng(23);
  std::normal_distribution<double> n(0.0, 0.3);
  std::vector<Vec3> pts;
  const Vec3 centres[4] = {{1, 1, 0}, {3, 1, 0}, {1, 3, 0}, {3, 3, 0}};
  for (int i = 0; i < 500; ++i) {
    const Vec3& c = centres[i % 4];
    pts.push_back({c[0] + n(rng), c[1] + n(rng), c[2] + n(rng)});
  }
  for (auto& p : pts) {
    p[0] = std::clamp(p[0], 0.01, 3.99);
    p[1] = std::clamp(p[1], 0.01, 3.99);
  }
  const PointCloud cloud = make_cloud(pts);
  const auto blocks = lst::knn_block_split(cloud, 64, 2.0);
  CHECK(blocks.size() >= 4);
  std::set<std::size_t> covered;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const auto& blk = blocks[b];
    CHECK(blk.cloud.size() == 64);
    covered.insert(blk.source_indices.begin(), blk.source_indices.end());
    if (b < 4) {
      const auto expected = oracle::nearest(pts, blk.centroid, 64);
      CHECK(std::set<std::size_t>(expected.begin(), expected.end()) ==
            std::set<std::size_t>(blk.source_indices.begin(), blk.source_indices.end()));
    }
    for (std::size_t i = 0; i < blk.cloud.size(); ++i) CHECK(blk.cloud.positions[i] == pts[blk.source_indices[i]]);
  }
  CHECK(covered.size() == pts.size());
}

TEST_CASE("knn_block_split coverage and membership on random clouds") {
  for (std::uint64_t seed = 30; seed < 34; ++seed) {
    const PointCloud cloud = random_cloud(400 + 300 * (seed - 30), 5.0, seed);
    const auto blocks = lst::knn_block_split(cloud, 100, 1.7);
    std::set<std::size_t> covered;
    for (const auto& blk : blocks) {
      covered.insert(blk.source_indices.begin(), blk.source_indices.end());
      auto d2 = [&](std::size_t i) {
        double s = 0.0;
        for (int a = 0; a < 3; ++a) s += (cloud.positions[i][a] - blk.centroid[a]) * (cloud.positions[i][a] - blk.centroid[a]);
        return s;
      };
      const std::set<std::size_t> members(blk.source_indices.begin(), blk.source_indices.end());
      double farthest_in = 0.0;
      for (std::size_t i : members) farthest_in = std::max(farthest_in, d2(i));
      for (std::size_t i = 0; i < cloud.size(); ++i)
        if (!members.count(i)) CHECK(d2(i) >= farthest_in);
    }
    CHECK(covered.size() == cloud.size());
  }
}

TEST_CASE("labeled-point text round trip") {
  PointCloud c = random_cloud(25, 3.0, 40);
  c.features(3, 0) = 0.1 + 1e-13;
  std::stringstream ss;
  lst::write_labeled_points(ss, c);
  const std::string text = ss.str();
  CHECK(text.rfind("#columns N_features=1 classes=c0,c1,c2\n", 0) == 0);
  const PointCloud back = lst::read_labeled_points(ss);
  CHECK(back.positions == c.positions);
  CHECK(back.features == c.features);
  CHECK(back.labels == c.labels);
  CHECK(back.class_names == c.class_names);
}

TEST_CASE("labeled-point parser rejects malformed input with line numbers") {
  auto parse = [](const std::string& s) {
    std::istringstream in(s);
    return lst::read_labeled_points(in);
  };
  const std::string header = "#columns N_features=1 classes=a,b\n";
  auto message = [&](const std::string& body) {
    try {
      parse(header + body);
    } catch (const lst::DataError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message("0 0 0 1 0\n0 0 0 1\n").find("line 3") != std::string::npos);
  CHECK(message("0 0 0 1 5\n").find("line 2") != std::string::npos);
  CHECK(message("0 0 x 1 0\n").find("line 2") != std::string::npos);
  CHECK(message("0 0 0 1 0 7\n").find("line 2") != std::string::npos);
  CHECK_THROWS_AS(parse("0 0 0 1 0\n"), lst::DataError);
  CHECK_THROWS_AS(parse(header), lst::DataError);
  CHECK_THROWS_AS(lst::read_labeled_points(std::filesystem::path("/nonexistent/file.txt")), lst::DataError);
}

TEST_CASE("PLY output has one vertex record per point") {
  std::vector<lst::PlyVertex> v{{{0, 1, 2}, 1, 2, 3}, {{0.5, 0.25, 1}, 0, 0, 7}};
  std::ostringstream os;
  lst::write_ply(os, v);
  std::istringstream in(os.str());
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  CHECK(lines[0] == "ply");
  CHECK(lines[1] == "format ascii 1.0");
  CHECK(std::find(lines.begin(), lines.end(), "element vertex 2") != lines.end());
  for (const char* p : {"property double x", "property double y", "property double z", "property int label",
                        "property int pred", "property int cluster"})
    CHECK(std::find(lines.begin(), lines.end(), p) != lines.end());
  const auto end = std::find(lines.begin(), lines.end(), "end_header");
  REQUIRE(end != lines.end());
  CHECK(lines.end() - end - 1 == 2);
  CHECK(*(end + 2) == "0.5 0.25 1 0 0 7");
}

}  // TEST_SUITE
