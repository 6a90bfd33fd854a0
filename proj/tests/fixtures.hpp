#pragma once

// Small random inputs shared by the network and training tests.

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>

#include "lst/geometry.hpp"
#include "lst/layers.hpp"
#include "lst/network.hpp"

namespace fixture {

/// n points uniform in a unit cube with two features and labels cycling over
/// `classes`; the centroid is the cloud mean.
inline lst::Block random_block(std::size_t n, std::size_t classes, std::uint64_t seed) {
  lst::Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  lst::Block b;
  b.cloud.features = lst::Matrix(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    b.cloud.positions.push_back({u(rng), u(rng), u(rng)});
    b.cloud.features(i, 0) = u(rng);
    b.cloud.features(i, 1) = u(rng);
    b.cloud.labels.push_back(static_cast<int>(i % classes));
  }
  for (std::size_t c = 0; c < classes; ++c) b.cloud.class_names.push_back("c" + std::to_string(c));
  for (const auto& p : b.cloud.positions)
    for (int a = 0; a < 3; ++a) b.centroid[a] += p[a] / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) b.source_indices.push_back(i);
  return b;
}

/// N=16, S=4, D1=4, three classes.
inline lst::net::NetConfig tiny_net(lst::net::Wiring wiring = lst::net::Wiring::wnet) {
  lst::net::NetConfig c;
  c.classes = 3;
  c.d1 = 4;
  c.supertokens = 4;
  c.k_local = 4;
  c.wiring = wiring;
  return c;
}

}  // namespace fixture
