#include "lst/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

#include "lst/layers.hpp"

namespace lst::synth {
namespace {

constexpr std::array<double, kClassCount> kReflectance = {0.12, 0.32, 0.55, 0.72, 0.88, 0.45};
constexpr double kReflectanceNoise = 0.04;
constexpr double kPowerlineHeight = 8.0;
constexpr double kPowerlineSag = 0.5;

// Gaussian jitter truncated at three standard deviations.
double jitter(double sigma, Rng& rng) {
  if (sigma == 0.0) return 0.0;
  std::normal_distribution<double> n(0.0, 1.0);
  double z = n(rng);
  while (std::abs(z) > 3.0) z = n(rng);
  return sigma * z;
}

double uniform(double lo, double hi, Rng& rng) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

struct Layout {
  std::vector<BoxFootprint> boxes;
  std::vector<std::array<double, 3>> canopies;  // x, y, crown height
  std::vector<std::array<double, 3>> soil;      // x, y, radius
  double line_y[2];
};

Layout make_layout(const SceneSpec& spec) {
  Rng rng(mix_seed(spec.rng_seed, 1));
  const double ex = spec.extent[0], ey = spec.extent[1];
  const double span = std::min(ex, ey);
  Layout l;
  for (int b = 0; b < 2; ++b) {
    const double w = uniform(0.15, 0.25, rng) * span;
    const double d = uniform(0.15, 0.25, rng) * span;
    const double h = uniform(3.0, 6.0, rng);
    const double x0 = uniform(0.05 * ex + b * 0.5 * ex, (0.45 + b * 0.5) * ex - w, rng);
    const double y0 = uniform(0.62 * ey, 0.98 * ey - d, rng);
    l.boxes.push_back({{x0, y0, 0.0}, {x0 + w, y0 + d, h}});
  }
  for (int t = 0; t < 3; ++t) {
    l.canopies.push_back({uniform(0.1, 0.9, rng) * ex, uniform(0.05, 0.35, rng) * ey, uniform(4.0, 7.0, rng)});
  }
  for (int s = 0; s < 3; ++s) {
    l.soil.push_back({uniform(0.1, 0.9, rng) * ex, uniform(0.05, 0.35, rng) * ey, 0.1 * span});
  }
  l.line_y[0] = uniform(0.3, 0.4, rng) * ey;
  l.line_y[1] = l.line_y[0] + 0.02 * ey;
  return l;
}

Vec3 sample_box_surface(const BoxFootprint& box, double sigma, Rng& rng) {
  const double w = box.hi[0] - box.lo[0], d = box.hi[1] - box.lo[1], h = box.hi[2] - box.lo[2];
  const double roof = w * d, wall_x = w * h, wall_y = d * h;
  const double pick = uniform(0.0, roof + 2 * wall_x + 2 * wall_y, rng);
  const double u = uniform(0.0, 1.0, rng), v = uniform(0.0, 1.0, rng);
  const double n = jitter(sigma, rng);
  if (pick < roof) return {box.lo[0] + u * w, box.lo[1] + v * d, box.hi[2] + n};
  if (pick < roof + wall_x) return {box.lo[0] + u * w, box.lo[1] + n, v * h};
  if (pick < roof + 2 * wall_x) return {box.lo[0] + u * w, box.hi[1] + n, v * h};
  if (pick < roof + 2 * wall_x + wall_y) return {box.lo[0] + n, box.lo[1] + u * d, v * h};
  return {box.hi[0] + n, box.lo[1] + u * d, v * h};
}

}  // namespace

void SceneSpec::validate() const {
  if (n_points < 1) throw std::invalid_argument("SceneSpec.n_points must be at least 1");
  if (!(extent[0] > 0.0) || !(extent[1] > 0.0)) throw std::invalid_argument("SceneSpec.extent must be positive");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
    throw std::invalid_argument("SceneSpec.noise_sigma must be nonnegative");
  }
  // keeps the powerline above every ground point
  if (3.0 * noise_sigma >= kPowerlineHeight - kPowerlineSag - 1.0) {
    throw std::invalid_argument("SceneSpec.noise_sigma is too large for the scene layout");
  }
  double total = 0.0;
  for (double w : class_mix) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw std::invalid_argument("SceneSpec.class_mix entries must be nonnegative");
    total += w;
  }
  if (!(total > 0.0)) throw std::invalid_argument("SceneSpec.class_mix needs a positive entry");
}

std::array<std::size_t, kClassCount> allocate_counts(const SceneSpec& spec) {
  spec.validate();
  const double total = std::accumulate(spec.class_mix.begin(), spec.class_mix.end(), 0.0);
  std::array<std::size_t, kClassCount> counts{};
  std::array<double, kClassCount> remainder{};
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < kClassCount; ++c) {
    const double exact = static_cast<double>(spec.n_points) * spec.class_mix[c] / total;
    counts[c] = static_cast<std::size_t>(std::floor(exact));
    remainder[c] = exact - static_cast<double>(counts[c]);
    assigned += counts[c];
  }
  std::array<std::size_t, kClassCount> order{};
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t r = 0; assigned < spec.n_points; ++r, ++assigned) ++counts[order[r % kClassCount]];
  return counts;
}

std::vector<BoxFootprint> building_boxes(const SceneSpec& spec) {
  spec.validate();
  return make_layout(spec).boxes;
}

PointCloud generate_scene(const SceneSpec& spec) {
  const auto counts = allocate_counts(spec);
  const Layout layout = make_layout(spec);
  const double ex = spec.extent[0], ey = spec.extent[1];
  const double sigma = spec.noise_sigma;
  Rng rng(mix_seed(spec.rng_seed, 2));
  std::normal_distribution<double> unit(0.0, 1.0);

  PointCloud cloud;
  for (const char* name : kClassNames) cloud.class_names.emplace_back(name);
  cloud.features = Matrix(spec.n_points, 2);
  cloud.positions.reserve(spec.n_points);
  cloud.labels.reserve(spec.n_points);

  for (std::size_t c = 0; c < kClassCount; ++c) {
    for (std::size_t i = 0; i < counts[c]; ++i) {
      Vec3 p{};
      switch (static_cast<SceneClass>(c)) {
        case kRoad:
          p = {uniform(0.0, ex, rng), uniform(0.42, 0.58, rng) * ey, jitter(sigma, rng)};
          break;
        case kBuilding: {
          const auto& box = layout.boxes[i % layout.boxes.size()];
          p = sample_box_surface(box, sigma, rng);
          break;
        }
        case kGrass:
          p = {uniform(0.0, ex, rng), uniform(0.0, 0.4, rng) * ey, uniform(0.05, 0.25, rng) + jitter(sigma, rng)};
          break;
        case kTree: {
          const auto& t = layout.canopies[i % layout.canopies.size()];
          const double z = std::max(1.5, t[2] + 0.8 * unit(rng));
          p = {t[0] + 1.2 * unit(rng), t[1] + 1.2 * unit(rng), z};
          break;
        }
        case kSoil: {
          const auto& s = layout.soil[i % layout.soil.size()];
          const double r = s[2] * std::sqrt(uniform(0.0, 1.0, rng));
          const double a = uniform(0.0, 2.0 * std::acos(-1.0), rng);
          p = {s[0] + r * std::cos(a), s[1] + r * std::sin(a), jitter(sigma, rng)};
          break;
        }
        case kPowerline: {
          const double t = uniform(0.0, 1.0, rng);
          const double sag = kPowerlineSag * (1.0 - (2.0 * t - 1.0) * (2.0 * t - 1.0));
          p = {t * ex, layout.line_y[i % 2] + jitter(sigma, rng), kPowerlineHeight - sag + jitter(sigma, rng)};
          break;
        }
      }
      const std::size_t row = cloud.positions.size();
      cloud.positions.push_back(p);
      cloud.labels.push_back(static_cast<int>(c));
      cloud.features(row, 0) = p[2];
      cloud.features(row, 1) = std::clamp(kReflectance[c] + kReflectanceNoise * unit(rng), 0.0, 1.0);
    }
  }
  return cloud;
}

}  // namespace lst::synth
