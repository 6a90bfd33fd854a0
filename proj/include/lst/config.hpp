#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

#include "lst/network.hpp"
#include "lst/synthdata.hpp"
#include "lst/training.hpp"

namespace lst {

struct PrepConfig {
  double grid_cell = 0.05;
  std::size_t block_k = 2048;
  double seed_spacing = 10.0;
};

/// Everything a CLI run needs, loaded from a `key = value` file.
///
///   seed = 7                 # base seed for scenes, init, shuffling, noise
///   data_dir = data          # where synth writes and train/eval read
///   out_dir = run            # checkpoint, history, reports
///   scene.count = 64
///   scene.holdout = 16       # trailing scenes kept for evaluation
///   scene.n_points = 2048
///   scene.extent = 20,20
///   scene.class_mix = 30,12,15,12,6,1
///   scene.noise_sigma = 0.02
///   prep.grid_cell / prep.block_k / prep.seed_spacing
///   model.d1 / model.supertokens / model.k_local / model.temperature
///   model.assign_mode = hard|soft
///   model.wiring = wnet|unet
///   train.lr0 / train.momentum / train.weight_decay / train.epochs
///   train.batch_size / train.eval_every
struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path data_dir = "data";
  std::filesystem::path out_dir = "run";
  std::size_t scene_count = 8;
  std::size_t holdout = 2;
  synth::SceneSpec scene;
  PrepConfig prep;
  net::NetConfig model;
  train::TrainConfig train;

  /// Enforces every embedded invariant; throws ConfigError.
  void validate() const;
  /// Scene spec of scene `index` (its rng_seed derived from `seed`).
  synth::SceneSpec scene_spec(std::size_t index) const;
  /// Replaces the base seed and everything derived from it.
  void set_seed(std::uint64_t value);
};

/// Throws ConfigError naming the offending line and key.
RunConfig parse_config(std::istream& is);
RunConfig load_config(const std::filesystem::path& path);
void write_config(std::ostream& os, const RunConfig& config);

}  // namespace lst
