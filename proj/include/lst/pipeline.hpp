#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <vector>

#include "lst/config.hpp"
#include "lst/geometry.hpp"
#include "lst/network.hpp"
#include "lst/pointio.hpp"
#include "lst/training.hpp"

namespace lst::pipeline {

/// Every scene of the run, generated in memory.
std::vector<PointCloud> synthesize(const RunConfig& config);

std::filesystem::path scene_path(const std::filesystem::path& dir, std::size_t index);
void write_scenes(const std::filesystem::path& dir, const std::vector<PointCloud>& scenes);
/// Throws DataError when the directory or any scene file is missing or malformed.
std::vector<PointCloud> load_scenes(const RunConfig& config);

/// grid_subsample -> offset_coordinates -> knn_block_split -> prepare_block.
std::vector<net::BlockInput> preprocess(const PointCloud& scene, const RunConfig& config);

/// Scenes [0, count - holdout) train, the trailing `holdout` scenes evaluate.
struct Dataset {
  std::vector<std::vector<net::BlockInput>> train_scenes;
  std::vector<std::vector<net::BlockInput>> eval_scenes;

  std::vector<net::BlockInput> train_blocks() const;
  std::vector<net::BlockInput> eval_blocks() const;
};

Dataset build_dataset(const std::vector<PointCloud>& scenes, const RunConfig& config);

struct TrainOutcome {
  train::TrainState state;
  std::vector<train::EpochRecord> history;
};

/// Trains from `state` (fresh or resumed). When `history` is given, rows are
/// streamed to it as epochs finish. At most `max_epochs` epochs run.
TrainOutcome run_training(const Dataset& data, const RunConfig& config, train::TrainState state,
                          std::ostream* history = nullptr, const train::EpochCallback& on_epoch = {},
                          std::size_t max_epochs = std::numeric_limits<std::size_t>::max());

/// One vertex per distinct source point of the scene's blocks, first
/// occurrence wins.
std::vector<PlyVertex> scene_vertices(const std::vector<net::BlockInput>& blocks,
                                      const std::vector<net::Prediction>& predictions);

}  // namespace lst::pipeline
