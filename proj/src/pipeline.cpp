#include "lst/pipeline.hpp"

#include <cstdio>
#include <unordered_set>

#include "lst/errors.hpp"
#include "lst/synthdata.hpp"

namespace lst::pipeline {

std::vector<PointCloud> synthesize(const RunConfig& config) {
  std::vector<PointCloud> scenes;
  scenes.reserve(config.scene_count);
  for (std::size_t i = 0; i < config.scene_count; ++i) scenes.push_back(synth::generate_scene(config.scene_spec(i)));
  return scenes;
}

std::filesystem::path scene_path(const std::filesystem::path& dir, std::size_t index) {
  char name[32];
  std::snprintf(name, sizeof name, "scene_%03zu.txt", index);
  return dir / name;
}

void write_scenes(const std::filesystem::path& dir, const std::vector<PointCloud>& scenes) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < scenes.size(); ++i) write_labeled_points(scene_path(dir, i), scenes[i]);
}

std::vector<PointCloud> load_scenes(const RunConfig& config) {
  if (!std::filesystem::is_directory(config.data_dir)) {
    throw DataError("dataset directory " + config.data_dir.string() + " does not exist");
  }
  std::vector<PointCloud> scenes;
  for (std::size_t i = 0; i < config.scene_count; ++i) {
    const auto path = scene_path(config.data_dir, i);
    if (!std::filesystem::exists(path)) throw DataError("missing scene file " + path.string());
    PointCloud cloud = read_labeled_points(path);
    if (cloud.feature_count() != config.model.in_features) {
      throw DataError(path.string() + ": expected " + std::to_string(config.model.in_features) + " features, got " +
                      std::to_string(cloud.feature_count()));
    }
    if (cloud.class_names.size() != config.model.classes) {
      throw DataError(path.string() + ": expected " + std::to_string(config.model.classes) + " classes");
    }
    scenes.push_back(std::move(cloud));
  }
  return scenes;
}

std::vector<net::BlockInput> preprocess(const PointCloud& scene, const RunConfig& config) {
  const PointCloud cloud = offset_coordinates(grid_subsample(scene, config.prep.grid_cell));
  std::vector<net::BlockInput> out;
  for (const Block& b : knn_block_split(cloud, config.prep.block_k, config.prep.seed_spacing)) {
    out.push_back(net::prepare_block(b, config.model.k_local));
  }
  return out;
}

namespace {
std::vector<net::BlockInput> flatten(const std::vector<std::vector<net::BlockInput>>& scenes) {
  std::vector<net::BlockInput> out;
  for (const auto& s : scenes) out.insert(out.end(), s.begin(), s.end());
  return out;
}
}  // namespace

std::vector<net::BlockInput> Dataset::train_blocks() const { return flatten(train_scenes); }
std::vector<net::BlockInput> Dataset::eval_blocks() const { return flatten(eval_scenes); }

Dataset build_dataset(const std::vector<PointCloud>& scenes, const RunConfig& config) {
  if (scenes.size() <= config.holdout) throw ConfigError("scene.holdout leaves no training scenes");
  Dataset d;
  const std::size_t n_train = scenes.size() - config.holdout;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    (i < n_train ? d.train_scenes : d.eval_scenes).push_back(preprocess(scenes[i], config));
  }
  return d;
}

TrainOutcome run_training(const Dataset& data, const RunConfig& config, train::TrainState state,
                          std::ostream* history, const train::EpochCallback& on_epoch, std::size_t max_epochs) {
  const auto train_blocks = data.train_blocks();
  const auto eval_blocks = data.eval_blocks();
  TrainOutcome out;
  out.history = train::train(train_blocks, eval_blocks, config.train, config.model, state,
                             [&](const train::EpochRecord& rec, const train::TrainState& s) {
                               if (history) {
                                 train::write_history_row(*history, rec);
                                 history->flush();
                               }
                               if (on_epoch) on_epoch(rec, s);
                             },
                             max_epochs);
  out.state = std::move(state);
  return out;
}

std::vector<PlyVertex> scene_vertices(const std::vector<net::BlockInput>& blocks,
                                      const std::vector<net::Prediction>& predictions) {
  std::vector<PlyVertex> out;
  std::unordered_set<std::size_t> seen;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const auto pred = net::argmax_rows(predictions[b].fused_probs);
    for (std::size_t i = 0; i < blocks[b].size(); ++i) {
      if (!seen.insert(blocks[b].source_indices[i]).second) continue;
      out.push_back({blocks[b].positions[i], blocks[b].labels[i], pred[i],
                     static_cast<int>(predictions[b].cluster[i])});
    }
  }
  return out;
}

}  // namespace lst::pipeline
