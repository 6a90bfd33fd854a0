#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lst/checkpoint.hpp"
#include "lst/metrics.hpp"
#include "lst/network.hpp"

namespace lst::train {

struct TrainConfig {
  double lr0 = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::size_t epochs = 250;
  std::size_t batch_size = 16;
  std::uint64_t rng_seed = 0;
  net::AssignMode assign_mode = net::AssignMode::hard;
  std::size_t eval_every = 1;

  void validate() const;
};

/// One momentum buffer per parameter tensor, in for_each_tensor order.
struct OptimizerState {
  std::vector<Matrix> velocity;
};

struct ParamRef {
  std::string name;
  Matrix* tensor;
};

std::vector<ParamRef> param_refs(net::WNetParams& params);

/// lr0 * (1 + cos(pi * epoch / epochs)) / 2 for 0 <= epoch < epochs.
double cosine_lr(std::size_t epoch, const TrainConfig& config);

/// Classic momentum with L2 folded into the gradient:
///   g = grad + wd * p;  v = momentum * v + g;  p -= lr * v.
/// Throws NumericError naming the first tensor with a non-finite gradient,
/// before touching any parameter.
void sgd_step(std::span<const ParamRef> params, std::span<const Matrix> grads, OptimizerState& state,
              double lr, const TrainConfig& config);

/// Inverse-frequency weights N / (C * N_c) normalised to mean 1. Classes that
/// never occur take the largest weight among the present classes.
std::vector<double> class_weights(std::span<const int> labels, std::size_t num_classes);

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  std::optional<metrics::SegmentationMetrics> eval;
};

struct TrainState {
  net::WNetParams params;
  OptimizerState optimizer;
  std::size_t next_epoch = 0;
  double best_miou = -1.0;
  net::WNetParams best_params;
};

TrainState initial_state(const net::NetConfig& net_config, std::uint64_t seed);

struct EvalResult {
  metrics::ConfusionMatrix confusion;
  std::vector<net::Prediction> predictions;  // one per block
};

/// Evaluation-mode forward over every block; each distinct source point of a
/// block counts once.
EvalResult evaluate(std::span<const net::BlockInput> blocks, const net::WNetParams& params,
                    const net::NetConfig& net_config, net::AssignMode mode, bool keep_predictions = false);

using EpochCallback = std::function<void(const EpochRecord&, const TrainState&)>;

/// Runs epochs state.next_epoch .. config.epochs - 1. Shuffling and Gumbel
/// noise derive from (rng_seed, epoch, sample) so a resumed run replays the
/// same stream. Metrics are recorded every eval_every epochs and at the last
/// epoch; the best held-out mIoU parameters are kept in state.best_params.
/// At most `max_epochs` epochs run in one call.
std::vector<EpochRecord> train(std::span<const net::BlockInput> train_set,
                               std::span<const net::BlockInput> eval_set, const TrainConfig& config,
                               const net::NetConfig& net_config, TrainState& state,
                               const EpochCallback& on_epoch = {},
                               std::size_t max_epochs = std::numeric_limits<std::size_t>::max());

/// Parameters, best parameters, velocities, next epoch and best mIoU.
Checkpoint save_state(const TrainState& state, const net::NetConfig& net_config);
/// Throws ConfigError on a digest mismatch and DataError on missing entries.
TrainState load_state(const Checkpoint& ckpt, const net::NetConfig& net_config);

/// `epoch,lr,train_loss,eval_OA,eval_mIoU,eval_avgF1`; eval fields are empty
/// on epochs without evaluation.
void write_history_header(std::ostream& os);
void write_history_row(std::ostream& os, const EpochRecord& record);

}  // namespace lst::train
