#include "lst/training.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "lst/errors.hpp"

namespace lst::train {

void TrainConfig::validate() const {
  if (!(lr0 > 0.0)) throw std::invalid_argument("lr0 must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("weight_decay must be nonnegative");
  if (epochs < 1) throw std::invalid_argument("epochs must be at least 1");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be at least 1");
  if (eval_every < 1) throw std::invalid_argument("eval_every must be at least 1");
}

std::vector<ParamRef> param_refs(net::WNetParams& params) {
  std::vector<ParamRef> refs;
  net::for_each_tensor(params, [&](const std::string& name, Matrix& m) { refs.push_back({name, &m}); });
  return refs;
}

double cosine_lr(std::size_t epoch, const TrainConfig& config) {
  if (epoch >= config.epochs) {
    throw std::invalid_argument("cosine_lr: epoch " + std::to_string(epoch) + " outside [0, " +
                                std::to_string(config.epochs) + ")");
  }
  const double pi = std::acos(-1.0);
  return config.lr0 * (1.0 + std::cos(pi * static_cast<double>(epoch) / static_cast<double>(config.epochs))) / 2.0;
}

void sgd_step(std::span<const ParamRef> params, std::span<const Matrix> grads, OptimizerState& state, double lr,
              const TrainConfig& config) {
  if (grads.size() != params.size()) {
    throw ShapeError("sgd_step: " + std::to_string(params.size()) + " parameters but " +
                     std::to_string(grads.size()) + " gradients");
  }
  if (state.velocity.empty()) {
    for (const auto& p : params) state.velocity.emplace_back(p.tensor->rows(), p.tensor->cols());
  }
  if (state.velocity.size() != params.size()) throw ShapeError("sgd_step: optimizer state does not match parameters");
  for (std::size_t t = 0; t < params.size(); ++t) {
    require_same_shape(*params[t].tensor, params[t].name, grads[t], "its gradient");
    require_same_shape(*params[t].tensor, params[t].name, state.velocity[t], "its velocity");
    if (!all_finite(grads[t])) throw NumericError("training aborted: non-finite gradient in " + params[t].name);
  }
  for (std::size_t t = 0; t < params.size(); ++t) {
    double* p = params[t].tensor->data();
    double* v = state.velocity[t].data();
    const double* g = grads[t].data();
    for (std::size_t i = 0; i < grads[t].size(); ++i) {
      v[i] = config.momentum * v[i] + (g[i] + config.weight_decay * p[i]);
      p[i] -= lr * v[i];
    }
  }
}

std::vector<double> class_weights(std::span<const int> labels, std::size_t num_classes) {
  if (labels.empty()) throw std::invalid_argument("class_weights: no labels");
  std::vector<std::size_t> count(num_classes, 0);
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= num_classes) {
      throw std::invalid_argument("class_weights: label " + std::to_string(l) + " out of range");
    }
    ++count[static_cast<std::size_t>(l)];
  }
  const auto n = static_cast<double>(labels.size());
  const auto c = static_cast<double>(num_classes);
  std::vector<double> w(num_classes, 0.0);
  double top = 0.0;
  for (std::size_t k = 0; k < num_classes; ++k) {
    if (count[k] > 0) {
      w[k] = n / (c * static_cast<double>(count[k]));
      top = std::max(top, w[k]);
    }
  }
  for (std::size_t k = 0; k < num_classes; ++k)
    if (count[k] == 0) w[k] = top;
  const double mean = std::accumulate(w.begin(), w.end(), 0.0) / c;
  for (double& x : w) x /= mean;
  return w;
}

TrainState initial_state(const net::NetConfig& net_config, std::uint64_t seed) {
  TrainState s;
  s.params = net::init_params(net_config, seed);
  s.best_params = s.params;
  return s;
}

EvalResult evaluate(std::span<const net::BlockInput> blocks, const net::WNetParams& params,
                    const net::NetConfig& net_config, net::AssignMode mode, bool keep_predictions) {
  EvalResult out{metrics::ConfusionMatrix(net_config.classes), {}};
  for (const auto& block : blocks) {
    net::Prediction p = net::predict(block, params, net_config, {mode, false, 0});
    const std::vector<int> pred = net::argmax_rows(p.fused_probs);
    std::vector<int> pred_once, truth_once;
    std::vector<std::size_t> order(block.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return block.source_indices[a] < block.source_indices[b]; });
    for (std::size_t r = 0; r < order.size(); ++r) {
      const std::size_t i = order[r];
      if (r > 0 && block.source_indices[i] == block.source_indices[order[r - 1]]) continue;
      pred_once.push_back(pred[i]);
      truth_once.push_back(block.labels[i]);
    }
    out.confusion.accumulate(pred_once, truth_once);
    if (keep_predictions) out.predictions.push_back(std::move(p));
  }
  return out;
}

std::vector<EpochRecord> train(std::span<const net::BlockInput> train_set, std::span<const net::BlockInput> eval_set,
                               const TrainConfig& config, const net::NetConfig& net_config, TrainState& state,
                               const EpochCallback& on_epoch, std::size_t max_epochs) {
  config.validate();
  net_config.validate();
  if (train_set.empty()) throw std::invalid_argument("train: dataset is empty");
  const auto eval_blocks = eval_set.empty() ? train_set : eval_set;

  std::vector<int> all_labels;
  for (const auto& b : train_set) all_labels.insert(all_labels.end(), b.labels.begin(), b.labels.end());
  const std::vector<double> weights = class_weights(all_labels, net_config.classes);

  auto refs = param_refs(state.params);
  std::vector<EpochRecord> history;
  const std::size_t remaining = config.epochs > state.next_epoch ? config.epochs - state.next_epoch : 0;
  const std::size_t end = state.next_epoch + std::min(remaining, max_epochs);
  for (std::size_t epoch = state.next_epoch; epoch < end; ++epoch) {
    const double lr = cosine_lr(epoch, config);
    const std::uint64_t epoch_seed = mix_seed(config.rng_seed, epoch);
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(mix_seed(epoch_seed, 0x5u));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      // Per-sample gradients run in parallel and are reduced in sample order.
      const std::size_t count = stop - start;
      std::vector<std::vector<Matrix>> sample_grads(count);
      std::vector<double> sample_loss(count, 0.0);
      std::vector<std::exception_ptr> failure(count);
#pragma omp parallel for schedule(dynamic, 1)
      for (std::size_t j = 0; j < count; ++j) {
        try {
          const std::size_t idx = order[start + j];
          const auto& sample = train_set[idx];
          ad::Tape tape;
          ParamBinder bind(tape);
          const net::ForwardOptions opts{config.assign_mode, true, mix_seed(epoch_seed, 0x100 + idx)};
          const net::ForwardGraph g = net::forward_graph(sample, state.params, net_config, opts, bind);
          ad::Var loss = net::loss_graph(g, sample.labels, weights);
          sample_loss[j] = loss.value()(0, 0);
          tape.backward(loss);
          sample_grads[j].reserve(refs.size());
          for (const auto& r : refs) sample_grads[j].push_back(bind.grad_of(*r.tensor));
        } catch (...) {
          failure[j] = std::current_exception();
        }
      }
      for (const auto& f : failure)
        if (f) std::rethrow_exception(f);
      std::vector<Matrix> grads = std::move(sample_grads[0]);
      loss_sum += sample_loss[0];
      for (std::size_t j = 1; j < count; ++j) {
        loss_sum += sample_loss[j];
        for (std::size_t t = 0; t < refs.size(); ++t) ad::accumulate(grads[t], sample_grads[j][t]);
      }
      const double inv = 1.0 / static_cast<double>(stop - start);
      for (auto& g : grads)
        for (double& x : g.values()) x *= inv;
      sgd_step(refs, grads, state.optimizer, lr, config);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.train_loss = loss_sum / static_cast<double>(train_set.size());
    if (!std::isfinite(rec.train_loss)) {
      throw NumericError("training aborted: non-finite loss at epoch " + std::to_string(epoch));
    }
    if ((epoch + 1) % config.eval_every == 0 || epoch + 1 == config.epochs) {
      rec.eval = metrics::derive_metrics(evaluate(eval_blocks, state.params, net_config, config.assign_mode).confusion);
      if (rec.eval->mean_iou > state.best_miou) {
        state.best_miou = rec.eval->mean_iou;
        state.best_params = state.params;
      }
    }
    state.next_epoch = epoch + 1;
    history.push_back(rec);
    if (on_epoch) on_epoch(rec, state);
  }
  return history;
}

Checkpoint save_state(const TrainState& state, const net::NetConfig& net_config) {
  Checkpoint ckpt;
  ckpt.digest = net_config.digest();
  store_params(ckpt, state.params, "param/");
  store_params(ckpt, state.best_params, "best/");
  std::size_t t = 0;
  net::for_each_tensor(state.params, [&](const std::string& name, const Matrix& m) {
    ckpt.tensors.emplace_back("velocity/" + name,
                              t < state.optimizer.velocity.size() ? state.optimizer.velocity[t] : Matrix(m.rows(), m.cols()));
    ++t;
  });
  ckpt.scalars["next_epoch"] = static_cast<double>(state.next_epoch);
  ckpt.scalars["best_miou"] = state.best_miou;
  return ckpt;
}

TrainState load_state(const Checkpoint& ckpt, const net::NetConfig& net_config) {
  TrainState s = initial_state(net_config, 0);
  restore_params(ckpt, net_config, s.params, "param/");
  s.best_params = s.params;
  if (ckpt.find("best/embedder.point.weight")) restore_params(ckpt, net_config, s.best_params, "best/");
  std::vector<Matrix> velocity;
  bool have_velocity = true;
  net::for_each_tensor(s.params, [&](const std::string& name, const Matrix& m) {
    const Matrix* v = ckpt.find("velocity/" + name);
    if (!v) {
      have_velocity = false;
      return;
    }
    if (!v->same_shape(m)) throw DataError("checkpoint tensor velocity/" + name + " has shape " + v->shape_string());
    velocity.push_back(*v);
  });
  if (have_velocity) s.optimizer.velocity = std::move(velocity);
  if (auto it = ckpt.scalars.find("next_epoch"); it != ckpt.scalars.end()) {
    s.next_epoch = static_cast<std::size_t>(it->second);
  }
  if (auto it = ckpt.scalars.find("best_miou"); it != ckpt.scalars.end()) s.best_miou = it->second;
  return s;
}

void write_history_header(std::ostream& os) { os << "epoch,lr,train_loss,eval_OA,eval_mIoU,eval_avgF1\n"; }

void write_history_row(std::ostream& os, const EpochRecord& r) {
  const auto flags = os.flags();
  const auto prec = os.precision();
  os << r.epoch << ',' << std::setprecision(10) << r.lr << ',' << r.train_loss << ',';
  if (r.eval) {
    os << r.eval->overall_accuracy << ',' << r.eval->mean_iou << ',' << r.eval->average_f1;
  } else {
    os << ",,";
  }
  os << '\n';
  os.flags(flags);
  os.precision(prec);
}

}  // namespace lst::train
