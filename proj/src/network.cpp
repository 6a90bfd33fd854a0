#include "lst/network.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "lst/kernels.hpp"

namespace lst::net {

void NetConfig::validate() const {
  if (in_features < 1) throw std::invalid_argument("in_features must be at least 1");
  if (classes < 2) throw std::invalid_argument("classes must be at least 2");
  if (d1 < 1) throw std::invalid_argument("d1 must be at least 1");
  if (supertokens < 2 || supertokens % 2 != 0) {
    throw std::invalid_argument("supertokens must be even and at least 2 (module 2 keeps half), got " +
                                std::to_string(supertokens));
  }
  if (k_local < 1) throw std::invalid_argument("k_local must be at least 1");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw std::invalid_argument("temperature must be positive");
  }
}

std::uint64_t NetConfig::digest() const {
  std::ostringstream s;
  s << "in=" << in_features << ";classes=" << classes << ";d1=" << d1 << ";S=" << supertokens
    << ";k_local=" << k_local << ";wiring=" << (wiring == Wiring::wnet ? "wnet" : "unet");
  // FNV-1a
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s.str()) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

namespace {

ModuleParams make_module(std::size_t width, std::size_t supertokens, Rng& rng) {
  ModuleParams m;
  if (supertokens > 0) {
    m.initial_supertokens = gaussian(supertokens, width, 1.0 / std::sqrt(static_cast<double>(width)), rng);
  }
  m.dso = attention::make_projection(width, rng);
  m.dfe = attention::make_projection(width, rng);
  m.cau = make_mlp(width, 2 * width, 2 * width, rng);
  return m;
}

template <typename Params, typename Fn>
void visit(Params& p, Fn&& fn) {
  auto linear = [&](const std::string& name, auto& l) {
    fn(name + ".weight", l.weight);
    fn(name + ".bias", l.bias);
  };
  auto mlp = [&](const std::string& name, auto& m) {
    linear(name + ".hidden", m.hidden);
    linear(name + ".out", m.out);
  };
  auto projection = [&](const std::string& name, auto& w) {
    fn(name + ".query", w.query);
    fn(name + ".key", w.key);
    fn(name + ".value", w.value);
  };
  auto module = [&](const std::string& name, auto& m) {
    if (!m.initial_supertokens.empty()) fn(name + ".supertokens", m.initial_supertokens);
    projection(name + ".dso", m.dso);
    projection(name + ".dfe", m.dfe);
    mlp(name + ".cau", m.cau);
  };
  linear("embedder.point", p.embedder.point);
  linear("embedder.mix", p.embedder.mix);
  module("module1", p.module1);
  mlp("sts.local", p.sts.local);
  mlp("sts.global", p.sts.global);
  mlp("sts.score", p.sts.score);
  linear("bridge", p.bridge);
  module("module2", p.module2);
  mlp("head1", p.head1);
  mlp("head2", p.head2);
}

}  // namespace

WNetParams init_params(const NetConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(mix_seed(seed, 0x1417));
  const std::size_t d1 = config.d1, d2 = config.d2();
  WNetParams p;
  p.embedder.point = make_linear(3 + config.in_features, d1, rng, kReluGain);
  p.embedder.mix = make_linear(2 * d1, d1, rng, kLinearGain);
  p.embedder.k_local = config.k_local;
  p.module1 = make_module(d1, config.supertokens, rng);
  p.sts.local = make_mlp(d1, d1, d1, rng);
  p.sts.global = make_mlp(d1, d1, d1, rng);
  p.sts.score = make_mlp(2 * d1, 2, 2, rng);
  p.bridge = make_linear(2 * d1, d2, rng, kLinearGain);
  p.module2 = make_module(d2, 0, rng);
  p.head1 = make_mlp(2 * d1, d1, config.classes, rng);
  p.head2 = make_mlp(2 * d2, d1, config.classes, rng);
  return p;
}

void for_each_tensor(WNetParams& params, const std::function<void(const std::string&, Matrix&)>& fn) {
  visit(params, fn);
}

void for_each_tensor(const WNetParams& params,
                     const std::function<void(const std::string&, const Matrix&)>& fn) {
  visit(params, fn);
}

BlockInput prepare_block(const Block& block, std::size_t k_local) {
  const PointCloud& cloud = block.cloud;
  cloud.validate();
  if (k_local > cloud.size()) {
    throw std::invalid_argument("k_local=" + std::to_string(k_local) + " exceeds block size " +
                                std::to_string(cloud.size()));
  }
  BlockInput in;
  const std::size_t n = cloud.size(), c = cloud.feature_count();
  in.inputs = Matrix(n, 3 + c);
  double radius = 0.0;
  for (const auto& p : cloud.positions) {
    double r2 = 0.0;
    for (int a = 0; a < 3; ++a) r2 += (p[a] - block.centroid[a]) * (p[a] - block.centroid[a]);
    radius = std::max(radius, std::sqrt(r2));
  }
  const double inv_radius = radius > 0.0 ? 1.0 / radius : 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (int a = 0; a < 3; ++a) {
      in.inputs(i, static_cast<std::size_t>(a)) = (cloud.positions[i][a] - block.centroid[a]) * inv_radius;
    }
    for (std::size_t j = 0; j < c; ++j) in.inputs(i, 3 + j) = cloud.features(i, j);
  }
  in.neighbors = kernels::knn(cloud.positions, k_local);
  in.k_local = k_local;
  in.labels = cloud.labels;
  in.positions = cloud.positions;
  in.source_indices = block.source_indices;
  if (in.source_indices.size() != n) {
    in.source_indices.resize(n);
    for (std::size_t i = 0; i < n; ++i) in.source_indices[i] = i;
  }
  return in;
}

ad::Var embed_tokens(const BlockInput& input, const EmbedderParams& params, ParamBinder& bind) {
  if (input.inputs.cols() != params.point.in_width()) {
    throw ShapeError("block inputs are " + input.inputs.shape_string() + " but the point layer is " +
                     params.point.weight.shape_string());
  }
  if (params.k_local != input.k_local) {
    throw std::invalid_argument("embedder expects k_local=" + std::to_string(params.k_local) +
                                " but the block was prepared with " + std::to_string(input.k_local));
  }
  ad::Tape& tape = bind.tape();
  ad::Var point = ad::relu(forward(params.point, tape.constant(input.inputs), bind));
  ad::Var pooled = ad::max_pool_neighbors(point, input.neighbors, input.k_local);
  return forward(params.mix, ad::concat_cols(point, pooled), bind);
}

ModuleVars encode_module(ad::Var tokens, ad::Var initial, const ModuleParams& params, AssignMode mode,
                         ParamBinder& bind) {
  auto proj = attention::project_qkv(tokens, initial, params.dso, bind);
  ModuleVars out;
  out.cam = attention::assign(proj.query, proj.key, mode);
  ad::Var updated = attention::supertoken_update(out.cam, proj.value, initial);
  out.enhanced = attention::dfe_enhance(updated, params.dfe, bind);
  return out;
}

ModuleVars run_module(ad::Var tokens, ad::Var initial, const ModuleParams& params, AssignMode mode,
                      ParamBinder& bind) {
  ModuleVars out = encode_module(tokens, initial, params, mode, bind);
  out.reconstructed = attention::cau_reconstruct(tokens, out.cam, out.enhanced, params.cau, bind);
  return out;
}

ForwardGraph forward_graph(const BlockInput& input, const WNetParams& params, const NetConfig& config,
                           const ForwardOptions& options, ParamBinder& bind) {
  config.validate();
  ForwardGraph g;
  g.tokens = embed_tokens(input, params.embedder, bind);
  ad::Var initial1 = bind(params.module1.initial_supertokens);

  g.module1 = encode_module(g.tokens, initial1, params.module1, options.mode, bind);

  // sparsification: GLocal scores pick half of module 1's supertokens
  ad::Var glocal = attention::glocal_embed(g.module1.enhanced, params.sts.local, params.sts.global, bind);
  g.decision = attention::decision_scores(glocal, params.sts.score, bind);
  const auto selection = attention::select_supertokens(g.decision.value(), config.kept_supertokens(),
                                                       options.training, options.rng_seed);
  g.kept = selection.kept;
  ad::Var picked = ad::gather_rows(glocal, g.kept);
  if (options.training) {
    ad::Var mask = attention::straight_through_mask(g.decision, selection, config.temperature);
    picked = ad::scale_rows(picked, ad::gather_rows(mask, g.kept));
  }
  ad::Var initial2 = forward(params.bridge, picked, bind);

  if (config.wiring == Wiring::wnet) {
    g.module1.reconstructed =
        attention::cau_reconstruct(g.tokens, g.module1.cam, g.module1.enhanced, params.module1.cau, bind);
    g.module2 = run_module(g.module1.reconstructed, initial2, params.module2, options.mode, bind);
  } else {
    // module 2 clusters tokens lifted without supertoken context; both
    // reconstructions run afterwards from the stored maps
    ad::Var lifted = forward(params.module1.cau, g.tokens, bind);
    g.module2 = encode_module(lifted, initial2, params.module2, options.mode, bind);
    g.module2.reconstructed =
        attention::cau_reconstruct(lifted, g.module2.cam, g.module2.enhanced, params.module2.cau, bind);
    g.module1.reconstructed =
        attention::cau_reconstruct(g.tokens, g.module1.cam, g.module1.enhanced, params.module1.cau, bind);
  }
  g.logits1 = forward(params.head1, g.module1.reconstructed, bind);
  g.logits2 = forward(params.head2, g.module2.reconstructed, bind);
  return g;
}

ad::Var loss_graph(const ForwardGraph& graph, const std::vector<int>& labels,
                   const std::vector<double>& class_weights) {
  return ad::add(ad::weighted_cross_entropy(graph.logits1, labels, class_weights),
                 ad::weighted_cross_entropy(graph.logits2, labels, class_weights));
}

Matrix fuse(const Matrix& logits1, const Matrix& logits2) {
  require_same_shape(logits1, "logits1", logits2, "logits2");
  Matrix p = kernels::softmax_rows(logits1);
  const Matrix q = kernels::softmax_rows(logits2);
  for (std::size_t i = 0; i < p.size(); ++i) p.data()[i] = 0.5 * (p.data()[i] + q.data()[i]);
  return p;
}

std::vector<int> argmax_rows(const Matrix& m) {
  std::vector<int> out(m.rows(), 0);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto r = m.row(i);
    std::size_t best = 0;
    for (std::size_t j = 1; j < r.size(); ++j)
      if (r[j] > r[best]) best = j;
    out[i] = static_cast<int>(best);
  }
  return out;
}

attention::TokenSet embed_tokens(const Block& block, const EmbedderParams& params) {
  const BlockInput in = prepare_block(block, params.k_local);
  ad::Tape tape;
  ParamBinder bind(tape, false);
  return {embed_tokens(in, params, bind).value()};
}

ModuleResult run_module(const attention::TokenSet& tokens, const ModuleParams& params, AssignMode mode) {
  if (params.initial_supertokens.empty()) throw std::invalid_argument("run_module: module has no supertokens");
  ad::Tape tape;
  ParamBinder bind(tape, false);
  ModuleVars v = run_module(tape.constant(tokens.values), bind(params.initial_supertokens), params, mode, bind);
  return {{v.reconstructed.value()}, {v.enhanced.value()}, v.cam.to_map()};
}

Prediction predict(const BlockInput& input, const WNetParams& params, const NetConfig& config,
                   const ForwardOptions& options) {
  ad::Tape tape;
  ParamBinder bind(tape, false);
  ForwardGraph g = forward_graph(input, params, config, options, bind);
  Prediction p;
  p.logits1 = g.logits1.value();
  p.logits2 = g.logits2.value();
  p.fused_probs = fuse(p.logits1, p.logits2);
  p.kept = g.kept;
  if (g.module1.cam.mode == AssignMode::hard) {
    p.cluster = g.module1.cam.owner;
  } else {
    const Matrix t = kernels::transpose(g.module1.cam.matrix.value());
    const auto best = argmax_rows(t);
    p.cluster.assign(best.begin(), best.end());
  }
  return p;
}

namespace {
Prediction forward_block(const Block& block, const WNetParams& params, NetConfig config, Wiring wiring,
                         AssignMode mode, bool training, std::uint64_t rng_seed) {
  config.wiring = wiring;
  return predict(prepare_block(block, params.embedder.k_local), params, config, {mode, training, rng_seed});
}
}  // namespace

Prediction wnet_forward(const Block& block, const WNetParams& params, const NetConfig& config,
                        AssignMode mode, bool training, std::uint64_t rng_seed) {
  return forward_block(block, params, config, Wiring::wnet, mode, training, rng_seed);
}

Prediction ablate_unet_forward(const Block& block, const WNetParams& params, const NetConfig& config,
                               AssignMode mode, bool training, std::uint64_t rng_seed) {
  return forward_block(block, params, config, Wiring::unet, mode, training, rng_seed);
}

double wnet_loss(const Prediction& pred, const std::vector<int>& labels,
                 const std::vector<double>& class_weights) {
  for (double w : class_weights) {
    if (!(w > 0.0)) throw std::invalid_argument("class weights must be positive");
  }
  ad::Tape tape;
  ad::Var l1 = ad::weighted_cross_entropy(tape.constant(pred.logits1), labels, class_weights);
  ad::Var l2 = ad::weighted_cross_entropy(tape.constant(pred.logits2), labels, class_weights);
  return l1.value()(0, 0) + l2.value()(0, 0);
}

}  // namespace lst::net
