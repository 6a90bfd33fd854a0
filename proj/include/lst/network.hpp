#pragma once

// Two-module supertoken network. Each module clusters tokens onto supertokens,
// enhances the supertokens with self-attention and reconstructs per-token
// features through the assignment map; a sparsification stage between the
// modules keeps half of module 1's supertokens to seed module 2. Both modules'
// reconstructions feed segmentation heads whose probabilities are fused.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "lst/attention.hpp"
#include "lst/geometry.hpp"
#include "lst/layers.hpp"

namespace lst::net {

using attention::AssignMode;

enum class Wiring {
  wnet,  // each module reconstructs before the next one clusters
  unet,  // both reconstructions deferred until after module 2
};

struct NetConfig {
  std::size_t in_features = 2;  // per-point feature channels besides xyz
  std::size_t classes = 6;
  std::size_t d1 = 32;
  std::size_t supertokens = 64;
  std::size_t k_local = 16;
  double temperature = 1.0;
  Wiring wiring = Wiring::wnet;

  std::size_t d2() const noexcept { return 2 * d1; }
  std::size_t kept_supertokens() const noexcept { return supertokens / 2; }
  void validate() const;
  /// Stable 64-bit digest of every field that shapes or wires the parameters.
  std::uint64_t digest() const;
};

struct EmbedderParams {
  Linear point;  // (3 + C) -> D1 per point
  Linear mix;    // [point feature, neighbourhood max] 2*D1 -> D1
  std::size_t k_local = 16;
};

struct ModuleParams {
  Matrix initial_supertokens;  // S x D; empty when supplied by the bridge
  attention::ProjectionWeights dso;
  attention::ProjectionWeights dfe;
  Mlp cau;  // D -> 2D
};

struct StsParams {
  Mlp local;   // D1 -> D1
  Mlp global;  // D1 -> D1
  Mlp score;   // 2*D1 -> 2
};

struct WNetParams {
  EmbedderParams embedder;
  ModuleParams module1;
  StsParams sts;
  Linear bridge;  // 2*D1 -> D2
  ModuleParams module2;
  Mlp head1;  // 2*D1 -> classes
  Mlp head2;  // 2*D2 -> classes
};

WNetParams init_params(const NetConfig& config, std::uint64_t seed);

/// Every non-empty parameter tensor with a stable dotted name, in a fixed order.
void for_each_tensor(WNetParams& params, const std::function<void(const std::string&, Matrix&)>& fn);
void for_each_tensor(const WNetParams& params,
                     const std::function<void(const std::string&, const Matrix&)>& fn);

/// A block turned into network input: positions relative to the block seed,
/// scaled into the unit ball, followed by the point features, plus the local
/// neighbour table.
struct BlockInput {
  Matrix inputs;                            // N x (3 + C)
  std::vector<std::size_t> neighbors;       // N x k_local, row-major
  std::size_t k_local = 0;
  std::vector<int> labels;                  // N
  std::vector<Vec3> positions;              // N, absolute
  std::vector<std::size_t> source_indices;  // N, into the parent cloud

  std::size_t size() const noexcept { return labels.size(); }
};

BlockInput prepare_block(const Block& block, std::size_t k_local);

struct ForwardOptions {
  AssignMode mode = AssignMode::hard;
  bool training = false;
  std::uint64_t rng_seed = 0;
};

struct ModuleVars {
  ad::Var reconstructed;
  ad::Var enhanced;
  attention::CamVar cam;
};

/// Everything a forward pass leaves on the tape.
struct ForwardGraph {
  ad::Var tokens;
  ModuleVars module1;
  ModuleVars module2;
  ad::Var decision;  // S x 2 keep/drop scores
  std::vector<std::size_t> kept;
  ad::Var logits1;
  ad::Var logits2;
};

ad::Var embed_tokens(const BlockInput& input, const EmbedderParams& params, ParamBinder& bind);

/// Clustering, cluster-mean update (fallback = the initial supertokens) and
/// supertoken self-attention; reconstructed is left unset.
ModuleVars encode_module(ad::Var tokens, ad::Var initial, const ModuleParams& params, AssignMode mode,
                         ParamBinder& bind);
ModuleVars run_module(ad::Var tokens, ad::Var initial, const ModuleParams& params, AssignMode mode,
                      ParamBinder& bind);

ForwardGraph forward_graph(const BlockInput& input, const WNetParams& params, const NetConfig& config,
                           const ForwardOptions& options, ParamBinder& bind);

/// Sum of the two heads' weighted cross-entropies.
ad::Var loss_graph(const ForwardGraph& graph, const std::vector<int>& labels,
                   const std::vector<double>& class_weights);

struct Prediction {
  Matrix logits1;
  Matrix logits2;
  Matrix fused_probs;
  std::vector<std::size_t> cluster;  // module-1 supertoken of each token
  std::vector<std::size_t> kept;
};

/// Mean of the two heads' softmax probabilities.
Matrix fuse(const Matrix& logits1, const Matrix& logits2);
std::vector<int> argmax_rows(const Matrix& m);

// ---- value-level API ------------------------------------------------------

attention::TokenSet embed_tokens(const Block& block, const EmbedderParams& params);

struct ModuleResult {
  attention::TokenSet reconstructed;
  attention::SupertokenSet enhanced;
  attention::AssignmentMap cam;
};

ModuleResult run_module(const attention::TokenSet& tokens, const ModuleParams& params, AssignMode mode);

Prediction predict(const BlockInput& input, const WNetParams& params, const NetConfig& config,
                   const ForwardOptions& options);
Prediction wnet_forward(const Block& block, const WNetParams& params, const NetConfig& config,
                        AssignMode mode, bool training, std::uint64_t rng_seed);
Prediction ablate_unet_forward(const Block& block, const WNetParams& params, const NetConfig& config,
                               AssignMode mode, bool training, std::uint64_t rng_seed);

/// Sum over heads of the mean class-weighted negative log-likelihood.
double wnet_loss(const Prediction& pred, const std::vector<int>& labels,
                 const std::vector<double>& class_weights);

}  // namespace lst::net
