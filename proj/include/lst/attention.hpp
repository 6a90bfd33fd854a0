#pragma once

// Supertoken attention blocks: clustering tokens onto learnable supertokens
// (projection, assignment, cluster-mean update), self-attention among
// supertokens, reconstruction of per-token features through the assignment map,
// and GLocal scoring with Gumbel top-K sparsification.
//
// Each block has a tape-level form used by the network (takes ad::Var, records
// gradients) and a value-level form on plain matrices for direct use and tests.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "lst/autodiff.hpp"
#include "lst/layers.hpp"
#include "lst/matrix.hpp"

namespace lst::attention {

enum class AssignMode { hard, soft };

/// N x D per-point features.
struct TokenSet {
  Matrix values;
};

/// S x D cluster-centre features.
struct SupertokenSet {
  Matrix values;
};

/// Square D x D projections for query, key and value.
struct ProjectionWeights {
  Matrix query;
  Matrix key;
  Matrix value;

  std::size_t width() const noexcept { return query.rows(); }
  void validate() const;
};

ProjectionWeights make_projection(std::size_t width, Rng& rng);

/// S x N token-to-supertoken map. Hard maps have exactly one 1 per column and
/// record the winning row per column in `owner`.
struct AssignmentMap {
  Matrix matrix;
  AssignMode mode = AssignMode::hard;
  std::vector<std::size_t> owner;
};

/// S x 2 rows of (keep, drop) probabilities.
struct DecisionScores {
  Matrix matrix;
};

struct Projected {
  Matrix query;  // S x D
  Matrix key;    // N x D
  Matrix value;  // N x D
};

// ---- value-level API ------------------------------------------------------

Projected project_qkv(const TokenSet& tokens, const SupertokenSet& supertokens,
                      const ProjectionWeights& weights);
AssignmentMap hard_assign(const Matrix& query, const Matrix& key);
AssignmentMap soft_assign(const Matrix& query, const Matrix& key);
SupertokenSet supertoken_update(const AssignmentMap& cam, const Matrix& value,
                                const SupertokenSet& fallback);
SupertokenSet dfe_enhance(const SupertokenSet& supertokens, const ProjectionWeights& weights);
TokenSet cau_reconstruct(const TokenSet& tokens, const AssignmentMap& cam,
                         const SupertokenSet& enhanced, const Mlp& head);
Matrix glocal_embed(const SupertokenSet& enhanced, const Mlp& local_mlp, const Mlp& global_mlp);
DecisionScores decision_scores(const Matrix& glocal, const Mlp& score_mlp);

/// Indices of the K kept supertokens, ascending. Training mode ranks
/// log keep-probability plus seeded Gumbel(0,1) noise; evaluation ranks the
/// keep-probability itself. Ties go to the smaller index.
std::vector<std::size_t> gumbel_topk_keep(const DecisionScores& scores, std::size_t k,
                                          double temperature, bool training, std::uint64_t rng_seed);

// ---- tape-level API -------------------------------------------------------

struct ProjectedVars {
  ad::Var query;
  ad::Var key;
  ad::Var value;
};

/// Assignment on the tape. In hard mode `matrix` is a constant: no gradient
/// flows through the argmax.
struct CamVar {
  ad::Var matrix;
  AssignMode mode = AssignMode::hard;
  std::vector<std::size_t> owner;

  AssignmentMap to_map() const { return {matrix.value(), mode, owner}; }
};

/// Kept supertokens plus the noise that picked them.
struct Selection {
  std::vector<std::size_t> kept;
  Matrix noise;  // S x 2 Gumbel draws (zeros in evaluation mode)
};

ProjectedVars project_qkv(ad::Var tokens, ad::Var supertokens, const ProjectionWeights& weights,
                          ParamBinder& bind);
CamVar assign(ad::Var query, ad::Var key, AssignMode mode);
ad::Var supertoken_update(const CamVar& cam, ad::Var value, ad::Var fallback);
ad::Var dfe_enhance(ad::Var supertokens, const ProjectionWeights& weights, ParamBinder& bind);
/// CAM^T * enhanced: the supertoken feature each token is assigned to.
ad::Var broadcast_to_tokens(const CamVar& cam, ad::Var enhanced);
ad::Var cau_reconstruct(ad::Var tokens, const CamVar& cam, ad::Var enhanced, const Mlp& head,
                        ParamBinder& bind);
ad::Var glocal_embed(ad::Var enhanced, const Mlp& local_mlp, const Mlp& global_mlp, ParamBinder& bind);
ad::Var decision_scores(ad::Var glocal, const Mlp& score_mlp, ParamBinder& bind);

Selection select_supertokens(const Matrix& scores, std::size_t k, bool training, std::uint64_t rng_seed);

/// S x 1 keep mask: 1 on kept rows, 0 elsewhere. Backward uses the two-way
/// Gumbel-softmax relaxation softmax((log psi + noise) / temperature) of the
/// keep channel (straight-through estimator).
ad::Var straight_through_mask(ad::Var scores, const Selection& selection, double temperature);

/// Probabilities below this are clamped inside the relaxation (zero gradient).
inline constexpr double kProbabilityFloor = 1e-12;

/// The relaxed keep probability per row; the function whose gradient
/// straight_through_mask propagates.
Matrix relaxed_keep(const Matrix& scores, const Matrix& noise, double temperature);

}  // namespace lst::attention
