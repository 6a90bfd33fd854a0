#include "lst/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

#include "lst/kernels.hpp"

namespace lst::attention {
namespace {

void require_inner(const Matrix& lhs, std::string_view lhs_name, const Matrix& weight,
                   std::string_view weight_name) {
  if (lhs.cols() != weight.rows()) {
    throw ShapeError(std::string(lhs_name) + " is " + lhs.shape_string() + " but " +
                     std::string(weight_name) + " is " + weight.shape_string());
  }
}

void require_cam(const Matrix& cam, const Matrix& rows_like, std::string_view rows_name,
                 const Matrix& cols_like, std::string_view cols_name) {
  if (cam.rows() != rows_like.rows() || cam.cols() != cols_like.rows()) {
    throw ShapeError("CAM is " + cam.shape_string() + " but " + std::string(rows_name) + " is " +
                     rows_like.shape_string() + " and " + std::string(cols_name) + " is " +
                     cols_like.shape_string());
  }
}

double inv_sqrt_width(const Matrix& q) { return 1.0 / std::sqrt(static_cast<double>(q.cols())); }

// Column-wise argmax with ties to the smaller row.
std::vector<std::size_t> column_argmax(const Matrix& scores) {
  std::vector<std::size_t> owner(scores.cols(), 0);
  std::vector<double> best(scores.row(0).begin(), scores.row(0).end());
  for (std::size_t i = 1; i < scores.rows(); ++i) {
    const auto r = scores.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) {
      if (r[j] > best[j]) {
        best[j] = r[j];
        owner[j] = i;
      }
    }
  }
  return owner;
}

// Rank rows by descending key, ties to the smaller index; return the first k ascending.
std::vector<std::size_t> top_k_ascending(const std::vector<double>& key, std::size_t k) {
  std::vector<std::size_t> order(key.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return key[a] > key[b]; });
  order.resize(k);
  std::sort(order.begin(), order.end());
  return order;
}

}  // namespace

void ProjectionWeights::validate() const {
  for (const Matrix* m : {&query, &key, &value}) {
    if (m->rows() != m->cols() || m->rows() != query.rows()) {
      throw ShapeError("projection weights must be square and equal: W_Q is " + query.shape_string() +
                       ", W_K is " + key.shape_string() + ", W_V is " + value.shape_string());
    }
    if (!all_finite(*m)) throw std::invalid_argument("projection weights contain non-finite entries");
  }
}

ProjectionWeights make_projection(std::size_t width, Rng& rng) {
  const double sd = 1.0 / std::sqrt(static_cast<double>(width));
  Matrix q = gaussian(width, width, sd, rng);
  Matrix k = gaussian(width, width, sd, rng);
  Matrix v = gaussian(width, width, sd, rng);
  return {std::move(q), std::move(k), std::move(v)};
}

// ---- tape-level -----------------------------------------------------------

ProjectedVars project_qkv(ad::Var tokens, ad::Var supertokens, const ProjectionWeights& weights,
                          ParamBinder& bind) {
  weights.validate();
  require_inner(supertokens.value(), "supertokens", weights.query, "W_Q");
  require_inner(tokens.value(), "tokens", weights.key, "W_K");
  require_inner(tokens.value(), "tokens", weights.value, "W_V");
  return {ad::matmul(supertokens, bind(weights.query)), ad::matmul(tokens, bind(weights.key)),
          ad::matmul(tokens, bind(weights.value))};
}

CamVar assign(ad::Var query, ad::Var key, AssignMode mode) {
  if (query.cols() != key.cols()) {
    throw ShapeError("Q is " + query.value().shape_string() + " but K is " + key.value().shape_string());
  }
  ad::Tape& tape = query.tape();
  const double s = inv_sqrt_width(query.value());
  if (mode == AssignMode::hard) {
    Matrix scores = kernels::matmul_nt(query.value(), key.value());
    for (double& v : scores.values()) v *= s;
    tape.constant(scores, "dso.scores");
    CamVar cam;
    cam.mode = mode;
    cam.owner = column_argmax(scores);
    Matrix onehot(scores.rows(), scores.cols());
    for (std::size_t j = 0; j < cam.owner.size(); ++j) onehot(cam.owner[j], j) = 1.0;
    cam.matrix = tape.constant(std::move(onehot), "dso.cam");
    return cam;
  }
  ad::Var scores = ad::scale(ad::matmul_nt(query, key), s);
  tape.set_label(scores, "dso.scores");
  ad::Var cam = ad::softmax_cols(scores);
  tape.set_label(cam, "dso.cam");
  return {cam, mode, {}};
}

ad::Var supertoken_update(const CamVar& cam, ad::Var value, ad::Var fallback) {
  const Matrix& c = cam.matrix.value();
  const Matrix& v = value.value();
  const Matrix& f = fallback.value();
  require_cam(c, f, "fallback", v, "V");
  if (f.cols() != v.cols()) {
    throw ShapeError("fallback is " + f.shape_string() + " but V is " + v.shape_string());
  }
  ad::Tape& tape = value.tape();
  const std::size_t s_count = c.rows(), width = v.cols();

  if (cam.mode == AssignMode::hard) {
    auto count = std::make_shared<std::vector<std::size_t>>(s_count, 0);
    Matrix out(s_count, width);
    for (std::size_t j = 0; j < cam.owner.size(); ++j) {
      const std::size_t i = cam.owner[j];
      ++(*count)[i];
      auto dst = out.row(i);
      const auto src = v.row(j);
      for (std::size_t d = 0; d < width; ++d) dst[d] += src[d];
    }
    for (std::size_t i = 0; i < s_count; ++i) {
      auto r = out.row(i);
      if ((*count)[i] == 0) {
        std::copy(f.row(i).begin(), f.row(i).end(), r.begin());
      } else {
        const double inv = 1.0 / static_cast<double>((*count)[i]);
        for (double& x : r) x *= inv;
      }
    }
    const std::size_t iv = value.id(), ifb = fallback.id();
    auto owner = std::make_shared<std::vector<std::size_t>>(cam.owner);
    return tape.record(
        std::move(out), {value, fallback},
        [iv, ifb, count, owner](ad::Tape& t, std::size_t self) {
          const Matrix& g = t.grad(self);
          if (t.requires_grad(iv)) {
            Matrix& gv = t.grad_accumulator(iv);
            for (std::size_t j = 0; j < owner->size(); ++j) {
              const std::size_t i = (*owner)[j];
              const double inv = 1.0 / static_cast<double>((*count)[i]);
              auto dst = gv.row(j);
              const auto src = g.row(i);
              for (std::size_t d = 0; d < dst.size(); ++d) dst[d] += src[d] * inv;
            }
          }
          if (t.requires_grad(ifb)) {
            Matrix& gf = t.grad_accumulator(ifb);
            for (std::size_t i = 0; i < count->size(); ++i) {
              if ((*count)[i] != 0) continue;
              auto dst = gf.row(i);
              const auto src = g.row(i);
              for (std::size_t d = 0; d < dst.size(); ++d) dst[d] += src[d];
            }
          }
        },
        "dso.supertokens");
  }

  // soft: weighted mean with weights = CAM row
  Matrix numer = kernels::matmul(c, v);
  std::vector<double> mass(s_count, 0.0);
  for (std::size_t i = 0; i < s_count; ++i)
    for (double w : c.row(i)) mass[i] += w;
  Matrix out(s_count, width);
  for (std::size_t i = 0; i < s_count; ++i) {
    auto r = out.row(i);
    if (mass[i] > 0.0) {
      for (std::size_t d = 0; d < width; ++d) r[d] = numer(i, d) / mass[i];
    } else {
      std::copy(f.row(i).begin(), f.row(i).end(), r.begin());
    }
  }
  const std::size_t ic = cam.matrix.id(), iv = value.id(), ifb = fallback.id();
  return tape.record(
      std::move(out), {cam.matrix, value, fallback},
      [ic, iv, ifb, mass = std::move(mass)](ad::Tape& t, std::size_t self) {
        const Matrix& g = t.grad(self);
        const Matrix& y = t.value(self);
        const std::size_t s_count = g.rows(), width = g.cols();
        Matrix g_numer(s_count, width);
        std::vector<double> g_mass(s_count, 0.0);
        for (std::size_t i = 0; i < s_count; ++i) {
          if (!(mass[i] > 0.0)) {
            if (t.requires_grad(ifb)) {
              auto dst = t.grad_accumulator(ifb).row(i);
              for (std::size_t d = 0; d < width; ++d) dst[d] += g(i, d);
            }
            continue;
          }
          double dot = 0.0;
          for (std::size_t d = 0; d < width; ++d) {
            g_numer(i, d) = g(i, d) / mass[i];
            dot += g(i, d) * y(i, d);
          }
          g_mass[i] = -dot / mass[i];
        }
        if (t.requires_grad(iv)) ad::accumulate(t.grad_accumulator(iv), kernels::matmul_tn(t.value(ic), g_numer));
        if (t.requires_grad(ic)) {
          Matrix gc = kernels::matmul_nt(g_numer, t.value(iv));
          for (std::size_t i = 0; i < s_count; ++i)
            for (double& x : gc.row(i)) x += g_mass[i];
          ad::accumulate(t.grad_accumulator(ic), gc);
        }
      },
      "dso.supertokens");
}

ad::Var dfe_enhance(ad::Var supertokens, const ProjectionWeights& weights, ParamBinder& bind) {
  weights.validate();
  require_inner(supertokens.value(), "supertokens", weights.query, "W_QE");
  ad::Var q = ad::matmul(supertokens, bind(weights.query));
  ad::Var k = ad::matmul(supertokens, bind(weights.key));
  ad::Var v = ad::matmul(supertokens, bind(weights.value));
  ad::Var logits = ad::scale(ad::matmul_nt(q, k), inv_sqrt_width(q.value()));
  ad::Var attn = ad::softmax_rows(logits);
  supertokens.tape().set_label(attn, "dfe.attention");
  return ad::add(supertokens, ad::matmul(attn, v));
}

ad::Var broadcast_to_tokens(const CamVar& cam, ad::Var enhanced) {
  const Matrix& c = cam.matrix.value();
  if (c.rows() != enhanced.rows()) {
    throw ShapeError("CAM is " + c.shape_string() + " but enhanced supertokens are " +
                     enhanced.value().shape_string());
  }
  if (cam.mode == AssignMode::hard) return ad::gather_rows(enhanced, cam.owner);
  return ad::matmul_tn(cam.matrix, enhanced);
}

ad::Var cau_reconstruct(ad::Var tokens, const CamVar& cam, ad::Var enhanced, const Mlp& head,
                        ParamBinder& bind) {
  const Matrix& c = cam.matrix.value();
  if (c.cols() != tokens.rows()) {
    throw ShapeError("CAM is " + c.shape_string() + " but tokens are " + tokens.value().shape_string());
  }
  if (tokens.cols() != enhanced.cols()) {
    throw ShapeError("tokens are " + tokens.value().shape_string() + " but enhanced supertokens are " +
                     enhanced.value().shape_string());
  }
  require_inner(tokens.value(), "tokens", head.hidden.weight, "CAU head");
  return forward(head, ad::add(tokens, broadcast_to_tokens(cam, enhanced)), bind);
}

ad::Var glocal_embed(ad::Var enhanced, const Mlp& local_mlp, const Mlp& global_mlp, ParamBinder& bind) {
  require_inner(enhanced.value(), "enhanced supertokens", local_mlp.hidden.weight, "local MLP");
  require_inner(enhanced.value(), "enhanced supertokens", global_mlp.hidden.weight, "global MLP");
  ad::Var local = forward(local_mlp, enhanced, bind);
  ad::Var global = ad::col_mean(forward(global_mlp, enhanced, bind));
  return ad::concat_cols(local, ad::repeat_rows(global, enhanced.rows()));
}

ad::Var decision_scores(ad::Var glocal, const Mlp& score_mlp, ParamBinder& bind) {
  require_inner(glocal.value(), "GLocal embedding", score_mlp.hidden.weight, "score MLP");
  if (score_mlp.out_width() != 2) {
    throw ShapeError("score MLP must emit 2 channels, emits " + std::to_string(score_mlp.out_width()));
  }
  return ad::softmax_rows(forward(score_mlp, glocal, bind));
}

Selection select_supertokens(const Matrix& scores, std::size_t k, bool training, std::uint64_t rng_seed) {
  const std::size_t s_count = scores.rows();
  if (scores.cols() != 2) throw ShapeError("decision scores must be Sx2, got " + scores.shape_string());
  if (k < 1 || k > s_count) {
    throw std::invalid_argument("gumbel_topk_keep: K=" + std::to_string(k) + " outside [1, " +
                                std::to_string(s_count) + "]");
  }
  Selection sel;
  sel.noise = Matrix(s_count, 2);
  std::vector<double> key(s_count);
  if (training) {
    Rng rng(rng_seed);
    // open interval keeps -log(-log(u)) finite
    std::uniform_real_distribution<double> u(std::numeric_limits<double>::min(), 1.0);
    for (double& g : sel.noise.values()) {
      double x = u(rng);
      while (x >= 1.0) x = u(rng);
      g = -std::log(-std::log(x));
    }
    for (std::size_t i = 0; i < s_count; ++i) key[i] = std::log(scores(i, 0)) + sel.noise(i, 0);
  } else {
    for (std::size_t i = 0; i < s_count; ++i) key[i] = scores(i, 0);
  }
  sel.kept = top_k_ascending(key, k);
  return sel;
}

Matrix relaxed_keep(const Matrix& scores, const Matrix& noise, double temperature) {
  Matrix y(scores.rows(), 1);
  for (std::size_t i = 0; i < scores.rows(); ++i) {
    const double a0 = (std::log(std::max(scores(i, 0), kProbabilityFloor)) + noise(i, 0)) / temperature;
    const double a1 = (std::log(std::max(scores(i, 1), kProbabilityFloor)) + noise(i, 1)) / temperature;
    y(i, 0) = 1.0 / (1.0 + std::exp(a1 - a0));
  }
  return y;
}

ad::Var straight_through_mask(ad::Var scores, const Selection& selection, double temperature) {
  if (!(temperature > 0.0)) throw std::invalid_argument("Gumbel temperature must be positive");
  const Matrix& psi = scores.value();
  Matrix hard(psi.rows(), 1);
  for (std::size_t i : selection.kept) hard(i, 0) = 1.0;
  Matrix relaxed = relaxed_keep(psi, selection.noise, temperature);
  const std::size_t is = scores.id();
  return scores.tape().record(
      std::move(hard), {scores},
      [is, relaxed = std::move(relaxed), temperature](ad::Tape& t, std::size_t self) {
        const Matrix& g = t.grad(self);
        const Matrix& psi = t.value(is);
        Matrix& gp = t.grad_accumulator(is);
        for (std::size_t i = 0; i < psi.rows(); ++i) {
          const double y = relaxed(i, 0);
          const double slope = g(i, 0) * y * (1.0 - y) / temperature;
          if (psi(i, 0) > kProbabilityFloor) gp(i, 0) += slope / psi(i, 0);
          if (psi(i, 1) > kProbabilityFloor) gp(i, 1) -= slope / psi(i, 1);
        }
      },
      "sts.mask");
}

// ---- value-level ----------------------------------------------------------

Projected project_qkv(const TokenSet& tokens, const SupertokenSet& supertokens,
                      const ProjectionWeights& weights) {
  ad::Tape tape;
  ParamBinder bind(tape, false);
  auto p = project_qkv(tape.constant(tokens.values), tape.constant(supertokens.values), weights, bind);
  return {p.query.value(), p.key.value(), p.value.value()};
}

AssignmentMap hard_assign(const Matrix& query, const Matrix& key) {
  ad::Tape tape;
  return assign(tape.constant(query), tape.constant(key), AssignMode::hard).to_map();
}

AssignmentMap soft_assign(const Matrix& query, const Matrix& key) {
  ad::Tape tape;
  return assign(tape.constant(query), tape.constant(key), AssignMode::soft).to_map();
}

namespace {
CamVar bind_cam(ad::Tape& tape, const AssignmentMap& cam) {
  CamVar c{tape.constant(cam.matrix), cam.mode, cam.owner};
  if (c.mode == AssignMode::hard && c.owner.size() != cam.matrix.cols()) {
    c.owner = column_argmax(cam.matrix);
  }
  return c;
}
}  // namespace

SupertokenSet supertoken_update(const AssignmentMap& cam, const Matrix& value, const SupertokenSet& fallback) {
  ad::Tape tape;
  return {supertoken_update(bind_cam(tape, cam), tape.constant(value), tape.constant(fallback.values)).value()};
}

SupertokenSet dfe_enhance(const SupertokenSet& supertokens, const ProjectionWeights& weights) {
  ad::Tape tape;
  ParamBinder bind(tape, false);
  return {dfe_enhance(tape.constant(supertokens.values), weights, bind).value()};
}

TokenSet cau_reconstruct(const TokenSet& tokens, const AssignmentMap& cam, const SupertokenSet& enhanced,
                         const Mlp& head) {
  ad::Tape tape;
  ParamBinder bind(tape, false);
  return {cau_reconstruct(tape.constant(tokens.values), bind_cam(tape, cam), tape.constant(enhanced.values),
                          head, bind)
              .value()};
}

Matrix glocal_embed(const SupertokenSet& enhanced, const Mlp& local_mlp, const Mlp& global_mlp) {
  ad::Tape tape;
  ParamBinder bind(tape, false);
  return glocal_embed(tape.constant(enhanced.values), local_mlp, global_mlp, bind).value();
}

DecisionScores decision_scores(const Matrix& glocal, const Mlp& score_mlp) {
  ad::Tape tape;
  ParamBinder bind(tape, false);
  return {decision_scores(tape.constant(glocal), score_mlp, bind).value()};
}

std::vector<std::size_t> gumbel_topk_keep(const DecisionScores& scores, std::size_t k, double temperature,
                                          bool training, std::uint64_t rng_seed) {
  if (!(temperature > 0.0)) throw std::invalid_argument("Gumbel temperature must be positive");
  return select_supertokens(scores.matrix, k, training, rng_seed).kept;
}

}  // namespace lst::attention
