#include "lst/selfcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <ostream>
#include <utility>

#include "lst/attention.hpp"
#include "lst/gradcheck.hpp"
#include "lst/kernels.hpp"
#include "lst/network.hpp"

namespace lst::selfcheck {

namespace {

constexpr std::size_t kTokens = 16;
constexpr std::size_t kSupertokens = 4;
constexpr std::size_t kWidth = 4;
constexpr std::size_t kClasses = 3;

using Inputs = std::vector<std::pair<std::string, Matrix*>>;
using LossFn = std::function<ad::Var(ParamBinder&)>;

std::vector<int> random_labels(std::size_t n, std::size_t classes, Rng& rng) {
  std::vector<int> out(n);
  for (auto& l : out) l = static_cast<int>(rng() % classes);
  return out;
}

/// Scalar probe of a matrix-valued output: cross-entropy against fixed labels.
ad::Var probe(ad::Var out, const std::vector<int>& labels) {
  const std::vector<double> weights(out.cols(), 1.0);
  return ad::weighted_cross_entropy(out, labels, weights);
}

CheckResult gradient_check(const std::string& name, const Inputs& inputs, const LossFn& loss, const Options& opt) {
  ad::Tape tape;
  ParamBinder bind(tape);
  ad::Var root = loss(bind);
  tape.backward(root);

  CheckResult r{name, 0.0, "", opt.gradient_tolerance, false};
  for (const auto& [tensor, x] : inputs) {
    Matrix analytic = bind.grad_of(*x);
    if (opt.inject_fault == name)
      for (double& v : analytic.values()) v = -v;
    const Matrix numeric = gradcheck::numeric_gradient(
        [&] {
          ad::Tape t;
          ParamBinder frozen(t, false);
          return loss(frozen).value()(0, 0);
        },
        *x);
    const double err = gradcheck::relative_error(analytic, numeric);
    if (err >= r.worst_error) {
      r.worst_error = err;
      r.worst_tensor = tensor;
    }
  }
  r.passed = std::isfinite(r.worst_error) && r.worst_error < opt.gradient_tolerance;
  return r;
}

CheckResult oracle_check(const std::string& name, const std::string& what, double error, const Options& opt) {
  return {name, error, what, opt.oracle_tolerance, std::isfinite(error) && error <= opt.oracle_tolerance};
}

void add_mlp(Inputs& in, const std::string& prefix, Mlp& m) {
  in.emplace_back(prefix + ".hidden.weight", &m.hidden.weight);
  in.emplace_back(prefix + ".hidden.bias", &m.hidden.bias);
  in.emplace_back(prefix + ".out.weight", &m.out.weight);
  in.emplace_back(prefix + ".out.bias", &m.out.bias);
}

void add_projection(Inputs& in, const std::string& prefix, attention::ProjectionWeights& w) {
  in.emplace_back(prefix + ".query", &w.query);
  in.emplace_back(prefix + ".key", &w.key);
  in.emplace_back(prefix + ".value", &w.value);
}

CheckResult check_dfe(const Options& opt) {
  Rng rng(mix_seed(opt.seed, 1));
  Matrix supertokens = gaussian(kSupertokens, kWidth, 1.0, rng);
  auto weights = attention::make_projection(kWidth, rng);
  const auto labels = random_labels(kSupertokens, kWidth, rng);
  Inputs in{{"supertokens", &supertokens}};
  add_projection(in, "dfe", weights);
  return gradient_check("dfe_enhance", in, [&](ParamBinder& b) {
    return probe(attention::dfe_enhance(b(supertokens), weights, b), labels);
  }, opt);
}

CheckResult check_cau(const Options& opt) {
  Rng rng(mix_seed(opt.seed, 2));
  Matrix tokens = gaussian(kTokens, kWidth, 1.0, rng);
  Matrix enhanced = gaussian(kSupertokens, kWidth, 1.0, rng);
  Matrix cam_logits = gaussian(kSupertokens, kTokens, 1.0, rng);
  Mlp head = make_mlp(kWidth, 2 * kWidth, 2 * kWidth, rng);
  const auto labels = random_labels(kTokens, 2 * kWidth, rng);
  Inputs in{{"tokens", &tokens}, {"enhanced", &enhanced}, {"cam", &cam_logits}};
  add_mlp(in, "cau", head);
  return gradient_check("cau_reconstruct", in, [&](ParamBinder& b) {
    const attention::CamVar cam{ad::softmax_cols(b(cam_logits)), attention::AssignMode::soft, {}};
    return probe(attention::cau_reconstruct(b(tokens), cam, b(enhanced), head, b), labels);
  }, opt);
}

CheckResult check_dso_soft(const Options& opt) {
  Rng rng(mix_seed(opt.seed, 3));
  Matrix tokens = gaussian(kTokens, kWidth, 1.0, rng);
  Matrix initial = gaussian(kSupertokens, kWidth, 1.0, rng);
  auto weights = attention::make_projection(kWidth, rng);
  const auto labels = random_labels(kSupertokens, kWidth, rng);
  Inputs in{{"tokens", &tokens}, {"supertokens", &initial}};
  add_projection(in, "dso", weights);
  return gradient_check("dso_soft", in, [&](ParamBinder& b) {
    ad::Var init = b(initial);
    auto proj = attention::project_qkv(b(tokens), init, weights, b);
    auto cam = attention::assign(proj.query, proj.key, attention::AssignMode::soft);
    return probe(attention::supertoken_update(cam, proj.value, init), labels);
  }, opt);
}

CheckResult check_decision_scores(const Options& opt) {
  Rng rng(mix_seed(opt.seed, 4));
  Matrix enhanced = gaussian(kSupertokens, kWidth, 1.0, rng);
  Mlp local = make_mlp(kWidth, kWidth, kWidth, rng);
  Mlp global = make_mlp(kWidth, kWidth, kWidth, rng);
  Mlp score = make_mlp(2 * kWidth, 2, 2, rng);
  const auto labels = random_labels(kSupertokens, 2, rng);
  Inputs in{{"enhanced", &enhanced}};
  add_mlp(in, "sts.local", local);
  add_mlp(in, "sts.global", global);
  add_mlp(in, "sts.score", score);
  return gradient_check("decision_scores", in, [&](ParamBinder& b) {
    ad::Var glocal = attention::glocal_embed(b(enhanced), local, global, b);
    return probe(attention::decision_scores(glocal, score, b), labels);
  }, opt);
}

CheckResult check_straight_through(const Options& opt) {
  Rng rng(mix_seed(opt.seed, 5));
  Matrix scores(kSupertokens * 2, 2);
  std::uniform_real_distribution<double> u(0.1, 0.9);
  for (std::size_t i = 0; i < scores.rows(); ++i) {
    scores(i, 0) = u(rng);
    scores(i, 1) = 1.0 - scores(i, 0);
  }
  const Matrix upstream = gaussian(scores.rows(), 1, 1.0, rng);
  const double temperature = 0.7;
  const auto selection = attention::select_supertokens(scores, kSupertokens, true, mix_seed(opt.seed, 55));

  ad::Tape tape;
  ParamBinder bind(tape);
  ad::Var mask = attention::straight_through_mask(bind(scores), selection, temperature);
  tape.backward(ad::matmul_tn(mask, tape.constant(upstream)));
  Matrix analytic = bind.grad_of(scores);
  if (opt.inject_fault == "sts_straight_through")
    for (double& v : analytic.values()) v = -v;
  const Matrix numeric = gradcheck::numeric_gradient(
      [&] {
        const Matrix y = attention::relaxed_keep(scores, selection.noise, temperature);
        double s = 0.0;
        for (std::size_t i = 0; i < y.rows(); ++i) s += y(i, 0) * upstream(i, 0);
        return s;
      },
      scores);
  const double err = gradcheck::relative_error(analytic, numeric);
  return {"sts_straight_through", err, "scores", opt.gradient_tolerance,
          std::isfinite(err) && err < opt.gradient_tolerance};
}

CheckResult check_weighted_ce(const Options& opt) {
  Rng rng(mix_seed(opt.seed, 6));
  Matrix logits = gaussian(kTokens, kClasses, 2.0, rng);
  const auto labels = random_labels(kTokens, kClasses, rng);
  const std::vector<double> weights{0.5, 2.0, 1.25};
  return gradient_check("weighted_cross_entropy", {{"logits", &logits}}, [&](ParamBinder& b) {
    return ad::weighted_cross_entropy(b(logits), labels, weights);
  }, opt);
}

net::NetConfig small_config(net::Wiring wiring) {
  net::NetConfig c;
  c.in_features = 2;
  c.classes = kClasses;
  c.d1 = kWidth;
  c.supertokens = kSupertokens;
  c.k_local = 4;
  c.wiring = wiring;
  return c;
}

net::BlockInput small_block(std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  PointCloud cloud;
  cloud.features = Matrix(kTokens, 2);
  for (std::size_t i = 0; i < kTokens; ++i) {
    cloud.positions.push_back({u(rng), u(rng), u(rng)});
    cloud.features(i, 0) = u(rng);
    cloud.features(i, 1) = u(rng);
    cloud.labels.push_back(static_cast<int>(i % kClasses));
  }
  cloud.class_names = {"a", "b", "c"};
  Block block{cloud, {0.0, 0.0, 0.0}, {}};
  return net::prepare_block(block, 4);
}

CheckResult check_end_to_end(const std::string& name, net::Wiring wiring, attention::AssignMode mode,
                             const Options& opt) {
  const net::NetConfig config = small_config(wiring);
  net::WNetParams params = net::init_params(config, mix_seed(opt.seed, 7));
  const net::BlockInput block = small_block(mix_seed(opt.seed, 8));
  const std::vector<double> weights{0.8, 1.5, 0.7};
  Inputs in;
  net::for_each_tensor(params, [&](const std::string& n, Matrix& m) { in.emplace_back(n, &m); });
  return gradient_check(name, in, [&](ParamBinder& b) {
    const auto g = net::forward_graph(block, params, config, {mode, false, 0}, b);
    return net::loss_graph(g, block.labels, weights);
  }, opt);
}

CheckResult check_hard_assign_oracle(const Options& opt) {
  Rng rng(mix_seed(opt.seed, 9));
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix query = gaussian(kSupertokens, kWidth, 1.0, rng);
    const Matrix key = gaussian(kTokens, kWidth, 1.0, rng);
    const Matrix value = gaussian(kTokens, kWidth, 1.0, rng);
    const attention::SupertokenSet fallback{gaussian(kSupertokens, kWidth, 1.0, rng)};
    const auto cam = attention::hard_assign(query, key);
    const auto updated = attention::supertoken_update(cam, value, fallback);
    for (std::size_t s = 0; s < kSupertokens; ++s) {
      std::vector<double> mean(kWidth, 0.0);
      std::size_t members = 0;
      for (std::size_t n = 0; n < kTokens; ++n) {
        std::size_t best = 0;
        double best_score = -1e300;
        for (std::size_t c = 0; c < kSupertokens; ++c) {
          double dot = 0.0;
          for (std::size_t d = 0; d < kWidth; ++d) dot += query(c, d) * key(n, d);
          if (dot > best_score) {
            best_score = dot;
            best = c;
          }
        }
        worst = std::max(worst, std::abs(cam.matrix(s, n) - (best == s ? 1.0 : 0.0)));
        if (best != s) continue;
        ++members;
        for (std::size_t d = 0; d < kWidth; ++d) mean[d] += value(n, d);
      }
      for (std::size_t d = 0; d < kWidth; ++d) {
        const double expected = members ? mean[d] / static_cast<double>(members) : fallback.values(s, d);
        worst = std::max(worst, std::abs(updated.values(s, d) - expected));
      }
    }
  }
  return oracle_check("hard_assign_cluster_mean", "supertokens", worst, opt);
}

CheckResult check_uniform_ce_oracle(const Options& opt) {
  Rng rng(mix_seed(opt.seed, 10));
  const Matrix logits = gaussian(kTokens, kClasses, 2.0, rng);
  const auto labels = random_labels(kTokens, kClasses, rng);
  ad::Tape tape;
  const double got =
      ad::weighted_cross_entropy(tape.constant(logits), labels, std::vector<double>(kClasses, 1.0)).value()(0, 0);
  double expected = 0.0;
  for (std::size_t i = 0; i < kTokens; ++i) {
    double z = 0.0;
    for (std::size_t c = 0; c < kClasses; ++c) z += std::exp(logits(i, c));
    expected -= std::log(std::exp(logits(i, static_cast<std::size_t>(labels[i]))) / z);
  }
  expected /= static_cast<double>(kTokens);
  return oracle_check("uniform_weight_cross_entropy", "loss", std::abs(got - expected), opt);
}

CheckResult check_parallel_kernels(const Options& opt) {
  Rng rng(mix_seed(opt.seed, 11));
  const Matrix a = gaussian(257, 67, 1.0, rng);
  const Matrix b = gaussian(67, 129, 1.0, rng);
  double worst = max_abs_diff(kernels::serial::matmul(a, b), kernels::matmul(a, b));
  worst = std::max(worst, max_abs_diff(kernels::serial::softmax_rows(a), kernels::softmax_rows(a)));
  worst = std::max(worst, max_abs_diff(kernels::serial::softmax_cols(a), kernels::softmax_cols(a)));
  return oracle_check("parallel_kernels", "matmul/softmax", worst, opt);
}

}  // namespace

std::vector<CheckResult> run(const Options& opt) {
  using attention::AssignMode;
  return {
      check_dfe(opt),
      check_cau(opt),
      check_dso_soft(opt),
      check_decision_scores(opt),
      check_straight_through(opt),
      check_weighted_ce(opt),
      check_end_to_end("wnet_loss_soft", net::Wiring::wnet, AssignMode::soft, opt),
      check_end_to_end("wnet_loss_hard", net::Wiring::wnet, AssignMode::hard, opt),
      check_end_to_end("unet_loss_soft", net::Wiring::unet, AssignMode::soft, opt),
      check_hard_assign_oracle(opt),
      check_uniform_ce_oracle(opt),
      check_parallel_kernels(opt),
  };
}

std::vector<std::string> check_names() {
  return {"dfe_enhance",    "cau_reconstruct", "dso_soft",       "decision_scores",
          "sts_straight_through", "weighted_cross_entropy", "wnet_loss_soft", "wnet_loss_hard",
          "unet_loss_soft", "hard_assign_cluster_mean", "uniform_weight_cross_entropy", "parallel_kernels"};
}

bool all_passed(const std::vector<CheckResult>& results) {
  return std::all_of(results.begin(), results.end(), [](const CheckResult& r) { return r.passed; });
}

void print_report(std::ostream& os, const std::vector<CheckResult>& results) {
  const auto flags = os.flags();
  for (const auto& r : results) {
    os << (r.passed ? "ok    " : "FAIL  ") << std::left << std::setw(30) << r.name << std::right
       << std::scientific << std::setprecision(3) << std::setw(11) << r.worst_error << "  (tol "
       << r.tolerance << ", worst in " << r.worst_tensor << ")\n";
  }
  os.flags(flags);
}

}  // namespace lst::selfcheck
