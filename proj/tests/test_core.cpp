#include <cmath>
#include <functional>
#include <random>

#include "doctest.h"
#include "lst/autodiff.hpp"
#include "lst/kernels.hpp"
#include "lst/layers.hpp"
#include "oracles.hpp"

using lst::Matrix;
namespace ad = lst::ad;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed, double sd = 1.0) {
  lst::Rng rng(seed);
  return lst::gaussian(r, c, sd, rng);
}

std::vector<int> random_labels(std::size_t n, std::size_t classes, std::uint64_t seed) {
  lst::Rng rng(seed);
  std::vector<int> out(n);
  for (auto& l : out) l = static_cast<int>(rng() % classes);
  return out;
}

using Builder = std::function<ad::Var(ad::Tape&, const std::vector<ad::Var>&)>;

/// Worst relative error between tape gradients and central differences over
/// every input.
double gradient_error(std::vector<Matrix> inputs, const Builder& build) {
  ad::Tape tape;
  std::vector<ad::Var> leaves;
  for (const auto& m : inputs) leaves.push_back(tape.leaf(m));
  ad::Var root = build(tape, leaves);
  tape.backward(root);
  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Matrix analytic = leaves[k].grad();
    const Matrix numeric = oracle::central_difference(
        [&] {
          ad::Tape t;
          std::vector<ad::Var> c;
          for (const auto& m : inputs) c.push_back(t.constant(m));
          return build(t, c).value()(0, 0);
        },
        inputs[k]);
    worst = std::max(worst, oracle::relative_error(analytic, numeric));
  }
  return worst;
}

/// Scalar probe: cross-entropy of `out` against fixed labels.
ad::Var probe(ad::Var out, std::uint64_t seed = 99) {
  const auto labels = random_labels(out.rows(), out.cols(), seed);
  return ad::weighted_cross_entropy(out, labels, std::vector<double>(out.cols(), 1.0));
}

}  // namespace

TEST_SUITE("core") {

TEST_CASE("matrix shape checks") {
  Matrix a{{1, 2, 3}, {4, 5, 6}};
  CHECK(a.rows() == 2);
  CHECK(a.cols() == 3);
  CHECK(a(1, 2) == 6);
  CHECK(a.shape_string() == "2x3");
  CHECK_THROWS_AS(Matrix({{1, 2}, {3}}), lst::ShapeError);
  CHECK_THROWS_AS(lst::require_same_shape(a, "a", Matrix(3, 2), "b"), lst::ShapeError);
  CHECK(lst::all_finite(a));
  a(0, 0) = std::nan("");
  CHECK_FALSE(lst::all_finite(a));
}

TEST_CASE("matmul variants match the triple-loop oracle") {
  const Matrix a = random_matrix(7, 5, 1), b = random_matrix(5, 9, 2), c = random_matrix(9, 5, 3),
               d = random_matrix(7, 4, 4);
  CHECK(oracle::max_abs_diff(lst::kernels::matmul(a, b), oracle::matmul(a, b)) < 1e-12);
  CHECK(oracle::max_abs_diff(lst::kernels::matmul_nt(a, c), oracle::matmul(a, oracle::transpose(c))) < 1e-12);
  CHECK(oracle::max_abs_diff(lst::kernels::matmul_tn(a, d), oracle::matmul(oracle::transpose(a), d)) < 1e-12);
  CHECK_THROWS_AS(lst::kernels::matmul(a, a), lst::ShapeError);
}

TEST_CASE("softmax kernels match exp/normalise") {
  const Matrix a = random_matrix(4, 6, 5, 2.0);
  CHECK(oracle::max_abs_diff(lst::kernels::softmax_rows(a), oracle::softmax_rows(a)) < 1e-9);
  CHECK(oracle::max_abs_diff(lst::kernels::softmax_cols(a), oracle::softmax_cols(a)) < 1e-9);
  Matrix big(1, 3);
  big(0, 0) = 1000.0;
  const Matrix s = lst::kernels::softmax_rows(big);
  CHECK(s(0, 0) == doctest::Approx(1.0));
  CHECK(lst::all_finite(s));
}

TEST_CASE("parallel kernels are bit-identical to the serial reference") {
  const Matrix a = random_matrix(300, 70, 6), b = random_matrix(70, 200, 7);
  CHECK(lst::kernels::matmul(a, b) == lst::kernels::serial::matmul(a, b));
  CHECK(lst::kernels::matmul_nt(a, a) == lst::kernels::serial::matmul_nt(a, a));
  CHECK(lst::kernels::matmul_tn(a, a) == lst::kernels::serial::matmul_tn(a, a));
  CHECK(lst::kernels::transpose(a) == lst::kernels::serial::transpose(a));
  CHECK(lst::kernels::softmax_rows(a) == lst::kernels::serial::softmax_rows(a));
  CHECK(lst::kernels::softmax_cols(a) == lst::kernels::serial::softmax_cols(a));
  lst::Rng rng(8);
  std::uniform_real_distribution<double> u(0, 5);
  std::vector<lst::Vec3> pts(700);
  for (auto& p : pts) p = {u(rng), u(rng), u(rng)};
  CHECK(lst::kernels::knn(pts, 12) == lst::kernels::serial::knn(pts, 12));
}

TEST_CASE("knn matches a full distance sort") {
  lst::Rng rng(9);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<lst::Vec3> pts(120);
  for (auto& p : pts) p = {u(rng), u(rng), u(rng)};
  const auto table = lst::kernels::knn(pts, 6);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto expected = oracle::nearest(pts, pts[i], 6);
    CHECK(std::equal(expected.begin(), expected.end(), table.begin() + static_cast<long>(i * 6)));
  }
  CHECK_THROWS_AS(lst::kernels::knn(pts, 0), std::invalid_argument);
  CHECK_THROWS_AS(lst::kernels::knn(pts, 121), std::invalid_argument);
}

TEST_CASE("mix_seed separates salts and is stable") {
  CHECK(lst::mix_seed(1, 2) == lst::mix_seed(1, 2));
  CHECK(lst::mix_seed(1, 2) != lst::mix_seed(1, 3));
  CHECK(lst::mix_seed(1, 2) != lst::mix_seed(2, 2));
}

TEST_CASE("tape ops: analytic gradients match central differences") {
  const Matrix a = random_matrix(5, 4, 10), b = random_matrix(4, 3, 11), c = random_matrix(6, 4, 12),
               row = random_matrix(1, 4, 13), f = random_matrix(5, 1, 14);
  SUBCASE("matmul family") {
    CHECK(gradient_error({a, b}, [](ad::Tape&, auto& v) { return probe(ad::matmul(v[0], v[1])); }) < 1e-6);
    CHECK(gradient_error({a, c}, [](ad::Tape&, auto& v) { return probe(ad::matmul_nt(v[0], v[1])); }) < 1e-6);
    CHECK(gradient_error({a, random_matrix(5, 3, 15)},
                         [](ad::Tape&, auto& v) { return probe(ad::matmul_tn(v[0], v[1])); }) < 1e-6);
  }
  SUBCASE("elementwise and broadcast") {
    CHECK(gradient_error({a, a}, [](ad::Tape&, auto& v) { return probe(ad::add(v[0], ad::scale(v[1], 0.3))); }) <
          1e-6);
    CHECK(gradient_error({a, row}, [](ad::Tape&, auto& v) { return probe(ad::add_row(v[0], v[1])); }) < 1e-6);
    CHECK(gradient_error({a}, [](ad::Tape&, auto& v) { return probe(ad::relu(v[0])); }) < 1e-6);
    CHECK(gradient_error({a}, [](ad::Tape&, auto& v) { return probe(ad::leaky_relu(v[0], 0.1)); }) < 1e-6);
    CHECK(gradient_error({a, f}, [](ad::Tape&, auto& v) { return probe(ad::scale_rows(v[0], v[1])); }) < 1e-6);
  }
  SUBCASE("softmax") {
    CHECK(gradient_error({a}, [](ad::Tape&, auto& v) { return probe(ad::softmax_rows(v[0])); }) < 1e-6);
    CHECK(gradient_error({a}, [](ad::Tape&, auto& v) { return probe(ad::softmax_cols(v[0])); }) < 1e-6);
  }
  SUBCASE("reshaping ops") {
    CHECK(gradient_error({a, a}, [](ad::Tape&, auto& v) { return probe(ad::concat_cols(v[0], v[1])); }) < 1e-6);
    CHECK(gradient_error({a}, [](ad::Tape&, auto& v) { return probe(ad::repeat_rows(ad::col_mean(v[0]), 3)); }) <
          1e-6);
    const std::vector<std::size_t> idx{4, 0, 0, 2};
    CHECK(gradient_error({a}, [&](ad::Tape&, auto& v) { return probe(ad::gather_rows(v[0], idx)); }) < 1e-6);
    CHECK(gradient_error({a}, [](ad::Tape&, auto& v) { return ad::sum(v[0]); }) < 1e-6);
  }
  SUBCASE("neighbour max-pool") {
    const std::vector<std::size_t> nb{0, 1, 1, 2, 2, 3, 3, 4, 4, 0};
    CHECK(gradient_error({a}, [&](ad::Tape&, auto& v) { return probe(ad::max_pool_neighbors(v[0], nb, 2)); }) <
          1e-6);
  }
  SUBCASE("weighted cross-entropy") {
    const auto labels = random_labels(5, 4, 16);
    const std::vector<double> w{0.5, 1.0, 2.0, 0.25};
    CHECK(gradient_error({a}, [&](ad::Tape&, auto& v) { return ad::weighted_cross_entropy(v[0], labels, w); }) <
          1e-6);
  }
}

TEST_CASE("weighted cross-entropy matches the log-sum-exp oracle") {
  const Matrix logits = random_matrix(9, 4, 17, 3.0);
  const auto labels = random_labels(9, 4, 18);
  const std::vector<double> w{0.3, 1.7, 1.0, 2.5};
  ad::Tape tape;
  const double got = ad::weighted_cross_entropy(tape.constant(logits), labels, w).value()(0, 0);
  CHECK(std::abs(got - oracle::weighted_ce(logits, labels, w)) < 1e-12);
  const double uniform =
      ad::weighted_cross_entropy(tape.constant(logits), labels, std::vector<double>(4, 1.0)).value()(0, 0);
  CHECK(std::abs(uniform - oracle::weighted_ce(logits, labels, std::vector<double>(4, 1.0))) < 1e-12);
  const std::vector<int> bad{0, 1, 4, 0, 0, 0, 0, 0, 0};
  CHECK_THROWS_AS(ad::weighted_cross_entropy(tape.constant(logits), bad, w), std::invalid_argument);
}

TEST_CASE("tape bookkeeping") {
  ad::Tape tape;
  ad::Var c = tape.constant(Matrix{{1, 2}});
  ad::Var l = tape.leaf(Matrix{{3, 4}});
  CHECK_FALSE(c.requires_grad());
  CHECK(l.requires_grad());
  ad::Var s = ad::sum(ad::add(c, l));
  tape.set_label(s, "total");
  tape.backward(s);
  CHECK(l.grad() == Matrix{{1, 1}});
  CHECK(c.grad() == Matrix{{0, 0}});
  CHECK(tape.inventory().back().label == "total");
  CHECK_THROWS(tape.backward(l));
  tape.backward(s);
  CHECK(l.grad() == Matrix{{1, 1}});
}

TEST_CASE("ParamBinder shares one leaf per parameter") {
  lst::Rng rng(19);
  const lst::Linear layer = lst::make_linear(3, 2, rng, lst::kReluGain);
  const Matrix x = random_matrix(4, 3, 20);
  ad::Tape tape;
  lst::ParamBinder bind(tape);
  ad::Var in = tape.constant(x);
  ad::Var y = ad::add(lst::forward(layer, in, bind), lst::forward(layer, in, bind));
  tape.backward(ad::sum(y));
  const Matrix g = bind.grad_of(layer.bias);
  for (double v : g.values()) CHECK(v == doctest::Approx(8.0));
  ad::Tape frozen_tape;
  lst::ParamBinder frozen(frozen_tape, false);
  CHECK_FALSE(frozen(layer.weight).requires_grad());
  CHECK(bind.grad_of(Matrix(1, 1)) == Matrix(1, 1));
}

}  // TEST_SUITE
