#include "lst/layers.hpp"

#include <cmath>

namespace lst {

std::uint64_t mix_seed(std::uint64_t base, std::uint64_t salt) noexcept {
  // splitmix64 finaliser over the combined words
  std::uint64_t z = base + 0x9E3779B97F4A7C15ull * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

Matrix gaussian(std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (double& v : m.values()) v = dist(rng);
  return m;
}

Linear make_linear(std::size_t in, std::size_t out, Rng& rng, double gain) {
  return Linear{gaussian(in, out, std::sqrt(gain / static_cast<double>(in)), rng), Matrix(1, out)};
}

Mlp make_mlp(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng) {
  Linear h = make_linear(in, hidden, rng, kReluGain);
  Linear o = make_linear(hidden, out, rng, kLinearGain);
  return Mlp{std::move(h), std::move(o)};
}

ad::Var ParamBinder::operator()(const Matrix& param) {
  if (auto it = bound_.find(&param); it != bound_.end()) return it->second;
  ad::Var v = trainable_ ? tape_.leaf(param) : tape_.constant(param);
  bound_.emplace(&param, v);
  return v;
}

Matrix ParamBinder::grad_of(const Matrix& param) const {
  if (auto it = bound_.find(&param); it != bound_.end() && trainable_) return it->second.grad();
  return Matrix(param.rows(), param.cols());
}

ad::Var forward(const Linear& layer, ad::Var x, ParamBinder& bind) {
  return ad::add_row(ad::matmul(x, bind(layer.weight)), bind(layer.bias));
}

ad::Var forward(const Mlp& mlp, ad::Var x, ParamBinder& bind) {
  return forward(mlp.out, ad::leaky_relu(forward(mlp.hidden, x, bind), kMlpLeak), bind);
}

}  // namespace lst
