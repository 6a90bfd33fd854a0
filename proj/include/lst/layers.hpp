#pragma once

#include <cstdint>
#include <random>
#include <unordered_map>

#include "lst/autodiff.hpp"
#include "lst/matrix.hpp"

namespace lst {

/// Derives an independent 64-bit stream seed from a base seed and a salt.
std::uint64_t mix_seed(std::uint64_t base, std::uint64_t salt) noexcept;

using Rng = std::mt19937_64;

/// Matrix with i.i.d. N(0, stddev^2) entries.
Matrix gaussian(std::size_t rows, std::size_t cols, double stddev, Rng& rng);

/// Affine map x * weight + bias; weight is in x out, bias is 1 x out.
struct Linear {
  Matrix weight;
  Matrix bias;

  std::size_t in_width() const { return weight.rows(); }
  std::size_t out_width() const { return weight.cols(); }
};

/// Negative-side slope of the Mlp hidden activation.
inline constexpr double kMlpLeak = 0.1;

/// Linear -> leaky ReLU -> Linear.
struct Mlp {
  Linear hidden;
  Linear out;

  std::size_t in_width() const { return hidden.in_width(); }
  std::size_t out_width() const { return out.out_width(); }
};

/// Weight variance gain / in: 2 ahead of a ReLU, 1 ahead of nothing.
inline constexpr double kReluGain = 2.0;
inline constexpr double kLinearGain = 1.0;

/// Gaussian weights with variance gain / in, zero bias.
Linear make_linear(std::size_t in, std::size_t out, Rng& rng, double gain);
/// Hidden layer at kReluGain, output layer at kLinearGain.
Mlp make_mlp(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng);

/// Maps parameter matrices to tape nodes. Each matrix becomes one leaf on first
/// use (or a constant when the binder is frozen) so shared parameters
/// accumulate a single gradient.
class ParamBinder {
 public:
  explicit ParamBinder(ad::Tape& tape, bool trainable = true) : tape_(tape), trainable_(trainable) {}

  ad::Var operator()(const Matrix& param);
  ad::Tape& tape() const noexcept { return tape_; }
  bool trainable() const noexcept { return trainable_; }

  /// Gradient of the last backward pass; zeros when the parameter was unused.
  Matrix grad_of(const Matrix& param) const;

 private:
  ad::Tape& tape_;
  bool trainable_;
  std::unordered_map<const Matrix*, ad::Var> bound_;
};

ad::Var forward(const Linear& layer, ad::Var x, ParamBinder& bind);
ad::Var forward(const Mlp& mlp, ad::Var x, ParamBinder& bind);

}  // namespace lst
