#pragma once

// Minimal reverse-mode differentiation over dense matrices. A Tape records each
// operation's value together with a closure that pushes the output adjoint back
// to its inputs. Nodes whose inputs need no gradient drop their closure, so a
// tape built entirely from constants is a plain forward evaluator.

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lst/matrix.hpp"

namespace lst::ad {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  bool valid() const noexcept { return tape_ != nullptr; }
  std::size_t id() const noexcept { return id_; }
  Tape& tape() const noexcept { return *tape_; }

  const Matrix& value() const;
  const Matrix& grad() const;
  bool requires_grad() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t self)>;

  struct NodeInfo {
    std::size_t rows;
    std::size_t cols;
    std::string label;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value, std::string_view label = {});
  Var leaf(Matrix value, std::string_view label = {});
  Var record(Matrix value, std::initializer_list<Var> inputs, Backward backward,
             std::string_view label = {});

  /// Seeds d(root)/d(root) = 1 and runs every closure in reverse order.
  /// The root must be 1x1.
  void backward(Var root);

  /// Tags a node for structural inspection through inventory().
  void set_label(Var v, std::string_view label) { nodes_[v.id()].label = label; }

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  /// Gradient of the last backward pass; zeros for nodes it did not reach.
  const Matrix& grad(std::size_t id);

  /// Accumulation target used by backward closures.
  Matrix& grad_accumulator(std::size_t id);

  std::size_t size() const noexcept { return nodes_.size(); }
  std::vector<NodeInfo> inventory() const;

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Backward backward;
    std::string label;
  };

  std::deque<Node> nodes_;
};

// Adds src into dst; shapes must match.
void accumulate(Matrix& dst, const Matrix& src);

Var matmul(Var a, Var b);     // a * b
Var matmul_nt(Var a, Var b);  // a * b^T
Var matmul_tn(Var a, Var b);  // a^T * b
Var add(Var a, Var b);
Var add_row(Var a, Var row);  // row (1 x C) broadcast over the rows of a
Var scale(Var a, double s);
Var relu(Var a);
Var leaky_relu(Var a, double slope);  // x for x > 0, slope * x otherwise
Var softmax_rows(Var a);
Var softmax_cols(Var a);
Var concat_cols(Var a, Var b);
Var col_mean(Var a);                     // 1 x C mean over rows
Var repeat_rows(Var row, std::size_t n);  // 1 x C -> n x C
Var gather_rows(Var a, std::span<const std::size_t> index);
Var scale_rows(Var a, Var factors);  // factors is n x 1
Var sum(Var a);                      // 1 x 1

/// out(i, c) = max over r of h(neighbors[i * k + r], c). Gradient routes to the
/// first maximising neighbour.
Var max_pool_neighbors(Var h, std::span<const std::size_t> neighbors, std::size_t k);

/// Mean over rows of class-weighted negative log-softmax likelihood.
Var weighted_cross_entropy(Var logits, std::span<const int> labels,
                           std::span<const double> class_weights);

}  // namespace lst::ad
