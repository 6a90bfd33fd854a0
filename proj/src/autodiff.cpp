#include "lst/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

#include "lst/kernels.hpp"

namespace lst::ad {

const Matrix& Var::value() const { return tape_->value(id_); }
const Matrix& Var::grad() const { return tape_->grad(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::constant(Matrix value, std::string_view label) {
  nodes_.push_back(Node{std::move(value), {}, false, {}, std::string(label)});
  return Var(this, nodes_.size() - 1);
}

Var Tape::leaf(Matrix value, std::string_view label) {
  nodes_.push_back(Node{std::move(value), {}, true, {}, std::string(label)});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Matrix value, std::initializer_list<Var> inputs, Backward backward,
                 std::string_view label) {
  bool needs = false;
  for (const Var& v : inputs) {
    if (v.tape_ != this) throw std::logic_error("Tape::record: input from another tape");
    needs = needs || nodes_[v.id_].requires_grad;
  }
  nodes_.push_back(
      Node{std::move(value), {}, needs, needs ? std::move(backward) : Backward{}, std::string(label)});
  return Var(this, nodes_.size() - 1);
}

const Matrix& Tape::grad(std::size_t id) { return grad_accumulator(id); }

Matrix& Tape::grad_accumulator(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.grad.same_shape(n.value)) n.grad = Matrix(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backward(Var root) {
  if (root.tape_ != this) throw std::logic_error("Tape::backward: root from another tape");
  if (value(root.id_).size() != 1) {
    throw ShapeError("Tape::backward: root must be 1x1, got " + value(root.id_).shape_string());
  }
  for (Node& n : nodes_) n.grad = Matrix();
  grad_accumulator(root.id_)(0, 0) = 1.0;
  for (std::size_t id = root.id_ + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.backward && !n.grad.empty()) n.backward(*this, id);
  }
}

std::vector<Tape::NodeInfo> Tape::inventory() const {
  std::vector<NodeInfo> out;
  out.reserve(nodes_.size());
  for (const Node& n : nodes_) out.push_back({n.value.rows(), n.value.cols(), n.label});
  return out;
}

void accumulate(Matrix& dst, const Matrix& src) {
  require_same_shape(dst, "gradient", src, "contribution");
  double* d = dst.data();
  const double* s = src.data();
  for (std::size_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}

namespace {

void require_rows(const Var& a, std::string_view an, const Var& b, std::string_view bn) {
  if (a.rows() != b.rows()) {
    throw ShapeError(std::string(an) + " is " + a.value().shape_string() + " but " +
                     std::string(bn) + " is " + b.value().shape_string());
  }
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = a.tape();
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(kernels::matmul(a.value(), b.value()), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(ia)) accumulate(t.grad_accumulator(ia), kernels::matmul_nt(g, t.value(ib)));
    if (t.requires_grad(ib)) accumulate(t.grad_accumulator(ib), kernels::matmul_tn(t.value(ia), g));
  });
}

Var matmul_nt(Var a, Var b) {
  Tape& t = a.tape();
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(kernels::matmul_nt(a.value(), b.value()), {a, b},
                  [ia, ib](Tape& t, std::size_t self) {
                    const Matrix& g = t.grad(self);
                    if (t.requires_grad(ia))
                      accumulate(t.grad_accumulator(ia), kernels::matmul(g, t.value(ib)));
                    if (t.requires_grad(ib))
                      accumulate(t.grad_accumulator(ib), kernels::matmul_tn(g, t.value(ia)));
                  });
}

Var matmul_tn(Var a, Var b) {
  Tape& t = a.tape();
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(kernels::matmul_tn(a.value(), b.value()), {a, b},
                  [ia, ib](Tape& t, std::size_t self) {
                    const Matrix& g = t.grad(self);
                    if (t.requires_grad(ia))
                      accumulate(t.grad_accumulator(ia), kernels::matmul_nt(t.value(ib), g));
                    if (t.requires_grad(ib))
                      accumulate(t.grad_accumulator(ib), kernels::matmul(t.value(ia), g));
                  });
}

Var add(Var a, Var b) {
  require_same_shape(a.value(), "add lhs", b.value(), "add rhs");
  Matrix out = a.value();
  accumulate(out, b.value());
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(ia)) accumulate(t.grad_accumulator(ia), g);
    if (t.requires_grad(ib)) accumulate(t.grad_accumulator(ib), g);
  });
}

Var add_row(Var a, Var row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw ShapeError("add_row: rows are " + a.value().shape_string() + " but bias is " +
                     row.value().shape_string());
  }
  Matrix out = a.value();
  const auto bias = row.value().row(0);
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += bias[j];
  }
  const std::size_t ia = a.id(), ib = row.id();
  return a.tape().record(std::move(out), {a, row}, [ia, ib](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(ia)) accumulate(t.grad_accumulator(ia), g);
    if (t.requires_grad(ib)) {
      auto gb = t.grad_accumulator(ib).row(0);
      for (std::size_t i = 0; i < g.rows(); ++i) {
        const auto gr = g.row(i);
        for (std::size_t j = 0; j < gr.size(); ++j) gb[j] += gr[j];
      }
    }
  });
}

Var scale(Var a, double s) {
  Matrix out = a.value();
  for (double& v : out.values()) v *= s;
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia, s](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    Matrix& ga = t.grad_accumulator(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga.data()[i] += s * g.data()[i];
  });
}

Var relu(Var a) {
  Matrix out = a.value();
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    const Matrix& x = t.value(ia);
    Matrix& ga = t.grad_accumulator(ia);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (x.data()[i] > 0.0) ga.data()[i] += g.data()[i];
    }
  });
}

Var leaky_relu(Var a, double slope) {
  Matrix out = a.value();
  for (double& v : out.values()) v = v > 0.0 ? v : slope * v;
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia, slope](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    const Matrix& x = t.value(ia);
    Matrix& ga = t.grad_accumulator(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga.data()[i] += x.data()[i] > 0.0 ? g.data()[i] : slope * g.data()[i];
  });
}

Var softmax_rows(Var a) {
  const std::size_t ia = a.id();
  return a.tape().record(kernels::softmax_rows(a.value()), {a}, [ia](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    const Matrix& y = t.value(self);
    Matrix& ga = t.grad_accumulator(ia);
    for (std::size_t i = 0; i < y.rows(); ++i) {
      const auto yr = y.row(i);
      const auto gr = g.row(i);
      double dot = 0.0;
      for (std::size_t j = 0; j < yr.size(); ++j) dot += yr[j] * gr[j];
      auto out_row = ga.row(i);
      for (std::size_t j = 0; j < yr.size(); ++j) out_row[j] += yr[j] * (gr[j] - dot);
    }
  });
}

Var softmax_cols(Var a) {
  const std::size_t ia = a.id();
  return a.tape().record(kernels::softmax_cols(a.value()), {a}, [ia](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    const Matrix& y = t.value(self);
    Matrix& ga = t.grad_accumulator(ia);
    std::vector<double> dot(y.cols(), 0.0);
    for (std::size_t i = 0; i < y.rows(); ++i)
      for (std::size_t j = 0; j < y.cols(); ++j) dot[j] += y(i, j) * g(i, j);
    for (std::size_t i = 0; i < y.rows(); ++i)
      for (std::size_t j = 0; j < y.cols(); ++j) ga(i, j) += y(i, j) * (g(i, j) - dot[j]);
  });
}

Var concat_cols(Var a, Var b) {
  require_rows(a, "concat lhs", b, "concat rhs");
  const std::size_t ca = a.cols(), cb = b.cols();
  Matrix out(a.rows(), ca + cb);
  for (std::size_t i = 0; i < out.rows(); ++i) {
    std::copy(a.value().row(i).begin(), a.value().row(i).end(), out.row(i).begin());
    std::copy(b.value().row(i).begin(), b.value().row(i).end(), out.row(i).begin() + ca);
  }
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib, ca, cb](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    for (std::size_t i = 0; i < g.rows(); ++i) {
      if (t.requires_grad(ia)) {
        auto r = t.grad_accumulator(ia).row(i);
        for (std::size_t j = 0; j < ca; ++j) r[j] += g(i, j);
      }
      if (t.requires_grad(ib)) {
        auto r = t.grad_accumulator(ib).row(i);
        for (std::size_t j = 0; j < cb; ++j) r[j] += g(i, ca + j);
      }
    }
  });
}

Var col_mean(Var a) {
  const Matrix& x = a.value();
  if (x.rows() == 0) throw ShapeError("col_mean: input has no rows");
  Matrix out(1, x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) out(0, j) += x(i, j);
  const double inv = 1.0 / static_cast<double>(x.rows());
  for (double& v : out.values()) v *= inv;
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia, inv](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    Matrix& ga = t.grad_accumulator(ia);
    for (std::size_t i = 0; i < ga.rows(); ++i)
      for (std::size_t j = 0; j < ga.cols(); ++j) ga(i, j) += g(0, j) * inv;
  });
}

Var repeat_rows(Var row, std::size_t n) {
  if (row.rows() != 1) throw ShapeError("repeat_rows: expected one row, got " + row.value().shape_string());
  Matrix out(n, row.cols());
  for (std::size_t i = 0; i < n; ++i)
    std::copy(row.value().row(0).begin(), row.value().row(0).end(), out.row(i).begin());
  const std::size_t ia = row.id();
  return row.tape().record(std::move(out), {row}, [ia](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    auto gr = t.grad_accumulator(ia).row(0);
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) gr[j] += g(i, j);
  });
}

Var gather_rows(Var a, std::span<const std::size_t> index) {
  const Matrix& x = a.value();
  Matrix out(index.size(), x.cols());
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] >= x.rows()) {
      throw std::out_of_range("gather_rows: index " + std::to_string(index[r]) + " >= " +
                              std::to_string(x.rows()));
    }
    std::copy(x.row(index[r]).begin(), x.row(index[r]).end(), out.row(r).begin());
  }
  const std::size_t ia = a.id();
  std::vector<std::size_t> idx(index.begin(), index.end());
  return a.tape().record(std::move(out), {a}, [ia, idx = std::move(idx)](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    Matrix& ga = t.grad_accumulator(ia);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      auto dst = ga.row(idx[r]);
      const auto src = g.row(r);
      for (std::size_t j = 0; j < src.size(); ++j) dst[j] += src[j];
    }
  });
}

Var scale_rows(Var a, Var factors) {
  if (factors.cols() != 1 || factors.rows() != a.rows()) {
    throw ShapeError("scale_rows: rows are " + a.value().shape_string() + " but factors are " +
                     factors.value().shape_string());
  }
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.rows(); ++i) {
    const double f = factors.value()(i, 0);
    for (double& v : out.row(i)) v *= f;
  }
  const std::size_t ia = a.id(), ifac = factors.id();
  return a.tape().record(std::move(out), {a, factors}, [ia, ifac](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    const Matrix& x = t.value(ia);
    const Matrix& f = t.value(ifac);
    for (std::size_t i = 0; i < g.rows(); ++i) {
      if (t.requires_grad(ia)) {
        auto r = t.grad_accumulator(ia).row(i);
        for (std::size_t j = 0; j < g.cols(); ++j) r[j] += g(i, j) * f(i, 0);
      }
      if (t.requires_grad(ifac)) {
        double dot = 0.0;
        for (std::size_t j = 0; j < g.cols(); ++j) dot += g(i, j) * x(i, j);
        t.grad_accumulator(ifac)(i, 0) += dot;
      }
    }
  });
}

Var sum(Var a) {
  double total = 0.0;
  for (double v : a.value().values()) total += v;
  Matrix out(1, 1, total);
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia](Tape& t, std::size_t self) {
    const double g = t.grad(self)(0, 0);
    for (double& v : t.grad_accumulator(ia).values()) v += g;
  });
}

Var max_pool_neighbors(Var h, std::span<const std::size_t> neighbors, std::size_t k) {
  const Matrix& x = h.value();
  const std::size_t n = x.rows(), c = x.cols();
  if (k == 0 || neighbors.size() != n * k) {
    throw ShapeError("max_pool_neighbors: neighbour table has " + std::to_string(neighbors.size()) +
                     " entries, expected " + std::to_string(n) + "x" + std::to_string(k));
  }
  Matrix out(n, c);
  auto winner = std::make_shared<std::vector<std::size_t>>(n * c);
  const auto rows = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static) if (n * k * c >= (1u << 15))
  for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const std::size_t* nb = neighbors.data() + i * k;
    auto o = out.row(i);
    std::size_t* w = winner->data() + i * c;
    const auto first = x.row(nb[0]);
    for (std::size_t j = 0; j < c; ++j) {
      o[j] = first[j];
      w[j] = nb[0];
    }
    for (std::size_t r = 1; r < k; ++r) {
      const auto src = x.row(nb[r]);
      for (std::size_t j = 0; j < c; ++j) {
        if (src[j] > o[j]) {
          o[j] = src[j];
          w[j] = nb[r];
        }
      }
    }
  }
  const std::size_t ih = h.id();
  return h.tape().record(std::move(out), {h}, [ih, winner, c](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    Matrix& gh = t.grad_accumulator(ih);
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < c; ++j) gh((*winner)[i * c + j], j) += g(i, j);
  });
}

Var weighted_cross_entropy(Var logits, std::span<const int> labels,
                           std::span<const double> class_weights) {
  const Matrix& z = logits.value();
  const std::size_t n = z.rows(), c = z.cols();
  if (labels.size() != n) {
    throw ShapeError("weighted_cross_entropy: logits are " + z.shape_string() + " but there are " +
                     std::to_string(labels.size()) + " labels");
  }
  if (class_weights.size() != c) {
    throw ShapeError("weighted_cross_entropy: logits are " + z.shape_string() + " but there are " +
                     std::to_string(class_weights.size()) + " class weights");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c) {
      throw std::invalid_argument("weighted_cross_entropy: label " + std::to_string(labels[i]) +
                                  " at row " + std::to_string(i) + " outside [0, " +
                                  std::to_string(c) + ")");
    }
  }
  Matrix probs = kernels::softmax_rows(z);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto y = static_cast<std::size_t>(labels[i]);
    // log-sum-exp form keeps saturated rows finite
    double peak = z(i, 0);
    for (std::size_t j = 1; j < c; ++j) peak = std::max(peak, z(i, j));
    double acc = 0.0;
    for (std::size_t j = 0; j < c; ++j) acc += std::exp(z(i, j) - peak);
    total += class_weights[y] * (peak + std::log(acc) - z(i, y));
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<int> lab(labels.begin(), labels.end());
  std::vector<double> w(class_weights.begin(), class_weights.end());
  const std::size_t iz = logits.id();
  return logits.tape().record(
      Matrix(1, 1, total * inv_n), {logits},
      [iz, inv_n, probs = std::move(probs), lab = std::move(lab), w = std::move(w)](Tape& t,
                                                                                    std::size_t self) {
        const double g = t.grad(self)(0, 0);
        Matrix& gz = t.grad_accumulator(iz);
        for (std::size_t i = 0; i < probs.rows(); ++i) {
          const auto y = static_cast<std::size_t>(lab[i]);
          const double s = g * w[y] * inv_n;
          for (std::size_t j = 0; j < probs.cols(); ++j) {
            gz(i, j) += s * (probs(i, j) - (j == y ? 1.0 : 0.0));
          }
        }
      });
}

}  // namespace lst::ad
