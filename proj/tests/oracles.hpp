#pragma once

// Slow reference computations written independently of the library kernels.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <tuple>
#include <utility>
#include <vector>

#include "lst/geometry.hpp"
#include "lst/layers.hpp"
#include "lst/matrix.hpp"
#include "lst/metrics.hpp"

namespace oracle {

using lst::Matrix;

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  return c;
}

inline Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

inline Matrix add(const Matrix& a, const Matrix& b) {
  Matrix c = a;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) c(i, j) += b(i, j);
  return c;
}

inline Matrix scale(const Matrix& a, double s) {
  Matrix c = a;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) c(i, j) *= s;
  return c;
}

/// exp / normalise without the max shift.
inline Matrix softmax_rows(const Matrix& a) {
  Matrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double z = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) z += std::exp(a(i, j));
    for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) = std::exp(a(i, j)) / z;
  }
  return out;
}

inline Matrix softmax_cols(const Matrix& a) { return transpose(softmax_rows(transpose(a))); }

inline Matrix linear(const Matrix& x, const lst::Linear& l) {
  Matrix y = matmul(x, l.weight);
  for (std::size_t i = 0; i < y.rows(); ++i)
    for (std::size_t j = 0; j < y.cols(); ++j) y(i, j) += l.bias(0, j);
  return y;
}

inline Matrix mlp(const Matrix& x, const lst::Mlp& m) {
  Matrix h = linear(x, m.hidden);
  for (std::size_t i = 0; i < h.rows(); ++i)
    for (std::size_t j = 0; j < h.cols(); ++j)
      if (h(i, j) < 0.0) h(i, j) *= lst::kMlpLeak;
  return linear(h, m.out);
}

/// Column-wise argmax, ties to the first row.
inline std::vector<std::size_t> column_argmax(const Matrix& scores) {
  std::vector<std::size_t> out(scores.cols(), 0);
  for (std::size_t j = 0; j < scores.cols(); ++j)
    for (std::size_t i = 1; i < scores.rows(); ++i)
      if (scores(i, j) > scores(out[j], j)) out[j] = i;
  return out;
}

/// Explicit group-by-owner mean; empty groups copy the fallback row.
inline Matrix group_mean(const std::vector<std::size_t>& owner, const Matrix& value, const Matrix& fallback) {
  Matrix out = fallback;
  for (std::size_t s = 0; s < fallback.rows(); ++s) {
    std::vector<std::size_t> members;
    for (std::size_t n = 0; n < owner.size(); ++n)
      if (owner[n] == s) members.push_back(n);
    if (members.empty()) continue;
    for (std::size_t d = 0; d < value.cols(); ++d) {
      double sum = 0.0;
      for (std::size_t n : members) sum += value(n, d);
      out(s, d) = sum / static_cast<double>(members.size());
    }
  }
  return out;
}

/// Weighted mean of V rows by CAM rows; zero-mass rows copy the fallback.
inline Matrix weighted_mean(const Matrix& cam, const Matrix& value, const Matrix& fallback) {
  Matrix out = fallback;
  for (std::size_t s = 0; s < cam.rows(); ++s) {
    double mass = 0.0;
    for (std::size_t n = 0; n < cam.cols(); ++n) mass += cam(s, n);
    if (mass <= 0.0) continue;
    for (std::size_t d = 0; d < value.cols(); ++d) {
      double sum = 0.0;
      for (std::size_t n = 0; n < cam.cols(); ++n) sum += cam(s, n) * value(n, d);
      out(s, d) = sum / mass;
    }
  }
  return out;
}

inline Matrix dfe(const Matrix& s, const Matrix& wq, const Matrix& wk, const Matrix& wv) {
  const Matrix q = matmul(s, wq), k = matmul(s, wk), v = matmul(s, wv);
  const Matrix att = softmax_rows(scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(s.cols()))));
  return add(s, matmul(att, v));
}

inline Matrix glocal(const Matrix& enhanced, const lst::Mlp& local, const lst::Mlp& global) {
  const Matrix l = mlp(enhanced, local);
  const Matrix g = mlp(enhanced, global);
  Matrix out(enhanced.rows(), l.cols() + g.cols());
  for (std::size_t j = 0; j < g.cols(); ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < g.rows(); ++i) mean += g(i, j);
    mean /= static_cast<double>(g.rows());
    for (std::size_t i = 0; i < out.rows(); ++i) out(i, l.cols() + j) = mean;
  }
  for (std::size_t i = 0; i < l.rows(); ++i)
    for (std::size_t j = 0; j < l.cols(); ++j) out(i, j) = l(i, j);
  return out;
}

/// Mean over rows of -w_y log softmax(logits)_y.
inline double weighted_ce(const Matrix& logits, const std::vector<int>& labels, const std::vector<double>& weights) {
  double total = 0.0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    double z = 0.0;
    for (std::size_t c = 0; c < logits.cols(); ++c) z += std::exp(logits(i, c));
    const auto y = static_cast<std::size_t>(labels[i]);
    total += -weights[y] * (logits(i, y) - std::log(z));
  }
  return total / static_cast<double>(logits.rows());
}

/// Indices of the k points nearest `seed`, by full sort on (distance, index).
inline std::vector<std::size_t> nearest(const std::vector<lst::Vec3>& pts, const lst::Vec3& seed, std::size_t k) {
  std::vector<std::pair<double, std::size_t>> d;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    double s = 0.0;
    for (int a = 0; a < 3; ++a) s += (pts[i][a] - seed[a]) * (pts[i][a] - seed[a]);
    d.emplace_back(s, i);
  }
  std::sort(d.begin(), d.end());
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < std::min(k, d.size()); ++i) out.push_back(d[i].second);
  return out;
}

inline std::size_t occupied_cells(const std::vector<lst::Vec3>& pts, double cell) {
  std::set<std::tuple<long, long, long>> cells;
  for (const auto& p : pts) {
    cells.emplace(static_cast<long>(std::floor(p[0] / cell)), static_cast<long>(std::floor(p[1] / cell)),
                  static_cast<long>(std::floor(p[2] / cell)));
  }
  return cells.size();
}

struct Definitional {
  double oa = 0.0, miou = 0.0, avg_f1 = 0.0;
  std::vector<double> precision, recall, f1, iou;
};

/// Per-definition metrics; 0/0 := 0; means over classes seen as prediction or truth.
inline Definitional metrics(const lst::metrics::ConfusionMatrix& cm) {
  const std::size_t c = cm.classes();
  Definitional d;
  double total = 0.0, trace = 0.0;
  for (std::size_t p = 0; p < c; ++p)
    for (std::size_t t = 0; t < c; ++t) {
      total += static_cast<double>(cm.at(p, t));
      if (p == t) trace += static_cast<double>(cm.at(p, t));
    }
  d.oa = trace / total;
  std::size_t present = 0;
  for (std::size_t k = 0; k < c; ++k) {
    double row = 0.0, col = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      row += static_cast<double>(cm.at(k, j));
      col += static_cast<double>(cm.at(j, k));
    }
    const double tp = static_cast<double>(cm.at(k, k));
    const double p = row > 0 ? tp / row : 0.0;
    const double r = col > 0 ? tp / col : 0.0;
    const double f = (p + r) > 0 ? 2 * p * r / (p + r) : 0.0;
    const double u = (row + col - tp) > 0 ? tp / (row + col - tp) : 0.0;
    d.precision.push_back(p);
    d.recall.push_back(r);
    d.f1.push_back(f);
    d.iou.push_back(u);
    if (row + col > 0) {
      ++present;
      d.miou += u;
      d.avg_f1 += f;
    }
  }
  d.miou /= static_cast<double>(present);
  d.avg_f1 /= static_cast<double>(present);
  return d;
}

/// Central differences of `loss` over every entry of `x`.
inline Matrix central_difference(const std::function<double()>& loss, Matrix& x, double step = 1e-5) {
  Matrix g(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) {
      const double saved = x(i, j);
      x(i, j) = saved + step;
      const double up = loss();
      x(i, j) = saved - step;
      const double down = loss();
      x(i, j) = saved;
      g(i, j) = (up - down) / (2 * step);
    }
  return g;
}

inline double relative_error(const Matrix& a, const Matrix& b, double floor = 1e-6) {
  double diff = 0.0, scale = floor;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) {
      diff = std::max(diff, std::abs(a(i, j) - b(i, j)));
      scale = std::max({scale, std::abs(a(i, j)), std::abs(b(i, j))});
    }
  return diff / scale;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) d = std::max(d, std::abs(a(i, j) - b(i, j)));
  return d;
}

}  // namespace oracle
