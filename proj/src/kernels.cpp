#include "lst/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include <omp.h>

namespace lst::kernels {
namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelWork = 1 << 15;

void check_inner(const Matrix& a, std::size_t a_inner, const Matrix& b, std::size_t b_inner,
                 const char* op) {
  if (a_inner != b_inner) {
    throw ShapeError(std::string(op) + ": lhs is " + a.shape_string() + " but rhs is " +
                     b.shape_string());
  }
}

// c_row = a_row * b, accumulated over the shared dimension in index order.
inline void gemm_row(const double* a_row, const Matrix& b, double* c_row) {
  const std::size_t inner = b.rows();
  const std::size_t n = b.cols();
  std::fill(c_row, c_row + n, 0.0);
  for (std::size_t k = 0; k < inner; ++k) {
    const double s = a_row[k];
    if (s == 0.0) continue;
    const double* b_row = b.data() + k * n;
    for (std::size_t j = 0; j < n; ++j) c_row[j] += s * b_row[j];
  }
}

inline void softmax_span(double* x, std::size_t n, std::size_t stride) {
  double peak = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) peak = std::max(peak, x[i * stride]);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    x[i * stride] = std::exp(x[i * stride] - peak);
    total += x[i * stride];
  }
  for (std::size_t i = 0; i < n; ++i) x[i * stride] /= total;
}

void knn_row(std::span<const Vec3> points, std::size_t i, std::size_t k,
             std::vector<std::pair<double, std::size_t>>& scratch, std::size_t* out) {
  const Vec3& p = points[i];
  scratch.resize(points.size());
  for (std::size_t j = 0; j < points.size(); ++j) {
    const double dx = points[j][0] - p[0];
    const double dy = points[j][1] - p[1];
    const double dz = points[j][2] - p[2];
    scratch[j] = {dx * dx + dy * dy + dz * dz, j};
  }
  std::partial_sort(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(k),
                    scratch.end());
  for (std::size_t r = 0; r < k; ++r) out[r] = scratch[r].second;
}

void check_knn(std::span<const Vec3> points, std::size_t k) {
  if (k == 0 || k > points.size()) {
    throw std::invalid_argument("knn: k=" + std::to_string(k) + " must be in [1, " +
                                std::to_string(points.size()) + "]");
  }
}

}  // namespace

namespace serial {

Matrix matmul(const Matrix& a, const Matrix& b) {
  check_inner(a, a.cols(), b, b.rows(), "matmul");
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) gemm_row(a.row(i).data(), b, c.row(i).data());
  return c;
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  check_inner(a, a.cols(), b, b.cols(), "matmul_nt");
  return matmul(a, transpose(b));
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  check_inner(a, a.rows(), b, b.rows(), "matmul_tn");
  return matmul(transpose(a), b);
}

Matrix softmax_rows(const Matrix& a) {
  Matrix out = a;
  for (std::size_t i = 0; i < out.rows(); ++i) softmax_span(out.row(i).data(), out.cols(), 1);
  return out;
}

Matrix softmax_cols(const Matrix& a) {
  Matrix out = a;
  for (std::size_t j = 0; j < out.cols(); ++j) softmax_span(out.data() + j, out.rows(), out.cols());
  return out;
}

std::vector<std::size_t> knn(std::span<const Vec3> points, std::size_t k) {
  check_knn(points, k);
  std::vector<std::size_t> out(points.size() * k);
  std::vector<std::pair<double, std::size_t>> scratch;
  for (std::size_t i = 0; i < points.size(); ++i) knn_row(points, i, k, scratch, out.data() + i * k);
  return out;
}

}  // namespace serial

Matrix matmul(const Matrix& a, const Matrix& b) {
  check_inner(a, a.cols(), b, b.rows(), "matmul");
  Matrix c(a.rows(), b.cols());
  const auto rows = static_cast<std::ptrdiff_t>(a.rows());
  const bool big = a.rows() * a.cols() * b.cols() >= kParallelWork;
#pragma omp parallel for schedule(static) if (big)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    gemm_row(a.row(static_cast<std::size_t>(i)).data(), b, c.row(static_cast<std::size_t>(i)).data());
  }
  return c;
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  const auto cols = static_cast<std::ptrdiff_t>(a.cols());
#pragma omp parallel for schedule(static) if (a.size() >= kParallelWork)
  for (std::ptrdiff_t j = 0; j < cols; ++j) {
    const auto jj = static_cast<std::size_t>(j);
    for (std::size_t i = 0; i < a.rows(); ++i) t(jj, i) = a(i, jj);
  }
  return t;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  check_inner(a, a.cols(), b, b.cols(), "matmul_nt");
  return matmul(a, transpose(b));
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  check_inner(a, a.rows(), b, b.rows(), "matmul_tn");
  return matmul(transpose(a), b);
}

Matrix softmax_rows(const Matrix& a) {
  Matrix out = a;
  const auto rows = static_cast<std::ptrdiff_t>(out.rows());
#pragma omp parallel for schedule(static) if (a.size() >= kParallelWork)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    softmax_span(out.row(static_cast<std::size_t>(i)).data(), out.cols(), 1);
  }
  return out;
}

Matrix softmax_cols(const Matrix& a) {
  Matrix out = a;
  const auto cols = static_cast<std::ptrdiff_t>(out.cols());
#pragma omp parallel for schedule(static) if (a.size() >= kParallelWork)
  for (std::ptrdiff_t j = 0; j < cols; ++j) {
    softmax_span(out.data() + j, out.rows(), out.cols());
  }
  return out;
}

std::vector<std::size_t> knn(std::span<const Vec3> points, std::size_t k) {
  check_knn(points, k);
  std::vector<std::size_t> out(points.size() * k);
  const auto n = static_cast<std::ptrdiff_t>(points.size());
#pragma omp parallel if (points.size() * points.size() >= kParallelWork)
  {
    std::vector<std::pair<double, std::size_t>> scratch;
#pragma omp for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      const auto ii = static_cast<std::size_t>(i);
      knn_row(points, ii, k, scratch, out.data() + ii * k);
    }
  }
  return out;
}

int thread_count() { return omp_get_max_threads(); }

}  // namespace lst::kernels
