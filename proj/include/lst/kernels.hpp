#pragma once

// Dense kernels behind every model operation. Each kernel has a serial reference
// in `kernels::serial` and an OpenMP-parallel version in `kernels`. Both split
// work by output row and run the same per-row loop, so results are bit-identical
// regardless of thread count.

#include <cstddef>
#include <span>
#include <vector>

#include "lst/matrix.hpp"

namespace lst::kernels {

namespace serial {

Matrix matmul(const Matrix& a, const Matrix& b);     // a * b
Matrix matmul_nt(const Matrix& a, const Matrix& b);  // a * b^T
Matrix matmul_tn(const Matrix& a, const Matrix& b);  // a^T * b
Matrix transpose(const Matrix& a);
Matrix softmax_rows(const Matrix& a);
Matrix softmax_cols(const Matrix& a);
std::vector<std::size_t> knn(std::span<const Vec3> points, std::size_t k);

}  // namespace serial

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix matmul_nt(const Matrix& a, const Matrix& b);
Matrix matmul_tn(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
Matrix softmax_rows(const Matrix& a);
Matrix softmax_cols(const Matrix& a);

/// k nearest neighbours of every point within the same set (the point itself
/// included), by Euclidean distance with ties broken by smaller index.
/// Returns a flat row-major N x k index table.
std::vector<std::size_t> knn(std::span<const Vec3> points, std::size_t k);

/// Number of OpenMP threads the parallel kernels will use.
int thread_count();

}  // namespace lst::kernels
