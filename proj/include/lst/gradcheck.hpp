#pragma once

#include <functional>

#include "lst/matrix.hpp"

namespace lst::gradcheck {

inline constexpr double kDefaultStep = 1e-5;
/// Gradients whose magnitude stays below this are compared absolutely.
inline constexpr double kScaleFloor = 1e-6;

/// Central differences of `loss` with respect to every entry of `x`; `x` is
/// restored before returning.
Matrix numeric_gradient(const std::function<double()>& loss, Matrix& x, double step = kDefaultStep);

/// max|a - n| / max(max|a|, max|n|, kScaleFloor).
double relative_error(const Matrix& analytic, const Matrix& numeric);

}  // namespace lst::gradcheck
