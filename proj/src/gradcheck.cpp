#include "lst/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace lst::gradcheck {

Matrix numeric_gradient(const std::function<double()>& loss, Matrix& x, double step) {
  Matrix g(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x.data()[i];
    x.data()[i] = saved + step;
    const double up = loss();
    x.data()[i] = saved - step;
    const double down = loss();
    x.data()[i] = saved;
    g.data()[i] = (up - down) / (2.0 * step);
  }
  return g;
}

double relative_error(const Matrix& analytic, const Matrix& numeric) {
  require_same_shape(analytic, "analytic gradient", numeric, "numeric gradient");
  double diff = 0.0, scale = kScaleFloor;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff = std::max(diff, std::abs(analytic.data()[i] - numeric.data()[i]));
    scale = std::max({scale, std::abs(analytic.data()[i]), std::abs(numeric.data()[i])});
  }
  return diff / scale;
}

}  // namespace lst::gradcheck
