#include "dpq/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "dpq/error.hpp"

namespace dpq {

Matrix numeric_gradient(const std::function<double(const Matrix&)>& f, const Matrix& x, double h) {
  if (!(h > 0.0)) fail(ErrorKind::Config, "finite differences need h > 0");
  Matrix grad(x.rows(), x.cols());
  Matrix probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe.data()[i];
    probe.data()[i] = orig + h;
    const double up = f(probe);
    probe.data()[i] = orig - h;
    const double down = f(probe);
    probe.data()[i] = orig;
    grad.data()[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

double finite_diff_check(const std::function<double(const Matrix&)>& f, const Matrix& x,
                         const Matrix& analytic, double h, double abs_floor) {
  if (!x.same_shape(analytic)) fail(ErrorKind::Dimension, "gradient shape differs from input");
  const Matrix numeric = numeric_gradient(f, x, h);
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double a = analytic.data()[i];
    const double n = numeric.data()[i];
    const double diff = std::abs(a - n);
    if (!std::isfinite(diff)) return std::numeric_limits<double>::infinity();
    if (diff <= abs_floor) continue;
    worst = std::max(worst, diff / std::max(std::abs(n), abs_floor));
  }
  return worst;
}

}  // namespace dpq
