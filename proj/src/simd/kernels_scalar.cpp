#include "dpq/simd.hpp"

namespace dpq::simd {
namespace {

double squared_l2_scalar(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void squared_l2_rows_scalar(const double* query, const double* rows, std::size_t count,
                            std::size_t n, double* out) {
  for (std::size_t r = 0; r < count; ++r) out[r] = squared_l2_scalar(query, rows + r * n, n);
}

}  // namespace

const KernelTable& scalar_kernels() noexcept {
  static const KernelTable table{squared_l2_scalar, dot_scalar, axpy_scalar,
                                 squared_l2_rows_scalar};
  return table;
}

}  // namespace dpq::simd
