#pragma once

// Runtime-dispatched inner loops. Every kernel has a portable scalar
// reference; wider variants must agree with it (bit-exact for element-wise
// kernels, to rounding for reductions) and are checked against it in tests.

#include <cstddef>
#include <string_view>

namespace dpq::simd {

enum class Level { Scalar, Avx2 };

struct KernelTable {
  double (*squared_l2)(const double* a, const double* b, std::size_t n);
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // out[i] = ||query - rows[i]||^2 for `count` contiguous rows of width n
  void (*squared_l2_rows)(const double* query, const double* rows, std::size_t count,
                          std::size_t n, double* out);
};

const KernelTable& scalar_kernels() noexcept;
// Null when the build has no AVX2 variant or the CPU lacks it.
const KernelTable* avx2_kernels() noexcept;

bool level_supported(Level level) noexcept;
Level best_level() noexcept;

// The level picked at first use: best supported, unless DPQ_SIMD=scalar|avx2
// says otherwise. set_level() overrides it process-wide (tests use this).
Level active_level() noexcept;
void set_level(Level level);
std::string_view level_name(Level level) noexcept;

const KernelTable& kernels() noexcept;

inline double squared_l2(const double* a, const double* b, std::size_t n) {
  return kernels().squared_l2(a, b, n);
}
inline double dot(const double* a, const double* b, std::size_t n) { return kernels().dot(a, b, n); }
inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
  kernels().axpy(alpha, x, y, n);
}
inline void squared_l2_rows(const double* query, const double* rows, std::size_t count,
                            std::size_t n, double* out) {
  kernels().squared_l2_rows(query, rows, count, n, out);
}

}  // namespace dpq::simd
