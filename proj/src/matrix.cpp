#include "dpq/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dpq/error.hpp"
#include "dpq/simd.hpp"

namespace dpq {
namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b)) {
    fail(ErrorKind::Dimension, std::string(op) + ": shape " + std::to_string(a.rows()) + "x" +
                                   std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) +
                                   "x" + std::to_string(b.cols()));
  }
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    fail(ErrorKind::Dimension, "matrix data length " + std::to_string(data_.size()) +
                                   " != " + std::to_string(rows) + "x" + std::to_string(cols));
  }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows)
    : rows_(rows.size()), cols_(rows.size() == 0 ? 0 : rows.begin()->size()) {
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) fail(ErrorKind::Dimension, "ragged matrix literal");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

bool Matrix::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Matrix identity(std::size_t n) {
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i) out(i, i) = 1.0;
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) out(c, r) = a(r, c);
  return out;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    fail(ErrorKind::Dimension, "matmul: " + std::to_string(a.rows()) + "x" +
                                   std::to_string(a.cols()) + " by " + std::to_string(b.rows()) +
                                   "x" + std::to_string(b.cols()));
  }
  Matrix out(a.rows(), b.cols());
  const auto& k = simd::kernels();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* dst = out.row(i).data();
    for (std::size_t p = 0; p < a.cols(); ++p) {
      const double s = a(i, p);
      if (s != 0.0) k.axpy(s, b.row(p).data(), dst, b.cols());
    }
  }
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) fail(ErrorKind::Dimension, "matmul_tn: row counts differ");
  Matrix out(a.cols(), b.cols());
  const auto& k = simd::kernels();
  for (std::size_t p = 0; p < a.rows(); ++p) {
    const double* src = b.row(p).data();
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double s = a(p, i);
      if (s != 0.0) k.axpy(s, src, out.row(i).data(), b.cols());
    }
  }
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) fail(ErrorKind::Dimension, "matmul_nt: column counts differ");
  Matrix out(a.rows(), b.rows());
  const auto& k = simd::kernels();
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j)
      out(i, j) = k.dot(a.row(i).data(), b.row(j).data(), a.cols());
  return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "add");
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += b.data()[i];
  return out;
}

Matrix subtract(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "subtract");
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] -= b.data()[i];
  return out;
}

Matrix scale(const Matrix& a, double s) {
  Matrix out = a;
  for (double& v : out.values()) v *= s;
  return out;
}

double frobenius_norm(const Matrix& a) { return l2_norm(a.values()); }

double max_abs_diff(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

Matrix gather_rows(const Matrix& a, std::span<const std::size_t> rows) {
  Matrix out(rows.size(), a.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= a.rows()) fail(ErrorKind::Dimension, "gather_rows: index out of range");
    std::copy(a.row(rows[i]).begin(), a.row(rows[i]).end(), out.row(i).begin());
  }
  return out;
}

Matrix column_block(const Matrix& a, std::size_t first, std::size_t count) {
  if (first + count > a.cols()) fail(ErrorKind::Dimension, "column_block: out of range");
  Matrix out(a.rows(), count);
  for (std::size_t r = 0; r < a.rows(); ++r)
    std::copy_n(a.row(r).begin() + static_cast<std::ptrdiff_t>(first), count, out.row(r).begin());
  return out;
}

double l2_norm(std::span<const double> v) {
  return std::sqrt(simd::dot(v.data(), v.data(), v.size()));
}

double l2_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) fail(ErrorKind::Dimension, "l2_distance: length mismatch");
  return std::sqrt(simd::squared_l2(a.data(), b.data(), a.size()));
}

}  // namespace dpq
