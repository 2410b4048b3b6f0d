#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "dpq/matrix.hpp"
#include "dpq/rng.hpp"

namespace dpq::test {

inline Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (double& v : m.values()) v = scale * rng.normal();
  return m;
}

inline Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  return random_matrix(rows, cols, rng, scale);
}

// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("dpq_" + tag + "_" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

// Random point of {sum v = 1, 0 <= v_i <= cap}, built without the projection
// under test: a Dirichlet draw, pulled toward the uniform point just far
// enough to respect the cap, or (every fourth draw) a mixture of box vertices.
inline std::vector<double> random_capped_simplex_point(std::size_t m, double cap, Rng& rng) {
  std::vector<double> v(m);
  if (rng.below(4) == 0) {
    // Vertex: floor(1/cap) coordinates at cap, one at the remainder.
    std::fill(v.begin(), v.end(), 0.0);
    const std::size_t draws = 1 + rng.below(3);
    for (std::size_t t = 0; t < draws; ++t) {
      auto order = permutation(m, rng);
      double left = 1.0;
      std::vector<double> vert(m, 0.0);
      for (std::size_t k = 0; k < m && left > 0.0; ++k) {
        vert[order[k]] = std::min(cap, left);
        left -= vert[order[k]];
      }
      for (std::size_t i = 0; i < m; ++i) v[i] += vert[i] / static_cast<double>(draws);
    }
    return v;
  }
  double s = 0.0;
  for (double& x : v) {
    x = -std::log(1.0 - rng.uniform()) * (rng.below(2) ? 1.0 : 0.05);
    s += x;
  }
  for (double& x : v) x /= s;
  const double top = *std::max_element(v.begin(), v.end());
  const double u = 1.0 / static_cast<double>(m);
  if (top > cap) {
    const double t = (top - cap) / (top - u);
    for (double& x : v) x = (1.0 - t) * x + t * u;
  }
  return v;
}

// Symmetric eigenvalues by cyclic Jacobi rotations.
inline std::vector<double> symmetric_eigenvalues(Matrix a) {
  const std::size_t n = a.rows();
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off < 1e-22) break;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(a(p, q)) < 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
  }
  std::vector<double> ev(n);
  for (std::size_t i = 0; i < n; ++i) ev[i] = a(i, i);
  return ev;
}

}  // namespace dpq::test
