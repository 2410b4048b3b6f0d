#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dpq/descriptor_store.hpp"
#include "dpq/matrix.hpp"

namespace dpq {

enum class KernelKind {
  Rbf,       // exp(-||p_i - p_j||^2 / (2 sigma^2)); mass spreads over distant points
  Distance,  // ||p_i - p_j||, kept for comparison
};

KernelKind parse_kernel_kind(const std::string& name);

Matrix build_kernel(const ScenePointSet& scene, double sigma, KernelKind kind = KernelKind::Rbf);

// Median pairwise distance over an evenly strided subsample of at most
// `max_points` points.
double median_pairwise_distance(const Matrix& positions, std::size_t max_points = 1000);

// (d - mean) / max|d - mean|; all zeros when d is constant.
std::vector<double> normalize_distinctiveness(std::span<const double> d);

struct CompressionProblem {
  Matrix kernel;                 // m x m symmetric
  std::vector<double> distinct;  // length m
  double tau_qp = 1.0;
  double alpha = 1.0;

  std::size_t size() const noexcept { return distinct.size(); }
  double cap() const noexcept { return 1.0 / (alpha * static_cast<double>(size())); }
  void validate() const;
  double objective(std::span<const double> v) const;
};

// Euclidean projection onto {sum v = 1, 0 <= v_i <= cap}.
std::vector<double> project_capped_simplex(std::span<const double> x, double cap);

struct QpOptions {
  std::size_t iters = 500;
  // Initial step; 0 picks 1 / (2 * max row-abs-sum of the kernel).
  double step = 0.0;
};

struct QpSolution {
  std::vector<double> v;
  double objective = 0.0;
  std::vector<double> history;  // accepted objectives, non-increasing
  std::size_t iterations = 0;
};

// Projected gradient with backtracking from the uniform start.
QpSolution solve_map_qp(const CompressionProblem& problem, const QpOptions& opts = {});

// Points with v_i > 1e-6 * cap, ordered by v (then distinctiveness, then
// index), truncated to ceil(alpha * m).
std::vector<std::size_t> select_points(std::span<const double> v, double alpha,
                                       std::span<const double> distinctiveness);

struct CompressionPlan {
  double budget_bytes = 0.0;
  double overhead_bytes = 0.0;
  double code_budget_bytes = 0.0;
  double full_code_bytes = 0.0;  // B_M = N * M * log2(K) / 8
  std::size_t M = 0;
  std::size_t K = 0;
  std::uint64_t descriptor_count = 0;
  double alpha = 0.0;
  std::uint64_t selected_count = 0;
};

CompressionPlan plan_budget(double budget_bytes, std::uint64_t n, std::size_t M, std::size_t K,
                            double overhead_bytes = 0.0);

struct MapCompressionOptions {
  double alpha = 0.25;
  double sigma = 0.0;  // 0: median pairwise distance
  double tau_qp = 1.0;
  KernelKind kernel = KernelKind::Rbf;
  QpOptions qp;
  std::size_t max_points = 50000;
};

struct MapCompressionResult {
  std::vector<std::size_t> selected;  // indices into the input scene
  QpSolution solution;
  double sigma = 0.0;
  std::size_t points_considered = 0;
};

// Scene-level driver: strided pre-subsample to max_points, kernel, solve, select.
MapCompressionResult compress_map(const ScenePointSet& scene, const MapCompressionOptions& opts);

}  // namespace dpq
