#include "dpq/map_compress.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dpq/codebook.hpp"
#include "dpq/error.hpp"
#include "dpq/parallel.hpp"
#include "dpq/simd.hpp"

namespace dpq {
namespace {

constexpr double kFeasibilityTol = 1e-12;

std::size_t selection_limit(double alpha, std::size_t m) {
  // ceil(alpha * m), forgiving float noise such as 0.1 * 30 = 3.0000000000000004
  const double raw = alpha * static_cast<double>(m);
  return std::min(m, static_cast<std::size_t>(std::ceil(raw - 1e-9)));
}

std::vector<double> kernel_times(const Matrix& k, std::span<const double> v) {
  std::vector<double> out(k.rows());
  for (std::size_t i = 0; i < k.rows(); ++i) out[i] = simd::dot(k.row(i).data(), v.data(), v.size());
  return out;
}

double squared_step(std::span<const double> a, std::span<const double> b) {
  return simd::squared_l2(a.data(), b.data(), a.size());
}

}  // namespace

KernelKind parse_kernel_kind(const std::string& name) {
  if (name == "rbf") return KernelKind::Rbf;
  if (name == "distance") return KernelKind::Distance;
  fail(ErrorKind::Config, "unknown kernel kind '" + name + "'");
}

Matrix build_kernel(const ScenePointSet& scene, double sigma, KernelKind kind) {
  if (kind == KernelKind::Rbf && !(sigma > 0.0)) fail(ErrorKind::Config, "build_kernel: sigma must be > 0");
  const std::size_t m = scene.size();
  Matrix k(m, m);
  const double inv = 1.0 / (2.0 * sigma * sigma);
  parallel_for(m, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        const double sq = simd::squared_l2(scene.positions.row(i).data(), scene.positions.row(j).data(), 3);
        k(i, j) = kind == KernelKind::Rbf ? std::exp(-sq * inv) : std::sqrt(sq);
      }
    }
  });
  return k;
}

double median_pairwise_distance(const Matrix& positions, std::size_t max_points) {
  const std::size_t m = positions.rows();
  if (m < 2) return 1.0;
  const std::size_t take = std::min(m, std::max<std::size_t>(max_points, 2));
  std::vector<std::size_t> rows(take);
  for (std::size_t i = 0; i < take; ++i) rows[i] = i * m / take;
  std::vector<double> d;
  d.reserve(take * (take - 1) / 2);
  for (std::size_t i = 0; i < take; ++i)
    for (std::size_t j = i + 1; j < take; ++j) d.push_back(l2_distance(positions.row(rows[i]), positions.row(rows[j])));
  const auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  return *mid > 0.0 ? *mid : 1.0;
}

std::vector<double> normalize_distinctiveness(std::span<const double> d) {
  std::vector<double> out(d.begin(), d.end());
  if (out.empty()) return out;
  const double mu = std::accumulate(out.begin(), out.end(), 0.0) / static_cast<double>(out.size());
  double span = 0.0;
  for (double& v : out) {
    v -= mu;
    span = std::max(span, std::abs(v));
  }
  for (double& v : out) v = span > 0.0 ? v / span : 0.0;
  return out;
}

void CompressionProblem::validate() const {
  const std::size_t m = size();
  if (m == 0) fail(ErrorKind::Input, "compression problem has no points");
  if (kernel.rows() != m || kernel.cols() != m) fail(ErrorKind::Dimension, "kernel must be m x m");
  if (!(alpha > 0.0 && alpha <= 1.0)) fail(ErrorKind::Config, "alpha must lie in (0, 1]");
  if (!(tau_qp >= 0.0)) fail(ErrorKind::Config, "tau_qp must be >= 0");
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i + 1; j < m; ++j)
      if (std::abs(kernel(i, j) - kernel(j, i)) > 1e-9) fail(ErrorKind::Input, "kernel is not symmetric");
}

double CompressionProblem::objective(std::span<const double> v) const {
  const auto kv = kernel_times(kernel, v);
  return simd::dot(v.data(), kv.data(), v.size()) - tau_qp * simd::dot(distinct.data(), v.data(), v.size());
}

std::vector<double> project_capped_simplex(std::span<const double> x, double cap) {
  const std::size_t m = x.size();
  if (m == 0) fail(ErrorKind::Input, "project_capped_simplex: empty vector");
  if (!(cap * static_cast<double>(m) >= 1.0 - kFeasibilityTol))
    fail(ErrorKind::Infeasible, "project_capped_simplex: cap * m < 1");

  // sum_i clip(x_i - lambda, 0, cap) is non-increasing in lambda.
  const auto mass = [&](double lambda) {
    double s = 0.0;
    for (double xi : x) s += std::clamp(xi - lambda, 0.0, cap);
    return s;
  };
  double lo = *std::min_element(x.begin(), x.end()) - cap;  // every entry at cap
  double hi = *std::max_element(x.begin(), x.end());        // every entry at 0
  for (int it = 0; it < 200 && hi - lo > 0.0; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (mass(mid) > 1.0 ? lo : hi) = mid;
  }
  double lambda = 0.5 * (lo + hi);

  // Solve exactly for lambda on the free set the bisection settled on.
  std::size_t n_free = 0, n_cap = 0;
  double free_sum = 0.0;
  for (double xi : x) {
    const double t = xi - lambda;
    if (t >= cap) ++n_cap;
    else if (t > 0.0) {
      ++n_free;
      free_sum += xi;
    }
  }
  if (n_free > 0) {
    const double exact = (free_sum - (1.0 - static_cast<double>(n_cap) * cap)) / static_cast<double>(n_free);
    bool consistent = true;
    for (double xi : x) {
      const double t_old = xi - lambda;
      const double t_new = xi - exact;
      const bool was_free = t_old > 0.0 && t_old < cap;
      if (was_free != (t_new > 0.0 && t_new < cap)) consistent = false;
    }
    if (consistent) lambda = exact;
  }

  std::vector<double> v(m);
  for (std::size_t i = 0; i < m; ++i) v[i] = std::clamp(x[i] - lambda, 0.0, cap);
  return v;
}

QpSolution solve_map_qp(const CompressionProblem& problem, const QpOptions& opts) {
  problem.validate();
  const std::size_t m = problem.size();
  const double cap = problem.cap();
  if (!(cap * static_cast<double>(m) >= 1.0 - kFeasibilityTol)) fail(ErrorKind::Infeasible, "solve_map_qp: cap * m < 1");

  double step0 = opts.step;
  if (!(step0 > 0.0)) {
    // 2 * ||K||_inf bounds the gradient's Lipschitz constant.
    double row_max = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      double s = 0.0;
      for (double k : problem.kernel.row(i)) s += std::abs(k);
      row_max = std::max(row_max, s);
    }
    step0 = row_max > 0.0 ? 1.0 / (2.0 * row_max) : 1.0;
  }

  QpSolution sol;
  std::vector<double> v(m, 1.0 / static_cast<double>(m));
  double f = problem.objective(v);
  if (!std::isfinite(f)) fail(ErrorKind::Numeric, "solve_map_qp: non-finite objective");
  sol.history.push_back(f);

  double step = step0;
  std::vector<double> trial(m);
  for (std::size_t it = 0; it < opts.iters; ++it) {
    auto grad = kernel_times(problem.kernel, v);
    for (std::size_t i = 0; i < m; ++i) grad[i] = 2.0 * grad[i] - problem.tau_qp * problem.distinct[i];

    bool accepted = false;
    double f_new = f;
    for (int bt = 0; bt < 60; ++bt) {
      for (std::size_t i = 0; i < m; ++i) trial[i] = v[i] - step * grad[i];
      trial = project_capped_simplex(trial, cap);
      f_new = problem.objective(trial);
      if (!std::isfinite(f_new)) fail(ErrorKind::Numeric, "solve_map_qp: non-finite objective");
      // Sufficient decrease for projected gradient.
      if (f_new <= f - squared_step(trial, v) / (2.0 * step) + 1e-15 * std::abs(f)) {
        accepted = f_new <= f;
        break;
      }
      step *= 0.5;
    }
    sol.iterations = it + 1;
    if (!accepted) break;
    const double moved = squared_step(trial, v);
    v.swap(trial);
    f = f_new;
    sol.history.push_back(f);
    if (moved < 1e-30) break;
    step = std::min(step * 2.0, step0 * 1024.0);
  }
  sol.v = std::move(v);
  sol.objective = f;
  return sol;
}

std::vector<std::size_t> select_points(std::span<const double> v, double alpha,
                                       std::span<const double> distinctiveness) {
  const std::size_t m = v.size();
  if (m == 0) return {};
  if (!(alpha > 0.0 && alpha <= 1.0)) fail(ErrorKind::Config, "select_points: alpha must lie in (0, 1]");
  if (distinctiveness.size() != m) fail(ErrorKind::Dimension, "select_points: distinctiveness length");
  const double cap = 1.0 / (alpha * static_cast<double>(m));
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < m; ++i)
    if (v[i] > 1e-6 * cap) idx.push_back(i);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (v[a] != v[b]) return v[a] > v[b];
    if (distinctiveness[a] != distinctiveness[b]) return distinctiveness[a] > distinctiveness[b];
    return a < b;
  });
  idx.resize(std::min(idx.size(), selection_limit(alpha, m)));
  return idx;
}

CompressionPlan plan_budget(double budget_bytes, std::uint64_t n, std::size_t M, std::size_t K, double overhead_bytes) {
  if (n == 0 || M == 0) fail(ErrorKind::Config, "plan_budget: N and M must be >= 1");
  if (!(overhead_bytes >= 0.0)) fail(ErrorKind::Config, "plan_budget: overhead must be >= 0");
  if (!(budget_bytes > overhead_bytes))
    fail(ErrorKind::Infeasible, "plan_budget: overhead consumes the whole budget");
  CompressionPlan p;
  p.budget_bytes = budget_bytes;
  p.overhead_bytes = overhead_bytes;
  p.M = M;
  p.K = K;
  p.descriptor_count = n;
  p.code_budget_bytes = budget_bytes - overhead_bytes;
  p.full_code_bytes = static_cast<double>(n) * static_cast<double>(code_bits(M, K)) / 8.0;
  p.alpha = p.full_code_bytes > 0.0 ? std::min(1.0, p.code_budget_bytes / p.full_code_bytes) : 1.0;
  p.selected_count = selection_limit(p.alpha, n);
  return p;
}

MapCompressionResult compress_map(const ScenePointSet& scene, const MapCompressionOptions& opts) {
  scene.validate();
  const std::size_t m = scene.size();
  std::vector<std::size_t> keep(std::min(m, std::max<std::size_t>(opts.max_points, 1)));
  for (std::size_t i = 0; i < keep.size(); ++i) keep[i] = i * m / keep.size();

  ScenePointSet sub;
  sub.positions = gather_rows(scene.positions, keep);
  sub.total_images = scene.total_images;
  for (auto i : keep) sub.distinctiveness.push_back(scene.distinctiveness[i]);

  MapCompressionResult res;
  res.points_considered = keep.size();
  res.sigma = opts.sigma > 0.0 ? opts.sigma : median_pairwise_distance(sub.positions);

  CompressionProblem problem;
  problem.kernel = build_kernel(sub, res.sigma, opts.kernel);
  problem.distinct = normalize_distinctiveness(sub.distinctiveness);
  problem.tau_qp = opts.tau_qp;
  problem.alpha = opts.alpha;
  res.solution = solve_map_qp(problem, opts.qp);

  for (auto i : select_points(res.solution.v, opts.alpha, sub.distinctiveness)) res.selected.push_back(keep[i]);
  return res;
}

}  // namespace dpq
