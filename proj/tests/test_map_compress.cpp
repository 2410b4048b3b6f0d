#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dpq/codebook.hpp"
#include "dpq/error.hpp"
#include "dpq/map_compress.hpp"
#include "helpers.hpp"

using namespace dpq;
using dpq::test::random_capped_simplex_point;
using dpq::test::symmetric_eigenvalues;

namespace {

ScenePointSet random_scene(std::size_t m, Rng& rng, double extent = 1.0) {
  ScenePointSet s;
  s.positions = test::random_matrix(m, 3, rng, extent);
  s.total_images = 100;
  for (std::size_t i = 0; i < m; ++i) s.distinctiveness.push_back(static_cast<double>(1 + rng.below(100)) / 100.0);
  return s;
}

CompressionProblem random_problem(std::size_t m, Rng& rng) {
  auto scene = random_scene(m, rng);
  CompressionProblem p;
  p.kernel = build_kernel(scene, median_pairwise_distance(scene.positions), KernelKind::Rbf);
  p.distinct = normalize_distinctiveness(scene.distinctiveness);
  p.tau_qp = rng.uniform(0.0, 2.0);
  // alpha in [1/m, 1] so the cap keeps the set non-empty.
  p.alpha = rng.uniform(1.0 / static_cast<double>(m), 1.0);
  return p;
}

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

}  // namespace

TEST_SUITE("map_compress") {
  TEST_CASE("kernel: unit diagonal, e^-1 at sigma*sqrt(2), symmetric") {
    ScenePointSet s;
    s.positions = Matrix(3, 3);
    s.positions(1, 0) = std::sqrt(2.0);
    s.positions(2, 1) = 3.0;
    s.distinctiveness = {0.1, 0.2, 0.3};
    s.total_images = 10;
    const auto k = build_kernel(s, 1.0);
    for (std::size_t i = 0; i < 3; ++i) CHECK(k(i, i) == 1.0);
    CHECK(k(0, 1) == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
    CHECK(k(0, 2) == doctest::Approx(std::exp(-4.5)).epsilon(1e-15));
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) CHECK(k(i, j) == k(j, i));

    const auto d = build_kernel(s, 1.0, KernelKind::Distance);
    CHECK(d(0, 0) == 0.0);
    CHECK(d(0, 1) == doctest::Approx(std::sqrt(2.0)));
    CHECK(d(1, 2) == doctest::Approx(std::sqrt(2.0 + 9.0)));
    CHECK(parse_kernel_kind("rbf") == KernelKind::Rbf);
    CHECK(parse_kernel_kind("distance") == KernelKind::Distance);
    CHECK_THROWS_AS(parse_kernel_kind("gauss"), Error);
    CHECK_THROWS_AS(build_kernel(s, 0.0), Error);
  }

  TEST_CASE("kernel is positive semidefinite") {
    Rng rng(3);
    for (int t = 0; t < 10; ++t) {
      auto scene = random_scene(20, rng);
      const double sigma = rng.uniform(0.2, 3.0);
      const auto ev = symmetric_eigenvalues(build_kernel(scene, sigma));
      CHECK(*std::min_element(ev.begin(), ev.end()) >= -1e-9);
    }
  }

  TEST_CASE("median pairwise distance matches a sorted oracle") {
    Rng rng(4);
    const auto p = test::random_matrix(15, 3, rng);
    std::vector<double> d;
    for (std::size_t i = 0; i < 15; ++i)
      for (std::size_t j = i + 1; j < 15; ++j) d.push_back(l2_distance(p.row(i), p.row(j)));
    std::sort(d.begin(), d.end());
    CHECK(median_pairwise_distance(p) == doctest::Approx(d[d.size() / 2]).epsilon(1e-15));
    CHECK(median_pairwise_distance(Matrix(1, 3)) == 1.0);
    CHECK(median_pairwise_distance(Matrix(5, 3)) == 1.0);
  }

  TEST_CASE("normalize distinctiveness") {
    const std::vector<double> d{0.1, 0.2, 0.6};
    const auto n = normalize_distinctiveness(d);
    const double mu = 0.3;
    CHECK(n[0] == doctest::Approx((0.1 - mu) / 0.3));
    CHECK(n[2] == doctest::Approx(1.0));
    CHECK(sum(n) == doctest::Approx(0.0).epsilon(1e-12));
    const std::vector<double> c{0.4, 0.4};
    CHECK(normalize_distinctiveness(c) == std::vector<double>{0.0, 0.0});
    CHECK(normalize_distinctiveness(std::vector<double>{}).empty());
  }

  TEST_CASE("projection unit cases") {
    const std::vector<double> x{1.0, 0.0, 0.0};
    const auto v = project_capped_simplex(x, 0.5);
    CHECK(std::abs(v[0] - 0.5) <= 1e-9);
    CHECK(std::abs(v[1] - 0.25) <= 1e-9);
    CHECK(std::abs(v[2] - 0.25) <= 1e-9);

    const std::vector<double> feasible{0.2, 0.3, 0.5};
    const auto f = project_capped_simplex(feasible, 0.6);
    for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(f[i] - feasible[i]) <= 1e-12);

    const std::vector<double> wild{7.0, -3.0, 2.0, 0.5};
    const auto u = project_capped_simplex(wild, 0.25);
    for (double e : u) CHECK(e == doctest::Approx(0.25).epsilon(1e-12));

    CHECK_THROWS_AS(project_capped_simplex(wild, 0.2), Error);
    CHECK_THROWS_AS(project_capped_simplex(std::vector<double>{}, 1.0), Error);
  }

  TEST_CASE("projection: feasible, and no feasible point is closer") {
    Rng rng(5);
    for (int t = 0; t < 40; ++t) {
      const std::size_t m = 2 + rng.below(8);
      const double cap = rng.uniform(1.0 / static_cast<double>(m), 1.0);
      std::vector<double> x(m);
      for (double& e : x) e = 2.0 * rng.normal();
      const auto p = project_capped_simplex(x, cap);
      CHECK(sum(p) == doctest::Approx(1.0).epsilon(1e-12));
      for (double e : p) {
        CHECK(e >= 0.0);
        CHECK(e <= cap + 1e-15);
      }
      double dp = 0.0;
      for (std::size_t i = 0; i < m; ++i) dp += (p[i] - x[i]) * (p[i] - x[i]);
      for (int s = 0; s < 1000; ++s) {
        const auto y = random_capped_simplex_point(m, cap, rng);
        double dy = 0.0;
        for (std::size_t i = 0; i < m; ++i) dy += (y[i] - x[i]) * (y[i] - x[i]);
        REQUIRE(dp <= dy + 1e-12);
      }
    }
  }

  TEST_CASE("random feasible points respect the constraints") {
    Rng rng(6);
    for (int t = 0; t < 200; ++t) {
      const std::size_t m = 2 + rng.below(6);
      const double cap = rng.uniform(1.0 / static_cast<double>(m), 1.0);
      const auto y = random_capped_simplex_point(m, cap, rng);
      CHECK(sum(y) == doctest::Approx(1.0).epsilon(1e-12));
      for (double e : y) {
        CHECK(e >= 0.0);
        CHECK(e <= cap + 1e-12);
      }
    }
  }

  TEST_CASE("alpha = 1 forces the uniform solution") {
    Rng rng(7);
    auto p = random_problem(6, rng);
    p.alpha = 1.0;
    const auto sol = solve_map_qp(p);
    for (double e : sol.v) CHECK(e == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
    const auto sel = select_points(sol.v, 1.0, std::vector<double>(6, 0.5));
    CHECK(sel.size() == 6);
    // Objective equals the hand formula at the uniform point.
    double quad = 0.0, lin = 0.0;
    for (std::size_t i = 0; i < 6; ++i) {
      lin += p.distinct[i] / 6.0;
      for (std::size_t j = 0; j < 6; ++j) quad += p.kernel(i, j) / 36.0;
    }
    CHECK(sol.objective == doctest::Approx(quad - p.tau_qp * lin).epsilon(1e-12));
  }

  TEST_CASE("equidistant points with tau = 0 do no better than uniform") {
    // Regular tetrahedron: every off-diagonal kernel entry is equal.
    ScenePointSet s;
    s.positions = Matrix(4, 3);
    const double pts[4][3] = {{1, 1, 1}, {1, -1, -1}, {-1, 1, -1}, {-1, -1, 1}};
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 3; ++j) s.positions(i, j) = pts[i][j];
    s.distinctiveness = {0.1, 0.9, 0.3, 0.5};
    s.total_images = 10;
    CompressionProblem p;
    p.kernel = build_kernel(s, 1.0);
    p.distinct = normalize_distinctiveness(s.distinctiveness);
    p.tau_qp = 0.0;
    p.alpha = 0.5;
    const auto sol = solve_map_qp(p);
    const std::vector<double> uniform(4, 0.25);
    CHECK(sol.objective <= p.objective(uniform) + 1e-9);
  }

  TEST_CASE("solver history is non-increasing and solution feasible") {
    Rng rng(8);
    for (int t = 0; t < 10; ++t) {
      auto p = random_problem(30, rng);
      const auto sol = solve_map_qp(p);
      for (std::size_t i = 1; i < sol.history.size(); ++i) CHECK(sol.history[i] <= sol.history[i - 1]);
      CHECK(sum(sol.v) == doctest::Approx(1.0).epsilon(1e-9));
      for (double e : sol.v) {
        CHECK(e >= 0.0);
        CHECK(e <= p.cap() + 1e-12);
      }
      CHECK(sol.objective == doctest::Approx(p.objective(sol.v)).epsilon(1e-12));
    }
  }

  TEST_CASE("solver beats random feasible points on small problems") {
    Rng rng(9);
    for (int t = 0; t < 10; ++t) {
      const auto p = random_problem(5, rng);
      const auto sol = solve_map_qp(p);
      double best = 1e300;
      for (int s = 0; s < 20000; ++s) best = std::min(best, p.objective(random_capped_simplex_point(5, p.cap(), rng)));
      CHECK(sol.objective <= best + 1e-6);
    }
  }

  TEST_CASE("problem validation") {
    Rng rng(10);
    auto p = random_problem(4, rng);
    auto bad = p;
    bad.alpha = 0.0;
    CHECK_THROWS_AS(solve_map_qp(bad), Error);
    bad = p;
    bad.alpha = 1.5;
    CHECK_THROWS_AS(solve_map_qp(bad), Error);
    bad = p;
    bad.kernel(0, 1) += 1.0;
    CHECK_THROWS_AS(solve_map_qp(bad), Error);
    bad = p;
    bad.tau_qp = -1.0;
    CHECK_THROWS_AS(solve_map_qp(bad), Error);
    bad = p;
    bad.kernel = Matrix(3, 3);
    CHECK_THROWS_AS(solve_map_qp(bad), Error);
  }

  TEST_CASE("select_points: cap-saturated solutions give exactly ceil(alpha m)") {
    const double alpha = 0.3;
    const std::size_t m = 10;
    const double cap = 1.0 / (alpha * m);
    // Three entries at cap, the remainder split across two small entries.
    std::vector<double> v(m, 0.0);
    v[2] = v[5] = v[7] = cap;
    v[0] = v[9] = (1.0 - 3.0 * cap) / 2.0;
    const std::vector<double> d(m, 0.5);
    const auto sel = select_points(v, alpha, d);
    CHECK(sel.size() == 3);
    CHECK(sel == std::vector<std::size_t>{2, 5, 7});
  }

  TEST_CASE("select_points: size bound and tie-breaks") {
    Rng rng(11);
    for (int t = 0; t < 50; ++t) {
      const std::size_t m = 1 + rng.below(40);
      const double alpha = rng.uniform(1.0 / static_cast<double>(m), 1.0);
      const auto v = random_capped_simplex_point(m, 1.0 / (alpha * m), rng);
      std::vector<double> d(m);
      for (double& e : d) e = rng.uniform();
      const auto sel = select_points(v, alpha, d);
      CHECK(sel.size() <= static_cast<std::size_t>(std::ceil(alpha * m - 1e-9)));
      for (std::size_t i = 1; i < sel.size(); ++i) CHECK(v[sel[i]] <= v[sel[i - 1]]);
    }
    const std::vector<double> v{0.25, 0.25, 0.25, 0.25};
    const std::vector<double> d{0.1, 0.7, 0.7, 0.2};
    CHECK(select_points(v, 0.5, d) == std::vector<std::size_t>{1, 2});
    const std::vector<double> flat(4, 0.5);
    CHECK(select_points(v, 0.5, flat) == std::vector<std::size_t>{0, 1});
    CHECK(select_points(std::vector<double>{1e-12, 1.0}, 1.0, std::vector<double>{0, 0}) ==
          std::vector<std::size_t>{1});
    CHECK_THROWS_AS(select_points(v, 0.0, d), Error);
    CHECK_THROWS_AS(select_points(v, 0.5, std::vector<double>(3, 0.5)), Error);
  }

  TEST_CASE("plan_budget arithmetic") {
    const double mb = 1e6;
    const auto p2 = plan_budget(mb, 1000000, 2, 256);
    const auto p4 = plan_budget(mb, 1000000, 4, 256);
    const auto p32 = plan_budget(mb, 1000000, 32, 256);
    CHECK(p4.full_code_bytes == 4e6);
    CHECK(p2.alpha == 0.5);
    CHECK(p4.alpha == 0.25);
    CHECK(p32.alpha == 0.03125);
    CHECK(p2.alpha == 2.0 * p4.alpha);
    CHECK(p2.alpha == 16.0 * p32.alpha);
    CHECK(p4.selected_count == 250000);
    CHECK(code_bits(4, 256) == 32);
    CHECK(code_bits(32, 256) == 256);

    const auto roomy = plan_budget(4e6, 1000000, 4, 256);
    CHECK(roomy.alpha == 1.0);
    CHECK(roomy.selected_count == 1000000);
    CHECK(plan_budget(1e9, 10, 4, 16).alpha == 1.0);

    const auto with_overhead = plan_budget(1.5e6, 1000000, 4, 256, 0.5e6);
    CHECK(with_overhead.code_budget_bytes == 1e6);
    CHECK(with_overhead.alpha == 0.25);

    CHECK_THROWS_AS(plan_budget(1e6, 1000, 4, 256, 1e6), Error);
    try {
      plan_budget(1e3, 1000, 4, 256, 2e3);
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Infeasible);
    }
    CHECK_THROWS_AS(plan_budget(1e6, 0, 4, 256), Error);
  }

  TEST_CASE("plan_budget: selected codes fit the budget within one row") {
    Rng rng(12);
    for (int t = 0; t < 200; ++t) {
      const std::uint64_t n = 1 + rng.below(100000);
      const std::size_t M = std::size_t{1} << rng.below(6);
      const std::size_t K = std::size_t{1} << (1 + rng.below(8));
      const double budget = rng.uniform(1.0, 1e6);
      const auto p = plan_budget(budget, n, M, K);
      const double row = static_cast<double>(code_bits(M, K)) / 8.0;
      CHECK(p.alpha > 0.0);
      CHECK(p.alpha <= 1.0);
      CHECK(p.selected_count <= n);
      CHECK(static_cast<double>(p.selected_count) * row <= p.code_budget_bytes + row + 1e-6);
    }
  }

  TEST_CASE("compress_map: count, determinism, index range") {
    const auto scene = synth_scene(400, 8, 21);
    MapCompressionOptions o;
    o.alpha = 0.25;
    const auto a = compress_map(scene, o);
    const auto b = compress_map(scene, o);
    CHECK(a.selected == b.selected);
    // A feasible v needs at least alpha * m entries above the threshold.
    CHECK(a.selected.size() == 100);
    CHECK(a.sigma == doctest::Approx(median_pairwise_distance(scene.positions)));
    for (auto i : a.selected) CHECK(i < 400);
    auto sorted = a.selected;
    std::sort(sorted.begin(), sorted.end());
    CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());

    o.max_points = 100;
    const auto sub = compress_map(scene, o);
    CHECK(sub.points_considered == 100);
    CHECK(sub.selected.size() == 25);
    for (auto i : sub.selected) CHECK(i % 4 == 0);
  }

  TEST_CASE("compress_map favours distinctive points as tau grows") {
    const auto scene = synth_scene(200, 5, 22);
    MapCompressionOptions o;
    o.alpha = 0.2;
    const auto mean_selected = [&](double tau) {
      o.tau_qp = tau;
      const auto r = compress_map(scene, o);
      double s = 0.0;
      for (auto i : r.selected) s += scene.distinctiveness[i];
      return s / static_cast<double>(r.selected.size());
    };
    const double all = std::accumulate(scene.distinctiveness.begin(), scene.distinctiveness.end(), 0.0) / 200.0;
    CHECK(mean_selected(100.0) > mean_selected(0.0));
    CHECK(mean_selected(100.0) > all);
  }
}
