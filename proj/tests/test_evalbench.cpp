#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dpq/error.hpp"
#include "dpq/evalbench.hpp"
#include "helpers.hpp"

using namespace dpq;

namespace {

DescriptorSet random_set(std::size_t n, std::size_t d, std::uint64_t seed) {
  return DescriptorSet::from_matrix(test::random_matrix(n, d, seed));
}

// Brute force: sort every database row by (distance, index) and look up the target.
double brute_recall(const Matrix& q, const Matrix& db, const std::vector<std::size_t>& target, std::size_t k) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < q.rows(); ++i) {
    std::vector<std::pair<double, std::size_t>> order;
    for (std::size_t j = 0; j < db.rows(); ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < q.cols(); ++c) s += (q(i, c) - db(j, c)) * (q(i, c) - db(j, c));
      order.emplace_back(s, j);
    }
    std::sort(order.begin(), order.end());
    for (std::size_t r = 0; r < k && r < order.size(); ++r)
      if (order[r].second == target[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(q.rows());
}

}  // namespace

TEST_SUITE("evalbench") {
  TEST_CASE("recall_at_k agrees with brute force") {
    const auto db = random_set(60, 8, 1);
    auto q = DescriptorSet::from_matrix(test::random_matrix(25, 8, 2));
    Rng rng(3);
    std::vector<std::uint64_t> gt;
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < 25; ++i) {
      rows.push_back(rng.below(60));
      gt.push_back(db.ids[rows.back()]);
      // Pull the query toward its ground truth so recall is not trivially zero.
      for (std::size_t c = 0; c < 8; ++c)
        q.descriptors(i, c) = db.descriptors(rows.back(), c) + 0.6 * q.descriptors(i, c);
    }
    for (std::size_t k : {1u, 3u, 10u, 60u}) CHECK(recall_at_k(q, db, gt, k) == brute_recall(q.descriptors, db.descriptors, rows, k));
    CHECK(recall_at_k(q, db, gt, 60) == 1.0);
  }

  TEST_CASE("queries equal to the database give recall 1") {
    const auto db = random_set(40, 6, 4);
    CHECK(recall_at_k(db, db, db.ids, 1) == 1.0);
  }

  TEST_CASE("random ground truth gives recall near k / N") {
    const std::size_t n = 200, nq = 2000, k = 10;
    const auto db = random_set(n, 4, 5);
    const auto q = random_set(nq, 4, 6);
    Rng rng(7);
    std::vector<std::uint64_t> gt;
    for (std::size_t i = 0; i < nq; ++i) gt.push_back(db.ids[rng.below(n)]);
    const double p = static_cast<double>(k) / static_cast<double>(n);
    const double sd = std::sqrt(p * (1.0 - p) / static_cast<double>(nq));
    CHECK(std::abs(recall_at_k(q, db, gt, k) - p) < 3.0 * sd);
  }

  TEST_CASE("recall_at_k input errors") {
    const auto db = random_set(10, 4, 8);
    const auto q = random_set(3, 4, 9);
    const std::vector<std::uint64_t> short_gt{0, 1};
    try {
      recall_at_k(q, db, short_gt, 1);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Input);
    }
    const std::vector<std::uint64_t> unknown{0, 1, 999};
    CHECK_THROWS_AS(recall_at_k(q, db, unknown, 1), Error);
    const auto wide = random_set(3, 5, 10);
    CHECK_THROWS_AS(recall_at_k(wide, db, std::vector<std::uint64_t>{0, 1, 2}, 1), Error);
  }

  TEST_CASE("match_rank counts closer rows and lower-index ties") {
    Matrix db(4, 1);
    db(0, 0) = 1.0;
    db(1, 0) = -1.0;
    db(2, 0) = 0.5;
    db(3, 0) = 1.0;
    const std::vector<double> q{0.0};
    CHECK(match_rank(q, db, 2) == 0);
    CHECK(match_rank(q, db, 0) == 1);
    CHECK(match_rank(q, db, 1) == 2);
    CHECK(match_rank(q, db, 3) == 3);
  }

  TEST_CASE("ranking preservation: identity, scaling, random") {
    const auto x = test::random_matrix(100, 8, 11);
    CHECK(ranking_preservation(x, x, 5000, 1) == 1.0);
    Matrix scaled = x;
    for (double& v : scaled.values()) v *= 3.0;
    CHECK(ranking_preservation(x, scaled, 5000, 1) == 1.0);
    const auto other = test::random_matrix(100, 8, 12);
    const double r = ranking_preservation(x, other, 20000, 1);
    CHECK(std::abs(r - 0.5) < 3.0 * std::sqrt(0.25 / 20000.0) + 0.01);
    CHECK(ranking_preservation(x, other, 20000, 1) == r);
    CHECK(ranking_preservation(Matrix(2, 3), Matrix(2, 3), 10, 1) == 1.0);
    CHECK_THROWS_AS(ranking_preservation(x, Matrix(99, 8), 10, 1), Error);
  }

  TEST_CASE("mean, median, reconstruction errors") {
    CHECK(mean(std::vector<double>{1.0, 2.0, 6.0}) == 3.0);
    CHECK(median({5.0, 1.0, 3.0}) == 3.0);
    CHECK(median({4.0, 1.0, 3.0, 2.0}) == 2.5);
    CHECK(mean(std::vector<double>{}) == 0.0);
    Matrix a(2, 2), b(2, 2);
    b(0, 0) = 3.0;
    b(0, 1) = 4.0;
    const auto e = reconstruction_errors(a, b);
    CHECK(e[0] == 5.0);
    CHECK(e[1] == 0.0);
    CHECK_THROWS_AS(reconstruction_errors(a, Matrix(3, 2)), Error);
  }

  TEST_CASE("benches: raw is lossless, PQ cannot beat raw, deterministic") {
    const auto set = synth_descriptors(10, 30, 32, 0.1, 13);
    const auto cb = fit_codebook(set, 4, 8, 10, 13);
    const auto raw = raw_bench(set, 0.05, 13, 2000);
    const auto pq = asymmetric_bench(set, 0.05, cb, nullptr, 13, 2000);
    CHECK(raw.recon_mean == 0.0);
    CHECK(raw.ranking_preservation == 1.0);
    CHECK(raw.bytes_per_vector == 128.0);
    CHECK(pq.bytes_per_vector == 1.5);
    CHECK(pq.recall_at_1 <= raw.recall_at_1);
    CHECK(pq.recall_at_1 <= pq.recall_at_5);
    CHECK(pq.recon_mean > 0.0);
    const auto again = asymmetric_bench(set, 0.05, cb, nullptr, 13, 2000);
    CHECK(again.recall_at_1 == pq.recall_at_1);
    CHECK(again.recon_mean == pq.recon_mean);
    CHECK(again.ranking_preservation == pq.ranking_preservation);
    CHECK(pq.method == "PQ4x8");
    const auto dec = init_decoder(32, 16, 1);
    CHECK(asymmetric_bench(set, 0.05, cb, &dec, 13, 100).method == "PQ4x8+decoder");
  }

  TEST_CASE("lossless codebook: symmetric equals asymmetric at zero noise") {
    const auto set = random_set(32, 8, 14);
    const auto cb = fit_codebook(set, 1, 32, 10, 14);
    const auto asym = asymmetric_bench(set, 0.0, cb, nullptr, 14, 1000);
    const auto sym = symmetric_bench(set, 0.0, cb, nullptr, 14, 1000);
    CHECK(asym.recon_mean == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(asym.recall_at_1 == 1.0);
    CHECK(sym.recall_at_1 == asym.recall_at_1);
  }

  TEST_CASE("results table format") {
    BenchResult r;
    r.method = "PQ4x16";
    r.bytes_per_vector = 2.0;
    r.recon_mean = 0.5;
    r.recall_at_1 = 0.25;
    r.recall_at_5 = 0.75;
    r.ranking_preservation = 0.875;
    CHECK(results_table_header() == "method\tbytes_per_vector\trecon_mean\trecall@1\trecall@5\tranking_preservation\n");
    CHECK(results_table_row(r) == "PQ4x16\t2\t0.500000\t0.250000\t0.750000\t0.875000\n");
  }
}
