#include "dpq/evalbench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <unordered_map>

#include "dpq/error.hpp"
#include "dpq/parallel.hpp"
#include "dpq/rng.hpp"
#include "dpq/simd.hpp"

namespace dpq {
namespace {

// Query noise draws from its own stream so every method sees the same queries.
constexpr std::uint64_t kQueryNoiseTag = 0x71;
constexpr std::uint64_t kTripletTag = 0x72;

Matrix noisy_queries(const Matrix& x, double sigma, std::uint64_t seed) {
  Matrix q = x;
  if (sigma > 0.0) {
    Rng rng = Rng::derive(seed, kQueryNoiseTag);
    for (double& v : q.values()) v += sigma * rng.normal();
  }
  return q;
}

double recall_same_index(const Matrix& queries, const Matrix& database, std::size_t k) {
  std::vector<std::uint8_t> hit(queries.rows(), 0);
  parallel_for(queries.rows(), [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) hit[i] = match_rank(queries.row(i), database, i) < k;
  });
  const auto hits = std::count(hit.begin(), hit.end(), std::uint8_t{1});
  return static_cast<double>(hits) / static_cast<double>(queries.rows());
}

BenchResult finish(std::string method, double bytes, const Matrix& original, const Matrix& queries,
                   const Matrix& database, double noise_sigma, std::uint64_t seed, std::size_t n_triplets) {
  BenchResult r;
  r.method = std::move(method);
  r.bytes_per_vector = bytes;
  const auto err = reconstruction_errors(original, database);
  r.recon_mean = mean(err);
  r.recon_median = median(err);
  r.recall_at_1 = recall_same_index(queries, database, 1);
  r.recall_at_5 = recall_same_index(queries, database, 5);
  r.ranking_preservation = ranking_preservation(original, database, n_triplets, seed);
  r.noise_sigma = noise_sigma;
  r.seed = seed;
  r.n_triplets = n_triplets;
  return r;
}

std::string method_label(const Codebook& cb, const DecoderWeights* decoder, const char* suffix) {
  std::string s = "PQ" + std::to_string(cb.M) + "x" + std::to_string(cb.K);
  if (decoder) s += "+decoder";
  return s + suffix;
}

}  // namespace

std::size_t match_rank(std::span<const double> query, const Matrix& database, std::size_t target) {
  const auto& k = simd::kernels();
  const std::size_t d = database.cols();
  const double t = k.squared_l2(query.data(), database.row(target).data(), d);
  std::size_t rank = 0;
  for (std::size_t j = 0; j < database.rows(); ++j) {
    if (j == target) continue;
    const double dj = k.squared_l2(query.data(), database.row(j).data(), d);
    if (dj < t || (dj == t && j < target)) ++rank;
  }
  return rank;
}

double recall_at_k(const DescriptorSet& queries, const DescriptorSet& database,
                   std::span<const std::uint64_t> ground_truth_ids, std::size_t k) {
  if (queries.dim() != database.dim()) fail(ErrorKind::Dimension, "recall_at_k: query/database dims differ");
  if (ground_truth_ids.size() != queries.size())
    fail(ErrorKind::Input, "recall_at_k: missing ground-truth entries");
  if (queries.size() == 0) fail(ErrorKind::Input, "recall_at_k: no queries");
  std::unordered_map<std::uint64_t, std::size_t> row_of;
  for (std::size_t j = 0; j < database.size(); ++j) row_of.emplace(database.ids[j], j);

  std::vector<std::size_t> target(queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const auto it = row_of.find(ground_truth_ids[i]);
    if (it == row_of.end())
      fail(ErrorKind::Input, "recall_at_k: ground-truth id " + std::to_string(ground_truth_ids[i]) +
                                 " not in database");
    target[i] = it->second;
  }
  std::vector<std::uint8_t> hit(queries.size(), 0);
  parallel_for(queries.size(), [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i)
      hit[i] = match_rank(queries.descriptors.row(i), database.descriptors, target[i]) < k;
  });
  const auto hits = std::count(hit.begin(), hit.end(), std::uint8_t{1});
  return static_cast<double>(hits) / static_cast<double>(queries.size());
}

double ranking_preservation(const Matrix& original, const Matrix& compressed, std::size_t n_triplets,
                            std::uint64_t seed) {
  if (original.rows() != compressed.rows()) fail(ErrorKind::Dimension, "ranking_preservation: row counts differ");
  const std::size_t n = original.rows();
  if (n < 3 || n_triplets == 0) return 1.0;
  Rng rng = Rng::derive(seed, kTripletTag);
  constexpr double kTie = 1e-12;
  std::size_t kept = 0;
  for (std::size_t t = 0; t < n_triplets; ++t) {
    const std::size_t a = rng.below(n);
    std::size_t b, c;
    do b = rng.below(n); while (b == a);
    do c = rng.below(n); while (c == a || c == b);
    const double s0 = l2_distance(original.row(a), original.row(b)) - l2_distance(original.row(a), original.row(c));
    const double s1 =
        l2_distance(compressed.row(a), compressed.row(b)) - l2_distance(compressed.row(a), compressed.row(c));
    if (std::abs(s0) <= kTie || std::abs(s1) <= kTie || (s0 > 0) == (s1 > 0)) ++kept;
  }
  return static_cast<double>(kept) / static_cast<double>(n_triplets);
}

Matrix reconstruct(const Matrix& x, const Codebook& codebook, const DecoderWeights* decoder) {
  Matrix hard = pq_decode(codebook, pq_encode(codebook, x)).descriptors;
  return decoder ? decoder_forward(hard, *decoder) : hard;
}

std::vector<double> reconstruction_errors(const Matrix& x, const Matrix& x_hat) {
  if (!x.same_shape(x_hat)) fail(ErrorKind::Dimension, "reconstruction_errors: shapes differ");
  std::vector<double> e(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) e[i] = l2_distance(x.row(i), x_hat.row(i));
  return e;
}

double mean(std::span<const double> v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

BenchResult asymmetric_bench(const DescriptorSet& set, double noise_sigma, const Codebook& codebook,
                             const DecoderWeights* decoder, std::uint64_t seed, std::size_t n_triplets) {
  const Matrix database = reconstruct(set.descriptors, codebook, decoder);
  const Matrix queries = noisy_queries(set.descriptors, noise_sigma, seed);
  return finish(method_label(codebook, decoder, ""), code_bytes(codebook.M, codebook.K), set.descriptors,
                queries, database, noise_sigma, seed, n_triplets);
}

BenchResult symmetric_bench(const DescriptorSet& set, double noise_sigma, const Codebook& codebook,
                            const DecoderWeights* decoder, std::uint64_t seed, std::size_t n_triplets) {
  const Matrix database = reconstruct(set.descriptors, codebook, decoder);
  const Matrix queries = reconstruct(noisy_queries(set.descriptors, noise_sigma, seed), codebook, decoder);
  return finish(method_label(codebook, decoder, "(symmetric)"), code_bytes(codebook.M, codebook.K),
                set.descriptors, queries, database, noise_sigma, seed, n_triplets);
}

BenchResult raw_bench(const DescriptorSet& set, double noise_sigma, std::uint64_t seed, std::size_t n_triplets) {
  const Matrix queries = noisy_queries(set.descriptors, noise_sigma, seed);
  return finish("raw", 4.0 * static_cast<double>(set.dim()), set.descriptors, queries, set.descriptors,
                noise_sigma, seed, n_triplets);
}

std::string results_table_header() {
  return "method\tbytes_per_vector\trecon_mean\trecall@1\trecall@5\tranking_preservation\n";
}

std::string results_table_row(const BenchResult& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s\t%.6g\t%.6f\t%.6f\t%.6f\t%.6f\n", r.method.c_str(), r.bytes_per_vector,
                r.recon_mean, r.recall_at_1, r.recall_at_5, r.ranking_preservation);
  return buf;
}

}  // namespace dpq
