#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dpq/codebook.hpp"
#include "dpq/decoder.hpp"
#include "dpq/descriptor_store.hpp"

namespace dpq {

struct BenchResult {
  std::string method;
  double bytes_per_vector = 0.0;
  double recon_mean = 0.0;
  double recon_median = 0.0;
  double recall_at_1 = 0.0;
  double recall_at_5 = 0.0;
  double ranking_preservation = 0.0;
  // Hyperparameters used, echoed into reports.
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
  std::size_t n_triplets = 0;
};

inline constexpr std::size_t kDefaultRankingTriplets = 20000;

// Fraction of queries whose ground-truth database id ranks in the top k by
// exact L2 search (ties to the lower database row).
double recall_at_k(const DescriptorSet& queries, const DescriptorSet& database,
                   std::span<const std::uint64_t> ground_truth_ids, std::size_t k);

// Rank of database row `target` for `query`: rows strictly closer, plus
// equally close rows with a lower index.
std::size_t match_rank(std::span<const double> query, const Matrix& database, std::size_t target);

// Fraction of random triplets (a, b, c) whose order of d(a,b) vs d(a,c)
// survives compression. Near-ties (|diff| <= 1e-12) count as preserved.
double ranking_preservation(const Matrix& original, const Matrix& compressed, std::size_t n_triplets,
                            std::uint64_t seed);

// encode -> hard decode -> optional decoder.
Matrix reconstruct(const Matrix& x, const Codebook& codebook, const DecoderWeights* decoder);

std::vector<double> reconstruction_errors(const Matrix& x, const Matrix& x_hat);
double mean(std::span<const double> v);
double median(std::vector<double> v);

// Raw queries (plus Gaussian noise) against the compressed database.
BenchResult asymmetric_bench(const DescriptorSet& set, double noise_sigma, const Codebook& codebook,
                             const DecoderWeights* decoder, std::uint64_t seed,
                             std::size_t n_triplets = kDefaultRankingTriplets);
// Queries pass through the same encode/decode as the database.
BenchResult symmetric_bench(const DescriptorSet& set, double noise_sigma, const Codebook& codebook,
                            const DecoderWeights* decoder, std::uint64_t seed,
                            std::size_t n_triplets = kDefaultRankingTriplets);
// Uncompressed reference (f32 storage).
BenchResult raw_bench(const DescriptorSet& set, double noise_sigma, std::uint64_t seed,
                      std::size_t n_triplets = kDefaultRankingTriplets);

std::string results_table_header();
std::string results_table_row(const BenchResult& r);

}  // namespace dpq
