#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dpq/binary_io.hpp"
#include "dpq/descriptor_store.hpp"
#include "dpq/matrix.hpp"

namespace dpq {

inline constexpr std::size_t kDefaultKMeansIters = 25;

struct KMeansOptions {
  std::size_t iters = kDefaultKMeansIters;
  std::uint64_t seed = 0;
  bool allow_duplicates = false;
};

struct KMeansResult {
  Matrix centroids;                       // K x d
  std::vector<std::uint32_t> assignments;  // one per point
  double distortion = 0.0;                 // sum of squared distances
  // Sum of squared distances after each assignment step; non-increasing.
  std::vector<double> history;
};

// k-means++ seeding followed by Lloyd iterations. Empty clusters are
// re-seeded at the point farthest from its centroid.
KMeansResult kmeans(const Matrix& points, std::size_t k, const KMeansOptions& opts = {});

// Index of the nearest row of `centroids` (squared L2, lowest index on ties).
std::uint32_t nearest_centroid(std::span<const double> x, const Matrix& centroids,
                               double* best_sq = nullptr);

// M independent sub-codebooks of K centroids over D' = D / M dimensions.
struct Codebook {
  std::size_t M = 0;
  std::size_t K = 0;
  std::size_t sub_dim = 0;
  std::vector<Matrix> centroids;  // M matrices, K x sub_dim

  std::size_t dim() const noexcept { return M * sub_dim; }
  void validate() const;
  // SHA-256 of the serialized (f32) form; stable across save/load.
  io::Digest hash() const;
  // Concatenation of the given per-subspace centroids.
  std::vector<double> reconstruct(std::span<const std::uint32_t> codes) const;
};

struct QuantizedIndex {
  std::size_t N = 0;
  std::size_t M = 0;
  std::size_t K = 0;
  std::vector<std::uint32_t> codes;  // N x M row-major
  io::Digest codebook_ref{};

  std::span<const std::uint32_t> row(std::size_t i) const { return {codes.data() + i * M, M}; }
};

Codebook fit_codebook(const DescriptorSet& set, std::size_t M, std::size_t K,
                      std::size_t iters = kDefaultKMeansIters, std::uint64_t seed = 0,
                      bool allow_duplicates = false);

QuantizedIndex pq_encode(const Codebook& codebook, const Matrix& x);
inline QuantizedIndex pq_encode(const Codebook& codebook, const DescriptorSet& set) {
  return pq_encode(codebook, set.descriptors);
}
DescriptorSet pq_decode(const Codebook& codebook, const QuantizedIndex& index);

// M * log2(K); K must be a power of two.
std::uint64_t code_bits(std::size_t M, std::size_t K);
double code_bytes(std::size_t M, std::size_t K);

// log2(K) bits per code, LSB first, each row padded to a whole byte.
std::size_t packed_row_bytes(std::size_t M, std::size_t K);
io::Bytes pack_codes(const QuantizedIndex& index);
std::vector<std::uint32_t> unpack_codes(const io::Bytes& packed, std::size_t N, std::size_t M,
                                        std::size_t K);

io::Bytes encode_codebook(const Codebook& cb);
Codebook decode_codebook(const io::Bytes& bytes, const std::string& origin = "codebook file");
void save_codebook(const Codebook& cb, const std::string& path);
Codebook load_codebook(const std::string& path);

io::Bytes encode_index(const QuantizedIndex& index);
QuantizedIndex decode_index(const io::Bytes& bytes, const std::string& origin = "index file");
void save_index(const QuantizedIndex& index, const std::string& path);
QuantizedIndex load_index(const std::string& path);

}  // namespace dpq
