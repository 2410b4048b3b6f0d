#include "dpq/codebook.hpp"

#include <algorithm>
#include <bit>
#include <limits>
#include <set>

#include "dpq/error.hpp"
#include "dpq/rng.hpp"
#include "dpq/simd.hpp"

namespace dpq {
namespace {

constexpr std::uint32_t kCodebookVersion = 1;
constexpr std::uint32_t kIndexVersion = 1;

std::size_t count_distinct_rows(const Matrix& points) {
  std::set<std::vector<double>> seen;
  for (std::size_t r = 0; r < points.rows(); ++r)
    seen.emplace(points.row(r).begin(), points.row(r).end());
  return seen.size();
}

// Squared distance of every point to its assigned centroid; returns the sum.
double assign(const Matrix& points, const Matrix& centroids, std::vector<std::uint32_t>& labels,
              std::vector<double>& sq) {
  double total = 0.0;
  for (std::size_t i = 0; i < points.rows(); ++i) {
    labels[i] = nearest_centroid(points.row(i), centroids, &sq[i]);
    total += sq[i];
  }
  return total;
}

Matrix kmeanspp_seed(const Matrix& points, std::size_t k, Rng& rng) {
  const std::size_t n = points.rows();
  const std::size_t d = points.cols();
  Matrix centroids(k, d);
  std::vector<double> best(n, std::numeric_limits<double>::infinity());

  std::size_t pick = rng.below(n);
  for (std::size_t c = 0; c < k; ++c) {
    std::copy(points.row(pick).begin(), points.row(pick).end(), centroids.row(c).begin());
    if (c + 1 == k) break;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      best[i] = std::min(best[i], simd::squared_l2(points.row(i).data(), centroids.row(c).data(), d));
      total += best[i];
    }
    if (total <= 0.0) {
      pick = rng.below(n);
      continue;
    }
    double target = rng.uniform() * total;
    pick = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      target -= best[i];
      if (target < 0.0 && best[i] > 0.0) {
        pick = i;
        break;
      }
    }
  }
  return centroids;
}

}  // namespace

std::uint32_t nearest_centroid(std::span<const double> x, const Matrix& centroids, double* best_sq) {
  const auto& k = simd::kernels();
  std::uint32_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.rows(); ++c) {
    const double d = k.squared_l2(x.data(), centroids.row(c).data(), x.size());
    if (d < best_d) {
      best_d = d;
      best = static_cast<std::uint32_t>(c);
    }
  }
  if (best_sq) *best_sq = best_d;
  return best;
}

KMeansResult kmeans(const Matrix& points, std::size_t k, const KMeansOptions& opts) {
  if (points.rows() == 0) fail(ErrorKind::Input, "kmeans: no points");
  if (k == 0) fail(ErrorKind::Config, "kmeans: K must be >= 1");
  if (!opts.allow_duplicates) {
    const std::size_t distinct = count_distinct_rows(points);
    if (k > distinct) {
      fail(ErrorKind::DegenerateInput, "kmeans: K=" + std::to_string(k) + " exceeds " +
                                           std::to_string(distinct) + " distinct points");
    }
  }

  const std::size_t n = points.rows();
  const std::size_t d = points.cols();
  Rng rng(opts.seed);
  KMeansResult res;
  res.centroids = kmeanspp_seed(points, k, rng);
  res.assignments.assign(n, 0);
  std::vector<double> sq(n);

  std::vector<double> sums(k * d);
  std::vector<std::size_t> counts(k);
  for (std::size_t it = 0; it < opts.iters; ++it) {
    res.history.push_back(assign(points, res.centroids, res.assignments, sq));

    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = res.assignments[i];
      simd::axpy(1.0, points.row(i).data(), sums.data() + c * d, d);
      ++counts[c];
    }
    std::vector<bool> taken(n, false);
    for (std::size_t c = 0; c < k; ++c) {
      auto row = res.centroids.row(c);
      if (counts[c] > 0) {
        for (std::size_t j = 0; j < d; ++j) row[j] = sums[c * d + j] / static_cast<double>(counts[c]);
        continue;
      }
      // Empty: move to the worst-served point not already used this pass.
      std::size_t far = n;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (!taken[i] && sq[i] > far_d) {
          far_d = sq[i];
          far = i;
        }
      }
      if (far == n) continue;
      taken[far] = true;
      sq[far] = 0.0;
      std::copy(points.row(far).begin(), points.row(far).end(), row.begin());
    }
  }
  res.distortion = assign(points, res.centroids, res.assignments, sq);
  res.history.push_back(res.distortion);
  return res;
}

void Codebook::validate() const {
  if (M == 0 || K == 0 || sub_dim == 0) fail(ErrorKind::Config, "codebook: M, K, D' must be >= 1");
  if (centroids.size() != M) fail(ErrorKind::Config, "codebook: expected M sub-codebooks");
  for (const auto& c : centroids) {
    if (c.rows() != K || c.cols() != sub_dim) fail(ErrorKind::Dimension, "codebook: sub-codebook shape");
    if (!c.all_finite()) fail(ErrorKind::Numeric, "codebook: non-finite centroid");
  }
}

io::Digest Codebook::hash() const { return io::sha256(encode_codebook(*this)); }

std::vector<double> Codebook::reconstruct(std::span<const std::uint32_t> codes) const {
  std::vector<double> out(dim());
  for (std::size_t m = 0; m < M; ++m) {
    const auto c = centroids[m].row(codes[m]);
    std::copy(c.begin(), c.end(), out.begin() + static_cast<std::ptrdiff_t>(m * sub_dim));
  }
  return out;
}

Codebook fit_codebook(const DescriptorSet& set, std::size_t M, std::size_t K, std::size_t iters,
                      std::uint64_t seed, bool allow_duplicates) {
  if (M == 0 || set.dim() % M != 0) {
    fail(ErrorKind::Config, "fit_codebook: D=" + std::to_string(set.dim()) +
                                " is not divisible by M=" + std::to_string(M));
  }
  Codebook cb;
  cb.M = M;
  cb.K = K;
  cb.sub_dim = set.dim() / M;
  cb.centroids.reserve(M);
  for (std::size_t m = 0; m < M; ++m) {
    const Matrix slice = column_block(set.descriptors, m * cb.sub_dim, cb.sub_dim);
    KMeansOptions opts;
    opts.iters = iters;
    opts.seed = Rng::derive(seed, m).next();
    opts.allow_duplicates = allow_duplicates;
    cb.centroids.push_back(kmeans(slice, K, opts).centroids);
  }
  return cb;
}

QuantizedIndex pq_encode(const Codebook& codebook, const Matrix& x) {
  if (x.cols() != codebook.dim()) {
    fail(ErrorKind::Dimension, "pq_encode: input dim " + std::to_string(x.cols()) +
                                   " != codebook dim " + std::to_string(codebook.dim()));
  }
  QuantizedIndex idx;
  idx.N = x.rows();
  idx.M = codebook.M;
  idx.K = codebook.K;
  idx.codebook_ref = codebook.hash();
  idx.codes.resize(idx.N * idx.M);
  for (std::size_t i = 0; i < idx.N; ++i) {
    const auto row = x.row(i);
    for (std::size_t m = 0; m < codebook.M; ++m) {
      idx.codes[i * idx.M + m] =
          nearest_centroid(row.subspan(m * codebook.sub_dim, codebook.sub_dim), codebook.centroids[m]);
    }
  }
  return idx;
}

DescriptorSet pq_decode(const Codebook& codebook, const QuantizedIndex& index) {
  if (index.codebook_ref != codebook.hash())
    fail(ErrorKind::Integrity, "pq_decode: index was built with a different codebook");
  if (index.M != codebook.M || index.K != codebook.K)
    fail(ErrorKind::Integrity, "pq_decode: index M/K do not match codebook");
  Matrix out(index.N, codebook.dim());
  for (std::size_t i = 0; i < index.N; ++i) {
    const auto codes = index.row(i);
    for (std::size_t m = 0; m < codebook.M; ++m) {
      if (codes[m] >= codebook.K) fail(ErrorKind::Integrity, "pq_decode: code out of range");
      const auto c = codebook.centroids[m].row(codes[m]);
      std::copy(c.begin(), c.end(), out.row(i).begin() + static_cast<std::ptrdiff_t>(m * codebook.sub_dim));
    }
  }
  return DescriptorSet::from_matrix(std::move(out), false);
}

std::uint64_t code_bits(std::size_t M, std::size_t K) {
  if (K == 0 || !std::has_single_bit(K))
    fail(ErrorKind::Config, "code_bits: K=" + std::to_string(K) + " is not a power of two");
  return static_cast<std::uint64_t>(M) * static_cast<std::uint64_t>(std::countr_zero(K));
}

double code_bytes(std::size_t M, std::size_t K) { return static_cast<double>(code_bits(M, K)) / 8.0; }

std::size_t packed_row_bytes(std::size_t M, std::size_t K) { return (code_bits(M, K) + 7) / 8; }

io::Bytes pack_codes(const QuantizedIndex& index) {
  const std::size_t bits = code_bits(1, index.K);
  const std::size_t row_bytes = packed_row_bytes(index.M, index.K);
  io::Bytes out(index.N * row_bytes, 0);
  for (std::size_t i = 0; i < index.N; ++i) {
    std::uint8_t* dst = out.data() + i * row_bytes;
    std::size_t bit = 0;
    for (std::size_t m = 0; m < index.M; ++m) {
      const std::uint32_t code = index.codes[i * index.M + m];
      if (code >= index.K) fail(ErrorKind::Integrity, "pack_codes: code out of range");
      for (std::size_t b = 0; b < bits; ++b, ++bit)
        if ((code >> b) & 1u) dst[bit / 8] |= static_cast<std::uint8_t>(1u << (bit % 8));
    }
  }
  return out;
}

std::vector<std::uint32_t> unpack_codes(const io::Bytes& packed, std::size_t N, std::size_t M,
                                        std::size_t K) {
  const std::size_t bits = code_bits(1, K);
  const std::size_t row_bytes = packed_row_bytes(M, K);
  if (packed.size() != N * row_bytes) fail(ErrorKind::Format, "unpack_codes: wrong packed size");
  std::vector<std::uint32_t> codes(N * M, 0);
  for (std::size_t i = 0; i < N; ++i) {
    const std::uint8_t* src = packed.data() + i * row_bytes;
    std::size_t bit = 0;
    for (std::size_t m = 0; m < M; ++m) {
      std::uint32_t code = 0;
      for (std::size_t b = 0; b < bits; ++b, ++bit)
        if ((src[bit / 8] >> (bit % 8)) & 1u) code |= 1u << b;
      codes[i * M + m] = code;
    }
  }
  return codes;
}

io::Bytes encode_codebook(const Codebook& cb) {
  io::Writer w;
  w.magic("DPQC");
  w.u32(kCodebookVersion);
  w.u32(static_cast<std::uint32_t>(cb.M));
  w.u32(static_cast<std::uint32_t>(cb.K));
  w.u32(static_cast<std::uint32_t>(cb.sub_dim));
  for (const auto& c : cb.centroids)
    for (double v : c.values()) w.f32(static_cast<float>(v));
  return w.take();
}

Codebook decode_codebook(const io::Bytes& bytes, const std::string& origin) {
  io::Reader r(bytes, origin);
  r.expect_magic("DPQC");
  if (const auto v = r.u32(); v != kCodebookVersion) r.error("unsupported version " + std::to_string(v));
  Codebook cb;
  cb.M = r.u32();
  cb.K = r.u32();
  cb.sub_dim = r.u32();
  if (cb.M == 0 || cb.K == 0 || cb.sub_dim == 0) r.error("zero M, K or D'");
  const std::uint64_t floats = std::uint64_t{cb.M} * cb.K * cb.sub_dim;
  if (floats > r.remaining() / 4) r.error("truncated centroid payload");
  cb.centroids.reserve(cb.M);
  for (std::size_t m = 0; m < cb.M; ++m) {
    Matrix c(cb.K, cb.sub_dim);
    for (double& v : c.values()) v = r.f32();
    cb.centroids.push_back(std::move(c));
  }
  r.expect_end();
  return cb;
}

void save_codebook(const Codebook& cb, const std::string& path) { io::write_file(path, encode_codebook(cb)); }
Codebook load_codebook(const std::string& path) { return decode_codebook(io::read_file(path), path); }

io::Bytes encode_index(const QuantizedIndex& index) {
  io::Writer w;
  w.magic("DPQI");
  w.u32(kIndexVersion);
  w.u64(index.N);
  w.u32(static_cast<std::uint32_t>(index.M));
  w.u32(static_cast<std::uint32_t>(index.K));
  w.raw(index.codebook_ref.data(), index.codebook_ref.size());
  const io::Bytes packed = pack_codes(index);
  w.raw(packed.data(), packed.size());
  return w.take();
}

QuantizedIndex decode_index(const io::Bytes& bytes, const std::string& origin) {
  io::Reader r(bytes, origin);
  r.expect_magic("DPQI");
  if (const auto v = r.u32(); v != kIndexVersion) r.error("unsupported version " + std::to_string(v));
  QuantizedIndex idx;
  idx.N = r.u64();
  idx.M = r.u32();
  idx.K = r.u32();
  if (idx.K == 0 || !std::has_single_bit(idx.K)) r.error("K is not a power of two");
  r.raw(idx.codebook_ref.data(), idx.codebook_ref.size());
  const std::size_t row_bytes = packed_row_bytes(idx.M, idx.K);
  if (row_bytes > 0 && idx.N > r.remaining() / row_bytes) r.error("truncated code payload");
  io::Bytes packed(idx.N * row_bytes);
  r.raw(packed.data(), packed.size());
  r.expect_end();
  idx.codes = unpack_codes(packed, idx.N, idx.M, idx.K);
  return idx;
}

void save_index(const QuantizedIndex& index, const std::string& path) { io::write_file(path, encode_index(index)); }
QuantizedIndex load_index(const std::string& path) { return decode_index(io::read_file(path), path); }

}  // namespace dpq
