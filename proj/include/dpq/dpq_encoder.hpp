#pragma once

// Differentiable product-quantization layer.
//
// Forward values are the hard PQ reconstruction. Gradients are taken through
// the soft path: per subspace, a = softmax(-d / tau) over the true L2
// distances d_i = ||x_m - c_i||, and the soft reconstruction sum_i a_i c_i.
// That is the straight-through composition soft + stop_gradient(hard - soft).

#include <cstdint>
#include <optional>
#include <vector>

#include "dpq/codebook.hpp"
#include "dpq/matrix.hpp"

namespace dpq {

struct Temperature {
  double tau = 0.05;
  explicit Temperature(double t);
};

// softmax(-d / tau), max-subtracted.
std::vector<double> softmax_neg_distances(std::span<const double> distances, Temperature tau);

// Soft assignment of one sub-vector against one sub-codebook (K x D').
std::vector<double> soft_assign(std::span<const double> x_m, const Matrix& sub_codebook, Temperature tau);

struct EncoderForward {
  std::size_t N = 0;
  std::size_t M = 0;
  std::size_t K = 0;
  std::size_t sub_dim = 0;
  std::vector<double> soft_weights;       // N x M x K
  std::vector<double> distances;          // N x M x K, true L2
  std::vector<std::uint32_t> hard_codes;  // N x M
  Matrix output;                          // N x D, hard reconstruction

  // Backward needs the input and the centroids the forward saw.
  struct Cache {
    Matrix input;
    Codebook codebook;
    double tau;
  };
  std::optional<Cache> cache;

  double soft_weight(std::size_t n, std::size_t m, std::size_t k) const {
    return soft_weights[(n * M + m) * K + k];
  }
};

EncoderForward encode_forward(const Matrix& x, const Codebook& codebook, Temperature tau);

// Soft reconstruction sum_i a_i c_i per subspace (what backward differentiates).
Matrix soft_reconstruct(const Matrix& x, const Codebook& codebook, Temperature tau);

struct EncoderGrads {
  std::vector<Matrix> centroids;  // M matrices, K x D'
  Matrix input;                   // N x D
};

EncoderGrads encode_backward(const EncoderForward& fwd, const Matrix& grad_out);

}  // namespace dpq
