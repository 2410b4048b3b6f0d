#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "dpq/binary_io.hpp"
#include "dpq/matrix.hpp"

namespace dpq {

// Low-rank update W' = W + B A for both layers.
struct LoraFactors {
  std::size_t rank = 0;
  Matrix A1;  // r x H
  Matrix B1;  // D x r
  Matrix A2;  // r x D
  Matrix B2;  // H x r
};

// Two-layer bias-free MLP: out = relu(q W1') W2'.
struct DecoderWeights {
  std::size_t D = 0;
  std::size_t H = 0;
  Matrix W1;  // D x H
  Matrix W2;  // H x D
  std::optional<LoraFactors> lora;

  void validate() const;
  Matrix effective_w1() const;
  Matrix effective_w2() const;
  std::size_t param_count() const noexcept { return 2 * D * H; }
  std::size_t lora_param_count() const noexcept;
};

std::size_t decoder_param_count(std::size_t D, std::size_t H);
std::size_t lora_param_count(std::size_t D, std::size_t H, std::size_t rank);

DecoderWeights init_decoder(std::size_t D, std::size_t H, std::uint64_t seed);
// Adds LoRA factors: A small random, B zero, so the forward is unchanged.
DecoderWeights init_lora(DecoderWeights w, std::size_t rank, std::uint64_t seed);

struct DecoderCache {
  Matrix input;   // N x D
  Matrix pre;     // N x H, q W1'
  Matrix hidden;  // N x H, relu(pre)
  Matrix output;  // N x D
  Matrix w1_eff;
  Matrix w2_eff;
};

Matrix decoder_forward(const Matrix& q, const DecoderWeights& w);
DecoderCache decoder_forward_cached(const Matrix& q, const DecoderWeights& w);

// With LoRA active only the low-rank factors get gradients; W1/W2 are frozen
// and their slots stay empty.
struct DecoderGrads {
  std::optional<Matrix> W1, W2;
  std::optional<Matrix> A1, B1, A2, B2;
  Matrix input;
};

DecoderGrads decoder_backward(const std::optional<DecoderCache>& cache, const DecoderWeights& w,
                              const Matrix& grad_out);

io::Bytes encode_decoder(const DecoderWeights& w);
DecoderWeights decode_decoder(const io::Bytes& bytes, const std::string& origin = "decoder file");
void save_decoder(const DecoderWeights& w, const std::string& path);
DecoderWeights load_decoder(const std::string& path);

// LoRA delta only: header then A1, B1, A2, B2 as f32.
inline constexpr std::size_t kLoraDeltaHeaderBytes = 20;
io::Bytes encode_lora_delta(const DecoderWeights& w);
DecoderWeights apply_lora_delta(DecoderWeights base, const io::Bytes& bytes,
                                const std::string& origin = "lora delta");
void save_lora_delta(const DecoderWeights& w, const std::string& path);

}  // namespace dpq
