#include "dpq/decoder.hpp"

#include <cmath>

#include "dpq/error.hpp"
#include "dpq/rng.hpp"

namespace dpq {
namespace {

constexpr std::uint32_t kDecoderVersion = 1;
constexpr std::uint32_t kLoraVersion = 1;

Matrix uniform_matrix(std::size_t rows, std::size_t cols, double bound, Rng& rng) {
  Matrix m(rows, cols);
  for (double& v : m.values()) v = rng.uniform(-bound, bound);
  return m;
}

void write_matrix(io::Writer& w, const Matrix& m) {
  for (double v : m.values()) w.f32(static_cast<float>(v));
}

Matrix read_matrix(io::Reader& r, std::size_t rows, std::size_t cols) {
  if (rows * cols > r.remaining() / 4) r.error("truncated weight payload");
  Matrix m(rows, cols);
  for (double& v : m.values()) v = r.f32();
  return m;
}

LoraFactors read_lora(io::Reader& r, std::size_t D, std::size_t H, std::size_t rank) {
  LoraFactors l;
  l.rank = rank;
  l.A1 = read_matrix(r, rank, H);
  l.B1 = read_matrix(r, D, rank);
  l.A2 = read_matrix(r, rank, D);
  l.B2 = read_matrix(r, H, rank);
  return l;
}

void write_lora(io::Writer& w, const LoraFactors& l) {
  write_matrix(w, l.A1);
  write_matrix(w, l.B1);
  write_matrix(w, l.A2);
  write_matrix(w, l.B2);
}

Matrix relu_mask_apply(const Matrix& grad, const Matrix& pre) {
  Matrix out = grad;
  for (std::size_t i = 0; i < out.size(); ++i)
    if (!(pre.data()[i] > 0.0)) out.data()[i] = 0.0;
  return out;
}

}  // namespace

std::size_t decoder_param_count(std::size_t D, std::size_t H) { return 2 * D * H; }

std::size_t lora_param_count(std::size_t D, std::size_t H, std::size_t rank) {
  // (D x r)(r x H) for layer 1 plus (H x r)(r x D) for layer 2.
  return (D * rank + rank * H) + (H * rank + rank * D);
}

std::size_t DecoderWeights::lora_param_count() const noexcept {
  return lora ? dpq::lora_param_count(D, H, lora->rank) : 0;
}

void DecoderWeights::validate() const {
  if (D == 0 || H == 0) fail(ErrorKind::Config, "decoder: D and H must be >= 1");
  if (W1.rows() != D || W1.cols() != H || W2.rows() != H || W2.cols() != D)
    fail(ErrorKind::Dimension, "decoder: weight shapes do not match D/H");
  if (lora) {
    const auto r = lora->rank;
    if (r == 0) fail(ErrorKind::Config, "decoder: LoRA rank must be >= 1");
    if (lora->A1.rows() != r || lora->A1.cols() != H || lora->B1.rows() != D || lora->B1.cols() != r ||
        lora->A2.rows() != r || lora->A2.cols() != D || lora->B2.rows() != H || lora->B2.cols() != r)
      fail(ErrorKind::Dimension, "decoder: LoRA factor shapes");
  }
}

Matrix DecoderWeights::effective_w1() const {
  return lora ? add(W1, matmul(lora->B1, lora->A1)) : W1;
}

Matrix DecoderWeights::effective_w2() const {
  return lora ? add(W2, matmul(lora->B2, lora->A2)) : W2;
}

DecoderWeights init_decoder(std::size_t D, std::size_t H, std::uint64_t seed) {
  if (D == 0 || H == 0) fail(ErrorKind::Config, "init_decoder: D and H must be >= 1");
  Rng rng(seed);
  DecoderWeights w;
  w.D = D;
  w.H = H;
  w.W1 = uniform_matrix(D, H, 1.0 / std::sqrt(static_cast<double>(D)), rng);
  w.W2 = uniform_matrix(H, D, 1.0 / std::sqrt(static_cast<double>(H)), rng);
  return w;
}

DecoderWeights init_lora(DecoderWeights w, std::size_t rank, std::uint64_t seed) {
  if (rank == 0) fail(ErrorKind::Config, "init_lora: rank must be >= 1");
  w.validate();
  Rng rng(seed);
  LoraFactors l;
  l.rank = rank;
  l.A1 = uniform_matrix(rank, w.H, 1.0 / std::sqrt(static_cast<double>(w.H)), rng);
  l.B1 = Matrix(w.D, rank);
  l.A2 = uniform_matrix(rank, w.D, 1.0 / std::sqrt(static_cast<double>(w.D)), rng);
  l.B2 = Matrix(w.H, rank);
  w.lora = std::move(l);
  return w;
}

DecoderCache decoder_forward_cached(const Matrix& q, const DecoderWeights& w) {
  if (q.cols() != w.D) {
    fail(ErrorKind::Dimension, "decoder_forward: input dim " + std::to_string(q.cols()) +
                                   " != D " + std::to_string(w.D));
  }
  DecoderCache c;
  c.input = q;
  c.w1_eff = w.effective_w1();
  c.w2_eff = w.effective_w2();
  c.pre = matmul(q, c.w1_eff);
  c.hidden = c.pre;
  for (double& v : c.hidden.values()) v = v > 0.0 ? v : 0.0;
  c.output = matmul(c.hidden, c.w2_eff);
  return c;
}

Matrix decoder_forward(const Matrix& q, const DecoderWeights& w) {
  return decoder_forward_cached(q, w).output;
}

DecoderGrads decoder_backward(const std::optional<DecoderCache>& cache, const DecoderWeights& w,
                              const Matrix& grad_out) {
  if (!cache) fail(ErrorKind::State, "decoder_backward: forward cache missing");
  const DecoderCache& c = *cache;
  if (!grad_out.same_shape(c.output)) fail(ErrorKind::Dimension, "decoder_backward: grad_out shape");

  const Matrix g_w2 = matmul_tn(c.hidden, grad_out);                       // H x D
  const Matrix g_pre = relu_mask_apply(matmul_nt(grad_out, c.w2_eff), c.pre);  // N x H
  const Matrix g_w1 = matmul_tn(c.input, g_pre);                           // D x H

  DecoderGrads g;
  g.input = matmul_nt(g_pre, c.w1_eff);
  if (w.lora) {
    // W' = W + B A:  dB = dW' A^T, dA = B^T dW'
    g.B1 = matmul_nt(g_w1, w.lora->A1);
    g.A1 = matmul_tn(w.lora->B1, g_w1);
    g.B2 = matmul_nt(g_w2, w.lora->A2);
    g.A2 = matmul_tn(w.lora->B2, g_w2);
  } else {
    g.W1 = g_w1;
    g.W2 = g_w2;
  }
  return g;
}

io::Bytes encode_decoder(const DecoderWeights& w) {
  io::Writer out;
  out.magic("DPQW");
  out.u32(kDecoderVersion);
  out.u32(static_cast<std::uint32_t>(w.D));
  out.u32(static_cast<std::uint32_t>(w.H));
  out.u8(w.lora ? 1 : 0);
  out.u32(static_cast<std::uint32_t>(w.lora ? w.lora->rank : 0));
  write_matrix(out, w.W1);
  write_matrix(out, w.W2);
  if (w.lora) write_lora(out, *w.lora);
  return out.take();
}

DecoderWeights decode_decoder(const io::Bytes& bytes, const std::string& origin) {
  io::Reader r(bytes, origin);
  r.expect_magic("DPQW");
  if (const auto v = r.u32(); v != kDecoderVersion) r.error("unsupported version " + std::to_string(v));
  DecoderWeights w;
  w.D = r.u32();
  w.H = r.u32();
  const std::uint8_t flag = r.u8();
  const std::uint32_t rank = r.u32();
  if (w.D == 0 || w.H == 0) r.error("zero D or H");
  if (flag > 1) r.error("lora flag must be 0 or 1");
  if (flag == 1 && rank == 0) r.error("lora flagged with rank 0");
  w.W1 = read_matrix(r, w.D, w.H);
  w.W2 = read_matrix(r, w.H, w.D);
  if (flag == 1) w.lora = read_lora(r, w.D, w.H, rank);
  r.expect_end();
  return w;
}

void save_decoder(const DecoderWeights& w, const std::string& path) { io::write_file(path, encode_decoder(w)); }
DecoderWeights load_decoder(const std::string& path) { return decode_decoder(io::read_file(path), path); }

io::Bytes encode_lora_delta(const DecoderWeights& w) {
  if (!w.lora) fail(ErrorKind::State, "encode_lora_delta: decoder has no LoRA factors");
  io::Writer out;
  out.magic("DPQL");
  out.u32(kLoraVersion);
  out.u32(static_cast<std::uint32_t>(w.D));
  out.u32(static_cast<std::uint32_t>(w.H));
  out.u32(static_cast<std::uint32_t>(w.lora->rank));
  write_lora(out, *w.lora);
  return out.take();
}

DecoderWeights apply_lora_delta(DecoderWeights base, const io::Bytes& bytes, const std::string& origin) {
  io::Reader r(bytes, origin);
  r.expect_magic("DPQL");
  if (const auto v = r.u32(); v != kLoraVersion) r.error("unsupported version " + std::to_string(v));
  const std::uint32_t D = r.u32();
  const std::uint32_t H = r.u32();
  const std::uint32_t rank = r.u32();
  if (D != base.D || H != base.H) r.error("delta D/H do not match the base decoder");
  if (rank == 0) r.error("zero rank");
  base.lora = read_lora(r, D, H, rank);
  r.expect_end();
  return base;
}

void save_lora_delta(const DecoderWeights& w, const std::string& path) {
  io::write_file(path, encode_lora_delta(w));
}

}  // namespace dpq
