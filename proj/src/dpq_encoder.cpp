#include "dpq/dpq_encoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dpq/error.hpp"
#include "dpq/simd.hpp"

namespace dpq {

Temperature::Temperature(double t) : tau(t) {
  if (!(t > 0.0) || !std::isfinite(t)) fail(ErrorKind::Config, "temperature must be positive");
}

std::vector<double> softmax_neg_distances(std::span<const double> distances, Temperature tau) {
  std::vector<double> w(distances.size());
  if (w.empty()) return w;
  const double dmin = *std::min_element(distances.begin(), distances.end());
  double total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = std::exp(-(distances[i] - dmin) / tau.tau);
    total += w[i];
  }
  for (double& v : w) v /= total;
  return w;
}

std::vector<double> soft_assign(std::span<const double> x_m, const Matrix& sub_codebook, Temperature tau) {
  if (x_m.size() != sub_codebook.cols()) fail(ErrorKind::Dimension, "soft_assign: sub-vector length");
  std::vector<double> d(sub_codebook.rows());
  simd::squared_l2_rows(x_m.data(), sub_codebook.data(), sub_codebook.rows(), x_m.size(), d.data());
  for (double& v : d) v = std::sqrt(v);
  return softmax_neg_distances(d, tau);
}

EncoderForward encode_forward(const Matrix& x, const Codebook& codebook, Temperature tau) {
  if (x.cols() != codebook.dim()) {
    fail(ErrorKind::Dimension, "encode_forward: input dim " + std::to_string(x.cols()) +
                                   " != codebook dim " + std::to_string(codebook.dim()));
  }
  EncoderForward f;
  f.N = x.rows();
  f.M = codebook.M;
  f.K = codebook.K;
  f.sub_dim = codebook.sub_dim;
  f.soft_weights.resize(f.N * f.M * f.K);
  f.distances.resize(f.N * f.M * f.K);
  f.hard_codes.resize(f.N * f.M);
  f.output = Matrix(f.N, x.cols());

  std::vector<double> sq(f.K);
  for (std::size_t n = 0; n < f.N; ++n) {
    for (std::size_t m = 0; m < f.M; ++m) {
      const double* xm = x.row(n).data() + m * f.sub_dim;
      const Matrix& cm = codebook.centroids[m];
      simd::squared_l2_rows(xm, cm.data(), f.K, f.sub_dim, sq.data());

      // Hard code from squared distances, exactly as pq_encode picks it.
      std::uint32_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < f.K; ++k) {
        if (sq[k] < best_d) {
          best_d = sq[k];
          best = static_cast<std::uint32_t>(k);
        }
      }
      f.hard_codes[n * f.M + m] = best;

      double* dist = f.distances.data() + (n * f.M + m) * f.K;
      for (std::size_t k = 0; k < f.K; ++k) dist[k] = std::sqrt(sq[k]);
      const auto w = softmax_neg_distances({dist, f.K}, tau);
      std::copy(w.begin(), w.end(), f.soft_weights.begin() + static_cast<std::ptrdiff_t>((n * f.M + m) * f.K));

      const auto c = cm.row(best);
      std::copy(c.begin(), c.end(), f.output.row(n).begin() + static_cast<std::ptrdiff_t>(m * f.sub_dim));
    }
  }
  f.cache = EncoderForward::Cache{x, codebook, tau.tau};
  return f;
}

Matrix soft_reconstruct(const Matrix& x, const Codebook& codebook, Temperature tau) {
  if (x.cols() != codebook.dim()) fail(ErrorKind::Dimension, "soft_reconstruct: input dim");
  Matrix out(x.rows(), x.cols());
  for (std::size_t n = 0; n < x.rows(); ++n) {
    for (std::size_t m = 0; m < codebook.M; ++m) {
      const auto xm = x.row(n).subspan(m * codebook.sub_dim, codebook.sub_dim);
      const auto w = soft_assign(xm, codebook.centroids[m], tau);
      double* dst = out.row(n).data() + m * codebook.sub_dim;
      for (std::size_t k = 0; k < codebook.K; ++k)
        simd::axpy(w[k], codebook.centroids[m].row(k).data(), dst, codebook.sub_dim);
    }
  }
  return out;
}

EncoderGrads encode_backward(const EncoderForward& fwd, const Matrix& grad_out) {
  if (!fwd.cache) fail(ErrorKind::State, "encode_backward: forward cache missing");
  if (grad_out.rows() != fwd.N || grad_out.cols() != fwd.M * fwd.sub_dim)
    fail(ErrorKind::Dimension, "encode_backward: grad_out shape");

  const auto& x = fwd.cache->input;
  const auto& cb = fwd.cache->codebook;
  const double inv_tau = 1.0 / fwd.cache->tau;
  const std::size_t dsub = fwd.sub_dim;

  EncoderGrads g;
  g.centroids.assign(fwd.M, Matrix(fwd.K, dsub));
  g.input = Matrix(fwd.N, grad_out.cols());

  std::vector<double> g_dot_c(fwd.K);
  std::vector<double> u(dsub);
  for (std::size_t n = 0; n < fwd.N; ++n) {
    for (std::size_t m = 0; m < fwd.M; ++m) {
      const double* gm = grad_out.row(n).data() + m * dsub;
      const double* xm = x.row(n).data() + m * dsub;
      const double* a = fwd.soft_weights.data() + (n * fwd.M + m) * fwd.K;
      const double* d = fwd.distances.data() + (n * fwd.M + m) * fwd.K;
      const Matrix& cm = cb.centroids[m];
      Matrix& gc = g.centroids[m];
      double* gx = g.input.row(n).data() + m * dsub;

      // dL/ds = g; s = sum a_i c_i.  g.s = sum a_i (g.c_i)
      double g_dot_s = 0.0;
      for (std::size_t k = 0; k < fwd.K; ++k) {
        g_dot_c[k] = simd::dot(gm, cm.row(k).data(), dsub);
        g_dot_s += a[k] * g_dot_c[k];
      }
      for (std::size_t k = 0; k < fwd.K; ++k) {
        // Linear-combination term.
        simd::axpy(a[k], gm, gc.row(k).data(), dsub);
        // Softmax through the distance: dL/dd_k = -(1/tau) a_k (g.c_k - g.s).
        const double dl_dd = -inv_tau * a[k] * (g_dot_c[k] - g_dot_s);
        if (dl_dd == 0.0 || d[k] == 0.0) continue;  // subgradient 0 at d = 0
        for (std::size_t j = 0; j < dsub; ++j) u[j] = (xm[j] - cm(k, j)) / d[k];
        simd::axpy(dl_dd, u.data(), gx, dsub);
        simd::axpy(-dl_dd, u.data(), gc.row(k).data(), dsub);
      }
    }
  }
  return g;
}

}  // namespace dpq
