#include "dpq/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "dpq/error.hpp"
#include "dpq/parallel.hpp"
#include "dpq/simd.hpp"

namespace dpq {
namespace {

void require_pair(const Matrix& x, const Matrix& x_hat, const char* op) {
  if (!x.same_shape(x_hat)) fail(ErrorKind::Dimension, std::string(op) + ": x and x_hat shapes differ");
}

// g += s * (a - b) / ||a - b||, skipped when the distance is zero.
void add_unit_direction(double s, std::span<const double> a, std::span<const double> b, double dist,
                        std::span<double> g) {
  if (dist == 0.0 || s == 0.0) return;
  const double k = s / dist;
  for (std::size_t j = 0; j < g.size(); ++j) g[j] += k * (a[j] - b[j]);
}

}  // namespace

std::string_view to_string(LossVariant v) noexcept {
  switch (v) {
    case LossVariant::TripletCombined: return "triplet_combined";
    case LossVariant::L2: return "l2";
    case LossVariant::NPair: return "npair";
  }
  return "unknown";
}

LossVariant parse_loss_variant(std::string_view name) {
  if (name == "triplet_combined" || name == "triplet") return LossVariant::TripletCombined;
  if (name == "l2") return LossVariant::L2;
  if (name == "npair") return LossVariant::NPair;
  fail(ErrorKind::Config, "unknown loss variant: " + std::string(name));
}

double positive_dist(std::span<const double> x, std::span<const double> x_hat) {
  return l2_distance(x, x_hat);
}

MinedNegatives mine_negatives(const Matrix& x, const Matrix& x_hat, std::span<const std::uint64_t> groups) {
  require_pair(x, x_hat, "mine_negatives");
  const std::size_t n = x.rows();
  if (n < 2) fail(ErrorKind::Input, "mine_negatives: batch too small (need N >= 2)");
  if (!groups.empty() && groups.size() != n) fail(ErrorKind::Dimension, "mine_negatives: groups length");

  MinedNegatives out;
  out.neg_raw.assign(n, std::numeric_limits<double>::infinity());
  out.neg_d.assign(n, std::numeric_limits<double>::infinity());
  out.raw_index.assign(n, n);
  out.d_index.assign(n, n);
  const std::size_t d = x.cols();

  parallel_for(n, [&](std::size_t begin, std::size_t end) {
    const auto& k = simd::kernels();
    for (std::size_t i = begin; i < end; ++i) {
      double best_raw = std::numeric_limits<double>::infinity();
      double best_d = std::numeric_limits<double>::infinity();
      std::size_t arg_raw = n, arg_d = n;
      const double* xi_hat = x_hat.row(i).data();
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i || (!groups.empty() && groups[j] == groups[i])) continue;
        const double r = k.squared_l2(x.row(j).data(), xi_hat, d);
        if (r < best_raw) {
          best_raw = r;
          arg_raw = j;
        }
        const double q = k.squared_l2(x_hat.row(j).data(), xi_hat, d);
        if (q < best_d) {
          best_d = q;
          arg_d = j;
        }
      }
      out.neg_raw[i] = std::sqrt(best_raw);
      out.neg_d[i] = std::sqrt(best_d);
      out.raw_index[i] = arg_raw;
      out.d_index[i] = arg_d;
    }
  });
  for (std::size_t i = 0; i < n; ++i)
    if (out.raw_index[i] == n) fail(ErrorKind::Input, "mine_negatives: row " + std::to_string(i) + " has no negative");
  return out;
}

LossResult triplet_with_negatives(const Matrix& x, const Matrix& x_hat, const LossConfig& cfg,
                                  const MinedNegatives& neg) {
  require_pair(x, x_hat, "triplet");
  if (cfg.margin < 0.0 || cfg.lambda_d < 0.0) fail(ErrorKind::Config, "triplet: margin and lambda_d must be >= 0");
  const std::size_t n = x.rows();
  const double inv_n = 1.0 / static_cast<double>(n);

  LossResult res;
  res.grad = Matrix(n, x.cols());
  double raw_sum = 0.0, d_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto xi = x.row(i);
    const auto hi = x_hat.row(i);
    const double pos = positive_dist(xi, hi);

    const double h_raw = cfg.margin + pos - neg.neg_raw[i];
    if (h_raw > 0.0) {
      raw_sum += h_raw;
      add_unit_direction(inv_n, hi, xi, pos, res.grad.row(i));
      add_unit_direction(-inv_n, hi, x.row(neg.raw_index[i]), neg.neg_raw[i], res.grad.row(i));
    }

    const double h_d = cfg.margin + pos - neg.neg_d[i];
    if (h_d > 0.0) {
      d_sum += h_d;
      const double s = cfg.lambda_d * inv_n;
      const std::size_t j = neg.d_index[i];
      add_unit_direction(s, hi, xi, pos, res.grad.row(i));
      add_unit_direction(-s, hi, x_hat.row(j), neg.neg_d[i], res.grad.row(i));
      add_unit_direction(-s, x_hat.row(j), hi, neg.neg_d[i], res.grad.row(j));
    }
  }
  res.raw_term = raw_sum * inv_n;
  res.d_term = d_sum * inv_n;
  res.loss = res.raw_term + cfg.lambda_d * res.d_term;
  return res;
}

LossResult triplet_combined(const Matrix& x, const Matrix& x_hat, const LossConfig& cfg,
                            std::span<const std::uint64_t> groups) {
  return triplet_with_negatives(x, x_hat, cfg, mine_negatives(x, x_hat, groups));
}

LossResult l2_loss(const Matrix& x, const Matrix& x_hat) {
  require_pair(x, x_hat, "l2_loss");
  const double inv_n = 1.0 / static_cast<double>(std::max<std::size_t>(x.rows(), 1));
  LossResult res;
  res.grad = Matrix(x.rows(), x.cols());
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = x_hat.data()[i] - x.data()[i];
    total += r * r;
    res.grad.data()[i] = 2.0 * r * inv_n;
  }
  res.loss = total * inv_n;
  return res;
}

NPairResult npair_loss(const Matrix& anchors, const Matrix& positives, const Matrix& negatives) {
  require_pair(anchors, positives, "npair_loss");
  const std::size_t n = anchors.rows();
  if (n == 0) fail(ErrorKind::Input, "npair_loss: no anchors");
  if (negatives.cols() != anchors.cols() || negatives.rows() % n != 0)
    fail(ErrorKind::Dimension, "npair_loss: negatives must hold J rows per anchor");
  const std::size_t per = negatives.rows() / n;
  const std::size_t e = anchors.cols();
  const double inv_n = 1.0 / static_cast<double>(n);

  NPairResult res;
  res.grad_anchors = Matrix(n, e);
  res.grad_positives = Matrix(n, e);
  res.grad_negatives = Matrix(negatives.rows(), e);
  std::vector<double> s(per);
  for (std::size_t i = 0; i < n; ++i) {
    const double* a = anchors.row(i).data();
    const double* p = positives.row(i).data();
    const double ap = simd::dot(a, p, e);
    // log(1 + sum exp s_j) = logsumexp(0, s_1..s_J)
    double top = 0.0;
    for (std::size_t j = 0; j < per; ++j) {
      s[j] = simd::dot(a, negatives.row(i * per + j).data(), e) - ap;
      top = std::max(top, s[j]);
    }
    double z = std::exp(-top);
    for (std::size_t j = 0; j < per; ++j) z += std::exp(s[j] - top);
    res.loss += (top + std::log(z)) * inv_n;

    // d/ds_j = softmax weight of s_j among {0, s}.
    double w_sum = 0.0;
    for (std::size_t j = 0; j < per; ++j) {
      const double w = std::exp(s[j] - top) / z * inv_n;
      w_sum += w;
      const double* nj = negatives.row(i * per + j).data();
      simd::axpy(w, nj, res.grad_anchors.row(i).data(), e);
      simd::axpy(w, a, res.grad_negatives.row(i * per + j).data(), e);
    }
    simd::axpy(-w_sum, p, res.grad_anchors.row(i).data(), e);
    simd::axpy(-w_sum, a, res.grad_positives.row(i).data(), e);
  }
  return res;
}

LossResult npair_batch_loss(const Matrix& x, const Matrix& x_hat, std::size_t npair_n) {
  require_pair(x, x_hat, "npair_batch_loss");
  if (npair_n < 2) fail(ErrorKind::Config, "npair: group size must be >= 2");
  const std::size_t groups = x.rows() / npair_n;
  if (groups == 0) fail(ErrorKind::Input, "npair: batch smaller than one group");

  LossResult res;
  res.grad = Matrix(x.rows(), x.cols());
  for (std::size_t g = 0; g < groups; ++g) {
    const std::size_t base = g * npair_n;
    std::vector<std::size_t> rows(npair_n);
    for (std::size_t i = 0; i < npair_n; ++i) rows[i] = base + i;
    const Matrix anchors = gather_rows(x_hat, rows);
    const Matrix positives = gather_rows(x, rows);
    std::vector<std::size_t> neg_rows;
    neg_rows.reserve(npair_n * (npair_n - 1));
    for (std::size_t i = 0; i < npair_n; ++i)
      for (std::size_t j = 0; j < npair_n; ++j)
        if (j != i) neg_rows.push_back(base + j);
    const NPairResult r = npair_loss(anchors, positives, gather_rows(x, neg_rows));
    const double w = 1.0 / static_cast<double>(groups);
    res.loss += w * r.loss;
    for (std::size_t i = 0; i < npair_n; ++i)
      simd::axpy(w, r.grad_anchors.row(i).data(), res.grad.row(base + i).data(), x.cols());
  }
  return res;
}

LossResult compute_loss(const Matrix& x, const Matrix& x_hat, const LossConfig& cfg,
                        std::span<const std::uint64_t> groups) {
  switch (cfg.variant) {
    case LossVariant::TripletCombined: return triplet_combined(x, x_hat, cfg, groups);
    case LossVariant::L2: return l2_loss(x, x_hat);
    case LossVariant::NPair: return npair_batch_loss(x, x_hat, cfg.npair_n);
  }
  fail(ErrorKind::Config, "unknown loss variant");
}

}  // namespace dpq
