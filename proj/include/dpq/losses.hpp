#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "dpq/matrix.hpp"

namespace dpq {

enum class LossVariant { TripletCombined, L2, NPair };

std::string_view to_string(LossVariant v) noexcept;
LossVariant parse_loss_variant(std::string_view name);

struct LossConfig {
  double margin = 0.9;
  double lambda_d = 1.0;
  LossVariant variant = LossVariant::TripletCombined;
  std::size_t npair_n = 10;
};

struct LossResult {
  double loss = 0.0;
  Matrix grad;  // d loss / d reconstruction
  // Triplet components (zero for other variants).
  double raw_term = 0.0;
  double d_term = 0.0;
};

double positive_dist(std::span<const double> x, std::span<const double> x_hat);

struct MinedNegatives {
  std::vector<double> neg_raw;              // min_{j != i} ||x_j - x_hat_i||
  std::vector<double> neg_d;                // min_{j != i} ||x_hat_i - x_hat_j||
  std::vector<std::size_t> raw_index;
  std::vector<std::size_t> d_index;
};

// In-batch hardest negatives. Rows sharing a group id (when `groups` is
// non-empty) are never negatives of each other. Ties go to the lowest index.
MinedNegatives mine_negatives(const Matrix& x, const Matrix& x_hat,
                              std::span<const std::uint64_t> groups = {});

// mean hinge(m + pos - neg_raw) + lambda_d * mean hinge(m + pos - neg_d).
// Mined indices are constants of the gradient.
LossResult triplet_combined(const Matrix& x, const Matrix& x_hat, const LossConfig& cfg,
                            std::span<const std::uint64_t> groups = {});
// Same loss with negatives supplied by the caller.
LossResult triplet_with_negatives(const Matrix& x, const Matrix& x_hat, const LossConfig& cfg,
                                  const MinedNegatives& neg);

// (1/N) sum ||x_hat - x||^2
LossResult l2_loss(const Matrix& x, const Matrix& x_hat);

struct NPairResult {
  double loss = 0.0;
  Matrix grad_anchors;
  Matrix grad_positives;
  Matrix grad_negatives;
};

// (1/N) sum_i log(1 + sum_j exp(a_i.n_ij - a_i.p_i)); negatives holds N*J
// rows, J consecutive rows per anchor.
NPairResult npair_loss(const Matrix& anchors, const Matrix& positives, const Matrix& negatives);

// Training form: the batch is cut into groups of npair_n; anchors are the
// reconstructions, positives their originals, negatives the other originals
// in the group. Gradient is w.r.t. the reconstructions only.
LossResult npair_batch_loss(const Matrix& x, const Matrix& x_hat, std::size_t npair_n);

LossResult compute_loss(const Matrix& x, const Matrix& x_hat, const LossConfig& cfg,
                        std::span<const std::uint64_t> groups = {});

}  // namespace dpq
