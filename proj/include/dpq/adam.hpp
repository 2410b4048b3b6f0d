#pragma once

#include <cstdint>
#include <utility>

#include "dpq/matrix.hpp"

namespace dpq {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Moments for one parameter tensor. The step counter lives here so that a
// group of tensors updated together stays in lockstep.
struct AdamState {
  std::uint64_t step = 0;
  Matrix m;
  Matrix v;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState for_shape(std::size_t rows, std::size_t cols, const AdamConfig& cfg = {});
};

// Bias-corrected Adam update. Throws ErrorKind::Numeric on non-finite grads.
std::pair<AdamState, Matrix> adam_step(AdamState state, Matrix param, const Matrix& grad);

// Same update, in place.
void adam_update(AdamState& state, Matrix& param, const Matrix& grad);

}  // namespace dpq
