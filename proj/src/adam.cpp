#include "dpq/adam.hpp"

#include <cmath>

#include "dpq/error.hpp"

namespace dpq {

AdamState AdamState::for_shape(std::size_t rows, std::size_t cols, const AdamConfig& cfg) {
  AdamState s;
  s.m = Matrix(rows, cols);
  s.v = Matrix(rows, cols);
  s.lr = cfg.lr;
  s.beta1 = cfg.beta1;
  s.beta2 = cfg.beta2;
  s.eps = cfg.eps;
  return s;
}

void adam_update(AdamState& state, Matrix& param, const Matrix& grad) {
  if (!param.same_shape(grad) || !param.same_shape(state.m) || !param.same_shape(state.v)) {
    fail(ErrorKind::Dimension, "adam: parameter, gradient and moment shapes differ");
  }
  if (!grad.all_finite()) fail(ErrorKind::Numeric, "adam: non-finite gradient");
  if (!(state.beta1 >= 0.0 && state.beta1 < 1.0 && state.beta2 >= 0.0 && state.beta2 < 1.0) ||
      !(state.eps > 0.0)) {
    fail(ErrorKind::Config, "adam: betas must lie in [0,1) and eps must be positive");
  }

  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);

  double* p = param.data();
  double* m = state.m.data();
  double* v = state.v.data();
  const double* g = grad.data();
  for (std::size_t i = 0; i < param.size(); ++i) {
    m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
    v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
    const double m_hat = m[i] / c1;
    const double v_hat = v[i] / c2;
    p[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
  }
}

std::pair<AdamState, Matrix> adam_step(AdamState state, Matrix param, const Matrix& grad) {
  adam_update(state, param, grad);
  return {std::move(state), std::move(param)};
}

}  // namespace dpq
