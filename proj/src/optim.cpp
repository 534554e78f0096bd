#include "del/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace del {

AdamState AdamState::for_param(const Tensor& param) {
  AdamState s;
  s.m = Tensor(param.shape());
  s.v = Tensor(param.shape());
  return s;
}

void adam_step(Tensor& param, const Tensor& grad, AdamState& state, double lr) {
  if (!param.same_shape(grad) || !param.same_shape(state.m) ||
      !param.same_shape(state.v))
    throw std::invalid_argument("adam_step: shape mismatch");
  state.step += 1;
  const double b1 = state.beta1, b2 = state.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  double* p = param.data();
  const double* g = grad.data();
  double* m = state.m.data();
  double* v = state.v.data();
  for (int i = 0; i < param.size(); ++i) {
    m[i] = b1 * m[i] + (1.0 - b1) * g[i];
    v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
    const double mhat = m[i] / c1;
    const double vhat = v[i] / c2;
    p[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
  }
}

double noam_lr(long step, int d_model, int warmup) {
  if (step < 1) throw std::invalid_argument("noam_lr: step must be >= 1");
  if (d_model < 1 || warmup < 1)
    throw std::invalid_argument("noam_lr: d_model and warmup must be >= 1");
  const double s = static_cast<double>(step);
  const double w = static_cast<double>(warmup);
  return 1.0 / std::sqrt(static_cast<double>(d_model)) *
         std::min(1.0 / std::sqrt(s), s / (w * std::sqrt(w)));
}

}  // namespace del
