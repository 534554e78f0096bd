#pragma once

#include "del/tensor.hpp"

namespace del {

// Adam accumulator for one parameter tensor. m and v always share the
// parameter's shape; step counts completed updates.
struct AdamState {
  Tensor m;
  Tensor v;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState for_param(const Tensor& param);
};

// One Adam update with bias correction. Increments state.step.
void adam_step(Tensor& param, const Tensor& grad, AdamState& state, double lr);

// Warmup-then-decay schedule: d_model^(-1/2) * min(step^(-1/2),
// step * warmup^(-3/2)). Peaks exactly at step == warmup. step must be >= 1.
double noam_lr(long step, int d_model, int warmup);

}  // namespace del
