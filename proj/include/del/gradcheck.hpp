#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "del/tensor.hpp"

namespace del {

// Named handle on one trainable tensor and its gradient accumulator.
// Layers hand these out; the optimizer, checkpoints and grad checks all
// operate through them.
struct Param {
  std::string name;
  Tensor* value = nullptr;
  Tensor* grad = nullptr;
};

// Central-finite-difference gradient verification.
//
// Call after one forward/backward pass so that every grad tensor holds the
// analytic gradient of the scalar loss. `loss` must recompute that loss at
// the parameters' current values (forward only). Each coordinate is probed
// at +-epsilon and compared against its analytic entry; the per-coordinate
// error is |a - n| / max(1, |a|, |n|), so tiny gradients are judged on
// absolute error. Returns the maximum over all coordinates.
inline double max_rel_grad_error(const std::function<double()>& loss,
                                 std::span<const Param> params,
                                 double epsilon) {
  double worst = 0.0;
  for (const Param& p : params) {
    Tensor& value = *p.value;
    const Tensor& grad = *p.grad;
    if (!value.same_shape(grad))
      throw std::invalid_argument("grad_check: value/grad shape mismatch for " +
                                  p.name);
    for (int i = 0; i < value.size(); ++i) {
      const double saved = value(i);
      value(i) = saved + epsilon;
      const double fp = loss();
      value(i) = saved - epsilon;
      const double fm = loss();
      value(i) = saved;
      if (!std::isfinite(fp) || !std::isfinite(fm))
        throw std::runtime_error("grad_check: non-finite loss at " + p.name);
      const double numeric = (fp - fm) / (2.0 * epsilon);
      const double analytic = grad(i);
      const double denom =
          std::max({1.0, std::fabs(analytic), std::fabs(numeric)});
      worst = std::max(worst, std::fabs(analytic - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace del
