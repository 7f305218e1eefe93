// Central finite-difference verification of reverse-mode gradients.
#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>

#include "raserec/tensor.hpp"

namespace raserec {

// loss_fn must be deterministic at fixed parameter values (dropout off).
// analytic_grads_fn(params) fills each parameter's grad for the current
// values. Returns max over all checked coordinates of
// |analytic - central difference| / max(1, |analytic|).
//
// `stride` limits work on large parameters (every stride-th coordinate).
template <typename T>
double grad_check(const std::function<double()>& loss_fn,
                  const std::function<void()>& analytic_grads_fn, const ParamRefs<T>& params,
                  double eps, std::size_t stride = 1) {
  zero_grads(params);
  analytic_grads_fn();

  double max_rel = 0;
  for (auto* p : params) {
    for (std::size_t j = 0; j < p->value.numel(); j += stride) {
      T saved = p->value[j];
      p->value[j] = static_cast<T>(saved + eps);
      double plus = loss_fn();
      p->value[j] = static_cast<T>(saved - eps);
      double minus = loss_fn();
      p->value[j] = saved;
      if (!std::isfinite(plus) || !std::isfinite(minus))
        throw std::runtime_error("grad_check: non-finite loss perturbing " + p->name +
                                 "[" + std::to_string(j) + "]");
      double numeric = (plus - minus) / (2 * eps);
      double analytic = static_cast<double>(p->grad[j]);
      double rel = std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic));
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace raserec
