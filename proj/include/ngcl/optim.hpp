#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ngcl/tensor.hpp"

namespace ngcl {

/// Momentum buffers for one parameter group.
struct OptState {
  std::vector<Tensor> velocity;
  std::uint64_t step = 0;
};

/// v <- momentum*v + g + wd*w ; w <- w - lr*v
void sgd_step(std::span<Tensor* const> params, std::span<const Tensor> grads, OptState& state, double lr,
              double momentum, double weight_decay);

/// trust * |w| / (|g| + wd*|w| + 1e-9); zero when |w| = 0.
double lars_local_lr(const Tensor& w, const Tensor& g, double trust_coef, double weight_decay);

/// Per tensor: v <- momentum*v + lr*local_lr*(g + wd*w) ; w <- w - v
void lars_step(std::span<Tensor* const> params, std::span<const Tensor> grads, OptState& state, double lr,
               double trust_coef, double momentum, double weight_decay);

}  // namespace ngcl
