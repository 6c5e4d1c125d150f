#include "ngcl/optim.hpp"

#include <stdexcept>

namespace ngcl {
namespace {

void prepare(std::span<Tensor* const> params, std::span<const Tensor> grads, OptState& state) {
  if (params.size() != grads.size())
    throw ShapeError("optimizer: " + std::to_string(params.size()) + " params but " + std::to_string(grads.size()) +
                     " gradients");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (!params[i]->same_shape(grads[i]))
      throw ShapeError("optimizer: param " + std::to_string(i) + " is " + params[i]->shape_str() + " but gradient is " +
                       grads[i].shape_str());
  if (state.velocity.empty()) {
    for (auto* p : params) state.velocity.emplace_back(p->rows(), p->cols());
  } else if (state.velocity.size() != params.size()) {
    throw ShapeError("optimizer: state holds " + std::to_string(state.velocity.size()) + " buffers for " +
                     std::to_string(params.size()) + " params");
  }
  for (std::size_t i = 0; i < params.size(); ++i)
    if (!state.velocity[i].same_shape(*params[i]))
      throw ShapeError("optimizer: momentum buffer " + std::to_string(i) + " shape mismatch");
}

}  // namespace

void sgd_step(std::span<Tensor* const> params, std::span<const Tensor> grads, OptState& state, double lr,
              double momentum, double weight_decay) {
  prepare(params, grads, state);
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& w = *params[p];
    Tensor& v = state.velocity[p];
    const Tensor& g = grads[p];
    for (std::size_t i = 0; i < w.size(); ++i) {
      v[i] = momentum * v[i] + g[i] + weight_decay * w[i];
      w[i] -= lr * v[i];
    }
  }
  ++state.step;
}

double lars_local_lr(const Tensor& w, const Tensor& g, double trust_coef, double weight_decay) {
  const double wn = w.frobenius_norm();
  if (wn == 0.0) return 0.0;
  return trust_coef * wn / (g.frobenius_norm() + weight_decay * wn + 1e-9);
}

void lars_step(std::span<Tensor* const> params, std::span<const Tensor> grads, OptState& state, double lr,
               double trust_coef, double momentum, double weight_decay) {
  prepare(params, grads, state);
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& w = *params[p];
    Tensor& v = state.velocity[p];
    const Tensor& g = grads[p];
    const double step = lr * lars_local_lr(w, g, trust_coef, weight_decay);
    for (std::size_t i = 0; i < w.size(); ++i) {
      v[i] = momentum * v[i] + step * (g[i] + weight_decay * w[i]);
      w[i] -= v[i];
    }
  }
  ++state.step;
}

}  // namespace ngcl
