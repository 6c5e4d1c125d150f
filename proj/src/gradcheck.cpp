#include "ngcl/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace ngcl {
namespace {

struct Eval {
  double value;
  std::vector<std::vector<bool>> relu;
};

Eval evaluate(const LossBuilder& f, const std::vector<Tensor>& params, const std::vector<Tensor>* frozen) {
  Graph g;
  if (frozen) g.freeze_stop_gradients(*frozen);
  std::vector<NodeId> ids;
  ids.reserve(params.size());
  for (const auto& p : params) ids.push_back(g.parameter(p));
  const NodeId out = f(g, ids);
  const double v = g.value(out).item();
  if (!std::isfinite(v)) throw std::runtime_error("grad_check: loss is not finite");
  return {v, g.relu_patterns()};
}

}  // namespace

GradCheckResult grad_check(const LossBuilder& f, std::span<const Tensor> params, double eps) {
  if (!(eps >= 1e-8 && eps <= 1e-4)) throw std::invalid_argument("grad_check: eps must lie in [1e-8, 1e-4]");
  std::vector<Tensor> theta(params.begin(), params.end());

  Graph g;
  std::vector<NodeId> ids;
  for (const auto& p : theta) ids.push_back(g.parameter(p));
  const NodeId out = f(g, ids);
  if (!std::isfinite(g.value(out).item())) throw std::runtime_error("grad_check: loss is not finite");
  const Gradients grads = g.backward(out);
  const std::vector<Tensor> frozen = g.stop_gradient_values();
  const auto base_relu = g.relu_patterns();

  GradCheckResult res;
  for (std::size_t p = 0; p < theta.size(); ++p) {
    const Tensor& analytic = grads[ids[p]];
    for (std::size_t i = 0; i < theta[p].size(); ++i) {
      const double orig = theta[p][i];
      theta[p][i] = orig + eps;
      const Eval hi = evaluate(f, theta, &frozen);
      theta[p][i] = orig - eps;
      const Eval lo = evaluate(f, theta, &frozen);
      theta[p][i] = orig;
      if (hi.relu != base_relu || lo.relu != base_relu) {
        ++res.excluded;
        continue;
      }
      const double numeric = (hi.value - lo.value) / (2.0 * eps);
      const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric));
      res.max_rel_error = std::max(res.max_rel_error, err);
      ++res.checked;
    }
  }
  return res;
}

}  // namespace ngcl
