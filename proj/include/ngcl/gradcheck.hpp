#pragma once

#include <functional>
#include <span>
#include <vector>

#include "ngcl/graph.hpp"
#include "ngcl/tensor.hpp"

namespace ngcl {

/// Builds a scalar loss from parameter nodes. Must be deterministic: the
/// checker rebuilds it once per perturbed coordinate.
using LossBuilder = std::function<NodeId(Graph&, std::span<const NodeId>)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  /// Coordinates whose perturbation flips a relu sign (non-differentiable point).
  std::size_t excluded = 0;
};

/// Central differences against the backward pass, per coordinate of every
/// parameter. Stop-gradient values are frozen at the unperturbed point, so the
/// probe differentiates the same surrogate the backward pass does (this is
/// what makes straight-through masks checkable).
/// Error per coordinate: |analytic - numeric| / max(1, |numeric|).
GradCheckResult grad_check(const LossBuilder& f, std::span<const Tensor> params, double eps = 1e-6);

}  // namespace ngcl
