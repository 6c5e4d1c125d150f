#pragma once

#include <span>

#include "ngcl/graph.hpp"
#include "ngcl/model.hpp"
#include "ngcl/tensor.hpp"

namespace ngcl {

struct SimilarityConfig {
  double tau = 0.2;
  bool normalize = true;

  void validate() const;
};

struct LossBreakdown {
  double align = 0.0;
  double sparsity = 0.0;
  double lambda = 0.0;
  double total = 0.0;
};

/// InfoNCE with in-batch negatives: for anchor i the positive logit is
/// a_i.p_i / tau and the negatives are a_i.a_j / tau for j != i.
NodeId info_nce(Graph& g, NodeId anchors, NodeId positives, const SimilarityConfig& cfg);
double info_nce(const Tensor& anchors, const Tensor& positives, const SimilarityConfig& cfg);

/// Mean over rows of the per-row sum of KL(Bern(alpha) || Bern(rho)).
NodeId bernoulli_kl(Graph& g, NodeId alpha, double rho);
double bernoulli_kl(const Tensor& alpha, double rho);

struct LossNodes {
  NodeId align;
  NodeId sparsity;
  NodeId total;
  double lambda = 0.0;

  LossBreakdown values(const Graph& g) const;
};

/// align = InfoNCE on the gated features of both views; sparsity = KL of the
/// anchor view's alpha (mean of both views when `symmetric_kl`); models
/// without a gate report sparsity 0.
LossNodes total_loss(Graph& g, const ForwardNodes& anchor, const ForwardNodes& positive, const SimilarityConfig& cfg,
                     double lambda, double rho, bool symmetric_kl = false);

/// sum_k z_k z'_k / pi_k.
double ipw_similarity(std::span<const double> z, std::span<const double> z_prime, std::span<const double> pi);

}  // namespace ngcl
