#include "ngcl/objective.hpp"

#include <cmath>
#include <stdexcept>

namespace ngcl {

void SimilarityConfig::validate() const {
  if (!(tau > 0.0)) throw std::invalid_argument("temperature must be > 0");
}

NodeId info_nce(Graph& g, NodeId anchors, NodeId positives, const SimilarityConfig& cfg) {
  cfg.validate();
  const Tensor& A = g.value(anchors);
  const Tensor& P = g.value(positives);
  if (!A.same_shape(P)) throw ShapeError("info_nce: anchors " + A.shape_str() + " vs positives " + P.shape_str());
  const std::size_t n = A.rows();
  if (n < 2) throw std::invalid_argument("info_nce: need at least 2 rows for in-batch negatives");

  NodeId a = anchors, p = positives;
  if (cfg.normalize) {
    a = g.l2_normalize_rows(a);
    p = g.l2_normalize_rows(p);
  }
  Tensor off(n, n, 1.0);
  for (std::size_t i = 0; i < n; ++i) off(i, i) = 0.0;

  const NodeId sp = g.row_sum(g.mul(a, p));  // n x 1
  const NodeId neg = g.mul(g.matmul(a, g.transpose(a)), g.constant(std::move(off)));
  const NodeId diag = g.mul(g.matmul(sp, g.constant(Tensor::ones(1, n))), g.constant(Tensor::identity(n)));
  const double inv_tau = 1.0 / cfg.tau;
  const NodeId logits = g.scale(g.add(neg, diag), inv_tau);
  return g.mean_all(g.sub(g.logsumexp_rows(logits), g.scale(sp, inv_tau)));
}

double info_nce(const Tensor& anchors, const Tensor& positives, const SimilarityConfig& cfg) {
  Graph g;
  return g.value(info_nce(g, g.constant(anchors), g.constant(positives), cfg)).item();
}

NodeId bernoulli_kl(Graph& g, NodeId alpha, double rho) {
  if (!(rho > 0.0 && rho < 1.0)) throw std::invalid_argument("bernoulli_kl: rho must lie in (0,1)");
  const Tensor& a = g.value(alpha);
  const std::size_t n = a.rows(), K = a.cols();
  const NodeId one_minus = g.sub(g.constant(Tensor::ones(n, K)), alpha);
  const NodeId t1 = g.mul(alpha, g.add(g.log(alpha), g.constant(Tensor(n, K, -std::log(rho)))));
  const NodeId t2 = g.mul(one_minus, g.add(g.log(one_minus), g.constant(Tensor(n, K, -std::log(1.0 - rho)))));
  // mean over rows of the row sum == K * mean over all entries
  return g.scale(g.mean_all(g.add(t1, t2)), static_cast<double>(K));
}

double bernoulli_kl(const Tensor& alpha, double rho) {
  Graph g;
  return g.value(bernoulli_kl(g, g.constant(alpha), rho)).item();
}

LossBreakdown LossNodes::values(const Graph& g) const {
  return LossBreakdown{g.value(align).item(), g.value(sparsity).item(), lambda, g.value(total).item()};
}

LossNodes total_loss(Graph& g, const ForwardNodes& anchor, const ForwardNodes& positive, const SimilarityConfig& cfg,
                     double lambda, double rho, bool symmetric_kl) {
  if (!(lambda >= 0.0)) throw std::invalid_argument("total_loss: lambda must be >= 0");
  LossNodes out;
  out.lambda = lambda;
  out.align = info_nce(g, anchor.z_gated, positive.z_gated, cfg);
  if (anchor.alpha) {
    out.sparsity = bernoulli_kl(g, *anchor.alpha, rho);
    if (symmetric_kl && positive.alpha)
      out.sparsity = g.scale(g.add(out.sparsity, bernoulli_kl(g, *positive.alpha, rho)), 0.5);
  } else {
    out.sparsity = g.constant(Tensor::scalar(0.0));
  }
  out.total = g.add(out.align, g.scale(out.sparsity, lambda));
  return out;
}

double ipw_similarity(std::span<const double> z, std::span<const double> z_prime, std::span<const double> pi) {
  if (z.size() != z_prime.size() || z.size() != pi.size())
    throw std::invalid_argument("ipw_similarity: length mismatch");
  double s = 0.0;
  for (std::size_t k = 0; k < z.size(); ++k) {
    if (!(pi[k] > 0.0 && pi[k] <= 1.0)) throw std::invalid_argument("ipw_similarity: prevalence must lie in (0,1]");
    s += z[k] * z_prime[k] / pi[k];
  }
  return s;
}

}  // namespace ngcl
