#include "ngcl/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "ngcl/metrics.hpp"
#include "ngcl/objective.hpp"
#include "ngcl/parallel.hpp"

namespace ngcl {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double median(std::vector<double> v) {
  v.erase(std::remove_if(v.begin(), v.end(), [](double x) { return std::isnan(x); }), v.end());
  if (v.empty()) return kNaN;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return kNaN;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double pearson(const Tensor& a, std::size_t ca, const Tensor& b, std::size_t cb) {
  const std::size_t n = a.rows();
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a(i, ca);
    mb += b(i, cb);
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = a(i, ca) - ma, y = b(i, cb) - mb;
    sab += x * y;
    saa += x * x;
    sbb += y * y;
  }
  if (saa <= 0.0 || sbb <= 0.0) return kNaN;
  return sab / std::sqrt(saa * sbb);
}

SyntheticSpec with_prevalence(SyntheticSpec s, double pi) {
  s.prevalence.assign(s.B, pi);
  return s;
}

}  // namespace

DimRole FactorAssignment::role(std::size_t k) const {
  if (factor[k] < 0) return DimRole::unassigned;
  return static_cast<std::size_t>(factor[k]) < m ? DimRole::signal : DimRole::background;
}

std::vector<std::size_t> FactorAssignment::dims(DimRole r) const {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < factor.size(); ++k)
    if (role(k) == r) out.push_back(k);
  return out;
}

Tensor factor_indicators(std::span<const LatentState> latents, std::size_t m, std::size_t B) {
  Tensor t(latents.size(), m + B);
  for (std::size_t i = 0; i < latents.size(); ++i) {
    t(i, latents[i].class_id) = 1.0;
    for (std::size_t b = 0; b < B; ++b) t(i, m + b) = latents[i].bg_active[b] ? 1.0 : 0.0;
  }
  return t;
}

FactorAssignment assign_dims(const Tensor& z, const Tensor& ind, std::size_t m, double min_corr) {
  if (z.rows() != ind.rows()) throw std::invalid_argument("assign_dims: row count mismatch");
  FactorAssignment a;
  a.m = m;
  a.factor.assign(z.cols(), -1);
  a.corr.assign(z.cols(), kNaN);
  for (std::size_t k = 0; k < z.cols(); ++k) {
    double best = 0.0;
    int arg = -1;
    for (std::size_t f = 0; f < ind.cols(); ++f) {
      const double c = pearson(z, k, ind, f);
      if (!std::isnan(c) && std::abs(c) > std::abs(best)) {
        best = c;
        arg = static_cast<int>(f);
      }
    }
    if (arg < 0) continue;
    a.corr[k] = best;
    if (std::abs(best) >= min_corr) a.factor[k] = arg;
  }
  return a;
}

ConflictProbeReport conflict_stats(const Model& model, const ModelConfig& mc, const TrainConfig& tc, const Batch& eval,
                                   std::size_t m) {
  const std::size_t B = eval.latents.empty() ? 0 : eval.latents[0].bg_active.size();
  const EvalSet es = make_eval_set(eval, m);
  const Tensor G = per_sample_feature_grads(model, mc, tc, es, tc.seed);
  const Tensor z = forward_values(model, mc, eval.anchors, nullptr, Phase::eval).z;

  ConflictProbeReport r;
  r.assignment = assign_dims(z, factor_indicators(eval.latents, m, B), m);
  const std::size_t K = G.cols();
  const double n = static_cast<double>(G.rows());
  r.mean_grad.assign(K, 0.0);
  r.grad_var.assign(K, 0.0);
  for (std::size_t k = 0; k < K; ++k) {
    double s = 0.0;
    for (std::size_t i = 0; i < G.rows(); ++i) s += G(i, k);
    const double mu = s / n;
    double q = 0.0;
    for (std::size_t i = 0; i < G.rows(); ++i) q += (G(i, k) - mu) * (G(i, k) - mu);
    r.mean_grad[k] = mu;
    r.grad_var[k] = q / n;
    r.role.push_back(r.assignment.role(k));
  }
  std::vector<double> bg_var, sig_var;
  r.worst_bg_mean_ratio = kNaN;
  for (std::size_t k = 0; k < K; ++k) {
    if (r.role[k] == DimRole::background) {
      bg_var.push_back(r.grad_var[k]);
      const double sd = std::sqrt(r.grad_var[k]);
      const double ratio = sd > 0.0 ? std::abs(r.mean_grad[k]) / sd : kNaN;
      if (std::isnan(r.worst_bg_mean_ratio) || ratio > r.worst_bg_mean_ratio) r.worst_bg_mean_ratio = ratio;
    } else if (r.role[k] == DimRole::signal) {
      sig_var.push_back(r.grad_var[k]);
    }
  }
  const double ms = median(sig_var);
  r.bg_var_ratio = (bg_var.empty() || !(ms > 0.0)) ? kNaN : median(bg_var) / ms;
  return r;
}

ConflictProbeReport probe_gradient_instability(const SyntheticSpec& spec, const TrainConfig& tc, const ModelConfig& mc,
                                               std::size_t eval_n) {
  ModelConfig ncl = mc;
  ncl.strategy.kind = MaskKind::none;
  ncl.nonneg = true;
  SyntheticSource src(spec);
  TrainResult res = train(tc, ncl, src, nullptr);
  Rng rng(tc.seed, 11);
  const Batch eval = make_batch(spec, src.dictionary(), rng, eval_n);
  return conflict_stats(res.state.model, ncl, tc, eval, spec.m);
}

KendallResult kendall(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 3) throw std::invalid_argument("kendall: need >= 3 paired values");
  const std::size_t n = x.size();
  double S = 0.0, n1 = 0.0, n2 = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dx = x[j] - x[i], dy = y[j] - y[i];
      const int sx = (dx > 0) - (dx < 0), sy = (dy > 0) - (dy < 0);
      S += sx * sy;
      if (sx == 0) n1 += 1;
      if (sy == 0) n2 += 1;
    }
  auto tie_groups = [](std::span<const double> v) {
    std::vector<double> s(v.begin(), v.end());
    std::sort(s.begin(), s.end());
    std::vector<double> t;
    for (std::size_t i = 0; i < s.size();) {
      std::size_t j = i;
      while (j + 1 < s.size() && s[j + 1] == s[i]) ++j;
      if (j > i) t.push_back(static_cast<double>(j - i + 1));
      i = j + 1;
    }
    return t;
  };
  const auto tx = tie_groups(x), ty = tie_groups(y);
  const double N = static_cast<double>(n);
  const double n0 = N * (N - 1) / 2;
  double v0 = N * (N - 1) * (2 * N + 5), vt = 0, vu = 0, t1 = 0, u1 = 0, t2 = 0, u2 = 0;
  for (double t : tx) {
    vt += t * (t - 1) * (2 * t + 5);
    t1 += t * (t - 1);
    t2 += t * (t - 1) * (t - 2);
  }
  for (double u : ty) {
    vu += u * (u - 1) * (2 * u + 5);
    u1 += u * (u - 1);
    u2 += u * (u - 1) * (u - 2);
  }
  const double var = (v0 - vt - vu) / 18 + t2 * u2 / (9 * N * (N - 1) * (N - 2)) + t1 * u1 / (2 * N * (N - 1));
  KendallResult r;
  const double denom = std::sqrt((n0 - n1) * (n0 - n2));
  r.tau_b = denom > 0 ? S / denom : 0.0;
  r.z = var > 0 ? S / std::sqrt(var) : 0.0;
  r.p_decreasing = 0.5 * std::erfc(-r.z / std::sqrt(2.0));
  return r;
}

std::vector<double> SweepReport::medians(double SweepPoint::*field) const {
  std::vector<double> out;
  for (double g : grid) {
    std::vector<double> v;
    for (const auto& p : points)
      if (p.x == g && !p.flagged) v.push_back(p.*field);
    out.push_back(median(v));
  }
  return out;
}

std::pair<double, double> gate_alpha_by_role(const Model& model, const ModelConfig& mc, const Batch& eval,
                                             std::size_t m) {
  const std::size_t B = eval.latents.empty() ? 0 : eval.latents[0].bg_active.size();
  const ForwardOut fo = forward_values(model, mc, eval.anchors, nullptr, Phase::eval);
  const Tensor ind = factor_indicators(eval.latents, m, B);
  const FactorAssignment a = assign_dims(fo.z, ind, m);
  std::vector<double> bg, sig;
  for (std::size_t k = 0; k < fo.z.cols(); ++k) {
    const DimRole role = a.role(k);
    if (role == DimRole::unassigned) continue;
    const auto f = static_cast<std::size_t>(a.factor[k]);
    double s = 0.0;
    std::size_t c = 0;
    for (std::size_t i = 0; i < ind.rows(); ++i)
      if (ind(i, f) > 0.0) {
        s += fo.alpha(i, k);
        ++c;
      }
    if (c == 0) continue;
    (role == DimRole::background ? bg : sig).push_back(s / static_cast<double>(c));
  }
  return {mean_of(bg), mean_of(sig)};
}

SweepReport filtering_sweep(const SyntheticSpec& tmpl, std::span<const double> pi_grid, const TrainConfig& tc,
                            const ModelConfig& mc, std::span<const std::uint64_t> seeds, std::size_t eval_n) {
  if (!std::is_sorted(pi_grid.begin(), pi_grid.end()) ||
      std::adjacent_find(pi_grid.begin(), pi_grid.end()) != pi_grid.end())
    throw std::invalid_argument("filtering_sweep: grid must be strictly increasing");
  for (double p : pi_grid)
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("filtering_sweep: grid values must lie in (0,1)");
  if (!mc.strategy.has_gate()) throw std::invalid_argument("filtering_sweep: strategy has no gate");

  SweepReport rep;
  rep.parameter = "pi";
  rep.grid.assign(pi_grid.begin(), pi_grid.end());
  std::vector<SyntheticSpec> specs;
  for (double pi : pi_grid) specs.push_back(with_prevalence(tmpl, pi));
  rep.points.resize(pi_grid.size() * seeds.size());
  parallel_for(rep.points.size(), [&](std::size_t idx) {
    const SyntheticSpec& spec = specs[idx / seeds.size()];
    SyntheticSource src(spec);
    SweepPoint& pt = rep.points[idx];
    pt.x = pi_grid[idx / seeds.size()];
    pt.seed = seeds[idx % seeds.size()];
    TrainConfig t = tc;
    t.seed = pt.seed;
    try {
      const TrainResult res = train(t, mc, src, nullptr);
      Rng rng(pt.seed, 12);
      const Batch eval = make_batch(spec, src.dictionary(), rng, eval_n);
      std::tie(pt.bg_alpha, pt.sig_alpha) = gate_alpha_by_role(res.state.model, mc, eval, spec.m);
      if (std::isnan(pt.bg_alpha)) {
        pt.flagged = true;
        pt.note = "no background-assigned dims";
      }
    } catch (const NumericFailure& e) {
      pt.flagged = true;
      pt.note = e.what();
      pt.bg_alpha = pt.sig_alpha = kNaN;
    }
  });

  std::vector<double> xs, ys;
  for (const auto& p : rep.points)
    if (!p.flagged) {
      xs.push_back(p.x);
      ys.push_back(p.bg_alpha);
    }
  rep.trend = xs.size() >= 3 ? kendall(xs, ys) : KendallResult{};

  // bg_alpha ~ a + b * u with u = pi(1-pi); gate-off crossing at 0.5.
  rep.gamma = kNaN;
  if (xs.size() >= 2) {
    double su = 0, sy = 0, suu = 0, suy = 0;
    const double n = static_cast<double>(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double u = xs[i] * (1 - xs[i]);
      su += u;
      sy += ys[i];
      suu += u * u;
      suy += u * ys[i];
    }
    const double den = n * suu - su * su;
    if (den != 0.0) {
      const double b = (n * suy - su * sy) / den;
      const double a = (sy - b * su) / n;
      const double u_star = b != 0.0 ? (0.5 - a) / b : kNaN;
      if (u_star > 0.0 && u_star <= 0.25) rep.gamma = tc.lambda * std::log(1.0 / tc.rho) / u_star;
    }
  }
  return rep;
}

ErrorReductionReport error_reduction_check(const Model& model, const ModelConfig& mc, const SyntheticSpec& spec,
                                           const Dictionary& dict, std::size_t n_pairs, Rng& rng,
                                           bool force_all_ones) {
  if (n_pairs == 0) throw std::invalid_argument("error_reduction_check: n_pairs must be > 0");
  const Batch ref = make_batch(spec, dict, rng, std::max<std::size_t>(n_pairs, 500));
  const Tensor z_ref = forward_values(model, mc, ref.anchors, nullptr, Phase::eval).z;
  const FactorAssignment a = assign_dims(z_ref, factor_indicators(ref.latents, spec.m, spec.B), spec.m);
  const auto bg_dims = a.dims(DimRole::background);
  if (bg_dims.empty()) throw std::runtime_error("error_reduction_check: no background-assigned dims");

  Tensor xa(n_pairs, spec.d), xb(n_pairs, spec.d);
  for (std::size_t i = 0; i < n_pairs; ++i) {
    std::vector<bool> bg(spec.B);
    for (std::size_t b = 0; b < spec.B; ++b) bg[b] = rng.bernoulli(spec.prevalence[b]);
    const std::size_t c1 = static_cast<std::size_t>(rng.next_u64() % spec.m);
    std::size_t c2 = static_cast<std::size_t>(rng.next_u64() % (spec.m - 1));
    if (c2 >= c1) ++c2;
    const SamplePair p = sample_pair_given(spec, dict, rng, c1, bg);
    const SamplePair q = sample_pair_given(spec, dict, rng, c2, bg);
    std::copy(p.x.begin(), p.x.end(), xa.row(i).begin());
    std::copy(q.x.begin(), q.x.end(), xb.row(i).begin());
  }
  const ForwardOut fa = forward_values(model, mc, xa, nullptr, Phase::eval);
  const ForwardOut fb = forward_values(model, mc, xb, nullptr, Phase::eval);
  const Tensor& ga = force_all_ones ? fa.z : fa.z_gated;
  const Tensor& gb = force_all_ones ? fb.z : fb.z_gated;

  ErrorReductionReport r;
  r.background_dims = bg_dims.size();
  const double n = static_cast<double>(n_pairs);
  for (std::size_t i = 0; i < n_pairs; ++i) {
    for (std::size_t k = 0; k < fa.z.cols(); ++k) {
      r.e_ncl += fa.z(i, k) * fb.z(i, k);
      r.e_bayes += ga(i, k) * gb(i, k);
    }
    for (std::size_t k : bg_dims) r.spurious_sum += fa.z(i, k) * fb.z(i, k);
  }
  r.e_ncl /= n;
  r.e_bayes /= n;
  r.spurious_sum /= n;
  r.residual = std::abs((r.e_ncl - r.e_bayes) - r.spurious_sum) / std::max(r.spurious_sum, 1e-9);
  return r;
}

double binary_entropy(double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::logic_error("binary_entropy: probability outside [0,1]");
  double h = 0.0;
  if (p > 0.0) h -= p * std::log(p);
  if (p < 1.0) h -= (1.0 - p) * std::log(1.0 - p);
  return h;
}

double info_bound(std::span<const double> mask_means, double c_cont) {
  if (!(c_cont > 0.0)) throw std::invalid_argument("info_bound: c_cont must be > 0");
  double s = 0.0;
  for (double p : mask_means) s += p * c_cont + binary_entropy(p);
  return s;
}

InfoBoundReport info_bound_eval(const Model& model, const ModelConfig& mc, const Tensor& X,
                                std::optional<double> c_cont) {
  const ForwardOut fo = forward_values(model, mc, X, nullptr, Phase::eval);
  InfoBoundReport r;
  r.mask_mean.assign(fo.m_hard.cols(), 0.0);
  for (std::size_t i = 0; i < fo.m_hard.rows(); ++i)
    for (std::size_t k = 0; k < fo.m_hard.cols(); ++k) r.mask_mean[k] += fo.m_hard(i, k);
  for (double& v : r.mask_mean) v /= static_cast<double>(fo.m_hard.rows());
  if (c_cont) {
    r.c_cont = *c_cont;
  } else {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (double v : fo.z_gated.data())
      if (std::abs(v) > kActivationEps) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    r.c_cont = hi >= lo ? std::log1p(hi - lo) : 1.0;
    if (!(r.c_cont > 0.0)) r.c_cont = 1.0;
  }
  r.bound = info_bound(r.mask_mean, r.c_cont);
  return r;
}

SweepReport lambda_sweep(const SyntheticSpec& spec, std::span<const double> lambda_grid, const TrainConfig& tc,
                         const ModelConfig& mc, std::span<const std::uint64_t> seeds, double c_cont,
                         std::size_t eval_n) {
  if (!std::is_sorted(lambda_grid.begin(), lambda_grid.end()) ||
      std::adjacent_find(lambda_grid.begin(), lambda_grid.end()) != lambda_grid.end())
    throw std::invalid_argument("lambda_sweep: grid must be strictly increasing");
  SweepReport rep;
  rep.parameter = "lambda";
  rep.grid.assign(lambda_grid.begin(), lambda_grid.end());
  const SyntheticSource src(spec);
  rep.points.resize(lambda_grid.size() * seeds.size());
  parallel_for(rep.points.size(), [&](std::size_t idx) {
    SyntheticSource local = src;
    SweepPoint& pt = rep.points[idx];
    pt.x = lambda_grid[idx / seeds.size()];
    pt.seed = seeds[idx % seeds.size()];
    TrainConfig t = tc;
    t.lambda = pt.x;
    t.seed = pt.seed;
    try {
      const TrainResult res = train(t, mc, local, nullptr);
      Rng rng(pt.seed, 13);
      const Batch eval = make_batch(spec, src.dictionary(), rng, eval_n);
      pt.value = info_bound_eval(res.state.model, mc, eval.anchors, c_cont).bound;
    } catch (const NumericFailure& e) {
      pt.flagged = true;
      pt.note = e.what();
      pt.value = kNaN;
    }
  });
  std::vector<double> xs, ys;
  for (const auto& p : rep.points)
    if (!p.flagged) {
      xs.push_back(p.x);
      ys.push_back(p.value);
    }
  if (xs.size() >= 3) rep.trend = kendall(xs, ys);
  rep.gamma = kNaN;
  return rep;
}

std::vector<double> factor_prevalence(const SyntheticSpec& spec) {
  std::vector<double> pi = spec.prior();
  pi.insert(pi.end(), spec.prevalence.begin(), spec.prevalence.end());
  return pi;
}

IpwReport ipw_rank_compare(const Tensor& ind_a, const Tensor& ind_b, std::span<const double> pi, const Tensor& gated_a,
                           const Tensor& gated_b, const Tensor& raw_a, const Tensor& raw_b) {
  const std::size_t n = ind_a.rows();
  std::vector<double> oracle(n), gated(n), raw(n);
  auto dot = [](std::span<const double> u, std::span<const double> v) {
    double s = 0.0;
    for (std::size_t k = 0; k < u.size(); ++k) s += u[k] * v[k];
    return s;
  };
  for (std::size_t i = 0; i < n; ++i) {
    oracle[i] = ipw_similarity(ind_a.row(i), ind_b.row(i), pi);
    gated[i] = dot(gated_a.row(i), gated_b.row(i));
    raw[i] = dot(raw_a.row(i), raw_b.row(i));
  }
  return IpwReport{spearman(oracle, gated), spearman(oracle, raw)};
}

IpwReport ipw_alignment_check(const Model& model, const ModelConfig& mc, const SyntheticSpec& spec,
                              const Dictionary& dict, std::size_t n_pairs, Rng& rng) {
  const Batch a = make_batch(spec, dict, rng, n_pairs);
  const Batch b = make_batch(spec, dict, rng, n_pairs);
  const ForwardOut fa = forward_values(model, mc, a.anchors, nullptr, Phase::eval);
  const ForwardOut fb = forward_values(model, mc, b.anchors, nullptr, Phase::eval);
  std::vector<double> pi = factor_prevalence(spec);
  for (double& p : pi) p = std::max(p, 1e-12);
  return ipw_rank_compare(factor_indicators(a.latents, spec.m, spec.B), factor_indicators(b.latents, spec.m, spec.B),
                          pi, fa.z_gated, fb.z_gated, fa.z, fb.z);
}

}  // namespace ngcl
