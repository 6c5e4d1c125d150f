#include "ngcl/trainer.hpp"

#include <cmath>
#include <cstdio>

#include "ngcl/metrics.hpp"
#include "ngcl/objective.hpp"

namespace ngcl {

void TrainConfig::validate() const {
  auto nonneg = [](double v, const char* name) {
    if (!(v >= 0.0)) throw std::invalid_argument(std::string("train config: ") + name + " must be >= 0");
  };
  nonneg(backbone_lr, "backbone_lr");
  nonneg(gate_lr_scale, "gate_lr_scale");
  nonneg(momentum, "momentum");
  nonneg(weight_decay, "weight_decay");
  nonneg(lambda, "lambda");
  nonneg(trust_coef, "trust_coef");
  if (!(tau > 0.0)) throw std::invalid_argument("train config: tau must be > 0");
  if (!(rho > 0.0 && rho < 1.0)) throw std::invalid_argument("train config: rho must lie in (0,1)");
  if (batch_size < 2) throw std::invalid_argument("train config: batch_size must be >= 2");
}

SyntheticSource::SyntheticSource(SyntheticSpec spec) : spec_(std::move(spec)), dict_(build_dictionary(spec_)) {}

void SyntheticSource::next(Rng& rng, std::size_t n, Tensor& anchors, Tensor& positives) {
  Batch b = make_batch(spec_, dict_, rng, n);
  anchors = std::move(b.anchors);
  positives = std::move(b.positives);
}

AugmentedSetSource::AugmentedSetSource(const LabeledSet& set, double lo, double hi, double sigma)
    : set_(set), lo_(lo), hi_(hi), sigma_(sigma) {
  if (set_.X.rows() == 0) throw std::invalid_argument("AugmentedSetSource: empty data set");
}

void AugmentedSetSource::next(Rng& rng, std::size_t n, Tensor& anchors, Tensor& positives) {
  const std::size_t d = set_.X.cols();
  anchors = Tensor(n, d);
  positives = Tensor(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto src = set_.X.row(static_cast<std::size_t>(rng.next_u64() % set_.X.rows()));
    for (Tensor* view : {&anchors, &positives}) {
      const double s = rng.uniform(lo_, hi_);
      auto row = view->row(i);
      for (std::size_t j = 0; j < d; ++j) row[j] = s * src[j] + (sigma_ > 0.0 ? sigma_ * rng.normal() : 0.0);
    }
  }
}

EvalSet make_eval_set(const Batch& batch, std::size_t class_count) {
  return EvalSet{batch.anchors, batch.positives, batch.labels(), class_count};
}

namespace {

std::string param_name(const Model& model, std::size_t i) {
  const std::size_t enc = model.encoder_param_count();
  const bool in_gate = i >= enc;
  const std::size_t local = in_gate ? i - enc : i;
  return std::string(in_gate ? "gate." : "encoder.") + (local % 2 == 0 ? "W" : "b") + std::to_string(local / 2);
}

Tensor rows_slice(const Tensor& t, std::size_t r0, std::size_t r1) {
  Tensor out(r1 - r0, t.cols());
  for (std::size_t r = r0; r < r1; ++r) std::copy(t.row(r).begin(), t.row(r).end(), out.row(r - r0).begin());
  return out;
}

struct StepOut {
  LossBreakdown loss;
  std::vector<Tensor> grads;
  Tensor gated;
};

StepOut train_step_grads(const Model& model, const ModelConfig& mcfg, const TrainConfig& cfg, const Tensor& xa,
                         const Tensor& xp, Rng& mask_rng) {
  Graph g;
  const ModelNodes p = bind_model(g, model);
  ForwardNodes fa, fp;
  LossNodes L;
  // Huge but finite weights overflow inside the forward pass; the op that
  // trips over the resulting inf/NaN reports a domain error.
  try {
    fa = forward(g, p, mcfg, g.constant(xa), &mask_rng, Phase::train);
    fp = forward(g, p, mcfg, g.constant(xp), &mask_rng, Phase::train);
    L = total_loss(g, fa, fp, SimilarityConfig{cfg.tau, cfg.normalize}, cfg.lambda, cfg.rho, cfg.symmetric_kl);
  } catch (const DomainError& e) {
    throw NumericFailure(std::string("non-finite forward pass: ") + e.what());
  }
  StepOut out;
  out.loss = L.values(g);
  out.gated = g.value(fa.z_gated);
  if (!std::isfinite(out.loss.total)) {
    throw NumericFailure("non-finite loss (align=" + std::to_string(out.loss.align) +
                         ", sparsity=" + std::to_string(out.loss.sparsity) + ")");
  }
  const Gradients grads = g.backward(L.total);
  std::vector<NodeId> ids = p.encoder;
  ids.insert(ids.end(), p.gate.begin(), p.gate.end());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    out.grads.push_back(grads[ids[i]]);
    if (!out.grads.back().all_finite()) throw NumericFailure("non-finite gradient in " + param_name(model, i));
  }
  if (cfg.check_detach && mcfg.detach && fa.alpha) {
    const Gradients gs = g.backward(L.sparsity);
    for (NodeId id : p.encoder)
      if (gs[id].max_abs() != 0.0) throw std::logic_error("sparsity term leaked gradient into the encoder");
  }
  return out;
}

}  // namespace

Tensor eval_features(const Model& model, const ModelConfig& mcfg, const Tensor& X) {
  constexpr std::size_t chunk = 1024;
  if (X.rows() <= chunk) return forward_values(model, mcfg, X, nullptr, Phase::eval).z_gated;
  Tensor out(X.rows(), mcfg.K());
  for (std::size_t r0 = 0; r0 < X.rows(); r0 += chunk) {
    const std::size_t r1 = std::min(X.rows(), r0 + chunk);
    const Tensor f = forward_values(model, mcfg, rows_slice(X, r0, r1), nullptr, Phase::eval).z_gated;
    for (std::size_t r = r0; r < r1; ++r) std::copy(f.row(r - r0).begin(), f.row(r - r0).end(), out.row(r).begin());
  }
  return out;
}

Tensor per_sample_feature_grads(const Model& model, const ModelConfig& mcfg, const TrainConfig& cfg,
                                const EvalSet& eval, std::uint64_t noise_seed) {
  const std::size_t n = eval.anchors.rows();
  Tensor out(n, mcfg.K());
  Rng rng(noise_seed, 7);
  const std::size_t bs = std::max<std::size_t>(2, cfg.batch_size);
  for (std::size_t r0 = 0; r0 < n; r0 += bs) {
    std::size_t r1 = std::min(n, r0 + bs);
    if (r1 - r0 < 2) break;
    Graph g;
    const ModelNodes p = bind_model(g, model);
    const ForwardNodes fa = forward(g, p, mcfg, g.constant(rows_slice(eval.anchors, r0, r1)), &rng, Phase::train);
    const ForwardNodes fp = forward(g, p, mcfg, g.constant(rows_slice(eval.positives, r0, r1)), &rng, Phase::train);
    const LossNodes L =
        total_loss(g, fa, fp, SimilarityConfig{cfg.tau, cfg.normalize}, cfg.lambda, cfg.rho, cfg.symmetric_kl);
    const Gradients grads = g.backward(L.total);
    // both views go through the shared encoder; the anchor view alone
    // double-counts repulsion since the negatives are the other anchors
    const Tensor& ga = grads[fa.z];
    const Tensor& gp = grads[fp.z];
    const double scale = static_cast<double>(r1 - r0);
    for (std::size_t r = r0; r < r1; ++r)
      for (std::size_t k = 0; k < ga.cols(); ++k) out(r, k) = scale * (ga(r - r0, k) + gp(r - r0, k));
  }
  return out;
}

GradStatsEntry compute_grad_stats(const Model& model, const ModelConfig& mcfg, const TrainConfig& cfg,
                                  const EvalSet& eval, std::size_t epoch) {
  GradStatsEntry e;
  e.epoch = epoch;
  const Tensor feats = eval_features(model, mcfg, eval.anchors);
  e.af = activation_frequency(feats);
  e.sc.assign(feats.cols(), std::nan(""));
  try {
    e.sc = semantic_consistency(feats, eval.labels, eval.class_count).per_dim;
  } catch (const std::invalid_argument&) {
    // every dimension inactive: leave SC undefined
  }
  const Tensor G = per_sample_feature_grads(model, mcfg, cfg, eval, cfg.seed + epoch);
  e.gv.assign(G.cols(), 0.0);
  const double n = static_cast<double>(G.rows());
  for (std::size_t k = 0; k < G.cols(); ++k) {
    double s = 0.0, q = 0.0;
    for (std::size_t i = 0; i < G.rows(); ++i) s += G(i, k);
    const double mean = s / n;
    for (std::size_t i = 0; i < G.rows(); ++i) q += (G(i, k) - mean) * (G(i, k) - mean);
    e.gv[k] = q / n;
  }
  return e;
}

TrainResult train(const TrainConfig& cfg, const ModelConfig& mcfg, PairSource& source, const EvalSet* eval,
                  const TrainHooks& hooks) {
  cfg.validate();
  if (mcfg.widths.front() != source.input_dim())
    throw std::invalid_argument("train: model input width " + std::to_string(mcfg.widths.front()) +
                                " does not match data width " + std::to_string(source.input_dim()));
  TrainResult res;
  Rng init_rng(cfg.seed, 3);
  res.state.model = init_model(mcfg, init_rng);
  Rng data_rng(cfg.seed, 1);
  Rng mask_rng(cfg.seed, 2);

  Model& model = res.state.model;
  const std::size_t n_enc = model.encoder_param_count();
  Tensor xa, xp;

  auto record_stats = [&](std::size_t epoch) {
    if (eval && cfg.stats_every > 0 && epoch % cfg.stats_every == 0)
      res.stats.entries.push_back(compute_grad_stats(model, mcfg, cfg, *eval, epoch));
  };
  record_stats(0);
  if (hooks.on_start) hooks.on_start(res.state);

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    EpochRow row;
    row.epoch = epoch;
    Tensor last_gated;
    for (std::size_t step = 0; step < cfg.steps_per_epoch; ++step) {
      source.next(data_rng, cfg.batch_size, xa, xp);
      StepOut s = train_step_grads(model, mcfg, cfg, xa, xp, mask_rng);
      row.align += s.loss.align;
      row.sparsity += s.loss.sparsity;
      row.total += s.loss.total;
      last_gated = std::move(s.gated);

      auto params = model.parameters();
      std::span<Tensor* const> enc_p(params.data(), n_enc);
      std::span<Tensor* const> gate_p(params.data() + n_enc, params.size() - n_enc);
      std::span<const Tensor> enc_g(s.grads.data(), n_enc);
      std::span<const Tensor> gate_g(s.grads.data() + n_enc, s.grads.size() - n_enc);
      if (cfg.optimizer == OptimizerKind::sgd) {
        sgd_step(enc_p, enc_g, res.state.encoder_opt, cfg.backbone_lr, cfg.momentum, cfg.weight_decay);
        if (!gate_p.empty()) sgd_step(gate_p, gate_g, res.state.gate_opt, cfg.gate_lr(), cfg.momentum, cfg.weight_decay);
      } else {
        lars_step(enc_p, enc_g, res.state.encoder_opt, cfg.backbone_lr, cfg.trust_coef, cfg.momentum,
                  cfg.weight_decay);
        if (!gate_p.empty())
          lars_step(gate_p, gate_g, res.state.gate_opt, cfg.gate_lr(), cfg.trust_coef, cfg.momentum,
                    cfg.weight_decay);
      }
      for (std::size_t i = 0; i < params.size(); ++i)
        if (!params[i]->all_finite())
          throw NumericFailure("non-finite parameter " + param_name(model, i) + " after epoch " +
                               std::to_string(epoch) + " step " + std::to_string(step));
    }
    if (cfg.steps_per_epoch > 0) {
      const double k = static_cast<double>(cfg.steps_per_epoch);
      row.align /= k;
      row.sparsity /= k;
      row.total /= k;
    }
    if (eval)
      row.act_ratio = activation_ratio(eval_features(model, mcfg, eval->anchors));
    else if (!last_gated.empty())
      row.act_ratio = activation_ratio(last_gated);
    res.state.epochs_done = epoch;
    res.rows.push_back(row);
    record_stats(epoch);
    if (hooks.on_epoch) hooks.on_epoch(res.state, row);
  }
  return res;
}

std::string epoch_csv_header() { return "epoch,align,sparsity,total,act_ratio"; }

std::string epoch_csv_row(const EpochRow& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%zu,%.10g,%.10g,%.10g,%.6g", r.epoch, r.align, r.sparsity, r.total, r.act_ratio);
  return buf;
}

}  // namespace ngcl
