#include "ngcl/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace ngcl {

std::string mask_kind_name(MaskKind k) {
  switch (k) {
    case MaskKind::ste: return "ste";
    case MaskKind::gumbel_sigmoid: return "gumbel_sigmoid";
    case MaskKind::soft: return "soft";
    case MaskKind::topk: return "topk";
    case MaskKind::none: return "none";
  }
  return "none";
}

MaskKind parse_mask_kind(const std::string& s) {
  for (MaskKind k : {MaskKind::ste, MaskKind::gumbel_sigmoid, MaskKind::soft, MaskKind::topk, MaskKind::none})
    if (mask_kind_name(k) == s) return k;
  throw std::invalid_argument("unknown mask strategy '" + s + "'");
}

std::vector<Tensor*> Model::parameters() {
  std::vector<Tensor*> out;
  for (auto& l : encoder.layers) out.insert(out.end(), {&l.W, &l.b});
  for (auto& l : gate.layers) out.insert(out.end(), {&l.W, &l.b});
  return out;
}

std::vector<const Tensor*> Model::parameters() const {
  std::vector<const Tensor*> out;
  for (const auto& l : encoder.layers) out.insert(out.end(), {&l.W, &l.b});
  for (const auto& l : gate.layers) out.insert(out.end(), {&l.W, &l.b});
  return out;
}

namespace {

Layer glorot(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Layer l{Tensor(fan_in, fan_out), Tensor(1, fan_out)};
  for (double& w : l.W.data()) w = rng.uniform(-a, a);
  return l;
}

NodeId affine(Graph& g, NodeId x, NodeId W, NodeId b) {
  const std::size_t n = g.value(x).rows();
  const NodeId xw = g.matmul(x, W);
  // Bias broadcast as ones(n,1) * b.
  return g.add(xw, g.matmul(g.constant(Tensor::ones(n, 1)), b));
}

}  // namespace

Model init_model(const ModelConfig& cfg, Rng& rng) {
  if (cfg.widths.size() < 2) throw std::invalid_argument("model: need at least input and output widths");
  Model m;
  m.encoder.nonneg_output = cfg.nonneg;
  for (std::size_t i = 0; i + 1 < cfg.widths.size(); ++i)
    m.encoder.layers.push_back(glorot(cfg.widths[i], cfg.widths[i + 1], rng));
  if (cfg.strategy.has_gate()) {
    if (cfg.gate_depth < 1 || cfg.gate_depth > 3) throw std::invalid_argument("model: gate_depth must be 1, 2 or 3");
    for (std::size_t i = 0; i < cfg.gate_depth; ++i) m.gate.layers.push_back(glorot(cfg.K(), cfg.K(), rng));
    for (double& b : m.gate.layers.back().b.data()) b = cfg.gate_bias_init;
  }
  return m;
}

ModelNodes bind_model(Graph& g, const Model& model) {
  ModelNodes p;
  p.nonneg = model.encoder.nonneg_output;
  for (const auto& l : model.encoder.layers) {
    p.encoder.push_back(g.parameter(l.W));
    p.encoder.push_back(g.parameter(l.b));
  }
  for (const auto& l : model.gate.layers) {
    p.gate.push_back(g.parameter(l.W));
    p.gate.push_back(g.parameter(l.b));
  }
  return p;
}

NodeId encode(Graph& g, const ModelNodes& p, NodeId X) {
  if (p.encoder.empty()) throw ContractError("encode: encoder has no layers");
  NodeId h = X;
  const std::size_t L = p.encoder.size() / 2;
  for (std::size_t i = 0; i < L; ++i) {
    h = affine(g, h, p.encoder[2 * i], p.encoder[2 * i + 1]);
    if (i + 1 < L || p.nonneg) h = g.relu(h);
  }
  return h;
}

NodeId gate_alpha(Graph& g, const ModelNodes& p, NodeId z, bool detach) {
  if (p.gate.empty()) throw ContractError("gate_alpha: model has no gate");
  NodeId h = detach ? g.stop_gradient(z) : z;
  const std::size_t L = p.gate.size() / 2;
  for (std::size_t i = 0; i < L; ++i) {
    h = affine(g, h, p.gate[2 * i], p.gate[2 * i + 1]);
    if (i + 1 < L) h = g.relu(h);
  }
  return g.sigmoid(h);
}

Tensor topk_mask(const Tensor& z, double ratio) {
  const std::size_t K = z.cols();
  const auto k = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(K)));
  if (k > K) throw std::invalid_argument("topk: ratio selects more than K dims");
  Tensor m(z.rows(), K);
  std::vector<std::size_t> idx(K);
  for (std::size_t r = 0; r < z.rows(); ++r) {
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    auto row = z.row(r);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return row[a] > row[b]; });
    for (std::size_t i = 0; i < k; ++i) m(r, idx[i]) = 1.0;
  }
  return m;
}

namespace {

Tensor threshold(const Tensor& t) {
  Tensor out(t.rows(), t.cols());
  for (std::size_t i = 0; i < t.size(); ++i) out[i] = t[i] > 0.5 ? 1.0 : 0.0;
  return out;
}

}  // namespace

MaskNodes make_mask(Graph& g, NodeId alpha, const MaskStrategy& strategy, NodeId z, Rng* rng,
                    const MaskNoise* noise) {
  const Tensor& a = g.value(alpha);
  switch (strategy.kind) {
    case MaskKind::ste: {
      const NodeId hard = g.stop_gradient(g.constant(threshold(a)));
      const NodeId m_train = g.add(g.stop_gradient(g.sub(hard, alpha)), alpha);
      return {hard, m_train};
    }
    case MaskKind::gumbel_sigmoid: {
      if (!(strategy.temperature > 0.0)) throw std::invalid_argument("gumbel_sigmoid: temperature must be > 0");
      Tensor diff(a.rows(), a.cols());
      if (noise) {
        if (!noise->diff.same_shape(a)) throw ShapeError("gumbel noise shape " + noise->diff.shape_str() +
                                                         " does not match alpha " + a.shape_str());
        diff = noise->diff;
      } else {
        if (!rng) throw ContractError("gumbel_sigmoid: needs an rng or explicit noise");
        for (double& v : diff.data()) {
          const double g1 = rng->gumbel();
          const double g2 = rng->gumbel();
          v = g1 - g2;
        }
      }
      const NodeId one = g.constant(Tensor::ones(a.rows(), a.cols()));
      const NodeId logit = g.sub(g.log(alpha), g.log(g.sub(one, alpha)));
      const NodeId pre = g.scale(g.add(logit, g.stop_gradient(g.constant(std::move(diff)))), 1.0 / strategy.temperature);
      const NodeId m_train = g.sigmoid(pre);
      const NodeId hard = g.stop_gradient(g.constant(threshold(g.value(m_train))));
      return {hard, m_train};
    }
    case MaskKind::soft:
      return {alpha, alpha};
    case MaskKind::topk: {
      const NodeId m = g.stop_gradient(g.constant(topk_mask(g.value(z), strategy.topk_ratio)));
      return {m, m};
    }
    case MaskKind::none: {
      const NodeId m = g.constant(Tensor::ones(a.rows(), a.cols()));
      return {m, m};
    }
  }
  throw ContractError("make_mask: unhandled strategy");
}

ForwardNodes forward(Graph& g, const ModelNodes& p, const ModelConfig& cfg, NodeId X, Rng* rng, Phase phase,
                     const MaskNoise* noise) {
  ForwardNodes out;
  out.z = encode(g, p, X);
  const MaskStrategy& s = cfg.strategy;
  switch (s.kind) {
    case MaskKind::none:
      out.z_gated = out.z;
      return out;
    case MaskKind::topk: {
      const MaskNodes m = make_mask(g, out.z, s, out.z, rng, noise);
      out.m_hard = m.m_hard;
      out.m_train = m.m_train;
      out.z_gated = g.mul(out.z, m.m_train);
      return out;
    }
    default:
      break;
  }
  out.alpha = gate_alpha(g, p, out.z, cfg.detach);
  if (phase == Phase::eval) {
    const Tensor& a = g.value(*out.alpha);
    if (s.kind == MaskKind::soft) {
      out.m_hard = out.m_train = *out.alpha;
    } else {
      const NodeId hard = g.stop_gradient(g.constant(threshold(a)));
      out.m_hard = out.m_train = hard;
    }
    out.z_gated = g.mul(out.z, *out.m_train);
    return out;
  }
  const MaskNodes m = make_mask(g, *out.alpha, s, out.z, rng, noise);
  out.m_hard = m.m_hard;
  out.m_train = m.m_train;
  out.z_gated = g.mul(out.z, m.m_train);
  return out;
}

ForwardOut forward_values(const Model& model, const ModelConfig& cfg, const Tensor& X, Rng* rng, Phase phase) {
  Graph g;
  const ModelNodes p = bind_model(g, model);
  const ForwardNodes f = forward(g, p, cfg, g.constant(X), rng, phase);
  ForwardOut out;
  out.z = g.value(f.z);
  out.z_gated = g.value(f.z_gated);
  const std::size_t n = out.z.rows(), K = out.z.cols();
  out.alpha = f.alpha ? g.value(*f.alpha) : Tensor(n, K, 1.0);
  out.m_hard = f.m_hard ? g.value(*f.m_hard) : Tensor::ones(n, K);
  out.m_train = f.m_train ? g.value(*f.m_train) : Tensor::ones(n, K);
  return out;
}

}  // namespace ngcl
