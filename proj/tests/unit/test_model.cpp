#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "ngcl/gradcheck.hpp"
#include "ngcl/model.hpp"
#include "ngcl/objective.hpp"

using namespace ngcl;

namespace {

Tensor random_tensor(Rng& rng, std::size_t r, std::size_t c, double lo = -1.0, double hi = 1.0) {
  Tensor t(r, c);
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

ModelConfig toy_config(MaskKind kind, bool detach = true) {
  ModelConfig mc;
  mc.widths = {8, 6};
  mc.gate_depth = 2;
  mc.strategy.kind = kind;
  mc.detach = detach;
  return mc;
}

// Forward with every weight set to zero.
Model zero_model(const ModelConfig& mc) {
  Rng rng(0);
  Model m = init_model(mc, rng);
  for (Tensor* p : m.parameters())
    for (auto& v : p->data()) v = 0.0;
  return m;
}

}  // namespace

TEST(Model, InitShapesAndDepth) {
  Rng rng(1);
  ModelConfig mc;
  mc.widths = {16, 12, 8};
  mc.gate_depth = 3;
  const Model m = init_model(mc, rng);
  EXPECT_EQ(m.encoder.in_dim(), 16u);
  EXPECT_EQ(m.encoder.out_dim(), 8u);
  EXPECT_EQ(m.gate.depth(), 3u);
  for (const Layer& l : m.gate.layers) {
    EXPECT_EQ(l.W.rows(), 8u);
    EXPECT_EQ(l.W.cols(), 8u);
  }
  // glorot bound and zero bias on the first layer
  const double bound = std::sqrt(6.0 / (16 + 12));
  EXPECT_LE(m.encoder.layers[0].W.max_abs(), bound);
  EXPECT_EQ(m.encoder.layers[0].b.max_abs(), 0.0);

  mc.strategy.kind = MaskKind::none;
  EXPECT_EQ(init_model(mc, rng).gate.depth(), 0u);
  mc.strategy.kind = MaskKind::ste;
  mc.gate_depth = 4;
  EXPECT_THROW(init_model(mc, rng), std::invalid_argument);
}

TEST(Model, ZeroWeightsGiveZeroFeaturesAndHalfAlpha) {
  const ModelConfig mc = toy_config(MaskKind::ste);
  const Model m = zero_model(mc);
  Rng rng(2);
  const ForwardOut out = forward_values(m, mc, random_tensor(rng, 5, 8), &rng, Phase::train);
  EXPECT_EQ(out.z, Tensor(5, 6));
  for (double a : out.alpha.data()) EXPECT_EQ(a, 0.5);
  // exactly 0.5 is closed
  for (double h : out.m_hard.data()) EXPECT_EQ(h, 0.0);
}

TEST(Model, NonnegOutputClampsNegatives) {
  ModelConfig mc = toy_config(MaskKind::none);
  mc.widths = {3, 3};
  Model m = zero_model(mc);
  m.encoder.layers[0].W = Tensor::identity(3);
  const Tensor X = Tensor::from_rows({{-1, 2, -3}});
  const ForwardOut out = forward_values(m, mc, X, nullptr, Phase::train);
  EXPECT_EQ(out.z, Tensor::from_rows({{0, 2, 0}}));
  mc.nonneg = false;
  m.encoder.nonneg_output = false;
  EXPECT_EQ(forward_values(m, mc, X, nullptr, Phase::train).z, X);
}

TEST(Model, NonnegativeFeaturesOnRandomInputs) {
  const ModelConfig mc = toy_config(MaskKind::ste);
  Rng rng(4);
  const Model m = init_model(mc, rng);
  const ForwardOut out = forward_values(m, mc, random_tensor(rng, 50, 8, -5, 5), &rng, Phase::train);
  for (double v : out.z.data()) EXPECT_GE(v, 0.0);
  for (double a : out.alpha.data()) {
    EXPECT_GT(a, 0.0);
    EXPECT_LT(a, 1.0);
  }
}

TEST(Mask, SteThresholdAndForwardValue) {
  Graph g;
  const NodeId a = g.parameter(Tensor::from_rows({{0.7, 0.3, 0.5}}));
  const NodeId z = g.constant(Tensor::from_rows({{1, 1, 1}}));
  MaskStrategy s;
  s.kind = MaskKind::ste;
  const MaskNodes m = make_mask(g, a, s, z, nullptr);
  EXPECT_EQ(g.value(m.m_hard), Tensor::from_rows({{1, 0, 0}}));
  EXPECT_EQ(g.value(m.m_train), Tensor::from_rows({{1, 0, 0}}));
}

TEST(Mask, SteJacobianIsIdentity) {
  Rng rng(6);
  const Tensor alpha = random_tensor(rng, 4, 5, 0.05, 0.95);
  MaskStrategy s;
  s.kind = MaskKind::ste;
  // d(sum_k w_k m_k)/d alpha = w for any weights w
  const Tensor w = random_tensor(rng, 4, 5);
  Graph g;
  const NodeId a = g.parameter(alpha);
  const MaskNodes m = make_mask(g, a, s, g.constant(Tensor(4, 5, 1.0)), nullptr);
  const Gradients gr = g.backward(g.mean_all(g.mul(m.m_train, g.constant(w))));
  const Tensor& grad = gr[a];
  for (std::size_t i = 0; i < w.size(); ++i) EXPECT_NEAR(grad[i], w[i] / 20.0, 1e-15);

  const LossBuilder f = [&](Graph& gg, std::span<const NodeId> p) {
    const MaskNodes mm = make_mask(gg, p[0], s, gg.constant(Tensor(4, 5, 1.0)), nullptr);
    return gg.mean_all(mm.m_train);
  };
  const Tensor params[] = {alpha};
  EXPECT_LT(grad_check(f, params, 1e-6).max_rel_error, 1e-10);
}

TEST(Mask, GumbelZeroNoiseIsAlpha) {
  Graph g;
  const NodeId a = g.parameter(Tensor::from_rows({{0.7}}));
  MaskStrategy s;
  s.kind = MaskKind::gumbel_sigmoid;
  s.temperature = 1.0;
  MaskNoise noise{Tensor(1, 1)};
  const MaskNodes m = make_mask(g, a, s, g.constant(Tensor(1, 1, 1.0)), nullptr, &noise);
  EXPECT_NEAR(g.value(m.m_train).item(), 0.7, 1e-15);
  EXPECT_EQ(g.value(m.m_hard).item(), 1.0);
}

TEST(Mask, GumbelRejectsNonPositiveTemperature) {
  Graph g;
  const NodeId a = g.parameter(Tensor::from_rows({{0.7}}));
  MaskStrategy s;
  s.kind = MaskKind::gumbel_sigmoid;
  s.temperature = 0.0;
  Rng rng(1);
  EXPECT_THROW(make_mask(g, a, s, a, &rng), std::invalid_argument);
}

TEST(Mask, GumbelLowTemperatureIsBernoulli) {
  const std::size_t n = 10000;
  const double p = 0.3;
  Graph g;
  const NodeId a = g.parameter(Tensor(n, 1, p));
  MaskStrategy s;
  s.kind = MaskKind::gumbel_sigmoid;
  s.temperature = 1e-3;
  Rng rng(8);
  const MaskNodes m = make_mask(g, a, s, a, &rng);
  double on = 0.0;
  for (double v : g.value(m.m_hard).data()) {
    EXPECT_TRUE(v == 0.0 || v == 1.0);
    on += v;
  }
  EXPECT_NEAR(on / n, p, 3.0 * std::sqrt(p * (1 - p) / n));
}

TEST(Mask, SoftIsAlpha) {
  Graph g;
  const Tensor alpha = Tensor::from_rows({{0.2, 0.9}});
  const NodeId a = g.parameter(alpha);
  MaskStrategy s;
  s.kind = MaskKind::soft;
  const MaskNodes m = make_mask(g, a, s, a, nullptr);
  EXPECT_EQ(g.value(m.m_train), alpha);
  EXPECT_EQ(g.value(m.m_hard), alpha);
}

TEST(Mask, TopkCardinalityAndTies) {
  Rng rng(3);
  const Tensor z = random_tensor(rng, 20, 10, 0, 1);
  const Tensor m = topk_mask(z, 0.8);
  for (std::size_t i = 0; i < 20; ++i) {
    double s = 0.0;
    for (double v : m.row(i)) s += v;
    EXPECT_EQ(s, 8.0);
  }
  // ties resolve to the lower index
  const Tensor t = topk_mask(Tensor::from_rows({{1, 1, 1, 1}}), 0.5);
  EXPECT_EQ(t, Tensor::from_rows({{1, 1, 0, 0}}));
}

TEST(Forward, NoneLeavesFeaturesUntouched) {
  const ModelConfig mc = toy_config(MaskKind::none);
  Rng rng(5);
  const Model m = init_model(mc, rng);
  const ForwardOut out = forward_values(m, mc, random_tensor(rng, 6, 8), &rng, Phase::train);
  EXPECT_EQ(out.z_gated, out.z);
}

TEST(Forward, SteAllOpenOrAllClosed) {
  const ModelConfig mc = toy_config(MaskKind::ste);
  Rng rng(5);
  Model m = init_model(mc, rng);
  const Tensor X = random_tensor(rng, 6, 8);
  m.gate.layers.back().b = Tensor(1, 6, 50.0);
  const ForwardOut open = forward_values(m, mc, X, &rng, Phase::train);
  EXPECT_EQ(open.z_gated, open.z);
  m.gate.layers.back().b = Tensor(1, 6, -50.0);
  const ForwardOut shut = forward_values(m, mc, X, &rng, Phase::train);
  EXPECT_EQ(shut.z_gated, Tensor(6, 6));
}

TEST(Forward, GatedIsFeatureTimesTrainMask) {
  for (MaskKind k : {MaskKind::ste, MaskKind::soft, MaskKind::gumbel_sigmoid}) {
    const ModelConfig mc = toy_config(k);
    Rng rng(12);
    const Model m = init_model(mc, rng);
    const ForwardOut out = forward_values(m, mc, random_tensor(rng, 7, 8), &rng, Phase::train);
    for (std::size_t i = 0; i < out.z.size(); ++i) EXPECT_EQ(out.z_gated[i], out.z[i] * out.m_train[i]);
  }
}

TEST(Detach, SparsityGradientNeverReachesEncoder) {
  Rng rng(9);
  const Tensor X = random_tensor(rng, 4, 8);
  for (bool detach : {true, false}) {
    const ModelConfig mc = toy_config(MaskKind::ste, detach);
    const Model m = init_model(mc, rng);
    Graph g;
    const ModelNodes p = bind_model(g, m);
    const NodeId z = encode(g, p, g.constant(X));
    const NodeId a = gate_alpha(g, p, z, detach);
    const Gradients gr = g.backward(bernoulli_kl(g, a, 0.8));
    double mass = 0.0;
    for (NodeId id : p.encoder) mass += gr[id].max_abs();
    if (detach)
      EXPECT_EQ(mass, 0.0);
    else
      EXPECT_GT(mass, 0.0);
  }
}

TEST(Mask, ParseNames) {
  for (MaskKind k : {MaskKind::ste, MaskKind::gumbel_sigmoid, MaskKind::soft, MaskKind::topk, MaskKind::none})
    EXPECT_EQ(parse_mask_kind(mask_kind_name(k)), k);
  EXPECT_THROW(parse_mask_kind("bogus"), std::invalid_argument);
}
