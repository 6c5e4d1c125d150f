#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ngcl/graph.hpp"
#include "ngcl/rng.hpp"
#include "ngcl/tensor.hpp"

namespace ngcl {

struct Layer {
  Tensor W;  // fan_in x fan_out
  Tensor b;  // 1 x fan_out
};

struct EncoderParams {
  std::vector<Layer> layers;
  /// relu on the output layer (NCL / BayesNCL); identity for the CL baseline.
  bool nonneg_output = true;

  std::size_t in_dim() const { return layers.front().W.rows(); }
  std::size_t out_dim() const { return layers.back().W.cols(); }
};

struct GateParams {
  std::vector<Layer> layers;  // empty when the model has no gate

  std::size_t depth() const { return layers.size(); }
};

enum class MaskKind { ste, gumbel_sigmoid, soft, topk, none };

std::string mask_kind_name(MaskKind k);
MaskKind parse_mask_kind(const std::string& s);

struct MaskStrategy {
  MaskKind kind = MaskKind::ste;
  double temperature = 1.0;  // gumbel_sigmoid only
  double topk_ratio = 0.8;   // topk only

  bool has_gate() const { return kind == MaskKind::ste || kind == MaskKind::gumbel_sigmoid || kind == MaskKind::soft; }
};

struct ModelConfig {
  /// Encoder widths from input to output, e.g. {d, hidden, K}.
  std::vector<std::size_t> widths = {64, 64, 32};
  std::size_t gate_depth = 2;
  MaskStrategy strategy;
  bool detach = true;
  bool nonneg = true;
  /// Initial bias of the gate's output layer; logit(rho) starts every gate at
  /// the prior.
  double gate_bias_init = 0.0;

  std::size_t K() const { return widths.back(); }
};

struct Model {
  EncoderParams encoder;
  GateParams gate;

  /// Encoder W,b pairs then gate W,b pairs.
  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
  std::size_t encoder_param_count() const { return 2 * encoder.layers.size(); }
};

/// Glorot-uniform weights, zero biases. The gate is created only when the
/// strategy uses one.
Model init_model(const ModelConfig& cfg, Rng& rng);

/// Gumbel noise for one view (g1 - g2 per entry). Absent means "draw from rng".
struct MaskNoise {
  Tensor diff;
};

/// Parameter nodes bound into a graph, in Model::parameters() order.
struct ModelNodes {
  std::vector<NodeId> encoder;  // W0, b0, W1, b1, ...
  std::vector<NodeId> gate;
  bool nonneg = true;
};

ModelNodes bind_model(Graph& g, const Model& model);

NodeId encode(Graph& g, const ModelNodes& p, NodeId X);
NodeId gate_alpha(Graph& g, const ModelNodes& p, NodeId z, bool detach);

struct MaskNodes {
  NodeId m_hard;
  NodeId m_train;
};

/// Builds both masks. Every quantity that is a non-differentiable function of
/// upstream values enters through a stop_gradient node. `noise` overrides the
/// Gumbel draws (zero noise = deterministic relaxation); otherwise `rng` is used.
MaskNodes make_mask(Graph& g, NodeId alpha, const MaskStrategy& strategy, NodeId z, Rng* rng,
                    const MaskNoise* noise = nullptr);

struct ForwardNodes {
  NodeId z;
  NodeId z_gated;
  std::optional<NodeId> alpha;
  std::optional<NodeId> m_hard;
  std::optional<NodeId> m_train;
};

enum class Phase { train, eval };

/// encode -> gate_alpha -> make_mask -> z_gated. In the eval phase the gated
/// features are deterministic: z * I(alpha > 0.5) for ste/gumbel, z * alpha
/// for soft, z * topk mask for topk.
ForwardNodes forward(Graph& g, const ModelNodes& p, const ModelConfig& cfg, NodeId X, Rng* rng, Phase phase,
                     const MaskNoise* noise = nullptr);

struct ForwardOut {
  Tensor z;
  Tensor alpha;
  Tensor m_hard;
  Tensor m_train;
  Tensor z_gated;
};

/// Value-only forward pass.
ForwardOut forward_values(const Model& model, const ModelConfig& cfg, const Tensor& X, Rng* rng, Phase phase);

/// Per-row indicator of the round(ratio * K) largest entries; ties go to the
/// lower index.
Tensor topk_mask(const Tensor& z, double ratio);

}  // namespace ngcl
