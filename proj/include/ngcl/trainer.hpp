#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ngcl/datagen.hpp"
#include "ngcl/model.hpp"
#include "ngcl/optim.hpp"
#include "ngcl/rng.hpp"

namespace ngcl {

enum class OptimizerKind { sgd, lars };

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t steps_per_epoch = 20;
  std::size_t batch_size = 128;
  double backbone_lr = 0.01;
  double gate_lr_scale = 1.0;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double tau = 0.2;
  bool normalize = false;
  double lambda = 3e-5;
  double rho = 0.8;
  bool symmetric_kl = false;
  OptimizerKind optimizer = OptimizerKind::sgd;
  double trust_coef = 0.001;
  std::uint64_t seed = 0;
  /// Record AF/GV/SC every this many epochs (0 = never).
  std::size_t stats_every = 0;
  /// Assert at every step that the sparsity term sends no gradient into the
  /// encoder (only meaningful with detach on).
  bool check_detach = false;

  void validate() const;
  double gate_lr() const { return gate_lr_scale * backbone_lr; }
};

/// Supplies positive pairs for training.
class PairSource {
 public:
  virtual ~PairSource() = default;
  virtual std::size_t input_dim() const = 0;
  virtual void next(Rng& rng, std::size_t n, Tensor& anchors, Tensor& positives) = 0;
};

class SyntheticSource : public PairSource {
 public:
  explicit SyntheticSource(SyntheticSpec spec);
  std::size_t input_dim() const override { return spec_.d; }
  void next(Rng& rng, std::size_t n, Tensor& anchors, Tensor& positives) override;
  const SyntheticSpec& spec() const { return spec_; }
  const Dictionary& dictionary() const { return dict_; }

 private:
  SyntheticSpec spec_;
  Dictionary dict_;
};

/// Two views of a stored sample: per-view intensity jitter and additive
/// Gaussian noise.
class AugmentedSetSource : public PairSource {
 public:
  AugmentedSetSource(const LabeledSet& set, double intensity_lo, double intensity_hi, double noise_sigma);
  std::size_t input_dim() const override { return set_.X.cols(); }
  void next(Rng& rng, std::size_t n, Tensor& anchors, Tensor& positives) override;

 private:
  const LabeledSet& set_;
  double lo_, hi_, sigma_;
};

/// Held-out pairs with labels used for statistics and the act_ratio column.
struct EvalSet {
  Tensor anchors;
  Tensor positives;
  std::vector<int> labels;
  std::size_t class_count = 0;
};

EvalSet make_eval_set(const Batch& batch, std::size_t class_count);

struct GradStatsEntry {
  std::size_t epoch = 0;
  std::vector<double> af;  // activation frequency per dim
  std::vector<double> gv;  // variance over samples of dL_total/dz_k
  std::vector<double> sc;  // per-dim consistency, NaN when inactive
};

struct GradStatsLog {
  std::vector<GradStatsEntry> entries;
};

struct EpochRow {
  std::size_t epoch = 0;
  double align = 0.0;
  double sparsity = 0.0;
  double total = 0.0;
  double act_ratio = 0.0;
};

struct TrainState {
  Model model;
  OptState encoder_opt;
  OptState gate_opt;
  std::uint64_t epochs_done = 0;
};

struct TrainHooks {
  /// Called once after initialization, before the first step.
  std::function<void(const TrainState&)> on_start;
  std::function<void(const TrainState&, const EpochRow&)> on_epoch;
};

struct TrainResult {
  TrainState state;
  GradStatsLog stats;
  std::vector<EpochRow> rows;
};

/// Raised when a loss, gradient or parameter stops being finite.
class NumericFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

TrainResult train(const TrainConfig& cfg, const ModelConfig& mcfg, PairSource& source, const EvalSet* eval,
                  const TrainHooks& hooks = {});

/// AF, GV and SC at the current parameters.
GradStatsEntry compute_grad_stats(const Model& model, const ModelConfig& mcfg, const TrainConfig& cfg,
                                  const EvalSet& eval, std::size_t epoch);

/// Per-sample dL_total/dz (anchor view, raw features), scaled by the chunk
/// size so rows are per-sample contributions.
Tensor per_sample_feature_grads(const Model& model, const ModelConfig& mcfg, const TrainConfig& cfg,
                                const EvalSet& eval, std::uint64_t noise_seed);

/// Deterministic gated features of the eval-phase forward pass.
Tensor eval_features(const Model& model, const ModelConfig& mcfg, const Tensor& X);

std::string epoch_csv_header();
std::string epoch_csv_row(const EpochRow& r);

}  // namespace ngcl
