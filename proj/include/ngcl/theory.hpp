#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ngcl/datagen.hpp"
#include "ngcl/model.hpp"
#include "ngcl/trainer.hpp"

namespace ngcl {

enum class DimRole { unassigned, signal, background };

/// Each feature dim is mapped to the latent factor (class one-hot or
/// background bit) whose indicator it correlates with most.
struct FactorAssignment {
  std::vector<int> factor;   // -1 when unassigned
  std::vector<double> corr;  // best correlation
  std::size_t m = 0;

  DimRole role(std::size_t k) const;
  std::vector<std::size_t> dims(DimRole r) const;
};

/// n x (m + B) indicator matrix: class one-hot then background bits.
Tensor factor_indicators(std::span<const LatentState> latents, std::size_t m, std::size_t B);

FactorAssignment assign_dims(const Tensor& z, const Tensor& indicators, std::size_t m, double min_corr = 0.2);

// ---- gradient conflict probe -------------------------------------------------

struct ConflictProbeReport {
  std::vector<double> mean_grad;
  std::vector<double> grad_var;
  std::vector<DimRole> role;
  FactorAssignment assignment;
  /// Largest |mean| / std over background dims (NaN when none).
  double worst_bg_mean_ratio = 0.0;
  /// median background variance / median signal variance (NaN when undefined).
  double bg_var_ratio = 0.0;
};

/// Trains plain NCL (the strategy is forced to none) and reports per-dim
/// statistics of dL/dz over a held-out set.
ConflictProbeReport probe_gradient_instability(const SyntheticSpec& spec, const TrainConfig& tc,
                                               const ModelConfig& mc, std::size_t eval_n = 2000);

/// Statistics of dL/dz for an already-trained model.
ConflictProbeReport conflict_stats(const Model& model, const ModelConfig& mc, const TrainConfig& tc,
                                   const Batch& eval, std::size_t m);

// ---- sweeps -----------------------------------------------------------------

struct SweepPoint {
  double x = 0.0;
  std::uint64_t seed = 0;
  double bg_alpha = 0.0;    // filtering sweep
  double sig_alpha = 0.0;   // filtering sweep
  double value = 0.0;       // lambda sweep: bound
  bool flagged = false;     // non-finite training or nothing to measure
  std::string note;
};

struct KendallResult {
  double tau_b = 0.0;
  double z = 0.0;
  /// One-sided p-value for a decreasing trend.
  double p_decreasing = 1.0;
};

/// Kendall tau-b with the tie-corrected normal approximation.
KendallResult kendall(std::span<const double> x, std::span<const double> y);

struct SweepReport {
  std::string parameter;
  std::vector<double> grid;
  std::vector<SweepPoint> points;
  /// filtering sweep: least-squares gamma from bg_alpha ~ a + b*pi(1-pi) and
  /// the 0.5 crossing; NaN when the fit has no crossing.
  double gamma = 0.0;
  KendallResult trend;

  /// Median over seeds of `field` at each grid value.
  std::vector<double> medians(double SweepPoint::*field) const;
};

/// Mean alpha over samples where a dim's assigned factor is present, averaged
/// over background dims and over signal dims.
std::pair<double, double> gate_alpha_by_role(const Model& model, const ModelConfig& mc, const Batch& eval,
                                             std::size_t m);

/// For each pi: every background factor gets prevalence pi, BayesNCL is
/// trained per seed and gate openness is measured per role.
SweepReport filtering_sweep(const SyntheticSpec& tmpl, std::span<const double> pi_grid, const TrainConfig& tc,
                            const ModelConfig& mc, std::span<const std::uint64_t> seeds,
                            std::size_t eval_n = 2000);

// ---- background-induced error ----------------------------------------------

struct ErrorReductionReport {
  double e_ncl = 0.0;
  double e_bayes = 0.0;
  double spurious_sum = 0.0;
  double residual = 0.0;
  std::size_t background_dims = 0;
};

/// Negative pairs with different classes and a shared background set. E_ncl
/// uses raw features, E_bayes the hard-masked ones, both unnormalized.
ErrorReductionReport error_reduction_check(const Model& model, const ModelConfig& mc, const SyntheticSpec& spec,
                                           const Dictionary& dict, std::size_t n_pairs, Rng& rng,
                                           bool force_all_ones = false);

// ---- information bound ------------------------------------------------------

/// -p ln p - (1-p) ln(1-p) with 0 ln 0 = 0.
double binary_entropy(double p);

/// sum_k (p_k * c_cont + H_b(p_k)).
double info_bound(std::span<const double> mask_means, double c_cont);

struct InfoBoundReport {
  std::vector<double> mask_mean;
  double c_cont = 0.0;
  double bound = 0.0;
};

/// E[m_k] over X from the eval-phase hard mask. Without `c_cont` the constant
/// defaults to ln(1 + range of the active gated features).
InfoBoundReport info_bound_eval(const Model& model, const ModelConfig& mc, const Tensor& X,
                                std::optional<double> c_cont = std::nullopt);

SweepReport lambda_sweep(const SyntheticSpec& spec, std::span<const double> lambda_grid, const TrainConfig& tc,
                         const ModelConfig& mc, std::span<const std::uint64_t> seeds, double c_cont,
                         std::size_t eval_n = 2000);

// ---- IPW approximation ------------------------------------------------------

struct IpwReport {
  double rho_gated = 0.0;  // spearman(oracle, gated dot)
  double rho_raw = 0.0;    // spearman(oracle, raw dot)
};

/// Scores a pool of pairs (row i of the *_a tensors with row i of *_b).
IpwReport ipw_rank_compare(const Tensor& ind_a, const Tensor& ind_b, std::span<const double> pi,
                           const Tensor& gated_a, const Tensor& gated_b, const Tensor& raw_a, const Tensor& raw_b);

IpwReport ipw_alignment_check(const Model& model, const ModelConfig& mc, const SyntheticSpec& spec,
                              const Dictionary& dict, std::size_t n_pairs, Rng& rng);

/// Prevalence of every factor: class prior then background pi.
std::vector<double> factor_prevalence(const SyntheticSpec& spec);

}  // namespace ngcl
