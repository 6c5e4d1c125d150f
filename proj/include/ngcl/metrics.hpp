#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ngcl/tensor.hpp"

namespace ngcl {

inline constexpr double kActivationEps = 1e-5;

/// Per-dimension values; NaN for dimensions with no active sample.
struct DimScores {
  std::vector<double> per_dim;
  double mean = 0.0;  // over active dimensions
};

DimScores semantic_consistency(const Tensor& features, std::span<const int> labels, std::size_t class_count,
                               double eps = kActivationEps);

enum class EntropyMode { sum, mean, freq };

DimScores semantic_entropy(const Tensor& features, std::span<const int> labels, std::size_t class_count,
                           EntropyMode mode, double eps = kActivationEps);

/// Fraction of dimensions active on at least one sample.
double activation_ratio(const Tensor& features, double eps = kActivationEps);

/// Per-dimension fraction of samples with |z| > eps.
std::vector<double> activation_frequency(const Tensor& features, double eps = kActivationEps);

struct MetricsReport {
  DimScores sc;
  double h_sum = 0.0;
  double h_mean = 0.0;
  double h_freq = 0.0;
  double act = 0.0;
  std::vector<std::size_t> active_dims;
};

MetricsReport interpretability_report(const Tensor& features, std::span<const int> labels, std::size_t class_count,
                                      double eps = kActivationEps);

struct ProbeConfig {
  double lr = 0.5;
  std::size_t epochs = 200;
  double weight_decay = 1e-4;
  bool standardize = true;
};

struct ProbeResult {
  double top1 = 0.0;
  double top5 = 0.0;
  Tensor weights;  // (K + 1) x C, last row is the bias
};

ProbeResult linear_probe(const Tensor& train_x, std::span<const int> train_y, const Tensor& test_x,
                         std::span<const int> test_y, std::size_t class_count, const ProbeConfig& cfg = {});

struct RetrievalResult {
  std::vector<std::size_t> ks;
  std::vector<double> precision;
  std::vector<std::size_t> selected_dims;
};

/// Cosine k-NN retrieval. `select_dims` keeps the dimensions with the largest
/// total |activation| over the gallery. With `same_set` each query i is
/// excluded from gallery row i.
RetrievalResult retrieval(const Tensor& queries, std::span<const int> query_labels, const Tensor& gallery,
                          std::span<const int> gallery_labels, std::span<const std::size_t> ks,
                          std::optional<std::size_t> select_dims = std::nullopt, bool same_set = false);

/// Average ranks (1-based) with ties sharing their mean rank.
std::vector<double> average_ranks(std::span<const double> x);

/// Pearson correlation of average ranks.
double spearman(std::span<const double> x, std::span<const double> y);

}  // namespace ngcl
