#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ngcl/rng.hpp"
#include "ngcl/tensor.hpp"

namespace ngcl {

/// Compositional generator: one class atom plus a random subset of
/// background atoms, each scaled by a per-view intensity, plus noise.
struct SyntheticSpec {
  std::size_t d = 64;
  std::size_t m = 10;
  std::size_t B = 4;
  std::vector<double> prevalence = {0.9, 0.9, 0.9, 0.9};
  double intensity_lo = 0.8;
  double intensity_hi = 1.2;
  double noise_sigma = 0.05;
  /// Empty means uniform over the m classes.
  std::vector<double> class_prior;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument describing the first violated invariant.
  void validate() const;
  std::vector<double> prior() const;
};

struct Dictionary {
  Tensor atoms;  // d x (m + B); class atoms first, then background atoms
  double coherence = 0.0;
};

struct LatentState {
  std::size_t class_id = 0;
  double class_intensity = 0.0;
  std::vector<bool> bg_active;
  std::vector<double> bg_intensity;
};

struct SamplePair {
  std::vector<double> x;
  std::vector<double> x_plus;
  LatentState latent;  // intensities are those of the anchor view
};

struct Batch {
  Tensor anchors;    // n x d
  Tensor positives;  // n x d
  std::vector<LatentState> latents;

  std::vector<int> labels() const;
  /// n x B 0/1 matrix of background activity.
  Tensor background_indicators() const;
};

struct LabeledSet {
  Tensor X;
  std::vector<int> y;
  std::size_t class_count = 0;
};

Dictionary build_dictionary(const SyntheticSpec& spec);

SamplePair sample_pair(const SyntheticSpec& spec, const Dictionary& dict, Rng& rng);
/// Pair with a prescribed class and background-active set.
SamplePair sample_pair_given(const SyntheticSpec& spec, const Dictionary& dict, Rng& rng, std::size_t class_id,
                             const std::vector<bool>& bg_active);

Batch make_batch(const SyntheticSpec& spec, const Dictionary& dict, Rng& rng, std::size_t n);

/// Anchor views of `n` pairs as a labeled set.
LabeledSet batch_to_labeled(const Batch& batch, std::size_t class_count);

/// Writes `label,f0,...,f{d-1}` CSV.
void write_labeled_csv(const std::filesystem::path& path, const LabeledSet& set);
LabeledSet read_labeled_csv(const std::filesystem::path& path);

struct CifarData {
  LabeledSet train;
  LabeledSet test;
};

/// Reads data_batch_1..5.bin and test_batch.bin. Pixels are scaled to [0,1]
/// and standardized per channel with the training-set mean and std.
CifarData load_cifar10(const std::filesystem::path& dir);

}  // namespace ngcl
