#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "ngcl/metrics.hpp"
#include "ngcl/rng.hpp"
#include "oracles.hpp"

using namespace ngcl;
using namespace ngcl::oracle;

namespace {

Tensor dense_random(Rng& rng, std::size_t n, std::size_t K) {
  Tensor t(n, K);
  for (auto& v : t.data()) v = rng.uniform(0.1, 1.0);
  return t;
}

std::vector<int> random_labels(Rng& rng, std::size_t n, int C) {
  std::vector<int> y(n);
  for (auto& v : y) v = static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(C));
  return y;
}

}  // namespace

TEST(Consistency, SingleClassDim) {
  const Tensor f = Tensor::from_rows({{1, 0}, {2, 1}, {0, 1}, {0, 1}});
  const std::vector<int> y = {3, 3, 1, 1};
  const DimScores sc = semantic_consistency(f, y, 4);
  EXPECT_EQ(sc.per_dim[0], 1.0);
  EXPECT_NEAR(sc.per_dim[1], 2.0 / 3.0, 1e-15);
}

TEST(Consistency, HandCount) {
  const Tensor f = Tensor::from_rows({{1}, {1}, {1}, {1}, {0}});
  const std::vector<int> y = {0, 0, 0, 1, 1};
  EXPECT_DOUBLE_EQ(semantic_consistency(f, y, 2).per_dim[0], 0.75);
}

TEST(Consistency, NoActiveDims) {
  const std::vector<int> y = {0, 1};
  EXPECT_THROW(semantic_consistency(Tensor(2, 3), y, 2), std::invalid_argument);
  const DimScores partial = semantic_consistency(Tensor::from_rows({{0, 1}, {0, 1}}), y, 2);
  EXPECT_TRUE(std::isnan(partial.per_dim[0]));
  EXPECT_EQ(partial.mean, 0.5);
}

TEST(Entropy, UniformFrequencyIsLnC) {
  Tensor f(100, 1, 1.0);
  std::vector<int> y(100);
  for (int i = 0; i < 100; ++i) y[i] = i % 10;
  EXPECT_NEAR(semantic_entropy(f, y, 10, EntropyMode::freq).mean, std::log(10.0), 1e-12);
  EXPECT_NEAR(std::log(10.0), 2.30, 0.005);
}

TEST(Entropy, SingleClassIsZeroInEveryMode) {
  const Tensor f = Tensor::from_rows({{0.5}, {2.0}, {0.0}});
  const std::vector<int> y = {4, 4, 1};
  for (EntropyMode m : {EntropyMode::sum, EntropyMode::mean, EntropyMode::freq})
    EXPECT_EQ(semantic_entropy(f, y, 5, m).per_dim[0], 0.0);
}

TEST(Entropy, MassThreeToOne) {
  const Tensor f = Tensor::from_rows({{3.0}, {1.0}});
  const std::vector<int> y = {0, 1};
  const double h = -0.75 * std::log(0.75) - 0.25 * std::log(0.25);
  EXPECT_NEAR(semantic_entropy(f, y, 2, EntropyMode::sum).per_dim[0], h, 1e-12);
  EXPECT_NEAR(h, 0.5623, 1e-4);
}

TEST(Entropy, MeanModeUsesClassMeans) {
  // class 0 mean 2, class 1 mean 2 -> uniform even though mass is 4:2
  const Tensor f = Tensor::from_rows({{2}, {2}, {2}});
  const std::vector<int> y = {0, 0, 1};
  EXPECT_NEAR(semantic_entropy(f, y, 2, EntropyMode::mean).per_dim[0], std::log(2.0), 1e-12);
  EXPECT_NEAR(semantic_entropy(f, y, 2, EntropyMode::sum).per_dim[0],
              -(2.0 / 3) * std::log(2.0 / 3) - (1.0 / 3) * std::log(1.0 / 3), 1e-12);
}

TEST(Metrics, Invariances) {
  Rng rng(17);
  Tensor f = dense_random(rng, 300, 8);
  for (std::size_t i = 0; i < f.size(); ++i)
    if (rng.uniform() < 0.5) f[i] = 0.0;
  const auto y = random_labels(rng, 300, 5);
  Tensor scaled_dims = f, scaled_all = f;
  for (std::size_t i = 0; i < f.rows(); ++i)
    for (std::size_t k = 0; k < f.cols(); ++k) {
      scaled_dims(i, k) *= 0.5 + k;
      scaled_all(i, k) *= 3.7;
    }
  EXPECT_EQ(semantic_consistency(f, y, 5).per_dim, semantic_consistency(scaled_dims, y, 5).per_dim);
  EXPECT_EQ(semantic_entropy(f, y, 5, EntropyMode::freq).per_dim,
            semantic_entropy(scaled_dims, y, 5, EntropyMode::freq).per_dim);
  for (EntropyMode m : {EntropyMode::sum, EntropyMode::mean}) {
    const auto a = semantic_entropy(f, y, 5, m).per_dim, b = semantic_entropy(scaled_all, y, 5, m).per_dim;
    for (std::size_t k = 0; k < a.size(); ++k) EXPECT_NEAR(a[k], b[k], 1e-12);
  }
  // SC = 1 exactly when the frequency entropy vanishes
  Tensor g(6, 3);
  const std::vector<int> yy = {0, 0, 1, 1, 2, 2};
  g(0, 0) = g(1, 0) = 1;                    // pure
  g(0, 1) = g(2, 1) = 1;                    // mixed
  g(4, 2) = 1;                              // pure, single sample
  const auto sc = semantic_consistency(g, yy, 3).per_dim;
  const auto hf = semantic_entropy(g, yy, 3, EntropyMode::freq).per_dim;
  for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(sc[k] == 1.0, hf[k] == 0.0);
}

TEST(Metrics, ActivationRatio) {
  Rng rng(2);
  Tensor f = dense_random(rng, 20, 10);
  EXPECT_EQ(activation_ratio(f), 1.0);
  EXPECT_EQ(activation_ratio(Tensor(20, 10)), 0.0);
  for (std::size_t i = 0; i < 20; ++i)
    for (std::size_t k = 0; k < 5; ++k) f(i, k) = 0.0;
  EXPECT_EQ(activation_ratio(f), 0.5);
}

TEST(Metrics, ActivationFrequencyMonotoneInEps) {
  Rng rng(5);
  const Tensor f = dense_random(rng, 100, 6);
  auto prev = activation_frequency(f, 0.0);
  for (double eps : {0.2, 0.4, 0.6, 0.8, 1.0}) {
    const auto cur = activation_frequency(f, eps);
    for (std::size_t k = 0; k < cur.size(); ++k) EXPECT_LE(cur[k], prev[k]);
    prev = cur;
  }
}

TEST(Metrics, DenseRandomIsChance) {
  Rng rng(42);
  const Tensor f = dense_random(rng, 5000, 64);
  const auto y = random_labels(rng, 5000, 10);
  const MetricsReport r = interpretability_report(f, y, 10);
  EXPECT_NEAR(r.sc.mean, 0.10, 0.01);
  EXPECT_NEAR(r.h_freq, std::log(10.0), 0.02);
  EXPECT_EQ(r.act, 1.0);
}

TEST(Probe, SeparableTwoClass) {
  Tensor x(40, 2);
  std::vector<int> y(40);
  for (int i = 0; i < 40; ++i) {
    y[i] = i % 2;
    x(i, 0) = y[i] ? 1.0 + 0.01 * i : -1.0 - 0.01 * i;
    x(i, 1) = 0.3 * (i % 5);
  }
  const ProbeResult r = linear_probe(x, y, x, y, 2);
  EXPECT_EQ(r.top1, 1.0);
  EXPECT_GE(r.top5, r.top1);
  EXPECT_EQ(r.weights.rows(), 3u);
}

TEST(Probe, RandomFeaturesAtChance) {
  Rng rng(8);
  const Tensor tr = dense_random(rng, 2000, 16), te = dense_random(rng, 2000, 16);
  const auto ytr = random_labels(rng, 2000, 10), yte = random_labels(rng, 2000, 10);
  EXPECT_NEAR(linear_probe(tr, ytr, te, yte, 10).top1, 0.10, 0.03);
}

TEST(Probe, TopFiveWithFiveClasses) {
  Rng rng(9);
  const Tensor tr = dense_random(rng, 100, 4), te = dense_random(rng, 50, 4);
  const auto ytr = random_labels(rng, 100, 5), yte = random_labels(rng, 50, 5);
  EXPECT_EQ(linear_probe(tr, ytr, te, yte, 5).top5, 1.0);
}

TEST(Probe, SingleClassRejected) {
  const Tensor x(4, 2, 1.0);
  const std::vector<int> y(4, 1);
  EXPECT_THROW(linear_probe(x, y, x, y, 3), std::invalid_argument);
}

TEST(Retrieval, OneHotClassesPerfect) {
  Tensor f(30, 3);
  std::vector<int> y(30);
  for (int i = 0; i < 30; ++i) {
    y[i] = i % 3;
    f(i, i % 3) = 1.0 + 0.01 * i;
  }
  const std::size_t ks[] = {1, 5};
  const RetrievalResult r = retrieval(f, y, f, y, ks, std::nullopt, true);
  EXPECT_EQ(r.precision[0], 1.0);
  EXPECT_EQ(r.precision[1], 1.0);
}

TEST(Retrieval, ShuffledLabelsAtChance) {
  Rng rng(10);
  const Tensor g = dense_random(rng, 1000, 8);
  const auto gy = random_labels(rng, 1000, 5);
  const std::size_t ks[] = {10};
  EXPECT_NEAR(retrieval(g, gy, g, gy, ks, std::nullopt, true).precision[0], 0.2, 0.03);
}

TEST(Retrieval, SelectAllIsNoSelection) {
  Rng rng(11);
  const Tensor g = dense_random(rng, 80, 6);
  const auto y = random_labels(rng, 80, 4);
  const std::size_t ks[] = {1, 5};
  EXPECT_EQ(retrieval(g, y, g, y, ks, std::size_t{6}, true).precision, retrieval(g, y, g, y, ks, std::nullopt, true).precision);
  EXPECT_THROW(retrieval(g, y, g, y, ks, std::size_t{7}, true), std::invalid_argument);
}

TEST(Retrieval, SelectionByMass) {
  const Tensor g = Tensor::from_rows({{1, 5, 2}, {1, 5, 2}, {1, 5, 2}});
  const std::vector<int> y = {0, 1, 0};
  const std::size_t ks[] = {1};
  EXPECT_EQ(retrieval(g, y, g, y, ks, std::size_t{2}, true).selected_dims, (std::vector<std::size_t>{1, 2}));
}

TEST(Retrieval, MatchesExhaustiveRecount) {
  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 20 + rng.next_u64() % 180;
    Tensor g(n, 5);
    // coarse values make exact ties likely
    for (auto& v : g.data()) v = static_cast<double>(rng.next_u64() % 4);
    const auto y = random_labels(rng, n, 4);
    Tensor q = dense_random(rng, 15, 5);
    const auto qy = random_labels(rng, 15, 4);
    const std::vector<std::size_t> ks = {1, 3, 7};
    const RetrievalResult self = retrieval(g, y, g, y, ks, std::nullopt, true);
    const RetrievalResult cross = retrieval(q, qy, g, y, ks, std::nullopt, false);
    for (std::size_t i = 0; i < ks.size(); ++i) {
      EXPECT_DOUBLE_EQ(self.precision[i], brute_precision(g, y, g, y, ks[i], true));
      EXPECT_DOUBLE_EQ(cross.precision[i], brute_precision(q, qy, g, y, ks[i], false));
    }
  }
}

TEST(Retrieval, PermutationInvariant) {
  Rng rng(13);
  const Tensor g = dense_random(rng, 60, 5);
  const auto y = random_labels(rng, 60, 3);
  const Tensor q = dense_random(rng, 10, 5);
  const auto qy = random_labels(rng, 10, 3);
  std::vector<std::size_t> perm(60);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::reverse(perm.begin(), perm.end());
  Tensor gp(60, 5);
  std::vector<int> yp(60);
  for (std::size_t i = 0; i < 60; ++i) {
    yp[i] = y[perm[i]];
    for (std::size_t k = 0; k < 5; ++k) gp(i, k) = g(perm[i], k);
  }
  const std::size_t ks[] = {1, 5, 10};
  EXPECT_EQ(retrieval(q, qy, g, y, ks).precision, retrieval(q, qy, gp, yp, ks).precision);
}

TEST(Spearman, Examples) {
  const std::vector<double> x = {1, 2, 3, 4, 5}, r = {5, 4, 3, 2, 1};
  EXPECT_NEAR(spearman(x, x), 1.0, 1e-15);
  EXPECT_NEAR(spearman(x, r), -1.0, 1e-15);
  const std::vector<double> a = {1, 2, 3}, b = {1, 3, 2};
  EXPECT_NEAR(spearman(a, b), 0.5, 1e-15);
  const std::vector<double> c = {2, 2, 2};
  EXPECT_THROW(spearman(a, c), std::invalid_argument);
  const std::vector<double> shorty = {1, 2};
  EXPECT_THROW(spearman(shorty, shorty), std::invalid_argument);
}

TEST(Spearman, AverageRanks) {
  const std::vector<double> x = {10, 20, 20, 5};
  EXPECT_EQ(average_ranks(x), (std::vector<double>{2, 3.5, 3.5, 1}));
}

TEST(Spearman, MatchesBruteForceWithTies) {
  Rng rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 3 + rng.next_u64() % 60;
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = static_cast<double>(rng.next_u64() % 7);
      y[i] = static_cast<double>(rng.next_u64() % 5) + 0.5 * x[i];
    }
    if (std::all_of(x.begin(), x.end(), [&](double v) { return v == x[0]; })) x[0] += 1;
    if (std::all_of(y.begin(), y.end(), [&](double v) { return v == y[0]; })) y[0] += 1;
    EXPECT_NEAR(spearman(x, y), brute_spearman(x, y), 1e-12);
  }
}
