#include "ngcl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace ngcl {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_labels(const Tensor& f, std::span<const int> labels, std::size_t class_count) {
  if (f.rows() == 0) throw std::invalid_argument("metrics: no samples");
  if (labels.size() != f.rows())
    throw std::invalid_argument("metrics: " + std::to_string(labels.size()) + " labels for " +
                                std::to_string(f.rows()) + " samples");
  if (class_count < 2) throw std::invalid_argument("metrics: need at least 2 classes");
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= class_count)
      throw std::invalid_argument("metrics: label " + std::to_string(y) + " outside [0," +
                                  std::to_string(class_count) + ")");
}

double entropy(std::span<const double> p) {
  double h = 0.0;
  for (double v : p)
    if (v > 0.0) h -= v * std::log(v);
  return h;
}

DimScores finish(std::vector<double> per_dim) {
  double s = 0.0;
  std::size_t n = 0;
  for (double v : per_dim)
    if (!std::isnan(v)) {
      s += v;
      ++n;
    }
  if (n == 0) throw std::invalid_argument("no active dimensions");
  return DimScores{std::move(per_dim), s / static_cast<double>(n)};
}

}  // namespace

DimScores semantic_consistency(const Tensor& f, std::span<const int> labels, std::size_t class_count, double eps) {
  check_labels(f, labels, class_count);
  std::vector<double> sc(f.cols(), kNaN);
  std::vector<std::size_t> counts(class_count);
  for (std::size_t j = 0; j < f.cols(); ++j) {
    std::fill(counts.begin(), counts.end(), 0);
    std::size_t active = 0;
    for (std::size_t i = 0; i < f.rows(); ++i)
      if (std::abs(f(i, j)) > eps) {
        ++counts[static_cast<std::size_t>(labels[i])];
        ++active;
      }
    if (active > 0)
      sc[j] = static_cast<double>(*std::max_element(counts.begin(), counts.end())) / static_cast<double>(active);
  }
  return finish(std::move(sc));
}

DimScores semantic_entropy(const Tensor& f, std::span<const int> labels, std::size_t class_count, EntropyMode mode,
                           double eps) {
  check_labels(f, labels, class_count);
  std::vector<double> class_size(class_count, 0.0);
  for (int y : labels) class_size[static_cast<std::size_t>(y)] += 1.0;

  std::vector<double> h(f.cols(), kNaN);
  std::vector<double> w(class_count);
  for (std::size_t j = 0; j < f.cols(); ++j) {
    std::fill(w.begin(), w.end(), 0.0);
    std::size_t active = 0;
    for (std::size_t i = 0; i < f.rows(); ++i) {
      const double a = std::abs(f(i, j));
      if (a <= eps) continue;
      ++active;
      w[static_cast<std::size_t>(labels[i])] += mode == EntropyMode::freq ? 1.0 : a;
    }
    if (active == 0) continue;
    if (mode == EntropyMode::mean)
      for (std::size_t c = 0; c < class_count; ++c) w[c] = class_size[c] > 0.0 ? w[c] / class_size[c] : 0.0;
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    for (double& v : w) v /= total;
    h[j] = entropy(w);
  }
  return finish(std::move(h));
}

std::vector<double> activation_frequency(const Tensor& f, double eps) {
  std::vector<double> af(f.cols(), 0.0);
  if (f.rows() == 0) return af;
  for (std::size_t i = 0; i < f.rows(); ++i)
    for (std::size_t j = 0; j < f.cols(); ++j)
      if (std::abs(f(i, j)) > eps) af[j] += 1.0;
  for (double& v : af) v /= static_cast<double>(f.rows());
  return af;
}

double activation_ratio(const Tensor& f, double eps) {
  if (f.cols() == 0) return 0.0;
  const auto af = activation_frequency(f, eps);
  const auto active = std::count_if(af.begin(), af.end(), [](double v) { return v > 0.0; });
  return static_cast<double>(active) / static_cast<double>(f.cols());
}

MetricsReport interpretability_report(const Tensor& f, std::span<const int> labels, std::size_t class_count,
                                      double eps) {
  MetricsReport r;
  r.sc = semantic_consistency(f, labels, class_count, eps);
  r.h_sum = semantic_entropy(f, labels, class_count, EntropyMode::sum, eps).mean;
  r.h_mean = semantic_entropy(f, labels, class_count, EntropyMode::mean, eps).mean;
  r.h_freq = semantic_entropy(f, labels, class_count, EntropyMode::freq, eps).mean;
  r.act = activation_ratio(f, eps);
  for (std::size_t j = 0; j < r.sc.per_dim.size(); ++j)
    if (!std::isnan(r.sc.per_dim[j])) r.active_dims.push_back(j);
  return r;
}

ProbeResult linear_probe(const Tensor& train_x, std::span<const int> train_y, const Tensor& test_x,
                         std::span<const int> test_y, std::size_t C, const ProbeConfig& cfg) {
  check_labels(train_x, train_y, C);
  check_labels(test_x, test_y, C);
  if (train_x.cols() != test_x.cols()) throw std::invalid_argument("linear_probe: train/test width mismatch");
  if (std::all_of(train_y.begin(), train_y.end(), [&](int y) { return y == train_y[0]; }))
    throw std::invalid_argument("linear_probe: training set has a single class");

  const std::size_t n = train_x.rows(), K = train_x.cols();
  std::vector<double> mu(K, 0.0), sd(K, 1.0);
  if (cfg.standardize) {
    for (std::size_t j = 0; j < K; ++j) {
      double s = 0.0, q = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        s += train_x(i, j);
        q += train_x(i, j) * train_x(i, j);
      }
      mu[j] = s / static_cast<double>(n);
      const double var = q / static_cast<double>(n) - mu[j] * mu[j];
      sd[j] = var > 1e-24 ? std::sqrt(var) : 1.0;
    }
  }
  auto prep = [&](const Tensor& x) {
    Tensor out(x.rows(), K + 1);
    for (std::size_t i = 0; i < x.rows(); ++i) {
      for (std::size_t j = 0; j < K; ++j) out(i, j) = (x(i, j) - mu[j]) / sd[j];
      out(i, K) = 1.0;
    }
    return out;
  };
  const Tensor X = prep(train_x);
  const Tensor Xt = prep(test_x);

  Tensor W(K + 1, C);
  Tensor P(n, C);
  Tensor G(K + 1, C);
  for (std::size_t ep = 0; ep < cfg.epochs; ++ep) {
    for (std::size_t i = 0; i < n; ++i) {
      auto p = P.row(i);
      std::fill(p.begin(), p.end(), 0.0);
      auto x = X.row(i);
      for (std::size_t j = 0; j <= K; ++j) {
        if (x[j] == 0.0) continue;
        auto w = W.row(j);
        for (std::size_t c = 0; c < C; ++c) p[c] += x[j] * w[c];
      }
      const double mx = *std::max_element(p.begin(), p.end());
      double s = 0.0;
      for (double& v : p) {
        v = std::exp(v - mx);
        s += v;
      }
      for (double& v : p) v /= s;
      p[static_cast<std::size_t>(train_y[i])] -= 1.0;
    }
    std::fill(G.data().begin(), G.data().end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      auto x = X.row(i);
      auto p = P.row(i);
      for (std::size_t j = 0; j <= K; ++j) {
        if (x[j] == 0.0) continue;
        auto g = G.row(j);
        for (std::size_t c = 0; c < C; ++c) g[c] += x[j] * p[c];
      }
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t j = 0; j <= K; ++j)
      for (std::size_t c = 0; c < C; ++c) {
        const double decay = j < K ? cfg.weight_decay * W(j, c) : 0.0;
        W(j, c) -= cfg.lr * (G(j, c) * inv_n + decay);
      }
  }

  std::size_t hit1 = 0, hit5 = 0;
  std::vector<double> score(C);
  for (std::size_t i = 0; i < Xt.rows(); ++i) {
    std::fill(score.begin(), score.end(), 0.0);
    for (std::size_t j = 0; j <= K; ++j)
      for (std::size_t c = 0; c < C; ++c) score[c] += Xt(i, j) * W(j, c);
    const auto y = static_cast<std::size_t>(test_y[i]);
    // rank of the true class; ties resolved toward the lower class index
    std::size_t rank = 0;
    for (std::size_t c = 0; c < C; ++c)
      if (score[c] > score[y] || (score[c] == score[y] && c < y)) ++rank;
    if (rank < 1) ++hit1;
    if (rank < 5) ++hit5;
  }
  const double nt = static_cast<double>(Xt.rows());
  return ProbeResult{static_cast<double>(hit1) / nt, static_cast<double>(hit5) / nt, std::move(W)};
}

RetrievalResult retrieval(const Tensor& queries, std::span<const int> query_labels, const Tensor& gallery,
                          std::span<const int> gallery_labels, std::span<const std::size_t> ks,
                          std::optional<std::size_t> select_dims, bool same_set) {
  const std::size_t K = gallery.cols();
  if (queries.cols() != K) throw std::invalid_argument("retrieval: query/gallery width mismatch");
  if (query_labels.size() != queries.rows() || gallery_labels.size() != gallery.rows())
    throw std::invalid_argument("retrieval: label count mismatch");
  if (same_set && queries.rows() != gallery.rows())
    throw std::invalid_argument("retrieval: same_set needs identical query and gallery sets");
  const std::size_t pool = gallery.rows() - (same_set ? 1 : 0);
  for (std::size_t k : ks)
    if (k == 0 || k > pool) throw std::invalid_argument("retrieval: k=" + std::to_string(k) + " exceeds gallery size");

  RetrievalResult r;
  r.ks.assign(ks.begin(), ks.end());
  std::vector<std::size_t> dims(K);
  std::iota(dims.begin(), dims.end(), std::size_t{0});
  if (select_dims) {
    if (*select_dims > K)
      throw std::invalid_argument("retrieval: select_dims " + std::to_string(*select_dims) + " exceeds K=" +
                                  std::to_string(K));
    std::vector<double> mass(K, 0.0);
    for (std::size_t i = 0; i < gallery.rows(); ++i)
      for (std::size_t j = 0; j < K; ++j) mass[j] += std::abs(gallery(i, j));
    std::stable_sort(dims.begin(), dims.end(), [&](std::size_t a, std::size_t b) { return mass[a] > mass[b]; });
    dims.resize(*select_dims);
    std::sort(dims.begin(), dims.end());
  }
  r.selected_dims = dims;

  auto project = [&](const Tensor& x) {
    Tensor out(x.rows(), dims.size());
    for (std::size_t i = 0; i < x.rows(); ++i) {
      double nrm = 0.0;
      for (std::size_t j = 0; j < dims.size(); ++j) {
        out(i, j) = x(i, dims[j]);
        nrm += out(i, j) * out(i, j);
      }
      nrm = std::sqrt(nrm);
      if (nrm > 0.0)
        for (double& v : out.row(i)) v /= nrm;
    }
    return out;
  };
  const Tensor Q = project(queries);
  const Tensor G = project(gallery);

  r.precision.assign(ks.size(), 0.0);
  const std::size_t kmax = ks.empty() ? 0 : *std::max_element(ks.begin(), ks.end());
  std::vector<std::pair<double, std::size_t>> sims;
  for (std::size_t q = 0; q < Q.rows(); ++q) {
    sims.clear();
    for (std::size_t i = 0; i < G.rows(); ++i) {
      if (same_set && i == q) continue;
      double s = 0.0;
      for (std::size_t j = 0; j < dims.size(); ++j) s += Q(q, j) * G(i, j);
      sims.emplace_back(-s, i);
    }
    std::partial_sort(sims.begin(), sims.begin() + static_cast<std::ptrdiff_t>(kmax), sims.end());
    for (std::size_t t = 0; t < ks.size(); ++t) {
      std::size_t hits = 0;
      for (std::size_t i = 0; i < ks[t]; ++i)
        if (gallery_labels[sims[i].second] == query_labels[q]) ++hits;
      r.precision[t] += static_cast<double>(hits) / static_cast<double>(ks[t]);
    }
  }
  for (double& p : r.precision) p /= static_cast<double>(Q.rows());
  return r;
}

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t t = i; t <= j; ++t) r[idx[t]] = avg;
    i = j + 1;
  }
  return r;
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("spearman: length mismatch");
  if (x.size() < 3) throw std::invalid_argument("spearman: need at least 3 points");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mean = (n + 1.0) / 2.0;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    const double a = rx[i] - mean, b = ry[i] - mean;
    sxy += a * b;
    sxx += a * a;
    syy += b * b;
  }
  if (sxx == 0.0 || syy == 0.0) throw std::invalid_argument("spearman: constant input");
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace ngcl
