#include "ngcl/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace ngcl {

void SyntheticSpec::validate() const {
  if (m < 2) throw std::invalid_argument("synthetic spec: m must be >= 2");
  if (d < m + B)
    throw std::invalid_argument("synthetic spec: d=" + std::to_string(d) + " is smaller than m+B=" +
                                std::to_string(m + B));
  if (prevalence.size() != B)
    throw std::invalid_argument("synthetic spec: prevalence has " + std::to_string(prevalence.size()) +
                                " entries, expected B=" + std::to_string(B));
  for (double p : prevalence)
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("synthetic spec: prevalence outside [0,1]");
  if (!(intensity_lo <= intensity_hi) || intensity_lo < 0.0)
    throw std::invalid_argument("synthetic spec: need 0 <= intensity_lo <= intensity_hi");
  if (!(noise_sigma >= 0.0)) throw std::invalid_argument("synthetic spec: noise_sigma must be >= 0");
  if (!class_prior.empty()) {
    if (class_prior.size() != m) throw std::invalid_argument("synthetic spec: class_prior length must equal m");
    double s = 0.0;
    for (double p : class_prior) {
      if (p < 0.0) throw std::invalid_argument("synthetic spec: negative class prior");
      s += p;
    }
    if (std::abs(s - 1.0) > 1e-12) throw std::invalid_argument("synthetic spec: class_prior must sum to 1");
  }
}

std::vector<double> SyntheticSpec::prior() const {
  if (!class_prior.empty()) return class_prior;
  return std::vector<double>(m, 1.0 / static_cast<double>(m));
}

Dictionary build_dictionary(const SyntheticSpec& spec) {
  spec.validate();
  const std::size_t d = spec.d, cols = spec.m + spec.B;
  Rng rng(spec.seed, 0xD1C7);
  Tensor a(d, cols);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < cols; ++j) a(i, j) = rng.normal();

  // Modified Gram-Schmidt over the columns.
  for (std::size_t j = 0; j < cols; ++j) {
    for (std::size_t p = 0; p < j; ++p) {
      double dot = 0.0;
      for (std::size_t i = 0; i < d; ++i) dot += a(i, p) * a(i, j);
      for (std::size_t i = 0; i < d; ++i) a(i, j) -= dot * a(i, p);
    }
    double nrm = 0.0;
    for (std::size_t i = 0; i < d; ++i) nrm += a(i, j) * a(i, j);
    nrm = std::sqrt(nrm);
    if (nrm == 0.0) throw std::runtime_error("build_dictionary: degenerate atom");
    for (std::size_t i = 0; i < d; ++i) a(i, j) /= nrm;
  }

  double coh = 0.0;
  for (std::size_t p = 0; p < cols; ++p)
    for (std::size_t q = p + 1; q < cols; ++q) {
      double dot = 0.0;
      for (std::size_t i = 0; i < d; ++i) dot += a(i, p) * a(i, q);
      coh = std::max(coh, std::abs(dot));
    }
  return Dictionary{std::move(a), coh};
}

namespace {

std::vector<double> render(const SyntheticSpec& spec, const Dictionary& dict, Rng& rng, std::size_t class_id,
                           const std::vector<bool>& bg_active, LatentState* record) {
  std::vector<double> coef(spec.m + spec.B, 0.0);
  coef[class_id] = rng.uniform(spec.intensity_lo, spec.intensity_hi);
  for (std::size_t b = 0; b < spec.B; ++b)
    if (bg_active[b]) coef[spec.m + b] = rng.uniform(spec.intensity_lo, spec.intensity_hi);
  if (record) {
    record->class_intensity = coef[class_id];
    record->bg_intensity.assign(coef.begin() + static_cast<std::ptrdiff_t>(spec.m), coef.end());
  }
  std::vector<double> x(spec.d, 0.0);
  for (std::size_t i = 0; i < spec.d; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < coef.size(); ++j)
      if (coef[j] != 0.0) s += dict.atoms(i, j) * coef[j];
    x[i] = s;
  }
  if (spec.noise_sigma > 0.0)
    for (double& v : x) v += spec.noise_sigma * rng.normal();
  return x;
}

}  // namespace

SamplePair sample_pair_given(const SyntheticSpec& spec, const Dictionary& dict, Rng& rng, std::size_t class_id,
                             const std::vector<bool>& bg_active) {
  if (class_id >= spec.m) throw std::invalid_argument("sample_pair_given: class id out of range");
  if (bg_active.size() != spec.B) throw std::invalid_argument("sample_pair_given: bg_active length must equal B");
  SamplePair p;
  p.latent.class_id = class_id;
  p.latent.bg_active = bg_active;
  p.x = render(spec, dict, rng, class_id, bg_active, &p.latent);
  p.x_plus = render(spec, dict, rng, class_id, bg_active, nullptr);
  return p;
}

SamplePair sample_pair(const SyntheticSpec& spec, const Dictionary& dict, Rng& rng) {
  const auto prior = spec.prior();
  const std::size_t c = rng.categorical(prior);
  std::vector<bool> bg(spec.B);
  for (std::size_t b = 0; b < spec.B; ++b) bg[b] = rng.bernoulli(spec.prevalence[b]);
  return sample_pair_given(spec, dict, rng, c, bg);
}

Batch make_batch(const SyntheticSpec& spec, const Dictionary& dict, Rng& rng, std::size_t n) {
  if (n < 2) throw std::invalid_argument("make_batch: n must be >= 2 for in-batch negatives");
  Batch b{Tensor(n, spec.d), Tensor(n, spec.d), {}};
  b.latents.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    SamplePair p = sample_pair(spec, dict, rng);
    std::copy(p.x.begin(), p.x.end(), b.anchors.row(i).begin());
    std::copy(p.x_plus.begin(), p.x_plus.end(), b.positives.row(i).begin());
    b.latents.push_back(std::move(p.latent));
  }
  return b;
}

std::vector<int> Batch::labels() const {
  std::vector<int> y(latents.size());
  for (std::size_t i = 0; i < latents.size(); ++i) y[i] = static_cast<int>(latents[i].class_id);
  return y;
}

Tensor Batch::background_indicators() const {
  const std::size_t B = latents.empty() ? 0 : latents[0].bg_active.size();
  Tensor t(latents.size(), B);
  for (std::size_t i = 0; i < latents.size(); ++i)
    for (std::size_t b = 0; b < B; ++b) t(i, b) = latents[i].bg_active[b] ? 1.0 : 0.0;
  return t;
}

LabeledSet batch_to_labeled(const Batch& batch, std::size_t class_count) {
  return LabeledSet{batch.anchors, batch.labels(), class_count};
}

void write_labeled_csv(const std::filesystem::path& path, const LabeledSet& set) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << "label";
  for (std::size_t j = 0; j < set.X.cols(); ++j) out << ",f" << j;
  out << '\n' << std::setprecision(17);
  for (std::size_t i = 0; i < set.X.rows(); ++i) {
    out << set.y[i];
    for (double v : set.X.row(i)) out << ',' << v;
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

LabeledSet read_labeled_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("label", 0) != 0)
    throw std::runtime_error(path.string() + ": missing 'label,f0,...' header");
  const std::size_t cols = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
  std::vector<double> data;
  std::vector<int> y;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    y.push_back(std::stoi(cell));
    std::size_t got = 0;
    while (std::getline(ss, cell, ',')) {
      data.push_back(std::stod(cell));
      ++got;
    }
    if (got != cols) throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": wrong field count");
  }
  const int mx = y.empty() ? -1 : *std::max_element(y.begin(), y.end());
  if (!y.empty() && *std::min_element(y.begin(), y.end()) < 0) throw std::runtime_error(path.string() + ": negative label");
  return LabeledSet{Tensor(y.size(), cols, std::move(data)), std::move(y), static_cast<std::size_t>(mx + 1)};
}

namespace {

constexpr std::size_t kCifarRecords = 10000;
constexpr std::size_t kCifarPixels = 3072;
constexpr std::uintmax_t kCifarFileBytes = kCifarRecords * (1 + kCifarPixels);

void read_cifar_file(const std::filesystem::path& file, Tensor& X, std::vector<int>& y, std::size_t row0) {
  if (!std::filesystem::exists(file)) throw std::runtime_error("missing CIFAR-10 file " + file.string());
  const auto size = std::filesystem::file_size(file);
  if (size != kCifarFileBytes)
    throw std::runtime_error(file.string() + ": size " + std::to_string(size) + " bytes, expected " +
                             std::to_string(kCifarFileBytes));
  std::ifstream in(file, std::ios::binary);
  std::vector<unsigned char> rec(1 + kCifarPixels);
  for (std::size_t r = 0; r < kCifarRecords; ++r) {
    if (!in.read(reinterpret_cast<char*>(rec.data()), static_cast<std::streamsize>(rec.size())))
      throw std::runtime_error(file.string() + ": short read at record " + std::to_string(r));
    if (rec[0] >= 10)
      throw std::runtime_error(file.string() + ": record " + std::to_string(r) + ": label " +
                               std::to_string(rec[0]) + " out of range [0,10)");
    y[row0 + r] = rec[0];
    auto row = X.row(row0 + r);
    for (std::size_t p = 0; p < kCifarPixels; ++p) row[p] = rec[1 + p] / 255.0;
  }
}

}  // namespace

CifarData load_cifar10(const std::filesystem::path& dir) {
  CifarData out;
  out.train = LabeledSet{Tensor(5 * kCifarRecords, kCifarPixels), std::vector<int>(5 * kCifarRecords), 10};
  out.test = LabeledSet{Tensor(kCifarRecords, kCifarPixels), std::vector<int>(kCifarRecords), 10};
  for (int b = 1; b <= 5; ++b)
    read_cifar_file(dir / ("data_batch_" + std::to_string(b) + ".bin"), out.train.X, out.train.y,
                    static_cast<std::size_t>(b - 1) * kCifarRecords);
  read_cifar_file(dir / "test_batch.bin", out.test.X, out.test.y, 0);

  constexpr std::size_t plane = 1024;
  for (std::size_t ch = 0; ch < 3; ++ch) {
    double sum = 0.0, sq = 0.0;
    const Tensor& X = out.train.X;
    for (std::size_t i = 0; i < X.rows(); ++i)
      for (std::size_t p = ch * plane; p < (ch + 1) * plane; ++p) {
        sum += X(i, p);
        sq += X(i, p) * X(i, p);
      }
    const double n = static_cast<double>(X.rows() * plane);
    const double mean = sum / n;
    const double sd = std::sqrt(std::max(sq / n - mean * mean, 1e-12));
    for (Tensor* t : {&out.train.X, &out.test.X})
      for (std::size_t i = 0; i < t->rows(); ++i)
        for (std::size_t p = ch * plane; p < (ch + 1) * plane; ++p) (*t)(i, p) = ((*t)(i, p) - mean) / sd;
  }
  return out;
}

}  // namespace ngcl
