#include <gtest/gtest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "ngcl/datagen.hpp"

using namespace ngcl;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ngcl_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_cifar_file(const fs::path& p, std::size_t records, int label, std::uint8_t pixel) {
  std::ofstream out(p, std::ios::binary);
  std::string rec(3073, static_cast<char>(pixel));
  rec[0] = static_cast<char>(label);
  for (std::size_t r = 0; r < records; ++r) out.write(rec.data(), rec.size());
}

}  // namespace

TEST(Datagen, BatchShapes) {
  SyntheticSpec spec;
  const Dictionary dict = build_dictionary(spec);
  EXPECT_EQ(dict.atoms.rows(), spec.d);
  EXPECT_EQ(dict.atoms.cols(), spec.m + spec.B);
  Rng rng(1);
  const Batch b = make_batch(spec, dict, rng, 4);
  EXPECT_EQ(b.anchors.rows(), 4u);
  EXPECT_EQ(b.anchors.cols(), spec.d);
  EXPECT_EQ(b.positives.rows(), 4u);
  EXPECT_EQ(b.positives.cols(), spec.d);
  EXPECT_EQ(b.latents.size(), 4u);
  EXPECT_THROW(make_batch(spec, dict, rng, 1), std::invalid_argument);
}

TEST(Datagen, SameSeedSameBatch) {
  SyntheticSpec spec;
  const Dictionary dict = build_dictionary(spec);
  Rng a(9, 1), b(9, 1);
  const Batch x = make_batch(spec, dict, a, 16);
  const Batch y = make_batch(spec, dict, b, 16);
  EXPECT_EQ(x.anchors, y.anchors);
  EXPECT_EQ(x.positives, y.positives);
  EXPECT_EQ(x.labels(), y.labels());
}

TEST(Datagen, LatentsAlignWithRows) {
  // noise-free, unit intensity: each row is exactly its class atom plus the
  // active background atoms, so the latent rows can be read back
  SyntheticSpec spec;
  spec.intensity_lo = spec.intensity_hi = 1.0;
  spec.noise_sigma = 0.0;
  const Dictionary dict = build_dictionary(spec);
  Rng rng(3);
  const Batch b = make_batch(spec, dict, rng, 64);
  for (std::size_t i = 0; i < 64; ++i) {
    const LatentState& l = b.latents[i];
    for (std::size_t r = 0; r < spec.d; ++r) {
      double expect = dict.atoms(r, l.class_id);
      for (std::size_t j = 0; j < spec.B; ++j)
        if (l.bg_active[j]) expect += dict.atoms(r, spec.m + j);
      EXPECT_NEAR(b.anchors(i, r), expect, 1e-12);
      EXPECT_NEAR(b.positives(i, r), expect, 1e-12);
    }
  }
}

TEST(Datagen, PrevalenceWithinBinomialBounds) {
  SyntheticSpec spec;
  spec.prevalence = {0.9, 0.5, 0.1, 0.0};
  const Dictionary dict = build_dictionary(spec);
  Rng rng(11);
  const std::size_t n = 20000;
  std::vector<std::size_t> on(spec.B, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const SamplePair p = sample_pair(spec, dict, rng);
    for (std::size_t j = 0; j < spec.B; ++j) on[j] += p.latent.bg_active[j];
  }
  for (std::size_t j = 0; j < spec.B; ++j) {
    const double pi = spec.prevalence[j];
    const double sd = std::sqrt(pi * (1 - pi) / n);
    EXPECT_NEAR(static_cast<double>(on[j]) / n, pi, 3 * sd + 1e-12) << "factor " << j;
  }
}

TEST(Datagen, ViewsShareClassAndBackground) {
  SyntheticSpec spec;
  const Dictionary dict = build_dictionary(spec);
  Rng rng(5);
  std::vector<bool> bg = {true, false, true, false};
  const SamplePair p = sample_pair_given(spec, dict, rng, 7, bg);
  EXPECT_EQ(p.latent.class_id, 7u);
  EXPECT_EQ(p.latent.bg_active, bg);
  EXPECT_NE(p.x, p.x_plus);
}

TEST(Datagen, SpecValidation) {
  SyntheticSpec s;
  s.prevalence = {0.5};
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = SyntheticSpec{};
  s.d = 10;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = SyntheticSpec{};
  s.class_prior = std::vector<double>(10, 0.2);
  EXPECT_THROW(s.validate(), std::invalid_argument);
}

TEST(Datagen, LabeledCsvRoundTrip) {
  SyntheticSpec spec;
  spec.d = 20;
  const Dictionary dict = build_dictionary(spec);
  Rng rng(2);
  const LabeledSet set = batch_to_labeled(make_batch(spec, dict, rng, 12), spec.m);
  const fs::path dir = fresh_dir("csv");
  write_labeled_csv(dir / "s.csv", set);
  std::ifstream in(dir / "s.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header.rfind("label,f0,f1,", 0), 0u);
  EXPECT_EQ(header.substr(header.size() - 4), ",f19");
  const LabeledSet back = read_labeled_csv(dir / "s.csv");
  EXPECT_EQ(back.y, set.y);
  ASSERT_TRUE(back.X.same_shape(set.X));
  for (std::size_t i = 0; i < set.X.size(); ++i) EXPECT_EQ(back.X[i], set.X[i]);
}

TEST(Cifar, LoadsValidDirectory) {
  const fs::path dir = fresh_dir("cifar_ok");
  for (int i = 1; i <= 5; ++i) write_cifar_file(dir / ("data_batch_" + std::to_string(i) + ".bin"), 10000, i % 10, 100 + i);
  write_cifar_file(dir / "test_batch.bin", 10000, 3, 50);
  const CifarData d = load_cifar10(dir);
  EXPECT_EQ(d.train.X.rows(), 50000u);
  EXPECT_EQ(d.test.X.rows(), 10000u);
  EXPECT_EQ(d.train.X.cols(), 3072u);
  EXPECT_EQ(d.test.y[0], 3);
  EXPECT_TRUE(d.train.X.all_finite());
}

TEST(Cifar, TruncatedFileIsSizeError) {
  const fs::path dir = fresh_dir("cifar_short");
  for (int i = 1; i <= 5; ++i) write_cifar_file(dir / ("data_batch_" + std::to_string(i) + ".bin"), 10000, 1, 7);
  write_cifar_file(dir / "test_batch.bin", 9999, 1, 7);
  try {
    load_cifar10(dir);
    FAIL() << "expected size error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("test_batch.bin"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("size"), std::string::npos) << e.what();
  }
}

TEST(Cifar, BadLabelRejected) {
  const fs::path dir = fresh_dir("cifar_label");
  for (int i = 1; i <= 5; ++i) write_cifar_file(dir / ("data_batch_" + std::to_string(i) + ".bin"), 10000, 1, 7);
  write_cifar_file(dir / "test_batch.bin", 10000, 255, 7);
  try {
    load_cifar10(dir);
    FAIL() << "expected label error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("out of range [0,10)"), std::string::npos) << e.what();
  }
}

TEST(Cifar, MissingFileNamed) {
  const fs::path dir = fresh_dir("cifar_missing");
  try {
    load_cifar10(dir);
    FAIL() << "expected missing-file error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("data_batch_1.bin"), std::string::npos) << e.what();
  }
}
