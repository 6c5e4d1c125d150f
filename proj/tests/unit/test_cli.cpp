#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "ngcl/verify.hpp"

namespace fs = std::filesystem;
using ngcl::cli::run;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() /
            ("ngcl_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(root_);
    fs::create_directories(root_);
  }
  void TearDown() override { fs::remove_all(root_); }

  // Tiny run: two epochs of three steps.
  fs::path write_config(const std::string& name, const std::string& extra_train = "",
                        const std::string& method = "bayesncl_ste") {
    const fs::path out = root_ / (name + "_out");
    const fs::path p = root_ / (name + ".json");
    std::ofstream(p) << R"({"data":{"eval_samples":120,"synthetic":{"d":24}},)"
                     << R"("model":{"method":")" << method << R"(","hidden":[16],"K":12},)"
                     << R"("train":{"epochs":2,"steps_per_epoch":3,"batch_size":16)" << extra_train << "},"
                     << R"("output":{"dir":")" << out.string() << R"("}})";
    return p;
  }

  int cli(const std::vector<std::string>& args) {
    out_.str("");
    err_.str("");
    return run(args, out_, err_);
  }

  fs::path root_;
  std::ostringstream out_, err_;
};

}  // namespace

TEST_F(CliTest, MissingConfigIsUsageError) {
  const std::string p = (root_ / "nope.json").string();
  EXPECT_EQ(cli({"train", p}), ngcl::cli::kUsage);
  EXPECT_NE(err_.str().find(p), std::string::npos) << err_.str();
}

TEST_F(CliTest, InvalidConfigIsUsageError) {
  const fs::path p = root_ / "bad.json";
  std::ofstream(p) << R"({"train":{"epochs":"x"}})";
  EXPECT_EQ(cli({"train", p.string()}), ngcl::cli::kUsage);
  EXPECT_NE(err_.str().find("train.epochs"), std::string::npos) << err_.str();
  EXPECT_EQ(cli({}), ngcl::cli::kUsage);
  EXPECT_EQ(cli({"frobnicate"}), ngcl::cli::kUsage);
}

TEST_F(CliTest, TrainWritesArtifacts) {
  ASSERT_EQ(cli({"train", write_config("a").string()}), ngcl::cli::kOk) << err_.str();
  const fs::path dir = root_ / "a_out";
  const auto rows = lines(slurp(dir / "metrics.csv"));
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0], "epoch,align,sparsity,total,act_ratio");
  EXPECT_TRUE(fs::exists(dir / "model.ngcl"));
  const std::string manifest = slurp(dir / "manifest.json");
  for (const char* key : {"config_hash", "seed", "method", "version", "started", "finished", "files"})
    EXPECT_NE(manifest.find(key), std::string::npos) << key;
}

TEST_F(CliTest, RepeatedRunsAreByteIdentical) {
  const fs::path cfg = write_config("r");
  ASSERT_EQ(cli({"train", cfg.string()}), ngcl::cli::kOk);
  const std::string m1 = slurp(root_ / "r_out" / "metrics.csv");
  const std::string c1 = slurp(root_ / "r_out" / "model.ngcl");
  ASSERT_EQ(cli({"train", cfg.string()}), ngcl::cli::kOk);
  EXPECT_EQ(slurp(root_ / "r_out" / "metrics.csv"), m1);
  EXPECT_EQ(slurp(root_ / "r_out" / "model.ngcl"), c1);
}

TEST_F(CliTest, EvalWritesTables) {
  ASSERT_EQ(cli({"train", write_config("e").string()}), ngcl::cli::kOk);
  const fs::path dir = root_ / "e_out";
  const std::string ck = (dir / "model.ngcl").string();
  ASSERT_EQ(cli({"eval", ck, "--probe", "--retrieval"}), ngcl::cli::kOk) << err_.str();
  const auto interp = lines(slurp(dir / "interp.csv"));
  ASSERT_EQ(interp.size(), 2u);
  EXPECT_EQ(interp[0], "method,cons,h_sum,h_mean,h_freq,act");
  EXPECT_EQ(interp[1].rfind("bayesncl_ste,", 0), 0u);
  EXPECT_EQ(lines(slurp(dir / "probe.csv"))[0], "method,top1,top5");
  const std::string full = slurp(dir / "retrieval.csv");
  EXPECT_EQ(lines(full)[0], "method,dims,k,precision");
  EXPECT_EQ(lines(full).size(), 4u);

  // keeping every dim is the same as no selection
  const fs::path sel = root_ / "sel";
  ASSERT_EQ(cli({"eval", ck, "--retrieval", "--retrieval-dims", "12", "--out", sel.string()}), ngcl::cli::kOk);
  EXPECT_EQ(slurp(sel / "retrieval.csv"), full);
  EXPECT_EQ(cli({"eval", ck, "--retrieval", "--retrieval-dims", "13", "--out", sel.string()}), ngcl::cli::kUsage);
}

TEST_F(CliTest, EvalOnLabeledCsv) {
  ASSERT_EQ(cli({"train", write_config("d").string()}), ngcl::cli::kOk);
  const std::string ck = (root_ / "d_out" / "model.ngcl").string();
  const fs::path data = root_ / "data.csv";
  {
    std::ofstream f(data);
    f << "label";
    for (int j = 0; j < 24; ++j) f << ",f" << j;
    f << "\n";
    for (int i = 0; i < 40; ++i) {
      f << i % 4;
      for (int j = 0; j < 24; ++j) f << "," << ((i * 7 + j * 3) % 11) / 10.0;
      f << "\n";
    }
  }
  EXPECT_EQ(cli({"eval", ck, "--data", data.string(), "--out", (root_ / "ev").string()}), ngcl::cli::kOk)
      << err_.str();
  EXPECT_TRUE(fs::exists(root_ / "ev" / "interp.csv"));

  const fs::path narrow = root_ / "narrow.csv";
  std::ofstream(narrow) << "label,f0,f1\n0,1,2\n1,2,3\n0,0,1\n1,1,1\n";
  EXPECT_EQ(cli({"eval", ck, "--data", narrow.string()}), ngcl::cli::kArtifact);
  EXPECT_NE(err_.str().find("width mismatch"), std::string::npos) << err_.str();
}

TEST_F(CliTest, CorruptCheckpointIsArtifactError) {
  ASSERT_EQ(cli({"train", write_config("c").string()}), ngcl::cli::kOk);
  const fs::path ck = root_ / "c_out" / "model.ngcl";
  const std::string bytes = slurp(ck);
  std::ofstream(ck, std::ios::binary | std::ios::trunc) << bytes.substr(0, bytes.size() / 2);
  EXPECT_EQ(cli({"eval", ck.string()}), ngcl::cli::kArtifact);
  EXPECT_EQ(cli({"eval", (root_ / "missing.ngcl").string()}), ngcl::cli::kArtifact);
}

TEST_F(CliTest, NonFiniteIsNumericFailure) {
  EXPECT_EQ(cli({"train", write_config("n", R"(,"backbone_lr":1e200)").string()}), ngcl::cli::kNumeric);
}

TEST_F(CliTest, DiagnoseNeedsThreeSnapshots) {
  ASSERT_EQ(cli({"train", write_config("s", R"(,"snapshot_every":1)").string()}), ngcl::cli::kOk);
  const fs::path snaps = root_ / "s_out" / "snapshots";
  // initial plus two epochs
  ASSERT_EQ(std::distance(fs::directory_iterator(snaps), fs::directory_iterator{}), 3);
  ASSERT_EQ(cli({"diagnose", snaps.string()}), ngcl::cli::kOk) << err_.str();
  const auto rows = lines(slurp(snaps / "dynamics.csv"));
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0], "epoch,af_gv,af_sc,gv_sc");
  EXPECT_EQ(rows[1].rfind("0,", 0), 0u);

  fs::remove(snaps / "epoch_0002.ngcl");
  EXPECT_EQ(cli({"diagnose", snaps.string()}), ngcl::cli::kUsage);
  EXPECT_NE(err_.str().find("at least 3"), std::string::npos);
}

TEST_F(CliTest, VerifyUnknownSuiteListsValidOnes) {
  EXPECT_EQ(cli({"verify", "thm9"}), ngcl::cli::kUsage);
  for (const auto& n : ngcl::suite_names()) EXPECT_NE(err_.str().find(n), std::string::npos) << n;
}

TEST(Dynamics, MonotoneRowAndConstantInput) {
  ngcl::GradStatsEntry e;
  e.epoch = 7;
  e.af = {0.1, 0.2, 0.3, 0.4, 0.0};
  e.gv = {1.0, 2.0, 5.0, 9.0, 0.0};
  e.sc = {0.5, 0.5, 0.5, 0.5, std::nan("")};
  const ngcl::DynamicsRow r = ngcl::dynamics_row(e);
  EXPECT_EQ(r.epoch, 7u);
  EXPECT_DOUBLE_EQ(r.af_gv, 1.0);
  EXPECT_TRUE(std::isnan(r.af_sc));
  EXPECT_EQ(ngcl::dynamics_csv_row(r), "7,1.000000,NA,NA");
}

TEST(Verify, FormatAndUnknownSuite) {
  EXPECT_EQ(ngcl::format_claim("ipw", {"rho", true, "0.9 > 0.5"}), "PASS [ipw] rho: 0.9 > 0.5");
  EXPECT_EQ(ngcl::format_claim("thm1", {"trend", false, "x"}), "FAIL [thm1] trend: x");
  EXPECT_THROW(ngcl::run_suite("nope", ngcl::default_suite_options()), std::invalid_argument);
}
