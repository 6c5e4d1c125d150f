#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ngcl/datagen.hpp"
#include "ngcl/model.hpp"
#include "ngcl/trainer.hpp"

namespace ngcl {

/// One directional claim with the measured numbers behind the verdict.
struct Claim {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct SuiteResult {
  std::string suite;
  std::vector<Claim> claims;
  std::string csv_header;
  std::vector<std::string> csv_rows;

  bool passed() const;
};

/// Shared settings for every theory suite.
struct SuiteOptions {
  SyntheticSpec spec;
  TrainConfig train;
  ModelConfig model;  // strategy must have a gate; suites needing plain NCL switch it off
  std::vector<std::uint64_t> seeds = {0, 1, 2};
  std::size_t eval_n = 2000;
};

struct RunConfig;

/// Suites driven by a run config: its synthetic spec, model and training
/// settings; seeds are seed, seed+1, seed+2.
SuiteOptions suite_options(const RunConfig& cfg);

/// suite_options of the default config.
SuiteOptions default_suite_options();

/// prop1, thm1, thm2, thm3, ipw.
const std::vector<std::string>& suite_names();

/// Gradient conflict under plain NCL.
SuiteResult suite_prop1(const SuiteOptions& o);
/// Gate filtering against prevalence.
SuiteResult suite_thm1(const SuiteOptions& o);
/// Spurious-similarity removal.
SuiteResult suite_thm2(const SuiteOptions& o);
/// Information bound and its lambda trend.
SuiteResult suite_thm3(const SuiteOptions& o);
/// Gated similarity against the inverse-prevalence oracle.
SuiteResult suite_ipw(const SuiteOptions& o);

/// Throws std::invalid_argument for an unknown name.
SuiteResult run_suite(const std::string& name, const SuiteOptions& o);

std::string format_claim(const std::string& suite, const Claim& c);

// ---- gradient dynamics -----------------------------------------------------

/// Spearman correlations among AF, GV and SC at one snapshot. NaN marks a
/// constant input (written as NA).
struct DynamicsRow {
  std::size_t epoch = 0;
  double af_gv = 0.0;
  double af_sc = 0.0;
  double gv_sc = 0.0;
};

/// Correlations over the dims active at that snapshot (SC is undefined
/// elsewhere).
DynamicsRow dynamics_row(const GradStatsEntry& e);

std::string dynamics_csv_header();
std::string dynamics_csv_row(const DynamicsRow& r);

}  // namespace ngcl
