#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ngcl/datagen.hpp"
#include "ngcl/metrics.hpp"
#include "ngcl/model.hpp"
#include "ngcl/trainer.hpp"

namespace ngcl {

/// Invalid configuration; `path` names the offending field (e.g. "train.epochs").
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& path, const std::string& msg)
      : std::runtime_error(path.empty() ? msg : path + ": " + msg), path_(path) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

enum class DataKind { synthetic, cifar10 };

struct DataConfig {
  DataKind kind = DataKind::synthetic;
  SyntheticSpec synthetic;
  std::string cifar_dir;
  double aug_intensity_lo = 0.8;
  double aug_intensity_hi = 1.2;
  double aug_noise_sigma = 0.1;
  std::size_t eval_samples = 2000;
};

struct EvalConfig {
  bool metrics = true;
  bool probe = false;
  ProbeConfig probe_cfg;
  bool retrieval = false;
  std::vector<std::size_t> retrieval_k = {1, 5, 10};
  std::optional<std::size_t> retrieval_dims;
};

/// Baseline / variant names used in every CSV.
enum class Method { cl, ncl, ncl_topk, bayesncl_ste, bayesncl_gs, bayesncl_soft };

std::string method_name(Method m);
Method parse_method(const std::string& s);
Method method_of(const ModelConfig& mc);

struct RunConfig {
  DataConfig data;
  Method method = Method::bayesncl_ste;
  ModelConfig model;  // widths[0] is filled from the data width
  TrainConfig train;
  EvalConfig eval;
  std::size_t snapshot_every = 0;
  std::string output_dir = "runs/default";

  /// Input width implied by the data section.
  std::size_t input_dim() const;
};

/// Parses and validates; unknown keys and wrong types raise ConfigError.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);

/// Fully defaulted config as canonical JSON (sorted keys, compact).
std::string canonical_json(const RunConfig& cfg);

/// 64-bit FNV-1a, hex encoded.
std::string fnv1a_hex(const std::string& bytes);

/// Default desk-scale configuration as pretty JSON.
std::string default_config_json();

}  // namespace ngcl
