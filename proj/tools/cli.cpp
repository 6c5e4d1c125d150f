#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "ngcl/checkpoint.hpp"
#include "ngcl/config.hpp"
#include "ngcl/metrics.hpp"
#include "ngcl/verify.hpp"

#ifndef NGCL_VERSION
#define NGCL_VERSION "dev"
#endif

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace ngcl::cli {
namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ArtifactError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_atomic(const fs::path& p, const std::string& text) {
  fs::path tmp = p;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << text;
    if (!out.flush()) throw std::runtime_error("write failed for " + tmp.string());
  }
  fs::rename(tmp, p);
}

std::string csv(const std::string& header, const std::vector<std::string>& rows) {
  std::string s = header + "\n";
  for (const auto& r : rows) s += r + "\n";
  return s;
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string f2(double v) {
  char b[32];
  std::snprintf(b, sizeof b, "%.2f", v);
  return b;
}
std::string f4(double v) {
  char b[32];
  std::snprintf(b, sizeof b, "%.4f", v);
  return b;
}

// The embedded config leaves out output.dir so a checkpoint depends only on
// the experiment, not on where it was written.
std::string experiment_json(const RunConfig& cfg) {
  json j = json::parse(canonical_json(cfg));
  j.erase("output");
  return j.dump();
}

RunConfig config_from_checkpoint(const Checkpoint& ck) {
  try {
    return parse_run_config(ck.config_json);
  } catch (const ConfigError& e) {
    throw ArtifactError(std::string("checkpoint carries an invalid config: ") + e.what());
  }
}

void check_model_shape(const Model& model, const ModelConfig& mc) {
  const auto& w = mc.widths;
  bool ok = model.encoder.layers.size() + 1 == w.size();
  for (std::size_t i = 0; ok && i + 1 < w.size(); ++i)
    ok = model.encoder.layers[i].W.rows() == w[i] && model.encoder.layers[i].W.cols() == w[i + 1];
  ok = ok && model.gate.layers.size() == (mc.strategy.has_gate() ? mc.gate_depth : 0);
  if (!ok) throw ArtifactError("checkpoint parameters do not match its config");
}

// Two jittered views of the first n rows.
EvalSet augmented_views(const LabeledSet& set, std::size_t n, const DataConfig& dc, Rng& rng) {
  n = std::min(n, set.X.rows());
  const std::size_t d = set.X.cols();
  EvalSet e;
  e.anchors = Tensor(n, d);
  e.positives = Tensor(n, d);
  e.class_count = set.class_count;
  for (std::size_t i = 0; i < n; ++i) {
    for (Tensor* view : {&e.anchors, &e.positives}) {
      const double s = rng.uniform(dc.aug_intensity_lo, dc.aug_intensity_hi);
      auto row = view->row(i);
      for (std::size_t j = 0; j < d; ++j)
        row[j] = s * set.X(i, j) + (dc.aug_noise_sigma > 0.0 ? dc.aug_noise_sigma * rng.normal() : 0.0);
    }
    e.labels.push_back(set.y[i]);
  }
  return e;
}

LabeledSet head(const LabeledSet& set, std::size_t n) {
  n = std::min(n, set.X.rows());
  LabeledSet out;
  out.X = Tensor(n, set.X.cols());
  std::copy_n(set.X.data().begin(), n * set.X.cols(), out.X.data().begin());
  out.y.assign(set.y.begin(), set.y.begin() + static_cast<std::ptrdiff_t>(n));
  out.class_count = set.class_count;
  return out;
}

// Data for one run, rebuilt deterministically from the config.
struct Prepared {
  std::optional<CifarData> cifar;  // owns what the source points at
  std::unique_ptr<PairSource> source;
  EvalSet eval;
  LabeledSet probe_train;
  LabeledSet probe_test;
};

std::unique_ptr<Prepared> prepare(const RunConfig& cfg) {
  auto p = std::make_unique<Prepared>();
  const std::size_t n = cfg.data.eval_samples;
  const std::uint64_t seed = cfg.train.seed;
  if (cfg.data.kind == DataKind::synthetic) {
    const SyntheticSpec& spec = cfg.data.synthetic;
    auto src = std::make_unique<SyntheticSource>(spec);
    Rng er(seed, 4), pr(seed, 5);
    const Batch eb = make_batch(spec, src->dictionary(), er, n);
    p->eval = make_eval_set(eb, spec.m);
    p->probe_test = batch_to_labeled(eb, spec.m);
    p->probe_train = batch_to_labeled(make_batch(spec, src->dictionary(), pr, n), spec.m);
    p->source = std::move(src);
  } else {
    try {
      p->cifar = load_cifar10(cfg.data.cifar_dir);
    } catch (const std::exception& e) {
      throw ArtifactError(e.what());
    }
    p->source = std::make_unique<AugmentedSetSource>(p->cifar->train, cfg.data.aug_intensity_lo,
                                                     cfg.data.aug_intensity_hi, cfg.data.aug_noise_sigma);
    Rng er(seed, 4);
    p->eval = augmented_views(p->cifar->test, n, cfg.data, er);
    p->probe_train = head(p->cifar->train, n);
    p->probe_test = head(p->cifar->test, n);
  }
  return p;
}

// ---- train -------------------------------------------------------------------

int cmd_train(const std::string& config_path, std::ostream& out) {
  std::string raw;
  try {
    raw = read_file(config_path);
  } catch (const std::exception&) {
    throw ConfigError("", "cannot read config file " + config_path);
  }
  const RunConfig cfg = parse_run_config(raw);
  const std::string started = utc_now();
  const auto data = prepare(cfg);

  const fs::path dir = cfg.output_dir;
  fs::create_directories(dir);
  const std::string conf = experiment_json(cfg);
  std::vector<std::string> files;
  auto snapshot = [&](const TrainState& st) {
    char name[32];
    std::snprintf(name, sizeof name, "epoch_%04llu.ngcl", static_cast<unsigned long long>(st.epochs_done));
    const fs::path rel = fs::path("snapshots") / name;
    save_checkpoint(dir / rel, st, conf);
    files.push_back(rel.generic_string());
  };
  TrainHooks hooks;
  if (cfg.snapshot_every > 0) {
    fs::create_directories(dir / "snapshots");
    hooks.on_start = snapshot;
    hooks.on_epoch = [&](const TrainState& st, const EpochRow&) {
      if (st.epochs_done % cfg.snapshot_every == 0) snapshot(st);
    };
  }

  const TrainResult res = train(cfg.train, cfg.model, *data->source, &data->eval, hooks);

  std::vector<std::string> rows;
  for (const auto& r : res.rows) rows.push_back(epoch_csv_row(r));
  write_atomic(dir / "metrics.csv", csv(epoch_csv_header(), rows));
  save_checkpoint(dir / "model.ngcl", res.state, conf);
  files.push_back("metrics.csv");
  files.push_back("model.ngcl");
  std::sort(files.begin(), files.end());

  json m;
  m["config_path"] = config_path;
  m["config_hash"] = fnv1a_hex(raw);
  m["seed"] = cfg.train.seed;
  m["method"] = method_name(cfg.method);
  m["version"] = NGCL_VERSION;
  m["started"] = started;
  m["finished"] = utc_now();
  m["files"] = files;
  write_atomic(dir / "manifest.json", m.dump(2) + "\n");
  const auto& last = res.rows.empty() ? EpochRow{} : res.rows.back();
  out << "trained " << method_name(cfg.method) << " for " << res.rows.size() << " epochs, final total loss "
      << last.total << " -> " << dir.string() << "\n";
  return kOk;
}

// ---- eval --------------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint;
  std::string data_csv;
  std::string out_dir;
  bool probe = false;
  bool retrieval = false;
  std::optional<std::size_t> retrieval_dims;
};

Checkpoint load_or_artifact(const fs::path& p) {
  try {
    return load_checkpoint(p);
  } catch (const CheckpointError& e) {
    throw ArtifactError(p.string() + ": " + e.what());
  }
}

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const Checkpoint ck = load_or_artifact(a.checkpoint);
  const RunConfig cfg = config_from_checkpoint(ck);
  const Model& model = ck.state.model;
  check_model_shape(model, cfg.model);
  const std::string method = method_name(cfg.method);

  LabeledSet train_set, test_set;
  if (!a.data_csv.empty()) {
    LabeledSet all;
    try {
      all = read_labeled_csv(a.data_csv);
    } catch (const std::exception& e) {
      throw ArtifactError(e.what());
    }
    if (all.X.cols() != cfg.model.widths.front())
      throw ArtifactError("width mismatch: checkpoint expects " + std::to_string(cfg.model.widths.front()) +
                          " inputs, data has " + std::to_string(all.X.cols()));
    const std::size_t half = all.X.rows() / 2;
    train_set = head(all, half);
    test_set.class_count = all.class_count;
    test_set.X = Tensor(all.X.rows() - half, all.X.cols());
    std::copy(all.X.data().begin() + static_cast<std::ptrdiff_t>(half * all.X.cols()), all.X.data().end(),
              test_set.X.data().begin());
    test_set.y.assign(all.y.begin() + static_cast<std::ptrdiff_t>(half), all.y.end());
  } else {
    const auto data = prepare(cfg);
    if (data->probe_test.X.cols() != cfg.model.widths.front()) throw ArtifactError("width mismatch");
    train_set = data->probe_train;
    test_set = data->probe_test;
  }
  if (test_set.X.rows() < 2) throw UsageError("need at least 2 evaluation rows");

  const fs::path dir = a.out_dir.empty() ? fs::path(a.checkpoint).parent_path() : fs::path(a.out_dir);
  if (!dir.empty()) fs::create_directories(dir);
  const Tensor feats = eval_features(model, cfg.model, test_set.X);

  const MetricsReport rep = interpretability_report(feats, test_set.y, test_set.class_count);
  const std::string row = method + "," + f2(100.0 * rep.sc.mean) + "," + f4(rep.h_sum) + "," + f4(rep.h_mean) + "," +
                          f4(rep.h_freq) + "," + f4(rep.act);
  write_atomic(dir / "interp.csv", csv("method,cons,h_sum,h_mean,h_freq,act", {row}));
  out << "interp: " << row << "\n";

  if (a.probe || cfg.eval.probe) {
    const Tensor tf = eval_features(model, cfg.model, train_set.X);
    const ProbeResult pr = linear_probe(tf, train_set.y, feats, test_set.y, test_set.class_count, cfg.eval.probe_cfg);
    const std::string r = method + "," + f2(100.0 * pr.top1) + "," + f2(100.0 * pr.top5);
    write_atomic(dir / "probe.csv", csv("method,top1,top5", {r}));
    out << "probe: " << r << "\n";
  }
  if (a.retrieval || cfg.eval.retrieval) {
    std::optional<std::size_t> dims = a.retrieval_dims ? a.retrieval_dims : cfg.eval.retrieval_dims;
    if (dims && (*dims == 0 || *dims > feats.cols()))
      throw UsageError("--retrieval-dims must lie in [1, " + std::to_string(feats.cols()) + "]");
    const RetrievalResult rr =
        retrieval(feats, test_set.y, feats, test_set.y, cfg.eval.retrieval_k, dims, /*same_set=*/true);
    std::vector<std::string> rows;
    for (std::size_t i = 0; i < rr.ks.size(); ++i)
      rows.push_back(method + "," + std::to_string(rr.selected_dims.size()) + "," + std::to_string(rr.ks[i]) + "," +
                     f4(rr.precision[i]));
    write_atomic(dir / "retrieval.csv", csv("method,dims,k,precision", rows));
    out << "retrieval: " << rows.size() << " rows\n";
  }
  return kOk;
}

// ---- diagnose ----------------------------------------------------------------

int cmd_diagnose(const std::string& snap_dir, const std::string& out_dir, std::ostream& out) {
  if (!fs::is_directory(snap_dir)) throw UsageError("not a directory: " + snap_dir);
  std::vector<fs::path> snaps;
  for (const auto& e : fs::directory_iterator(snap_dir))
    if (e.is_regular_file() && e.path().extension() == ".ngcl") snaps.push_back(e.path());
  std::sort(snaps.begin(), snaps.end());
  if (snaps.size() < 3)
    throw UsageError("diagnose needs at least 3 snapshots, found " + std::to_string(snaps.size()) + " in " +
                     snap_dir);

  std::vector<Checkpoint> cks;
  for (const auto& p : snaps) cks.push_back(load_or_artifact(p));
  for (const auto& c : cks)
    if (c.config_json != cks.front().config_json) throw ArtifactError("snapshots come from different configs");
  const RunConfig cfg = config_from_checkpoint(cks.front());
  const auto data = prepare(cfg);

  std::vector<std::string> rows;
  for (const auto& c : cks) {
    check_model_shape(c.state.model, cfg.model);
    const GradStatsEntry e = compute_grad_stats(c.state.model, cfg.model, cfg.train, data->eval, c.state.epochs_done);
    rows.push_back(dynamics_csv_row(dynamics_row(e)));
  }
  const fs::path dir = out_dir.empty() ? fs::path(snap_dir) : fs::path(out_dir);
  fs::create_directories(dir);
  write_atomic(dir / "dynamics.csv", csv(dynamics_csv_header(), rows));
  out << "dynamics: " << rows.size() << " snapshots -> " << (dir / "dynamics.csv").string() << "\n";
  return kOk;
}

// ---- verify ------------------------------------------------------------------

int cmd_verify(const std::string& suite, const std::string& config_path, const std::string& out_dir,
               std::ostream& out) {
  const auto& names = suite_names();
  std::vector<std::string> todo;
  if (suite == "all") {
    todo = names;
  } else if (std::find(names.begin(), names.end(), suite) != names.end()) {
    todo = {suite};
  } else {
    std::string valid;
    for (const auto& n : names) valid += n + ", ";
    throw UsageError("unknown suite '" + suite + "'; valid suites: " + valid + "all");
  }
  RunConfig cfg;
  if (config_path.empty()) {
    cfg = parse_run_config("{}");
  } else {
    std::string raw;
    try {
      raw = read_file(config_path);
    } catch (const std::exception&) {
      throw ConfigError("", "cannot read config file " + config_path);
    }
    cfg = parse_run_config(raw);
  }
  SuiteOptions opts;
  try {
    opts = suite_options(cfg);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (!out_dir.empty()) fs::create_directories(out_dir);

  bool all_pass = true;
  for (const auto& name : todo) {
    const SuiteResult r = run_suite(name, opts);
    for (const auto& c : r.claims) out << format_claim(name, c) << "\n";
    out.flush();
    if (!out_dir.empty()) write_atomic(fs::path(out_dir) / ("verify_" + name + ".csv"), csv(r.csv_header, r.csv_rows));
    all_pass = all_pass && r.passed();
  }
  out << (all_pass ? "verify: all claims passed" : "verify: some claims failed") << "\n";
  return all_pass ? kOk : kFailure;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Gated non-negative contrastive learning, desk-scale lab", "ngcl"};
  app.require_subcommand(1);
  app.set_version_flag("--version", NGCL_VERSION);

  std::string train_cfg;
  auto* train_cmd = app.add_subcommand("train", "train from a JSON config");
  train_cmd->add_option("config", train_cfg, "config file")->required();

  EvalArgs ea;
  std::size_t rdims = 0;
  auto* eval_cmd = app.add_subcommand("eval", "interpretability metrics, probe and retrieval for a checkpoint");
  eval_cmd->add_option("checkpoint", ea.checkpoint, "checkpoint file")->required();
  eval_cmd->add_option("--data", ea.data_csv, "labeled CSV of raw inputs (label,f0,...)");
  eval_cmd->add_option("--out", ea.out_dir, "output directory (default: next to the checkpoint)");
  eval_cmd->add_flag("--probe", ea.probe, "also run the linear probe");
  eval_cmd->add_flag("--retrieval", ea.retrieval, "also run retrieval");
  auto* rd = eval_cmd->add_option("--retrieval-dims", rdims, "keep only the top dims by activation mass");

  std::string snap_dir, diag_out;
  auto* diag_cmd = app.add_subcommand("diagnose", "AF/GV/SC correlations over periodic snapshots");
  diag_cmd->add_option("snapshots", snap_dir, "directory of snapshot checkpoints")->required();
  diag_cmd->add_option("--out", diag_out, "output directory (default: the snapshot directory)");

  std::string suite, verify_cfg, verify_out;
  auto* verify_cmd = app.add_subcommand("verify", "run a theory verification suite");
  verify_cmd->add_option("suite", suite, "prop1, thm1, thm2, thm3, ipw or all")->required();
  verify_cmd->add_option("--config", verify_cfg, "config file (default settings otherwise)");
  verify_cmd->add_option("--out", verify_out, "directory for per-suite CSVs");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }
  if (rd->count() > 0) ea.retrieval_dims = rdims;

  try {
    if (*train_cmd) return cmd_train(train_cfg, out);
    if (*eval_cmd) return cmd_eval(ea, out);
    if (*diag_cmd) return cmd_diagnose(snap_dir, diag_out, out);
    if (*verify_cmd) return cmd_verify(suite, verify_cfg, verify_out, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const NumericFailure& e) {
    err << "numeric failure: " << e.what() << "\n";
    return kNumeric;
  } catch (const ArtifactError& e) {
    err << "artifact error: " << e.what() << "\n";
    return kArtifact;
  } catch (const CheckpointError& e) {
    err << "artifact error: " << e.what() << "\n";
    return kArtifact;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kUsage;
}

}  // namespace ngcl::cli
