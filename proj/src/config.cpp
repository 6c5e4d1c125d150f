#include "ngcl/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace ngcl {

using json = nlohmann::json;

std::string method_name(Method m) {
  switch (m) {
    case Method::cl: return "cl";
    case Method::ncl: return "ncl";
    case Method::ncl_topk: return "ncl_topk";
    case Method::bayesncl_ste: return "bayesncl_ste";
    case Method::bayesncl_gs: return "bayesncl_gs";
    case Method::bayesncl_soft: return "bayesncl_soft";
  }
  return "ncl";
}

Method parse_method(const std::string& s) {
  for (Method m : {Method::cl, Method::ncl, Method::ncl_topk, Method::bayesncl_ste, Method::bayesncl_gs,
                   Method::bayesncl_soft})
    if (method_name(m) == s) return m;
  throw std::invalid_argument("unknown method '" + s + "'");
}

Method method_of(const ModelConfig& mc) {
  switch (mc.strategy.kind) {
    case MaskKind::none: return mc.nonneg ? Method::ncl : Method::cl;
    case MaskKind::topk: return Method::ncl_topk;
    case MaskKind::ste: return Method::bayesncl_ste;
    case MaskKind::gumbel_sigmoid: return Method::bayesncl_gs;
    case MaskKind::soft: return Method::bayesncl_soft;
  }
  return Method::ncl;
}

namespace {

class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_, "expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  template <class T>
  T get(const std::string& key, T fallback) {
    seen_.insert(key);
    if (!j_.contains(key)) return fallback;
    const json& v = j_.at(key);
    const std::string p = sub(key);
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(p, "expected a boolean");
      return v.get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError(p, "expected an integer");
      if (std::is_unsigned_v<T> && v.get<std::int64_t>() < 0) throw ConfigError(p, "must be >= 0");
      return v.get<T>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(p, "expected a number");
      return v.get<T>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(p, "expected a string");
      return v.get<std::string>();
    } else {
      static_assert(sizeof(T) == 0, "unsupported config type");
    }
  }

  template <class T>
  std::vector<T> get_list(const std::string& key, std::vector<T> fallback) {
    seen_.insert(key);
    if (!j_.contains(key)) return fallback;
    const json& v = j_.at(key);
    if (!v.is_array()) throw ConfigError(sub(key), "expected an array");
    std::vector<T> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const std::string p = sub(key) + "[" + std::to_string(i) + "]";
      if constexpr (std::is_integral_v<T>) {
        if (!v[i].is_number_integer() || v[i].get<std::int64_t>() < 0)
          throw ConfigError(p, "expected a non-negative integer");
      } else {
        if (!v[i].is_number()) throw ConfigError(p, "expected a number");
      }
      out.push_back(v[i].get<T>());
    }
    return out;
  }

  Section child(const std::string& key) {
    seen_.insert(key);
    static const json empty = json::object();
    return Section(j_.contains(key) ? j_.at(key) : empty, sub(key));
  }

  bool is_null(const std::string& key) const { return j_.contains(key) && j_.at(key).is_null(); }
  void mark(const std::string& key) { seen_.insert(key); }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError(sub(it.key()), "unknown key");
  }

  std::string sub(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <class F>
void check(bool ok, const std::string& path, F msg) {
  if (!ok) throw ConfigError(path, msg);
}

void apply_method(RunConfig& cfg) {
  ModelConfig& mc = cfg.model;
  mc.nonneg = cfg.method != Method::cl;
  switch (cfg.method) {
    case Method::cl:
    case Method::ncl: mc.strategy.kind = MaskKind::none; break;
    case Method::ncl_topk: mc.strategy.kind = MaskKind::topk; break;
    case Method::bayesncl_ste: mc.strategy.kind = MaskKind::ste; break;
    case Method::bayesncl_gs: mc.strategy.kind = MaskKind::gumbel_sigmoid; break;
    case Method::bayesncl_soft: mc.strategy.kind = MaskKind::soft; break;
  }
}

}  // namespace

std::size_t RunConfig::input_dim() const { return data.kind == DataKind::cifar10 ? 3072 : data.synthetic.d; }

RunConfig parse_run_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("", std::string("invalid JSON: ") + e.what());
  }
  RunConfig cfg;
  Section top(root, "");

  {
    Section d = top.child("data");
    const std::string kind = d.get<std::string>("kind", "synthetic");
    if (kind == "synthetic")
      cfg.data.kind = DataKind::synthetic;
    else if (kind == "cifar10")
      cfg.data.kind = DataKind::cifar10;
    else
      throw ConfigError(d.sub("kind"), "must be 'synthetic' or 'cifar10'");
    cfg.data.eval_samples = d.get<std::size_t>("eval_samples", cfg.data.eval_samples);
    check(cfg.data.eval_samples >= 2, d.sub("eval_samples"), "must be >= 2");

    Section s = d.child("synthetic");
    SyntheticSpec& sp = cfg.data.synthetic;
    sp.d = s.get<std::size_t>("d", sp.d);
    sp.m = s.get<std::size_t>("m", sp.m);
    sp.B = s.get<std::size_t>("B", sp.B);
    sp.prevalence = s.get_list<double>("prevalence", std::vector<double>(sp.B, 0.9));
    const auto ir = s.get_list<double>("intensity_range", {sp.intensity_lo, sp.intensity_hi});
    check(ir.size() == 2, s.sub("intensity_range"), "expected [lo, hi]");
    sp.intensity_lo = ir[0];
    sp.intensity_hi = ir[1];
    sp.noise_sigma = s.get<double>("noise_sigma", sp.noise_sigma);
    sp.class_prior = s.get_list<double>("class_prior", {});
    sp.seed = s.get<std::uint64_t>("seed", sp.seed);
    s.finish();
    try {
      sp.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(d.sub("synthetic"), e.what());
    }

    Section c = d.child("cifar10");
    cfg.data.cifar_dir = c.get<std::string>("dir", "");
    const auto ar = c.get_list<double>("intensity_range", {cfg.data.aug_intensity_lo, cfg.data.aug_intensity_hi});
    check(ar.size() == 2 && ar[0] <= ar[1], c.sub("intensity_range"), "expected [lo, hi] with lo <= hi");
    cfg.data.aug_intensity_lo = ar[0];
    cfg.data.aug_intensity_hi = ar[1];
    cfg.data.aug_noise_sigma = c.get<double>("noise_sigma", cfg.data.aug_noise_sigma);
    check(cfg.data.aug_noise_sigma >= 0.0, c.sub("noise_sigma"), "must be >= 0");
    c.finish();
    if (cfg.data.kind == DataKind::cifar10) check(!cfg.data.cifar_dir.empty(), c.sub("dir"), "required for cifar10");
    d.finish();
  }

  {
    Section m = top.child("model");
    try {
      cfg.method = parse_method(m.get<std::string>("method", method_name(cfg.method)));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(m.sub("method"), e.what());
    }
    const std::size_t K = m.get<std::size_t>("K", 32);
    check(K >= 1, m.sub("K"), "must be >= 1");
    const auto hidden = m.get_list<std::size_t>("hidden", {64});
    for (std::size_t i = 0; i < hidden.size(); ++i)
      check(hidden[i] >= 1, m.sub("hidden") + "[" + std::to_string(i) + "]", "must be >= 1");
    cfg.model.widths = {cfg.input_dim()};
    cfg.model.widths.insert(cfg.model.widths.end(), hidden.begin(), hidden.end());
    cfg.model.widths.push_back(K);
    cfg.model.gate_depth = m.get<std::size_t>("gate_depth", cfg.model.gate_depth);
    check(cfg.model.gate_depth >= 1 && cfg.model.gate_depth <= 3, m.sub("gate_depth"), "must be 1, 2 or 3");
    cfg.model.detach = m.get<bool>("detach", cfg.model.detach);
    cfg.model.gate_bias_init = m.get<double>("gate_bias_init", cfg.model.gate_bias_init);
    cfg.model.strategy.temperature = m.get<double>("gumbel_temperature", cfg.model.strategy.temperature);
    check(cfg.model.strategy.temperature > 0.0, m.sub("gumbel_temperature"), "must be > 0");
    cfg.model.strategy.topk_ratio = m.get<double>("topk_ratio", cfg.model.strategy.topk_ratio);
    check(cfg.model.strategy.topk_ratio >= 0.0 && cfg.model.strategy.topk_ratio <= 1.0, m.sub("topk_ratio"),
          "must lie in [0,1]");
    m.finish();
    apply_method(cfg);
  }

  {
    Section o = top.child("objective");
    TrainConfig& t = cfg.train;
    t.tau = o.get<double>("tau", t.tau);
    check(t.tau > 0.0, o.sub("tau"), "must be > 0");
    t.lambda = o.get<double>("lambda", t.lambda);
    check(t.lambda >= 0.0, o.sub("lambda"), "must be >= 0");
    t.rho = o.get<double>("rho", t.rho);
    check(t.rho > 0.0 && t.rho < 1.0, o.sub("rho"), "must lie in (0,1)");
    t.normalize = o.get<bool>("normalize", t.normalize);
    t.symmetric_kl = o.get<bool>("symmetric_kl", t.symmetric_kl);
    o.finish();
  }

  {
    Section s = top.child("train");
    TrainConfig& t = cfg.train;
    t.epochs = s.get<std::size_t>("epochs", t.epochs);
    t.steps_per_epoch = s.get<std::size_t>("steps_per_epoch", t.steps_per_epoch);
    t.batch_size = s.get<std::size_t>("batch_size", t.batch_size);
    check(t.batch_size >= 2, s.sub("batch_size"), "must be >= 2");
    t.backbone_lr = s.get<double>("backbone_lr", t.backbone_lr);
    check(t.backbone_lr >= 0.0, s.sub("backbone_lr"), "must be >= 0");
    t.gate_lr_scale = s.get<double>("gate_lr_scale", t.gate_lr_scale);
    check(t.gate_lr_scale >= 0.0, s.sub("gate_lr_scale"), "must be >= 0");
    t.momentum = s.get<double>("momentum", t.momentum);
    check(t.momentum >= 0.0, s.sub("momentum"), "must be >= 0");
    t.weight_decay = s.get<double>("weight_decay", t.weight_decay);
    check(t.weight_decay >= 0.0, s.sub("weight_decay"), "must be >= 0");
    const std::string opt = s.get<std::string>("optimizer", "sgd");
    if (opt == "sgd")
      t.optimizer = OptimizerKind::sgd;
    else if (opt == "lars")
      t.optimizer = OptimizerKind::lars;
    else
      throw ConfigError(s.sub("optimizer"), "must be 'sgd' or 'lars'");
    t.trust_coef = s.get<double>("trust_coef", t.trust_coef);
    check(t.trust_coef >= 0.0, s.sub("trust_coef"), "must be >= 0");
    t.seed = s.get<std::uint64_t>("seed", t.seed);
    t.stats_every = s.get<std::size_t>("stats_every", t.stats_every);
    cfg.snapshot_every = s.get<std::size_t>("snapshot_every", cfg.snapshot_every);
    s.finish();
  }

  {
    Section e = top.child("eval");
    cfg.eval.metrics = e.get<bool>("metrics", cfg.eval.metrics);
    Section p = e.child("probe");
    cfg.eval.probe = p.get<bool>("enabled", cfg.eval.probe);
    cfg.eval.probe_cfg.lr = p.get<double>("lr", cfg.eval.probe_cfg.lr);
    cfg.eval.probe_cfg.epochs = p.get<std::size_t>("epochs", cfg.eval.probe_cfg.epochs);
    cfg.eval.probe_cfg.weight_decay = p.get<double>("weight_decay", cfg.eval.probe_cfg.weight_decay);
    p.finish();
    Section r = e.child("retrieval");
    cfg.eval.retrieval = r.get<bool>("enabled", cfg.eval.retrieval);
    cfg.eval.retrieval_k = r.get_list<std::size_t>("k", cfg.eval.retrieval_k);
    for (std::size_t k : cfg.eval.retrieval_k) check(k >= 1, r.sub("k"), "entries must be >= 1");
    // null or absent means all dims
    if (r.has("dims") && !r.is_null("dims")) cfg.eval.retrieval_dims = r.get<std::size_t>("dims", 0);
    else r.mark("dims");
    if (cfg.eval.retrieval_dims)
      check(*cfg.eval.retrieval_dims <= cfg.model.K(), r.sub("dims"), "must not exceed model.K");
    r.finish();
    e.finish();
  }

  {
    Section o = top.child("output");
    cfg.output_dir = o.get<std::string>("dir", cfg.output_dir);
    check(!cfg.output_dir.empty(), o.sub("dir"), "must not be empty");
    o.finish();
  }
  top.finish();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("", "cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::string canonical_json(const RunConfig& cfg) {
  json j;
  const SyntheticSpec& s = cfg.data.synthetic;
  j["data"] = {
      {"kind", cfg.data.kind == DataKind::synthetic ? "synthetic" : "cifar10"},
      {"eval_samples", cfg.data.eval_samples},
      {"synthetic",
       {{"d", s.d},
        {"m", s.m},
        {"B", s.B},
        {"prevalence", s.prevalence},
        {"intensity_range", {s.intensity_lo, s.intensity_hi}},
        {"noise_sigma", s.noise_sigma},
        {"class_prior", s.class_prior},
        {"seed", s.seed}}},
      {"cifar10",
       {{"dir", cfg.data.cifar_dir},
        {"intensity_range", {cfg.data.aug_intensity_lo, cfg.data.aug_intensity_hi}},
        {"noise_sigma", cfg.data.aug_noise_sigma}}},
  };
  const auto& w = cfg.model.widths;
  j["model"] = {{"method", method_name(cfg.method)},
                {"K", cfg.model.K()},
                {"hidden", std::vector<std::size_t>(w.begin() + 1, w.end() - 1)},
                {"gate_depth", cfg.model.gate_depth},
                {"detach", cfg.model.detach},
                {"gate_bias_init", cfg.model.gate_bias_init},
                {"gumbel_temperature", cfg.model.strategy.temperature},
                {"topk_ratio", cfg.model.strategy.topk_ratio}};
  const TrainConfig& t = cfg.train;
  j["objective"] = {{"tau", t.tau},
                    {"lambda", t.lambda},
                    {"rho", t.rho},
                    {"normalize", t.normalize},
                    {"symmetric_kl", t.symmetric_kl}};
  j["train"] = {{"epochs", t.epochs},
                {"steps_per_epoch", t.steps_per_epoch},
                {"batch_size", t.batch_size},
                {"backbone_lr", t.backbone_lr},
                {"gate_lr_scale", t.gate_lr_scale},
                {"momentum", t.momentum},
                {"weight_decay", t.weight_decay},
                {"optimizer", t.optimizer == OptimizerKind::sgd ? "sgd" : "lars"},
                {"trust_coef", t.trust_coef},
                {"seed", t.seed},
                {"stats_every", t.stats_every},
                {"snapshot_every", cfg.snapshot_every}};
  json retrieval = {{"enabled", cfg.eval.retrieval}, {"k", cfg.eval.retrieval_k}};
  retrieval["dims"] = cfg.eval.retrieval_dims ? json(*cfg.eval.retrieval_dims) : json(nullptr);
  j["eval"] = {{"metrics", cfg.eval.metrics},
               {"probe",
                {{"enabled", cfg.eval.probe},
                 {"lr", cfg.eval.probe_cfg.lr},
                 {"epochs", cfg.eval.probe_cfg.epochs},
                 {"weight_decay", cfg.eval.probe_cfg.weight_decay}}},
               {"retrieval", retrieval}};
  j["output"] = {{"dir", cfg.output_dir}};
  return j.dump();
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string default_config_json() { return json::parse(canonical_json(parse_run_config("{}"))).dump(2) + "\n"; }

}  // namespace ngcl
