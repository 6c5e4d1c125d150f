#include "ngcl/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "ngcl/config.hpp"
#include "ngcl/metrics.hpp"
#include "ngcl/parallel.hpp"
#include "ngcl/theory.hpp"

namespace ngcl {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double median(std::vector<double> v) {
  v.erase(std::remove_if(v.begin(), v.end(), [](double x) { return std::isnan(x); }), v.end());
  if (v.empty()) return kNaN;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string num(double v) { return std::isnan(v) ? "NA" : fmt("%.6g", v); }

std::string join(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + num(v[i]);
  return s;
}

const char* role_name(DimRole r) {
  switch (r) {
    case DimRole::signal: return "signal";
    case DimRole::background: return "background";
    default: return "unassigned";
  }
}

struct Trained {
  Model model;
  Dictionary dict;
};

// one gated model per seed, trained on o.spec
std::vector<Trained> train_seeds(const SuiteOptions& o) {
  std::vector<Trained> out(o.seeds.size());
  const SyntheticSource base(o.spec);
  parallel_for(o.seeds.size(), [&](std::size_t i) {
    SyntheticSource src = base;
    TrainConfig t = o.train;
    t.seed = o.seeds[i];
    out[i].model = train(t, o.model, src, nullptr).state.model;
    out[i].dict = src.dictionary();
  });
  return out;
}

}  // namespace

bool SuiteResult::passed() const {
  return std::all_of(claims.begin(), claims.end(), [](const Claim& c) { return c.pass; });
}

SuiteOptions suite_options(const RunConfig& cfg) {
  if (cfg.data.kind != DataKind::synthetic) throw std::invalid_argument("verify suites need synthetic data");
  if (!cfg.model.strategy.has_gate()) throw std::invalid_argument("verify suites need a gated method");
  SuiteOptions o;
  o.spec = cfg.data.synthetic;
  o.model = cfg.model;
  o.train = cfg.train;
  o.seeds = {cfg.train.seed, cfg.train.seed + 1, cfg.train.seed + 2};
  o.eval_n = cfg.data.eval_samples;
  return o;
}

SuiteOptions default_suite_options() { return suite_options(parse_run_config("{}")); }

const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names = {"prop1", "thm1", "thm2", "thm3", "ipw"};
  return names;
}

SuiteResult suite_prop1(const SuiteOptions& o) {
  SuiteResult r;
  r.suite = "prop1";
  r.csv_header = "seed,dim,role,corr,mean_grad,grad_var";
  std::vector<ConflictProbeReport> reps(o.seeds.size());
  parallel_for(o.seeds.size(), [&](std::size_t i) {
    TrainConfig t = o.train;
    t.seed = o.seeds[i];
    reps[i] = probe_gradient_instability(o.spec, t, o.model, o.eval_n);
  });
  std::vector<double> ratio, var_ratio;
  for (std::size_t i = 0; i < reps.size(); ++i) {
    const auto& p = reps[i];
    ratio.push_back(p.worst_bg_mean_ratio);
    var_ratio.push_back(p.bg_var_ratio);
    for (std::size_t k = 0; k < p.role.size(); ++k)
      r.csv_rows.push_back(std::to_string(o.seeds[i]) + "," + std::to_string(k) + "," + role_name(p.role[k]) + "," +
                           num(p.assignment.corr[k]) + "," + num(p.mean_grad[k]) + "," + num(p.grad_var[k]));
  }
  const double mr = median(ratio), mv = median(var_ratio);
  r.claims.push_back({"background |mean grad| <= 0.2 x std", mr <= 0.2,
                      "median worst ratio " + num(mr) + " (per seed " + join(ratio) + ")"});
  r.claims.push_back({"background grad variance >= 2x median signal variance", mv >= 2.0,
                      "median ratio " + num(mv) + " (per seed " + join(var_ratio) + ")"});
  return r;
}

SuiteResult suite_thm1(const SuiteOptions& o) {
  SuiteResult r;
  r.suite = "thm1";
  r.csv_header = "pi,seed,bg_alpha,sig_alpha,flagged";
  const std::vector<double> grid = {0.5, 0.7, 0.9, 0.99};
  std::vector<std::uint64_t> trend_seeds = o.seeds;
  for (std::uint64_t s = 0; trend_seeds.size() < 5; ++s)
    if (std::find(trend_seeds.begin(), trend_seeds.end(), s) == trend_seeds.end()) trend_seeds.push_back(s);
  const SweepReport sw = filtering_sweep(o.spec, grid, o.train, o.model, trend_seeds, o.eval_n);
  const double probe_pi[] = {0.95};
  const SweepReport at95 = filtering_sweep(o.spec, probe_pi, o.train, o.model, o.seeds, o.eval_n);
  for (const SweepReport* s : {&sw, &at95})
    for (const auto& p : s->points)
      r.csv_rows.push_back(num(p.x) + "," + std::to_string(p.seed) + "," + num(p.bg_alpha) + "," + num(p.sig_alpha) +
                           "," + (p.flagged ? "1" : "0"));

  const auto med = sw.medians(&SweepPoint::bg_alpha);
  const bool trend_ok = sw.trend.tau_b < 0.0 && sw.trend.p_decreasing < 0.05;
  r.claims.push_back({"background alpha decreases with pi (Kendall p < 0.05)", trend_ok,
                      "tau_b " + num(sw.trend.tau_b) + ", p " + num(sw.trend.p_decreasing) + ", medians " + join(med) +
                          ", gamma " + num(sw.gamma)});
  const double bg95 = median(at95.medians(&SweepPoint::bg_alpha));
  const double sig95 = median(at95.medians(&SweepPoint::sig_alpha));
  r.claims.push_back({"pi = 0.95: background alpha < 0.2", bg95 < 0.2, "median " + num(bg95)});
  r.claims.push_back({"pi = 0.95: signal alpha > 0.8", sig95 > 0.8, "median " + num(sig95)});
  return r;
}

SuiteResult suite_thm2(const SuiteOptions& o) {
  SuiteResult r;
  r.suite = "thm2";
  r.csv_header = "seed,e_ncl,e_bayes,spurious_sum,residual,background_dims";
  const auto models = train_seeds(o);
  std::vector<double> resid;
  bool nonneg = true, reduction = true;
  std::string gaps;
  for (std::size_t i = 0; i < models.size(); ++i) {
    Rng rng(o.seeds[i], 14);
    const ErrorReductionReport e = error_reduction_check(models[i].model, o.model, o.spec, models[i].dict, o.eval_n, rng);
    Rng rng1(o.seeds[i], 14);
    const ErrorReductionReport ones =
        error_reduction_check(models[i].model, o.model, o.spec, models[i].dict, o.eval_n, rng1, true);
    resid.push_back(e.residual);
    nonneg = nonneg && e.e_ncl - e.e_bayes >= 0.0;
    reduction = reduction && ones.e_bayes == ones.e_ncl;
    gaps += (i ? " " : "") + num(e.e_ncl - e.e_bayes);
    r.csv_rows.push_back(std::to_string(o.seeds[i]) + "," + num(e.e_ncl) + "," + num(e.e_bayes) + "," +
                         num(e.spurious_sum) + "," + num(e.residual) + "," + std::to_string(e.background_dims));
  }
  const double mr = median(resid);
  r.claims.push_back({"residual <= 0.15", mr <= 0.15, "median " + num(mr) + " (per seed " + join(resid) + ")"});
  r.claims.push_back({"E_ncl - E_bayes >= 0", nonneg, "per seed " + gaps});
  r.claims.push_back({"all-ones mask gives E_bayes = E_ncl", reduction, reduction ? "exact" : "mismatch"});
  return r;
}

SuiteResult suite_thm3(const SuiteOptions& o) {
  SuiteResult r;
  r.suite = "thm3";
  r.csv_header = "lambda,seed,bound";

  double worst_sym = 0.0;
  for (int i = 0; i <= 1000; ++i) {
    const double p = i / 1000.0;
    worst_sym = std::max(worst_sym, std::abs(binary_entropy(p) - binary_entropy(1.0 - p)));
  }
  const bool ends = binary_entropy(0.0) == 0.0 && binary_entropy(1.0) == 0.0;
  const bool half = std::abs(binary_entropy(0.5) - std::log(2.0)) <= 1e-12;
  r.claims.push_back({"H_b conventions", worst_sym <= 1e-12 && ends && half,
                      "max |H(p)-H(1-p)| " + num(worst_sym) + ", H(0)=H(1)=0 " + (ends ? "yes" : "no")});

  // one c_cont for the whole sweep so bounds are comparable
  SyntheticSource src(o.spec);
  TrainConfig t0 = o.train;
  t0.seed = o.seeds.front();
  const Model ref = train(t0, o.model, src, nullptr).state.model;
  Rng rng(o.seeds.front(), 15);
  const Batch eval = make_batch(o.spec, src.dictionary(), rng, o.eval_n);
  const InfoBoundReport base = info_bound_eval(ref, o.model, eval.anchors);
  r.claims.push_back({"bound finite", std::isfinite(base.bound),
                      "bound " + num(base.bound) + " at c_cont " + num(base.c_cont)});

  const double scale = o.train.lambda / 3e-5;
  std::vector<double> grid;
  for (double v : {1e-5, 3e-5, 5e-5, 7e-5, 9e-5}) grid.push_back(v * scale);
  const SweepReport sw = lambda_sweep(o.spec, grid, o.train, o.model, o.seeds, base.c_cont, o.eval_n);
  for (const auto& p : sw.points)
    r.csv_rows.push_back(num(p.x) + "," + std::to_string(p.seed) + "," + num(p.value));
  const auto med = sw.medians(&SweepPoint::value);
  bool mono = std::none_of(med.begin(), med.end(), [](double v) { return std::isnan(v); });
  for (std::size_t i = 1; i < med.size(); ++i) mono = mono && med[i] <= med[i - 1];
  r.claims.push_back({"bound non-increasing in lambda", mono, "medians " + join(med)});
  return r;
}

SuiteResult suite_ipw(const SuiteOptions& o) {
  SuiteResult r;
  r.suite = "ipw";
  r.csv_header = "seed,rho_gated,rho_raw";
  const auto models = train_seeds(o);
  std::vector<double> g, w;
  for (std::size_t i = 0; i < models.size(); ++i) {
    Rng rng(o.seeds[i], 16);
    const IpwReport rep = ipw_alignment_check(models[i].model, o.model, o.spec, models[i].dict, o.eval_n, rng);
    g.push_back(rep.rho_gated);
    w.push_back(rep.rho_raw);
    r.csv_rows.push_back(std::to_string(o.seeds[i]) + "," + num(rep.rho_gated) + "," + num(rep.rho_raw));
  }
  const double mg = median(g), mw = median(w);
  r.claims.push_back({"gated ranking closer to IPW oracle than raw", mg > mw,
                      "median gated " + num(mg) + " vs raw " + num(mw)});
  return r;
}

SuiteResult run_suite(const std::string& name, const SuiteOptions& o) {
  if (name == "prop1") return suite_prop1(o);
  if (name == "thm1") return suite_thm1(o);
  if (name == "thm2") return suite_thm2(o);
  if (name == "thm3") return suite_thm3(o);
  if (name == "ipw") return suite_ipw(o);
  throw std::invalid_argument("unknown suite '" + name + "'");
}

std::string format_claim(const std::string& suite, const Claim& c) {
  return std::string(c.pass ? "PASS" : "FAIL") + " [" + suite + "] " + c.name + ": " + c.detail;
}

DynamicsRow dynamics_row(const GradStatsEntry& e) {
  std::vector<double> af, gv, sc;
  for (std::size_t k = 0; k < e.af.size(); ++k) {
    if (std::isnan(e.sc[k])) continue;
    af.push_back(e.af[k]);
    gv.push_back(e.gv[k]);
    sc.push_back(e.sc[k]);
  }
  auto rho = [](const std::vector<double>& a, const std::vector<double>& b) {
    try {
      return spearman(a, b);
    } catch (const std::invalid_argument&) {
      return kNaN;
    }
  };
  return DynamicsRow{e.epoch, rho(af, gv), rho(af, sc), rho(gv, sc)};
}

std::string dynamics_csv_header() { return "epoch,af_gv,af_sc,gv_sc"; }

std::string dynamics_csv_row(const DynamicsRow& r) {
  auto f = [](double v) { return std::isnan(v) ? std::string("NA") : fmt("%.6f", v); };
  return std::to_string(r.epoch) + "," + f(r.af_gv) + "," + f(r.af_sc) + "," + f(r.gv_sc);
}

}  // namespace ngcl
