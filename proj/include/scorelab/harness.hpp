#pragma once

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "assembly.hpp"
#include "dsm.hpp"
#include "generator.hpp"
#include "oracle.hpp"
#include "sampler.hpp"
#include "verify.hpp"

namespace scorelab {

using json = nlohmann::json;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---- configuration ----

struct GeneratorConfig {
  std::string name = "sine";
  int d = 1, D = 2;
  double beta = 2.0;
  double freq = 1.0;
  double amp = -1.0;   // sine amplitude / quadratic scale; < 0 picks the largest admissible value
  Vec a, B, c, c1, c2;  // affine offset/matrix, constant value, two-piece values
  double H_override = 0.0;  // > 0 replaces the declared Holder constant (used to falsify the bound)
};

struct EstimatorConfig {
  std::string kind = "trained";  // oracle | constructed | trained
  double eps = 0.3;
  double eps_prime = -1.0;
  TrainConfig train;
};

struct SweepConfig {
  std::vector<std::size_t> n = {128, 256, 512, 1024, 2048, 4096, 8192};
  std::vector<double> eps = {0.3, 0.2};
  std::vector<double> t0 = {0.01};
};

struct MonteCarloConfig {
  int n_t = 32;
  int n_mc = 1;
  std::size_t n_eval = 2000;     // samples for integrated score error
  std::size_t n_data = 100000;   // Vincent check
  std::size_t n_tail = 100000;
  int replicates = 4;            // independent trainings per sweep point
};

struct SamplerConfig {
  int n_steps = 500;
  std::size_t n_samples = 100000;
  int bins = 50;
};

struct ExperimentConfig {
  GeneratorConfig generator;
  double sigma_data = 0.1, t0 = 0.05, T = 2.0;
  EstimatorConfig estimator;
  SweepConfig sweep;
  MonteCarloConfig mc;
  SamplerConfig sampler;
  std::uint64_t seed = 1;
  std::string output_dir = "out";
  int threads = 1;

  DiffusionSchedule schedule() const { return DiffusionSchedule(sigma_data, t0, T); }
};

inline json to_json(const TrainConfig& t) {
  return json{{"n_epochs", t.n_epochs},   {"batch_size", t.batch_size},         {"step_size", t.step_size},
              {"step_decay", t.step_decay}, {"n_t_quadrature", t.n_t_quadrature}, {"n_mc_per_sample", t.n_mc_per_sample},
              {"seed", t.seed},             {"optimizer", t.optimizer},           {"hidden", t.hidden},
              {"val_fraction", t.val_fraction}, {"patience", t.patience},        {"min_steps", t.min_steps},
              {"val_columns", t.val_columns}};
}

// all defaults materialized
inline json to_json(const ExperimentConfig& c) {
  const auto& g = c.generator;
  return json{
      {"generator",
       {{"name", g.name}, {"d", g.d}, {"D", g.D}, {"beta", g.beta}, {"freq", g.freq}, {"amp", g.amp}, {"a", g.a},
        {"B", g.B}, {"c", g.c}, {"c1", g.c1}, {"c2", g.c2}, {"H_override", g.H_override}}},
      {"schedule", {{"sigma_data", c.sigma_data}, {"t0", c.t0}, {"T", c.T}}},
      {"estimator",
       {{"kind", c.estimator.kind}, {"eps", c.estimator.eps}, {"eps_prime", c.estimator.eps_prime},
        {"train", to_json(c.estimator.train)}}},
      {"sweep", {{"n", c.sweep.n}, {"eps", c.sweep.eps}, {"t0", c.sweep.t0}}},
      {"mc",
       {{"n_t", c.mc.n_t}, {"n_mc", c.mc.n_mc}, {"n_eval", c.mc.n_eval}, {"n_data", c.mc.n_data},
        {"n_tail", c.mc.n_tail}, {"replicates", c.mc.replicates}}},
      {"sampler", {{"n_steps", c.sampler.n_steps}, {"n_samples", c.sampler.n_samples}, {"bins", c.sampler.bins}}},
      {"seed", c.seed},
      {"output_dir", c.output_dir},
      {"threads", c.threads}};
}

namespace detail {

template <class T>
void take(const json& j, const char* key, T& v, const std::string& path) {
  if (!j.contains(key)) return;
  try {
    v = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("config: field '" + path + key + "': " + e.what());
  }
}

inline void reject_unknown(const json& j, const std::vector<std::string>& known, const std::string& path) {
  if (!j.is_object()) throw ConfigError("config: '" + path + "' must be an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::find(known.begin(), known.end(), it.key()) == known.end())
      throw ConfigError("config: unknown field '" + path + it.key() + "'");
}

}  // namespace detail

inline void validate(const ExperimentConfig& c) {
  try {
    c.schedule();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: schedule: ") + e.what());
  }
  const std::string k = c.estimator.kind;
  if (k != "oracle" && k != "constructed" && k != "trained") throw ConfigError("config: estimator.kind must be oracle, constructed or trained");
  try {
    c.estimator.train.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: estimator.train: ") + e.what());
  }
  if (c.sweep.n.empty() || c.sweep.eps.empty() || c.sweep.t0.empty()) throw ConfigError("config: every sweep axis must be nonempty");
  if (c.mc.n_t < 1 || c.mc.n_mc < 1 || c.mc.n_eval < 2 || c.mc.n_data < 2 || c.mc.n_tail < 1 || c.mc.replicates < 1)
    throw ConfigError("config: mc counts must be positive (n_eval, n_data >= 2)");
  if (c.sampler.n_steps < 1 || c.sampler.n_samples < 1 || c.sampler.bins < 1) throw ConfigError("config: sampler counts must be positive");
  if (c.threads < 1) throw ConfigError("config: threads must be >= 1");
}

inline ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  detail::reject_unknown(j, {"generator", "schedule", "estimator", "sweep", "mc", "sampler", "seed", "output_dir", "threads"}, "");
  if (j.contains("generator")) {
    const auto& g = j["generator"];
    detail::reject_unknown(g, {"name", "d", "D", "beta", "freq", "amp", "a", "B", "c", "c1", "c2", "H_override"}, "generator.");
    auto& o = c.generator;
    detail::take(g, "name", o.name, "generator.");
    detail::take(g, "d", o.d, "generator.");
    detail::take(g, "D", o.D, "generator.");
    detail::take(g, "beta", o.beta, "generator.");
    detail::take(g, "freq", o.freq, "generator.");
    detail::take(g, "amp", o.amp, "generator.");
    detail::take(g, "a", o.a, "generator.");
    detail::take(g, "B", o.B, "generator.");
    detail::take(g, "c", o.c, "generator.");
    detail::take(g, "c1", o.c1, "generator.");
    detail::take(g, "c2", o.c2, "generator.");
    detail::take(g, "H_override", o.H_override, "generator.");
  }
  if (j.contains("schedule")) {
    const auto& s = j["schedule"];
    detail::reject_unknown(s, {"sigma_data", "t0", "T"}, "schedule.");
    detail::take(s, "sigma_data", c.sigma_data, "schedule.");
    detail::take(s, "t0", c.t0, "schedule.");
    detail::take(s, "T", c.T, "schedule.");
  }
  if (j.contains("estimator")) {
    const auto& e = j["estimator"];
    detail::reject_unknown(e, {"kind", "eps", "eps_prime", "train"}, "estimator.");
    detail::take(e, "kind", c.estimator.kind, "estimator.");
    detail::take(e, "eps", c.estimator.eps, "estimator.");
    detail::take(e, "eps_prime", c.estimator.eps_prime, "estimator.");
    if (e.contains("train")) {
      const auto& t = e["train"];
      const std::string p = "estimator.train.";
      detail::reject_unknown(t, {"n_epochs", "batch_size", "step_size", "step_decay", "n_t_quadrature", "n_mc_per_sample", "seed",
                                 "optimizer", "hidden", "val_fraction", "patience", "min_steps", "val_columns"}, p);
      auto& o = c.estimator.train;
      detail::take(t, "n_epochs", o.n_epochs, p);
      detail::take(t, "batch_size", o.batch_size, p);
      detail::take(t, "step_size", o.step_size, p);
      detail::take(t, "step_decay", o.step_decay, p);
      detail::take(t, "n_t_quadrature", o.n_t_quadrature, p);
      detail::take(t, "n_mc_per_sample", o.n_mc_per_sample, p);
      detail::take(t, "seed", o.seed, p);
      detail::take(t, "optimizer", o.optimizer, p);
      detail::take(t, "hidden", o.hidden, p);
      detail::take(t, "val_fraction", o.val_fraction, p);
      detail::take(t, "patience", o.patience, p);
      detail::take(t, "min_steps", o.min_steps, p);
      detail::take(t, "val_columns", o.val_columns, p);
    }
  }
  if (j.contains("sweep")) {
    const auto& s = j["sweep"];
    detail::reject_unknown(s, {"n", "eps", "t0"}, "sweep.");
    detail::take(s, "n", c.sweep.n, "sweep.");
    detail::take(s, "eps", c.sweep.eps, "sweep.");
    detail::take(s, "t0", c.sweep.t0, "sweep.");
  }
  if (j.contains("mc")) {
    const auto& m = j["mc"];
    detail::reject_unknown(m, {"n_t", "n_mc", "n_eval", "n_data", "n_tail", "replicates"}, "mc.");
    detail::take(m, "n_t", c.mc.n_t, "mc.");
    detail::take(m, "n_mc", c.mc.n_mc, "mc.");
    detail::take(m, "n_eval", c.mc.n_eval, "mc.");
    detail::take(m, "n_data", c.mc.n_data, "mc.");
    detail::take(m, "n_tail", c.mc.n_tail, "mc.");
    detail::take(m, "replicates", c.mc.replicates, "mc.");
  }
  if (j.contains("sampler")) {
    const auto& s = j["sampler"];
    detail::reject_unknown(s, {"n_steps", "n_samples", "bins"}, "sampler.");
    detail::take(s, "n_steps", c.sampler.n_steps, "sampler.");
    detail::take(s, "n_samples", c.sampler.n_samples, "sampler.");
    detail::take(s, "bins", c.sampler.bins, "sampler.");
  }
  detail::take(j, "seed", c.seed, "");
  detail::take(j, "output_dir", c.output_dir, "");
  detail::take(j, "threads", c.threads, "");
  validate(c);
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot read " + path);
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw ConfigError("config: " + path + ": " + e.what());
  }
  return config_from_json(j);
}

// FNV-1a over the canonical (sorted-key) dump; output_dir and threads do not change results
inline std::string config_hash(const ExperimentConfig& c) {
  json j = to_json(c);
  j.erase("output_dir");
  j.erase("threads");
  const std::string s = j.dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : s) h = (h ^ ch) * 1099511628211ULL;
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline GeneratorSpec make_generator(const GeneratorConfig& g) {
  GeneratorSpec out;
  try {
    if (g.name == "constant") {
      out = make_constant(g.c.empty() ? Vec(g.D, 0.3 / std::sqrt(double(g.D))) : g.c);
    } else if (g.name == "affine") {
      Vec a = g.a.empty() ? Vec(g.D, -0.2 / std::sqrt(double(g.D))) : g.a;
      Vec B = g.B.empty() ? Vec(std::size_t(a.size()) * g.d, 0.4 / std::sqrt(double(a.size() * g.d))) : g.B;
      out = make_affine(a, B, g.d);
    } else if (g.name == "sine") {
      out = make_sine(g.D, g.beta, g.freq, g.amp);
    } else if (g.name == "quadratic") {
      out = make_quadratic(g.d, g.beta, g.amp);
    } else if (g.name == "two_piece") {
      Vec c1 = g.c1.empty() ? Vec(g.D, -0.5 / std::sqrt(double(g.D))) : g.c1;
      Vec c2 = g.c2.empty() ? Vec(g.D, 0.5 / std::sqrt(double(g.D))) : g.c2;
      out = make_two_piece(c1, c2, g.d);
    } else {
      throw ConfigError("config: unknown generator '" + g.name + "'");
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: generator: ") + e.what());
  }
  if (g.H_override > 0.0) out.H = g.H_override;
  return out;
}

// ---- records ----

struct ExperimentRecord {
  std::string config_hash;
  std::string metric;
  double value = 0.0;
  double std_error = 0.0;
  double runtime_s = 0.0;
  std::string origin;  // producing operation, e.g. "rate_sweep"
  double bound = std::numeric_limits<double>::quiet_NaN();
  int pass = -1;       // -1: not an assertion row
  std::string note;
};

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string o = "\"";
  for (char c : s) o += c == '"' ? std::string("\"\"") : std::string(1, c);
  return o + "\"";
}

inline const char* kRecordHeader = "config_hash,metric,value,std_error,runtime_s,origin,bound,pass,note";

inline std::string to_csv(const ExperimentRecord& r) {
  std::ostringstream os;
  os << r.config_hash << ',' << csv_escape(r.metric) << ',' << format_double(r.value) << ',' << format_double(r.std_error) << ','
     << format_double(r.runtime_s) << ',' << csv_escape(r.origin) << ',' << (std::isnan(r.bound) ? "" : format_double(r.bound))
     << ',' << (r.pass < 0 ? "" : r.pass ? "1" : "0") << ',' << csv_escape(r.note);
  return os.str();
}

// append-only CSV; one writer serializes concurrent producers
class RecordWriter {
 public:
  explicit RecordWriter(const std::string& path) : path_(path) {
    const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
    os_.open(path, std::ios::app);
    if (!os_) throw std::runtime_error("cannot write " + path);
    if (fresh) os_ << kRecordHeader << '\n';
  }
  void write(const ExperimentRecord& r) {
    std::lock_guard<std::mutex> lk(mu_);
    os_ << to_csv(r) << '\n';
    os_.flush();
  }

 private:
  std::string path_;
  std::ofstream os_;
  std::mutex mu_;
};

// materialized config header next to the records
inline void write_config_header(const ExperimentConfig& c, const std::string& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream os(dir + "/config_" + config_hash(c) + ".json");
  os << to_json(c).dump(2) << '\n';
}

// runs tasks 0..n-1 with at most `threads` workers; results land by index
template <class F>
void parallel_for(std::size_t n, int threads, F&& f) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (int w = 0; w < std::min<int>(threads, int(n)); ++w)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next++) < n;) {
        try {
          f(i);
        } catch (...) {
          std::lock_guard<std::mutex> lk(mu);
          if (!err) err = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

// ---- rate sweep ----

struct RatePoint {
  std::size_t n = 0;
  LossEstimate error;  // mean over replicates, standard error across replicates
  std::vector<double> replicate_errors;
};

struct RateSweepResult {
  double slope = 0.0, intercept = 0.0;
  std::vector<RatePoint> points;
  std::vector<ExperimentRecord> rows;
  bool monotone = true;  // non-increasing up to one standard error
};

struct SweepError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// least squares y = a + b x
inline std::pair<double, double> ls_fit(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = double(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) sx += x[i], sy += y[i], sxx += x[i] * x[i], sxy += x[i] * y[i];
  const double b = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  return {(sy - b * sx) / n, b};
}

inline RateSweepResult rate_sweep(const ExperimentConfig& cfg) {
  validate(cfg);
  if (cfg.estimator.kind != "trained")
    throw SweepError("rate_sweep: estimator '" + cfg.estimator.kind + "' has no sample-size dependence; a sweep needs a trained estimator");
  auto ns = cfg.sweep.n;
  std::sort(ns.begin(), ns.end());
  if (ns.size() < 4 || ns.back() < 16 * ns.front()) throw SweepError("rate_sweep: need >= 4 sample sizes spanning >= 16x");
  const auto g = make_generator(cfg.generator);
  const auto sched = cfg.schedule();
  const auto star = std::make_shared<OracleScore>(std::make_shared<ScoreOracle>(g, sched));
  const std::string hash = config_hash(cfg);
  const int R = cfg.mc.replicates;
  std::vector<double> errs(ns.size() * R), secs(ns.size() * R);
  parallel_for(errs.size(), cfg.threads, [&](std::size_t task) {
    const std::size_t i = task / R;
    const int r = int(task % R);
    const auto c0 = std::chrono::steady_clock::now();
    Rng drng = stream_rng(cfg.seed, 1000003ULL * ns[i] + r);
    const auto data = sample_data(g, sched.sigma_data, ns[i], drng);
    TrainConfig tc = cfg.estimator.train;
    tc.seed = splitmix64(cfg.seed ^ (7919ULL * ns[i] + r));
    TrainResult tr;
    try {
      tr = erm_train(tc, data, sched);
    } catch (const TrainingDivergence& e) {
      throw TrainingDivergence(std::string(e.what()) + " (n = " + std::to_string(ns[i]) + ")");
    }
    McConfig mc{cfg.mc.n_t, cfg.mc.n_mc};
    Rng erng = stream_rng(cfg.seed ^ 0xe7a1ULL, task);
    errs[task] = integrated_score_error(*tr.model, *star, g, sched, cfg.mc.n_eval, mc, erng).value;
    secs[task] = std::chrono::duration<double>(std::chrono::steady_clock::now() - c0).count();
  });
  RateSweepResult res;
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < ns.size(); ++i) {
    RatePoint p;
    p.n = ns[i];
    p.replicate_errors.assign(errs.begin() + i * R, errs.begin() + (i + 1) * R);
    p.error = mean_and_se(p.replicate_errors);
    double rt = 0.0;
    for (int r = 0; r < R; ++r) rt += secs[i * R + r];
    ExperimentRecord rec{hash, "integrated_score_error[n=" + std::to_string(p.n) + "]", p.error.value, p.error.std_error, rt, "rate_sweep"};
    res.rows.push_back(rec);
    if (!(p.error.value > 0.0)) throw SweepError("rate_sweep: nonpositive error at n = " + std::to_string(p.n));
    lx.push_back(std::log(double(p.n)));
    ly.push_back(std::log(p.error.value));
    res.points.push_back(std::move(p));
  }
  std::tie(res.intercept, res.slope) = ls_fit(lx, ly);
  for (std::size_t i = 1; i < res.points.size(); ++i)
    if (res.points[i].error.value > res.points[i - 1].error.value + res.points[i].error.std_error) res.monotone = false;
  ExperimentRecord srow{hash, "log_log_slope", res.slope, 0.0, 0.0, "rate_sweep"};
  srow.note = "intercept " + format_double(res.intercept);
  res.rows.push_back(srow);
  return res;
}

// ---- bound audit ----

inline ExperimentRecord assertion(const std::string& hash, const std::string& metric, double value, double bound, bool pass,
                                  const std::string& note = "", double se = 0.0) {
  ExperimentRecord r;
  r.config_hash = hash;
  r.metric = metric;
  r.value = value;
  r.std_error = se;
  r.origin = "bound_audit";
  r.bound = bound;
  r.pass = pass ? 1 : 0;
  r.note = note;
  return r;
}

// every computable bound for the configured generator and schedule; rows carry measured vs bound
inline std::vector<ExperimentRecord> bound_audit(const ExperimentConfig& cfg) {
  validate(cfg);
  const std::string hash = config_hash(cfg);
  const auto g = make_generator(cfg.generator);
  const auto sched = cfg.schedule();
  std::vector<ExperimentRecord> rows;
  Rng rng = stream_rng(cfg.seed, 0xa0d17);
  auto timed = [](auto&& f) {
    const auto c0 = std::chrono::steady_clock::now();
    f();
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - c0).count();
  };

  // surrogate approximation
  if (std::isfinite(g.H)) {
    for (double eps : {0.2, 0.1, 0.05}) {
      ExperimentRecord r;
      const double rt = timed([&] {
        const auto sur = build_surrogate(g, eps);
        const double e = surrogate_sup_error(g, sur), b = surrogate_error_bound(g, eps);
        r = assertion(hash, "g_approx[" + g.name + ",eps=" + format_double(eps) + "]", e, b, e <= b);
      });
      r.runtime_s = rt;
      rows.push_back(r);
    }
  } else {
    rows.push_back(assertion(hash, "g_approx[" + g.name + "]", 0.0, 0.0, true, "skipped: no finite Holder constant"));
  }

  // tail mass at the truncation radius
  for (double t : {sched.t0, 0.5 * (sched.t0 + sched.T), sched.T}) {
    const double R = truncation_radius(sched, t, 0.1, g.beta, g.D);
    const auto tc = tail_mass_check(g, sched, t, R, cfg.mc.n_tail, rng);
    rows.push_back(assertion(hash, "tail_mass[t=" + format_double(t) + "]", tc.empirical, tc.bound, tc.empirical <= tc.bound,
                             "R=" + format_double(R), tc.std_error));
  }

  // analytic derivatives
  for (int k : {1, 2})
    for (double sg : {0.3, 0.7}) {
      const auto dc = analytic_derivative_check(g, sg, k, 50, rng);
      rows.push_back(assertion(hash, "analytic_derivative[k=" + std::to_string(k) + ",sigma=" + format_double(sg) + "]",
                               dc.max_norm, dc.bound * 1.01, dc.max_norm <= dc.bound * 1.01));
    }

  // constructions
  for (const auto& rep : verify_constructions(10000, rng)) {
    auto r = assertion(hash, "construction[" + rep.name + "]", rep.measured_error, rep.bound, rep.ok(), rep.domain_spec);
    rows.push_back(r);
  }
  {
    const auto p = verify_pou(8, 1000, rng);
    rows.push_back(assertion(hash, "partition_of_unity[K=8]", p.max_deviation, p.tolerance, p.ok()));
  }

  // Vincent identity for the surrogate score
  if (std::isfinite(g.H)) {
    const auto sur = build_surrogate(g, 0.1);
    OracleScore s_circ(std::make_shared<ScoreOracle>(sur, sched));
    OracleScore s_star(std::make_shared<ScoreOracle>(g, sched));
    const std::size_t n = std::min<std::size_t>(cfg.mc.n_data, 20000);
    const auto v = vincent_check(s_circ, s_star, g, sched, n, McConfig{cfg.mc.n_t, 1}, rng);
    rows.push_back(assertion(hash, "vincent[s_circ,eps=0.1]", v.gap_sigmas, 3.0, v.gap_sigmas <= 3.0,
                             "lhs=" + format_double(v.lhs.value) + " rhs=" + format_double(v.rhs.value)));
  }

  // assembly preconditions / accuracy when a constructed estimator is configured
  if (cfg.estimator.kind == "constructed") {
    try {
      AssemblyOptions opt;
      opt.eps_prime = cfg.estimator.eps_prime;
      const auto a = assemble_score_net(g, sched, cfg.estimator.eps, opt);
      const auto& cr = a.report.construction;
      rows.push_back(assertion(hash, "assembly[eps=" + format_double(cfg.estimator.eps) + "]", cr.measured_error, cr.bound, cr.ok()));
    } catch (const PreconditionError& e) {
      rows.push_back(assertion(hash, "assembly[eps=" + format_double(cfg.estimator.eps) + "]", 0.0, 0.0, false,
                               std::string("precondition refused: ") + e.what()));
    }
  }
  return rows;
}

inline bool all_pass(const std::vector<ExperimentRecord>& rows) {
  for (const auto& r : rows)
    if (r.pass == 0) return false;
  return true;
}

// ---- persistence of records ----

inline std::vector<ExperimentRecord> read_records(std::istream& is) {
  std::vector<ExperimentRecord> out;
  std::string line;
  int lineno = 0;
  auto fail = [&](const std::string& m) { throw ParseError("records: line " + std::to_string(lineno) + ": " + m); };
  if (!std::getline(is, line)) fail("missing header");
  ++lineno;
  if (line != kRecordHeader) fail("unexpected header");
  const char* names[] = {"config_hash", "metric", "value", "std_error", "runtime_s", "origin", "bound", "pass", "note"};
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::string cur;
    bool q = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      const char c = line[i];
      if (q) {
        if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') cur += '"', ++i;
        else if (c == '"') q = false;
        else cur += c;
      } else if (c == '"') {
        q = true;
      } else if (c == ',') {
        f.push_back(cur), cur.clear();
      } else {
        cur += c;
      }
    }
    f.push_back(cur);
    if (f.size() < 9) fail("missing field '" + std::string(names[f.size()]) + "'");
    auto num = [&](int k) {
      char* end = nullptr;
      const double v = std::strtod(f[k].c_str(), &end);
      if (f[k].empty() || *end != '\0') fail("malformed number in field '" + std::string(names[k]) + "'");
      return v;
    };
    ExperimentRecord r;
    r.config_hash = f[0];
    r.metric = f[1];
    r.value = num(2);
    r.std_error = num(3);
    r.runtime_s = num(4);
    r.origin = f[5];
    if (!f[6].empty()) r.bound = num(6);
    r.pass = f[7].empty() ? -1 : f[7] == "1";
    r.note = f[8];
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace scorelab
