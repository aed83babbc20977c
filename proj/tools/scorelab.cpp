// scorelab command-line front end
#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <scorelab/harness.hpp>

using namespace scorelab;

namespace {

enum Exit { kOk = 0, kAssert = 1, kConfig = 2 };

struct Globals {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out;
  int threads = 0;
};

ExperimentConfig resolve(const Globals& g) {
  ExperimentConfig c = g.config.empty() ? ExperimentConfig{} : load_config(g.config);
  if (g.seed_set) c.seed = g.seed;
  if (!g.out.empty()) c.output_dir = g.out;
  if (g.threads > 0) c.threads = g.threads;
  validate(c);
  std::filesystem::create_directories(c.output_dir);
  write_config_header(c, c.output_dir);
  return c;
}

Vec parse_vec(const std::string& s) {
  Vec v;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      v.push_back(std::stod(tok));
    } catch (...) {
      throw ConfigError("cannot parse number '" + tok + "'");
    }
  }
  return v;
}

void emit(RecordWriter& w, const ExperimentRecord& r) {
  w.write(r);
  std::cout << to_csv(r) << '\n';
}

// --score: oracle | surrogate | constructed | model:<path>; default follows estimator.kind
ScoreModelPtr make_score(const ExperimentConfig& c, const GeneratorSpec& g, const std::string& which, double surrogate_eps) {
  const auto sched = c.schedule();
  std::string w = which.empty() ? c.estimator.kind : which;
  if (w == "oracle") return std::make_shared<OracleScore>(std::make_shared<ScoreOracle>(g, sched));
  if (w == "surrogate") return std::make_shared<OracleScore>(std::make_shared<ScoreOracle>(build_surrogate(g, surrogate_eps), sched));
  if (w == "constructed") {
    AssemblyOptions opt;
    opt.eps_prime = c.estimator.eps_prime;
    return assemble_score_net(g, sched, c.estimator.eps, opt).score;
  }
  if (w.rfind("model:", 0) == 0) return load_trained(w.substr(6));
  if (w == "trained") throw ConfigError("a trained estimator needs --score model:<path> (produce one with 'train')");
  throw ConfigError("unknown score '" + w + "'");
}

void write_points(const std::string& path, const std::vector<Vec>& pts) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  if (!pts.empty()) {
    for (std::size_t k = 0; k < pts[0].size(); ++k) os << (k ? "," : "") << "y" << k;
    os << '\n';
  }
  for (const auto& p : pts) {
    for (std::size_t k = 0; k < p.size(); ++k) os << (k ? "," : "") << format_double(p[k]);
    os << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"scorelab: score-based generative modelling toolkit"};
  app.require_subcommand(1);
  Globals G;
  app.add_option("--config", G.config, "experiment config (JSON)");
  app.add_option_function<std::uint64_t>("--seed", [&](std::uint64_t s) { G.seed = s, G.seed_set = true; }, "master seed");
  app.add_option("--out", G.out, "output directory");
  app.add_option("--threads", G.threads, "worker threads")->check(CLI::PositiveNumber);

  int rc = kOk;
  auto run = [&](auto&& body) {
    return [&, body] {
      const ExperimentConfig c = resolve(G);
      RecordWriter w(c.output_dir + "/records.csv");
      rc = body(c, w);
    };
  };

  // oracle-eval
  std::string y_str;
  double t_eval = 1.0, sur_eps = 0.0;
  auto* oe = app.add_subcommand("oracle-eval", "log-density, score and f at one point");
  oe->add_option("--y", y_str, "comma-separated point")->required();
  oe->add_option("--t", t_eval, "time");
  oe->add_option("--surrogate-eps", sur_eps, "use the local polynomial surrogate at this eps");
  oe->callback(run([&](const ExperimentConfig& c, RecordWriter& w) {
    const auto g = make_generator(c.generator);
    const Vec y = parse_vec(y_str);
    if (int(y.size()) != g.D) throw ConfigError("--y has " + std::to_string(y.size()) + " coordinates, generator D = " + std::to_string(g.D));
    const auto sched = c.schedule();
    const ScoreOracle o = sur_eps > 0 ? ScoreOracle(build_surrogate(g, sur_eps), sched) : ScoreOracle(g, sched);
    const auto e = o.eval(y, t_eval);
    const std::string h = config_hash(c);
    emit(w, {h, "log_density", e.log_density, 0, 0, "oracle-eval"});
    for (int k = 0; k < g.D; ++k) {
      emit(w, {h, "score[" + std::to_string(k) + "]", e.score[k], 0, 0, "oracle-eval"});
      emit(w, {h, "f[" + std::to_string(k) + "]", e.f_value[k], 0, 0, "oracle-eval"});
    }
    return kOk;
  }));

  // construct
  std::string kind = "div";
  double c_eps = 1e-2, c_C = 1.0, c_a = 0.25, c_b = 1.0;
  int c_K = 8, c_dim = 2, c_gamma = 2;
  auto* co = app.add_subcommand("construct", "build one network and write it with its report");
  co->add_option("--kind", kind, "mult2|mult|exp|chi|rho|div_segment|div|score")->required();
  co->add_option("--eps", c_eps, "accuracy");
  co->add_option("--C", c_C, "input range");
  co->add_option("--K", c_K, "div_net bands");
  co->add_option("--dim", c_dim, "mult_net arity / rho_net dimension");
  co->add_option("--gamma", c_gamma, "chi_net power");
  co->add_option("--a", c_a, "div_segment lower end");
  co->add_option("--b", c_b, "div_segment upper end");
  co->callback(run([&](const ExperimentConfig& c, RecordWriter& w) {
    ReluNet net;
    double measured = std::numeric_limits<double>::quiet_NaN(), bound = c_eps;
    const auto sched = c.schedule();
    try {
      if (kind == "mult2") net = mult2_net(c_C, c_C, c_eps), bound = mult2_error_bound(c_C, c_C, c_eps);
      else if (kind == "mult") net = mult_net(c_dim, c_C, c_eps);
      else if (kind == "exp") net = exp_net(c_eps);
      else if (kind == "chi") net = chi_net(sched, c_gamma, c_eps);
      else if (kind == "rho") net = rho_net(sched, c_dim, c_C, c_eps);
      else if (kind == "div_segment") net = div_segment_net(c_a, c_b, c_eps, 0.0), bound = div_segment_bound(c_a, c_eps, 0.0);
      else if (kind == "div") net = div_net(c_K, c_eps), bound = div_net_bound(c_K, c_eps);
      else if (kind == "score") {
        AssemblyOptions opt;
        opt.eps_prime = c.estimator.eps_prime;
        const auto a = assemble_score_net(make_generator(c.generator), sched, c.estimator.eps, opt);
        net = a.f_net;
        measured = a.report.construction.measured_error;
        bound = a.report.construction.bound;
      } else {
        throw ConfigError("unknown construction '" + kind + "'");
      }
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("construct: ") + e.what());
    }
    const std::string path = c.output_dir + "/" + kind + ".net";
    save_net(path, net);
    const auto st = net.stats();
    ExperimentRecord r{config_hash(c), "construct[" + kind + "]", measured, 0, 0, "construct"};
    r.bound = bound;
    r.note = "L=" + std::to_string(st.L) + " S=" + std::to_string(st.S) + " B=" + format_double(st.B) + " file=" + path;
    if (!std::isnan(measured)) r.pass = measured <= bound;
    emit(w, r);
    return r.pass == 0 ? kAssert : kOk;
  }));

  // verify-constructions
  std::size_t n_audit = 10000;
  auto* vc = app.add_subcommand("verify-constructions", "audit every primitive against its bound");
  vc->add_option("--points", n_audit, "audit points per construction");
  vc->callback(run([&](const ExperimentConfig& c, RecordWriter& w) {
    Rng rng = stream_rng(c.seed, 0xc0);
    const std::string h = config_hash(c);
    bool ok = true;
    for (const auto& rep : verify_constructions(n_audit, rng)) {
      auto r = assertion(h, "construction[" + rep.name + "]", rep.measured_error, rep.bound, rep.ok(), rep.domain_spec);
      r.origin = "verify-constructions";
      r.note += " L=" + std::to_string(rep.stats.L) + " S=" + std::to_string(rep.stats.S);
      emit(w, r);
      ok = ok && rep.ok();
      save_net(c.output_dir + "/" + rep.name + ".net", rep.net);
    }
    const auto p = verify_pou(8, 1000, rng);
    auto r = assertion(h, "partition_of_unity[K=8]", p.max_deviation, p.tolerance, p.ok());
    r.origin = "verify-constructions";
    emit(w, r);
    return ok && p.ok() ? kOk : kAssert;
  }));

  // train
  std::size_t n_train = 0;
  auto* tr = app.add_subcommand("train", "fit the clipped score class by denoising score matching");
  tr->add_option("--n", n_train, "training sample size (default: largest sweep n)");
  tr->callback(run([&](const ExperimentConfig& c, RecordWriter& w) {
    const auto g = make_generator(c.generator);
    const auto sched = c.schedule();
    const std::size_t n = n_train ? n_train : *std::max_element(c.sweep.n.begin(), c.sweep.n.end());
    Rng drng = stream_rng(c.seed, 0xda7a);
    const auto data = sample_data(g, sched.sigma_data, n, drng);
    TrainConfig tc = c.estimator.train;
    tc.seed = splitmix64(c.seed ^ tc.seed);
    const auto t0 = std::chrono::steady_clock::now();
    const auto res = erm_train(tc, data, sched);
    const double rt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    save_trained(c.output_dir + "/model.txt", *res.model);
    {
      std::ofstream os(c.output_dir + "/train_trace.csv");
      os << "epoch,train_loss,val_loss,sigma\n";
      for (std::size_t i = 0; i < res.trace.epoch.size(); ++i)
        os << res.trace.epoch[i] << ',' << format_double(res.trace.train_loss[i]) << ',' << format_double(res.trace.val_loss[i])
           << ',' << format_double(res.trace.sigma[i]) << '\n';
    }
    OracleScore star(std::make_shared<ScoreOracle>(g, sched));
    Rng erng = stream_rng(c.seed, 0xe7a1);
    const auto e = integrated_score_error(*res.model, star, g, sched, c.mc.n_eval, McConfig{c.mc.n_t, c.mc.n_mc}, erng);
    ExperimentRecord r{config_hash(c), "integrated_score_error[n=" + std::to_string(n) + "]", e.value, e.std_error, rt, "train"};
    const auto st = res.model->net().to_relu_net().stats();
    r.note = "best_epoch=" + std::to_string(res.best_epoch) + " sigma=" + format_double(res.model->sigma()) +
             " L=" + std::to_string(st.L) + " S=" + std::to_string(st.S) + " B=" + format_double(st.B) +
             " inputs=(y,t,exp(-t),1-exp(-2t))";
    emit(w, r);
    return kOk;
  }));

  // vincent
  std::string score_sel;
  auto* vi = app.add_subcommand("vincent", "integrated score error vs excess DSM risk");
  vi->add_option("--score", score_sel, "oracle|surrogate|constructed|model:<path>");
  vi->add_option("--surrogate-eps", sur_eps, "surrogate eps")->default_val(0.1);
  vi->callback(run([&](const ExperimentConfig& c, RecordWriter& w) {
    const auto g = make_generator(c.generator);
    const auto sched = c.schedule();
    const auto s = make_score(c, g, score_sel, sur_eps > 0 ? sur_eps : 0.1);
    OracleScore star(std::make_shared<ScoreOracle>(g, sched));
    Rng rng = stream_rng(c.seed, 0x5c);
    const auto t0 = std::chrono::steady_clock::now();
    const auto v = vincent_check(*s, star, g, sched, c.mc.n_data, McConfig{c.mc.n_t, c.mc.n_mc}, rng);
    const double rt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const std::string h = config_hash(c);
    emit(w, {h, "vincent_lhs", v.lhs.value, v.lhs.std_error, rt, "vincent"});
    emit(w, {h, "vincent_rhs", v.rhs.value, v.rhs.std_error, rt, "vincent"});
    auto r = assertion(h, "vincent_gap_sigmas", v.gap_sigmas, 3.0, v.gap_sigmas <= 3.0, "paired se " + format_double(v.gap_se));
    r.origin = "vincent";
    emit(w, r);
    return v.gap_sigmas <= 3.0 ? kOk : kAssert;
  }));

  // sample
  auto* sa = app.add_subcommand("sample", "reverse-time Euler-Maruyama draws");
  sa->add_option("--score", score_sel, "oracle|surrogate|constructed|model:<path>");
  sa->callback(run([&](const ExperimentConfig& c, RecordWriter& w) {
    const auto g = make_generator(c.generator);
    const auto s = make_score(c, g, score_sel, 0.1);
    ReverseRunConfig rc{c.sampler.n_steps, c.sampler.n_samples, c.seed};
    const auto t0 = std::chrono::steady_clock::now();
    const auto pts = reverse_sample(*s, c.schedule(), rc);
    const double rt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_points(c.output_dir + "/samples.csv", pts);
    ExperimentRecord r{config_hash(c), "samples", double(pts.size()), 0, rt, "sample"};
    r.note = "steps=" + std::to_string(rc.n_steps) + " file=" + c.output_dir + "/samples.csv";
    emit(w, r);
    return kOk;
  }));

  // end-to-end
  auto* ee = app.add_subcommand("end-to-end", "histogram TV between data and generated samples");
  ee->add_option("--score", score_sel, "oracle|surrogate|constructed|model:<path>");
  ee->callback(run([&](const ExperimentConfig& c, RecordWriter& w) {
    const auto g = make_generator(c.generator);
    const auto s = make_score(c, g, score_sel, 0.1);
    const auto r = end_to_end(g, c.schedule(), *s, c.sampler.n_samples, c.sampler.n_steps, c.sampler.bins, c.seed);
    ExperimentRecord rec{config_hash(c), r.marginal ? "tv_marginal_max" : "tv", r.tv, r.tv_se, r.runtime_s, "end-to-end"};
    rec.note = "bins=" + std::to_string(c.sampler.bins) + " steps=" + std::to_string(c.sampler.n_steps) +
               " n=" + std::to_string(c.sampler.n_samples);
    emit(w, rec);
    return kOk;
  }));

  // rates
  auto* ra = app.add_subcommand("rates", "sample-size sweep of the trained estimator");
  ra->callback(run([&](const ExperimentConfig& c, RecordWriter& w) {
    RateSweepResult res;
    try {
      res = rate_sweep(c);
    } catch (const SweepError& e) {
      throw ConfigError(e.what());
    }
    for (const auto& r : res.rows) emit(w, r);
    const double ref = -2.0 * c.generator.beta / (2.0 * c.generator.beta + c.generator.d);
    const bool ok = res.slope < 0.0 && res.slope >= ref - 0.25 && res.monotone;
    auto r = assertion(config_hash(c), "rate_trend", res.slope, ref - 0.25, ok,
                       std::string("slope in [ref-0.25, 0) and monotone: ") + (res.monotone ? "monotone" : "not monotone"));
    r.origin = "rates";
    emit(w, r);
    return ok ? kOk : kAssert;
  }));

  // tails
  auto* ta = app.add_subcommand("tails", "empirical tail mass vs the analytic bound");
  ta->callback(run([&](const ExperimentConfig& c, RecordWriter& w) {
    const auto g = make_generator(c.generator);
    const auto sched = c.schedule();
    Rng rng = stream_rng(c.seed, 0x7a);
    bool ok = true;
    for (double t : {sched.t0, 0.5 * (sched.t0 + sched.T), sched.T}) {
      const double R = truncation_radius(sched, t, 0.1, g.beta, g.D);
      const auto tc = tail_mass_check(g, sched, t, R, c.mc.n_tail, rng);
      auto r = assertion(config_hash(c), "tail_mass[t=" + format_double(t) + "]", tc.empirical, tc.bound, tc.empirical <= tc.bound,
                         "R=" + format_double(R), tc.std_error);
      r.origin = "tails";
      emit(w, r);
      ok = ok && r.pass == 1;
    }
    return ok ? kOk : kAssert;
  }));

  // analytic-check
  auto* an = app.add_subcommand("analytic-check", "finite-difference derivatives of log h vs the analytic bound");
  an->callback(run([&](const ExperimentConfig& c, RecordWriter& w) {
    const auto g = make_generator(c.generator);
    Rng rng = stream_rng(c.seed, 0xa7);
    bool ok = true;
    for (int k : {1, 2})
      for (double sg : {0.3, 0.7}) {
        const auto dc = analytic_derivative_check(g, sg, k, 50, rng);
        auto r = assertion(config_hash(c), "analytic_derivative[k=" + std::to_string(k) + ",sigma=" + format_double(sg) + "]",
                           dc.max_norm, dc.bound * 1.01, dc.max_norm <= dc.bound * 1.01);
        r.origin = "analytic-check";
        emit(w, r);
        ok = ok && r.pass == 1;
      }
    return ok ? kOk : kAssert;
  }));

  // audit
  auto* au = app.add_subcommand("audit", "all computable bounds for the configured generator");
  au->callback(run([&](const ExperimentConfig& c, RecordWriter& w) {
    const auto rows = bound_audit(c);
    for (const auto& r : rows) emit(w, r);
    return all_pass(rows) ? kOk : kAssert;
  }));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return kConfig;
  } catch (const PreconditionError& e) {
    std::cerr << "precondition: " << e.what() << '\n';
    return kAssert;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kAssert;
  }
  return rc;
}
