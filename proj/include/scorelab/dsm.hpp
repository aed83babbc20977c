#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "generator.hpp"
#include "mlp.hpp"
#include "oracle.hpp"
#include "quadrature.hpp"
#include "rng.hpp"
#include "schedule.hpp"
#include "score_model.hpp"

namespace scorelab {

struct LossEstimate {
  double value = 0.0;
  double std_error = 0.0;
  std::size_t n_mc = 0;
};

struct McConfig {
  int n_t = 32;  // Gauss-Legendre nodes on [t0, T]
  int n_mc = 1;  // draws of X_t | X_0 per (x, node)
  void validate() const {
    if (n_t < 1 || n_mc < 1) throw std::invalid_argument("mc config: counts must be positive");
  }
};

struct TimeNodes {
  std::vector<double> t, w, m, sig2, tvar;
};

// weights sum to T - t0
inline TimeNodes time_nodes(const DiffusionSchedule& s, int n_t) {
  const Rule1D r = gauss_legendre(n_t);
  TimeNodes tn;
  for (int k = 0; k < n_t; ++k) {
    const double t = s.t0 + (s.T - s.t0) * r.x[k];
    const auto sv = s.eval(t);
    tn.t.push_back(t);
    tn.w.push_back((s.T - s.t0) * r.w[k]);
    tn.m.push_back(sv.m);
    tn.sig2.push_back(sv.var);
    tn.tvar.push_back(sv.tvar);
  }
  return tn;
}

inline LossEstimate mean_and_se(const std::vector<double>& v) {
  LossEstimate e;
  e.n_mc = v.size();
  if (v.empty()) return e;
  double mu = 0.0;
  for (double x : v) mu += x;
  mu /= double(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mu) * (x - mu);
  e.value = mu;
  e.std_error = v.size() > 1 ? std::sqrt(ss / double(v.size() - 1) / double(v.size())) : 0.0;
  return e;
}

namespace detail {

// per-point, per-replicate integrals over t of
//   ds: |s(X_t) + xi / sigma_t|^2 ; dstar: same for s*; derr: |s - s*|^2
// replicate r of point i uses one X_t draw per node; pass nullptr for unused models
struct ConditionalTerms {
  std::vector<double> loss, loss_star, err;  // n_points * n_mc
};

inline ConditionalTerms conditional_terms(const ScoreModel* s, const ScoreModel* star, const std::vector<Vec>& X0,
                                          const DiffusionSchedule& sched, const McConfig& mc, Rng& rng) {
  mc.validate();
  const std::size_t n = X0.size();
  if (n == 0) throw std::invalid_argument("loss: empty data");
  const int D = int(X0[0].size());
  const TimeNodes tn = time_nodes(sched, mc.n_t);
  const std::size_t cols = n * mc.n_mc;
  ConditionalTerms ct;
  if (s) ct.loss.assign(cols, 0.0);
  if (star) ct.loss_star.assign(cols, 0.0);
  if (s && star) ct.err.assign(cols, 0.0);
  std::vector<double> Y(cols * D), xi(cols * D), S(cols * D), Ss(cols * D);
  for (int k = 0; k < mc.n_t; ++k) {
    const double m = tn.m[k], sd = std::sqrt(tn.sig2[k]);
    for (std::size_t i = 0; i < n; ++i)
      for (int r = 0; r < mc.n_mc; ++r) {
        const std::size_t c = i * mc.n_mc + r;
        for (int d = 0; d < D; ++d) {
          const double z = normal01(rng);
          xi[c * D + d] = z;
          Y[c * D + d] = m * X0[i][d] + sd * z;
        }
      }
    if (s) s->score_batch(Y.data(), cols, tn.t[k], S.data());
    if (star) star->score_batch(Y.data(), cols, tn.t[k], Ss.data());
    const double w = tn.w[k];
    for (std::size_t c = 0; c < cols; ++c) {
      double a = 0.0, b = 0.0, e = 0.0;
      for (int d = 0; d < D; ++d) {
        const double tgt = xi[c * D + d] / sd;
        if (s) a += (S[c * D + d] + tgt) * (S[c * D + d] + tgt);
        if (star) b += (Ss[c * D + d] + tgt) * (Ss[c * D + d] + tgt);
        if (s && star) e += (S[c * D + d] - Ss[c * D + d]) * (S[c * D + d] - Ss[c * D + d]);
      }
      if (s) ct.loss[c] += w * a;
      if (star) ct.loss_star[c] += w * b;
      if (s && star) ct.err[c] += w * e;
    }
  }
  return ct;
}

inline std::vector<double> replicate_mean(const std::vector<double>& v, std::size_t n, int n_mc) {
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (int r = 0; r < n_mc; ++r) out[i] += v[i * n_mc + r];
    out[i] /= n_mc;
  }
  return out;
}

}  // namespace detail

// int_{t0}^T E[ |s(X_t,t) + (X_t - m_t x)/sigma_t^2|^2 | X_0 = x ] dt; n_mc replicates give the error bar
inline LossEstimate pointwise_loss(const ScoreModel& s, const Vec& x, const DiffusionSchedule& sched, const McConfig& mc,
                                   Rng& rng) {
  if (mc.n_mc < 2) throw std::invalid_argument("pointwise_loss: n_mc >= 2 needed for a standard error");
  const auto ct = detail::conditional_terms(&s, nullptr, {x}, sched, mc, rng);
  auto e = mean_and_se(ct.loss);
  e.n_mc = std::size_t(mc.n_mc) * mc.n_t;
  return e;
}

// mean of per-point losses; the error bar comes from the spread of the per-point estimates
inline LossEstimate empirical_risk(const ScoreModel& s, const std::vector<Vec>& data, const DiffusionSchedule& sched,
                                   const McConfig& mc, Rng& rng) {
  if (data.empty()) throw std::invalid_argument("empirical_risk: empty data");
  if (data.size() == 1) return pointwise_loss(s, data[0], sched, mc, rng);
  const auto ct = detail::conditional_terms(&s, nullptr, data, sched, mc, rng);
  auto e = mean_and_se(detail::replicate_mean(ct.loss, data.size(), mc.n_mc));
  e.n_mc = data.size() * mc.n_mc * mc.n_t;
  return e;
}

// int_{t0}^T E |s(X_t,t) - s*(X_t,t)|^2 dt with X_0 ~ data law, ancestral draws
inline LossEstimate integrated_score_error(const ScoreModel& s, const ScoreModel& star, const GeneratorSpec& g,
                                           const DiffusionSchedule& sched, std::size_t n_samples, const McConfig& mc,
                                           Rng& rng) {
  const auto X0 = sample_data(g, sched.sigma_data, n_samples, rng);
  const auto ct = detail::conditional_terms(&s, &star, X0, sched, mc, rng);
  auto e = mean_and_se(detail::replicate_mean(ct.err, n_samples, mc.n_mc));
  e.n_mc = n_samples * mc.n_mc * mc.n_t;
  return e;
}

struct VincentReport {
  LossEstimate lhs;  // int E|s - s*|^2
  LossEstimate rhs;  // E l(s) - E l(s*)
  double gap = 0.0;
  double gap_se = 0.0;  // standard error of the paired difference
  double gap_sigmas = 0.0;
};

// both sides on common draws; gap_sigmas uses the paired standard error of lhs_i - rhs_i
inline VincentReport vincent_check(const ScoreModel& s, const ScoreModel& star, const GeneratorSpec& g,
                                   const DiffusionSchedule& sched, std::size_t n_data, const McConfig& mc, Rng& rng) {
  const auto X0 = sample_data(g, sched.sigma_data, n_data, rng);
  const auto ct = detail::conditional_terms(&s, &star, X0, sched, mc, rng);
  const auto L = detail::replicate_mean(ct.loss, n_data, mc.n_mc);
  const auto Ls = detail::replicate_mean(ct.loss_star, n_data, mc.n_mc);
  const auto E = detail::replicate_mean(ct.err, n_data, mc.n_mc);
  std::vector<double> rhs(n_data), diff(n_data);
  for (std::size_t i = 0; i < n_data; ++i) {
    rhs[i] = L[i] - Ls[i];
    diff[i] = E[i] - rhs[i];
  }
  VincentReport v;
  v.lhs = mean_and_se(E);
  v.rhs = mean_and_se(rhs);
  const auto d = mean_and_se(diff);
  v.gap = d.value;
  v.gap_se = d.std_error;
  v.gap_sigmas = d.std_error > 0.0 ? std::abs(d.value) / d.std_error : (d.value == 0.0 ? 0.0 : 1e300);
  return v;
}

struct BernsteinReport {
  double lhs = 0.0;  // mean_x (l(s,x) - l(s*,x))^2
  double rhs = 0.0;  // mean_x 48 (...) int E[|s - s*|^2 | X_0 = x]
  bool ok() const { return lhs <= rhs; }
};

// per-x loss-difference inequality averaged over a shared sample of x
inline BernsteinReport bernstein_spot_check(const ScoreModel& s, const ScoreModel& star, const GeneratorSpec& g,
                                            const DiffusionSchedule& sched, std::size_t n_x, const McConfig& mc, Rng& rng) {
  const auto X0 = sample_data(g, sched.sigma_data, n_x, rng);
  const auto ct = detail::conditional_terms(&s, &star, X0, sched, mc, rng);
  const auto L = detail::replicate_mean(ct.loss, n_x, mc.n_mc);
  const auto Ls = detail::replicate_mean(ct.loss_star, n_x, mc.n_mc);
  const auto E = detail::replicate_mean(ct.err, n_x, mc.n_mc);
  const double s2 = sched.sigma2(sched.t0);
  const int D = g.D;
  BernsteinReport b;
  for (std::size_t i = 0; i < n_x; ++i) {
    double x2 = 0.0;
    for (double v : X0[i]) x2 += v * v;
    const double c = 48.0 * ((x2 + 1.0) / s2 + D * std::log(1.0 / s2) + D * (sched.T - sched.t0));
    b.lhs += (L[i] - Ls[i]) * (L[i] - Ls[i]);
    b.rhs += c * E[i];
  }
  b.lhs /= double(n_x);
  b.rhs /= double(n_x);
  return b;
}

// ---- training ----

struct TrainConfig {
  int n_epochs = 200;
  int batch_size = 64;
  double step_size = 1e-3;
  double step_decay = 0.0;  // step_e = step_size / (1 + step_decay * e)
  int n_t_quadrature = 16;
  int n_mc_per_sample = 1;
  std::uint64_t seed = 1;
  std::string optimizer = "adam";  // adam | sgd
  std::vector<int> hidden = {64, 64, 64};
  double val_fraction = 0.2;
  int patience = 30;        // epochs without validation improvement before stopping
  long min_steps = 0;       // raise the epoch count until this many updates are possible
  int val_columns = 8192;   // validation draws are repeated until this many (x, t, X_t) columns exist

  void validate() const {
    if (n_epochs < 1 || batch_size < 1 || n_t_quadrature < 1 || n_mc_per_sample < 1 || patience < 1 || val_columns < 1)
      throw std::invalid_argument("train config: all counts must be positive");
    if (!(step_size > 0.0) || step_decay < 0.0) throw std::invalid_argument("train config: step sizes must be positive and non-increasing");
    if (optimizer != "adam" && optimizer != "sgd") throw std::invalid_argument("train config: optimizer must be adam or sgd");
    if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw std::invalid_argument("train config: val_fraction outside (0,1)");
    for (int h : hidden)
      if (h < 1) throw std::invalid_argument("train config: hidden widths must be positive");
  }
};

struct TrainTrace {
  std::vector<int> epoch;
  std::vector<double> train_loss, val_loss, sigma;
};

struct TrainResult {
  std::shared_ptr<TrainableScore> model;
  TrainTrace trace;
  int best_epoch = -1;
  double initial_val = 0.0, best_val = 0.0;
  long steps = 0;
};

struct TrainingDivergence : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// median nearest-neighbour distance on at most 512 points, clipped to [0, 0.9]
inline double nn_sigma_heuristic(const std::vector<Vec>& data) {
  const std::size_t n = std::min<std::size_t>(data.size(), 512);
  if (n < 2) return 0.5;
  std::vector<double> nn(n);
  for (std::size_t i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      double d2 = 0.0;
      for (std::size_t k = 0; k < data[i].size(); ++k) d2 += (data[i][k] - data[j][k]) * (data[i][k] - data[j][k]);
      best = std::min(best, d2);
    }
    nn[i] = std::sqrt(best);
  }
  std::nth_element(nn.begin(), nn.begin() + n / 2, nn.end());
  return std::clamp(nn[n / 2], 0.0, 0.9);
}

namespace detail {

struct Batch {
  Eigen::MatrixXd feat;         // (D + 3) x cols
  Eigen::MatrixXd y, tgt;       // D x cols, tgt = xi / sigma_t
  std::vector<double> m, s2, w;  // per column
};

inline Batch make_batch(const std::vector<Vec>& data, const std::vector<std::size_t>& idx, const TimeNodes& tn, int n_mc,
                        Rng& rng) {
  const int D = int(data[0].size());
  const std::size_t cols = idx.size() * tn.t.size() * n_mc;
  Batch b;
  b.feat.resize(D + kTimeFeatures, Eigen::Index(cols));
  b.y.resize(D, Eigen::Index(cols));
  b.tgt.resize(D, Eigen::Index(cols));
  b.m.resize(cols), b.s2.resize(cols), b.w.resize(cols);
  std::size_t c = 0;
  const double scale = 1.0 / (double(idx.size()) * n_mc);
  for (std::size_t i : idx)
    for (std::size_t k = 0; k < tn.t.size(); ++k)
      for (int r = 0; r < n_mc; ++r, ++c) {
        const double sd = std::sqrt(tn.sig2[k]);
        for (int d = 0; d < D; ++d) {
          const double z = normal01(rng);
          const double y = tn.m[k] * data[i][d] + sd * z;
          b.y(d, Eigen::Index(c)) = y;
          b.feat(d, Eigen::Index(c)) = y;
          b.tgt(d, Eigen::Index(c)) = z / sd;
        }
        time_features(tn.t[k], &b.feat(D, Eigen::Index(c)));
        b.m[c] = tn.m[k];
        b.s2[c] = tn.sig2[k];
        b.w[c] = tn.w[k] * scale;
      }
  return b;
}

// weighted loss sum_c w_c |s_c + tgt_c|^2 and, when requested, its gradient
inline double batch_loss(const TrainableScore& model, const Batch& b, std::vector<Eigen::MatrixXd>* gW,
                         std::vector<Eigen::VectorXd>* gb, double* gtheta) {
  const Mlp& net = model.net();
  std::vector<Eigen::MatrixXd> acts;
  const Eigen::MatrixXd F = net.forward(b.feat, gW ? &acts : nullptr);
  const int D = int(F.rows());
  const Eigen::Index cols = F.cols();
  const double sg = model.sigma(), R = model.clip_radius();
  Eigen::MatrixXd gF(D, cols);
  double loss = 0.0, gt = 0.0;
  std::vector<double> c(D), s(D), r(D), gs(D), gc(D);
  for (Eigen::Index j = 0; j < cols; ++j) {
    const double m = b.m[j], tv = m * m * sg * sg + b.s2[j];
    double n2 = 0.0;
    for (int d = 0; d < D; ++d) n2 += F(d, j) * F(d, j);
    const double nf = std::sqrt(n2);
    const bool out = nf > R;
    const double scale = out ? R / nf : 1.0;
    double l = 0.0, dtv = 0.0;
    for (int d = 0; d < D; ++d) {
      c[d] = scale * F(d, j);
      s[d] = (-b.y(d, j) + m * c[d]) / tv;
      r[d] = s[d] + b.tgt(d, j);
      l += r[d] * r[d];
      gs[d] = 2.0 * b.w[j] * r[d];
      gc[d] = gs[d] * m / tv;
      dtv -= gs[d] * s[d] / tv;
    }
    loss += b.w[j] * l;
    gt += dtv * 2.0 * m * m * sg * sg * (1.0 - sg);
    // radial projection Jacobian: (R/|f|)(I - f f^T / |f|^2) outside the ball
    double proj = 0.0;
    if (out)
      for (int d = 0; d < D; ++d) proj += F(d, j) * gc[d];
    for (int d = 0; d < D; ++d) gF(d, j) = out ? scale * (gc[d] - F(d, j) * proj / n2) : gc[d];
  }
  if (gW) {
    net.backward(acts, gF, *gW, *gb);
    *gtheta = gt;
  }
  return loss;
}

struct Adam {
  double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  long t = 0;
  std::vector<Eigen::MatrixXd> mW, vW;
  std::vector<Eigen::VectorXd> mb, vb;
  double mth = 0.0, vth = 0.0;

  void init(const Mlp& net) {
    for (std::size_t l = 0; l < net.n_layers(); ++l) {
      mW.push_back(Eigen::MatrixXd::Zero(net.W[l].rows(), net.W[l].cols()));
      vW.push_back(mW.back());
      mb.push_back(Eigen::VectorXd::Zero(net.b[l].size()));
      vb.push_back(mb.back());
    }
  }
};

}  // namespace detail

// mini-batch training of the clipped score class; keeps the state with the lowest validation risk
inline TrainResult erm_train(const TrainConfig& cfg, const std::vector<Vec>& data, const DiffusionSchedule& sched) {
  cfg.validate();
  if (data.size() < 2) throw std::invalid_argument("erm_train: need at least two samples");
  const int D = int(data[0].size());
  Rng rng = stream_rng(cfg.seed, 0);
  Rng shuffle_rng = stream_rng(cfg.seed, 1);
  Rng val_rng = stream_rng(cfg.seed, 2);

  // split
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t i = order.size(); i-- > 1;) std::swap(order[i], order[shuffle_rng() % (i + 1)]);
  const std::size_t n_val = std::clamp<std::size_t>(std::size_t(std::llround(cfg.val_fraction * data.size())), 1, data.size() - 1);
  std::vector<std::size_t> val_idx(order.begin(), order.begin() + n_val), tr_idx(order.begin() + n_val, order.end());

  const TimeNodes tn = time_nodes(sched, cfg.n_t_quadrature);
  const int val_mc = std::max<int>(cfg.n_mc_per_sample, int((cfg.val_columns + n_val * tn.t.size() - 1) / (n_val * tn.t.size())));
  const detail::Batch val = detail::make_batch(data, val_idx, tn, val_mc, val_rng);

  const double s0 = std::clamp(nn_sigma_heuristic(data), 1e-3, 0.9);
  auto model = std::make_shared<TrainableScore>(Mlp::random(D + kTimeFeatures, cfg.hidden, D, rng),
                                                std::log(s0 / (1.0 - s0)), sched, D);
  TrainResult res;
  res.initial_val = res.best_val = detail::batch_loss(*model, val, nullptr, nullptr, nullptr);
  res.best_epoch = 0;
  Mlp best_net = model->net();
  double best_theta = model->theta();

  const std::size_t bs = std::min<std::size_t>(cfg.batch_size, tr_idx.size());
  const long per_epoch = long((tr_idx.size() + bs - 1) / bs);
  const int n_epochs = std::max<long>(cfg.n_epochs, (cfg.min_steps + per_epoch - 1) / per_epoch);
  detail::Adam adam;
  adam.init(model->net());
  std::vector<Eigen::MatrixXd> gW;
  std::vector<Eigen::VectorXd> gb;
  double gth = 0.0;
  int blown = 0, stale = 0;
  for (int e = 1; e <= n_epochs; ++e) {
    const double lr = cfg.step_size / (1.0 + cfg.step_decay * (e - 1));
    for (std::size_t i = tr_idx.size(); i-- > 1;) std::swap(tr_idx[i], tr_idx[shuffle_rng() % (i + 1)]);
    double tr_loss = 0.0;
    for (std::size_t s0i = 0; s0i < tr_idx.size(); s0i += bs) {
      std::vector<std::size_t> idx(tr_idx.begin() + s0i, tr_idx.begin() + std::min(tr_idx.size(), s0i + bs));
      const auto b = detail::make_batch(data, idx, tn, cfg.n_mc_per_sample, rng);
      tr_loss += detail::batch_loss(*model, b, &gW, &gb, &gth) * double(idx.size());
      Mlp& net = model->net();
      ++res.steps;
      if (cfg.optimizer == "sgd") {
        for (std::size_t l = 0; l < net.n_layers(); ++l) net.W[l] -= lr * gW[l], net.b[l] -= lr * gb[l];
        model->set_theta(model->theta() - lr * gth);
      } else {
        auto& a = adam;
        ++a.t;
        const double c1 = 1.0 - std::pow(a.b1, double(a.t)), c2 = 1.0 - std::pow(a.b2, double(a.t));
        for (std::size_t l = 0; l < net.n_layers(); ++l) {
          a.mW[l] = a.b1 * a.mW[l] + (1 - a.b1) * gW[l];
          a.vW[l] = a.b2 * a.vW[l] + (1 - a.b2) * gW[l].cwiseAbs2();
          net.W[l].array() -= lr * (a.mW[l].array() / c1) / ((a.vW[l].array() / c2).sqrt() + a.eps);
          a.mb[l] = a.b1 * a.mb[l] + (1 - a.b1) * gb[l];
          a.vb[l] = a.b2 * a.vb[l] + (1 - a.b2) * gb[l].cwiseAbs2();
          net.b[l].array() -= lr * (a.mb[l].array() / c1) / ((a.vb[l].array() / c2).sqrt() + a.eps);
        }
        a.mth = a.b1 * a.mth + (1 - a.b1) * gth;
        a.vth = a.b2 * a.vth + (1 - a.b2) * gth * gth;
        model->set_theta(model->theta() - lr * (a.mth / c1) / (std::sqrt(a.vth / c2) + a.eps));
      }
    }
    tr_loss /= double(tr_idx.size());
    const double vl = detail::batch_loss(*model, val, nullptr, nullptr, nullptr);
    res.trace.epoch.push_back(e);
    res.trace.train_loss.push_back(tr_loss);
    res.trace.val_loss.push_back(vl);
    res.trace.sigma.push_back(model->sigma());
    if (!std::isfinite(vl) || vl > 10.0 * res.initial_val) {
      if (++blown >= 3) throw TrainingDivergence("erm_train: validation loss above 10x its initial value for 3 epochs");
    } else {
      blown = 0;
    }
    if (vl < res.best_val) {
      res.best_val = vl;
      res.best_epoch = e;
      best_net = model->net();
      best_theta = model->theta();
      stale = 0;
    } else if (++stale >= cfg.patience) {
      break;
    }
  }
  model->net() = best_net;
  model->set_theta(best_theta);
  res.model = model;
  return res;
}

}  // namespace scorelab
