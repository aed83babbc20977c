#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "generator.hpp"
#include "rng.hpp"
#include "schedule.hpp"
#include "score_model.hpp"

namespace scorelab {

struct ReverseRunConfig {
  int n_steps = 500;
  std::size_t n_samples = 1000;
  std::uint64_t seed = 1;
  std::size_t chunk = 2048;  // trajectories advanced together through one score batch

  void validate() const {
    if (n_steps < 1) throw std::invalid_argument("reverse run: n_steps must be >= 1");
    if (n_samples < 1) throw std::invalid_argument("reverse run: n_samples must be >= 1");
    if (chunk < 1) throw std::invalid_argument("reverse run: chunk must be >= 1");
  }
};

struct SamplerBlowUp : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Euler-Maruyama for dZ = (Z + 2 s(Z, T - tau)) dtau + sqrt(2) dB on tau in [0, T - t0], Z_0 ~ N(0, I)
// trajectory i draws from its own stream (seed, i), so results do not depend on the chunking
inline std::vector<Vec> reverse_sample(const ScoreModel& s, const DiffusionSchedule& sched, const ReverseRunConfig& cfg) {
  cfg.validate();
  const int D = s.D();
  const double h = (sched.T - sched.t0) / cfg.n_steps, sq = std::sqrt(2.0 * h);
  std::vector<Vec> out;
  out.reserve(cfg.n_samples);
  std::vector<Rng> rngs;
  std::vector<double> Z, S;
  for (std::size_t c0 = 0; c0 < cfg.n_samples; c0 += cfg.chunk) {
    const std::size_t nb = std::min(cfg.chunk, cfg.n_samples - c0);
    rngs.clear();
    Z.assign(nb * D, 0.0);
    S.assign(nb * D, 0.0);
    for (std::size_t i = 0; i < nb; ++i) {
      rngs.push_back(stream_rng(cfg.seed, c0 + i));
      for (int d = 0; d < D; ++d) Z[i * D + d] = normal01(rngs[i]);
    }
    for (int k = 0; k < cfg.n_steps; ++k) {
      const double t = sched.T - k * h;
      s.score_batch(Z.data(), nb, t, S.data());
      for (std::size_t i = 0; i < nb; ++i) {
        double n2 = 0.0;
        for (int d = 0; d < D; ++d) {
          double& z = Z[i * D + d];
          z += h * (z + 2.0 * S[i * D + d]) + sq * normal01(rngs[i]);
          n2 += z * z;
        }
        if (!(n2 <= 1e12)) throw SamplerBlowUp("reverse_sample: |Z| exceeded 1e6 at step " + std::to_string(k));
      }
    }
    for (std::size_t i = 0; i < nb; ++i) out.emplace_back(Z.begin() + i * D, Z.begin() + (i + 1) * D);
  }
  return out;
}

struct TvBox {
  std::vector<double> lo, hi;
};

// per-coordinate min/max over both sets, widened by `pad` of the range
inline TvBox bounding_box(const std::vector<Vec>& a, const std::vector<Vec>& b, double pad = 0.0) {
  if (a.empty() || b.empty()) throw std::invalid_argument("bounding_box: empty sample set");
  const int D = int(a[0].size());
  TvBox box{std::vector<double>(D, 1e300), std::vector<double>(D, -1e300)};
  for (const auto* set : {&a, &b})
    for (const auto& p : *set)
      for (int k = 0; k < D; ++k) box.lo[k] = std::min(box.lo[k], p[k]), box.hi[k] = std::max(box.hi[k], p[k]);
  for (int k = 0; k < D; ++k) {
    const double r = box.hi[k] - box.lo[k];
    box.lo[k] -= pad * r;
    box.hi[k] += pad * r;
  }
  return box;
}

struct TvResult {
  double tv = 0.0;
  int bins = 0;
  bool marginal = false;  // true: max over per-coordinate marginal TVs (D >= 3)
  TvBox box;
};

namespace detail {

// cell index over the selected coordinates; points outside the box share one overflow cell
inline std::size_t hist_cell(const Vec& p, const TvBox& box, int bins, const std::vector<int>& coords) {
  std::size_t idx = 0;
  for (int k : coords) {
    const double u = (p[k] - box.lo[k]) / (box.hi[k] - box.lo[k]);
    if (!(u >= 0.0 && u <= 1.0)) return std::size_t(-1);
    const int c = std::min(bins - 1, int(u * bins));
    idx = idx * bins + c;
  }
  return idx;
}

inline double hist_tv(const std::vector<Vec>& a, const std::vector<Vec>& b, const TvBox& box, int bins,
                      const std::vector<int>& coords) {
  std::size_t cells = 1;
  for (std::size_t i = 0; i < coords.size(); ++i) cells *= bins;
  std::vector<double> ha(cells + 1, 0.0), hb(cells + 1, 0.0);
  for (const auto& p : a) {
    const auto c = hist_cell(p, box, bins, coords);
    ha[c == std::size_t(-1) ? cells : c] += 1.0;
  }
  for (const auto& p : b) {
    const auto c = hist_cell(p, box, bins, coords);
    hb[c == std::size_t(-1) ? cells : c] += 1.0;
  }
  double tv = 0.0;
  for (std::size_t c = 0; c <= cells; ++c) tv += std::abs(ha[c] / a.size() - hb[c] / b.size());
  return 0.5 * tv;
}

}  // namespace detail

// half L1 distance between histograms on `bins` per axis; mass outside the box is one extra cell
inline TvResult tv_histogram(const std::vector<Vec>& a, const std::vector<Vec>& b, int bins, const TvBox& box) {
  if (a.empty() || b.empty()) throw std::invalid_argument("tv_histogram: empty sample set");
  if (bins < 1) throw std::invalid_argument("tv_histogram: bins < 1");
  const int D = int(a[0].size());
  if (int(box.lo.size()) != D || int(box.hi.size()) != D) throw std::invalid_argument("tv_histogram: box dimension mismatch");
  for (int k = 0; k < D; ++k)
    if (!(box.hi[k] > box.lo[k])) throw std::invalid_argument("tv_histogram: empty box along axis " + std::to_string(k));
  TvResult r;
  r.bins = bins;
  r.box = box;
  if (D <= 2) {
    std::vector<int> all(D);
    for (int k = 0; k < D; ++k) all[k] = k;
    r.tv = detail::hist_tv(a, b, box, bins, all);
  } else {
    r.marginal = true;
    for (int k = 0; k < D; ++k) r.tv = std::max(r.tv, detail::hist_tv(a, b, box, bins, {k}));
  }
  return r;
}

// bootstrap standard error of the histogram TV (both sets resampled)
inline double tv_bootstrap_se(const std::vector<Vec>& a, const std::vector<Vec>& b, int bins, const TvBox& box, int n_boot,
                              Rng& rng) {
  if (n_boot < 2) throw std::invalid_argument("tv_bootstrap_se: n_boot < 2");
  std::vector<double> v;
  std::vector<Vec> ra(a.size()), rb(b.size());
  for (int r = 0; r < n_boot; ++r) {
    for (auto& p : ra) p = a[rng() % a.size()];
    for (auto& p : rb) p = b[rng() % b.size()];
    v.push_back(tv_histogram(ra, rb, bins, box).tv);
  }
  double mu = 0.0, ss = 0.0;
  for (double x : v) mu += x;
  mu /= n_boot;
  for (double x : v) ss += (x - mu) * (x - mu);
  return std::sqrt(ss / (n_boot - 1));
}

struct EndToEndResult {
  double tv = 0.0;
  double tv_se = 0.0;
  bool marginal = false;
  double runtime_s = 0.0;
};

// data draws vs reverse-sampler draws, histogram TV on the common bounding box
inline EndToEndResult end_to_end(const GeneratorSpec& g, const DiffusionSchedule& sched, const ScoreModel& score,
                                 std::size_t n, int steps, int bins, std::uint64_t seed, int n_boot = 20) {
  if (!(sched.sigma_data > 0.0)) throw std::invalid_argument("end_to_end: sigma_data must be positive");
  const auto c0 = std::chrono::steady_clock::now();
  Rng drng = stream_rng(seed, 0x0da7a);
  const auto data = sample_data(g, sched.sigma_data, n, drng);
  ReverseRunConfig cfg;
  cfg.n_steps = steps;
  cfg.n_samples = n;
  cfg.seed = splitmix64(seed);
  const auto gen = reverse_sample(score, sched, cfg);
  const auto box = bounding_box(data, gen);
  EndToEndResult r;
  const auto tv = tv_histogram(data, gen, bins, box);
  r.tv = tv.tv;
  r.marginal = tv.marginal;
  Rng brng = stream_rng(seed, 0xb007);
  r.tv_se = tv_bootstrap_se(data, gen, bins, box, n_boot, brng);
  r.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - c0).count();
  return r;
}

// X_t = m_t x + sigma_t xi for each point
inline std::vector<Vec> forward_push(const std::vector<Vec>& x, const DiffusionSchedule& sched, double t, Rng& rng) {
  std::vector<Vec> out;
  out.reserve(x.size());
  for (const auto& p : x) out.push_back(forward_conditional_sample(sched, p, t, rng));
  return out;
}

// sup |F_n - Phi| for one coordinate
inline double ks_normal(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const double n = double(v.size());
  double d = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double F = 0.5 * std::erfc(-v[i] / std::sqrt(2.0));
    d = std::max({d, std::abs(F - i / n), std::abs((i + 1) / n - F)});
  }
  return d;
}

// asymptotic one-sample critical value at level 1%
inline double ks_critical_1pct(std::size_t n) { return 1.628 / std::sqrt(double(n)); }

}  // namespace scorelab
