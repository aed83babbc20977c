#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "generator.hpp"
#include "quadrature.hpp"
#include "schedule.hpp"

namespace scorelab {

struct ScoreEval {
  double log_density = 0.0;
  Vec score;
  Vec f_value;
};

// weighted atoms {(w_i, a_i)}: p_t(y) = sum_i w_i N(y; m_t a_i, tvar_t I)
struct AtomTable {
  int D = 1;
  std::vector<double> logw;
  std::vector<double> pts;  // flat, size * D

  std::size_t size() const { return logw.size(); }
  const double* atom(std::size_t i) const { return pts.data() + i * D; }

  static AtomTable from_generator(const GeneratorSpec& g, const QuadratureRule& q) {
    AtomTable a;
    a.D = g.D;
    a.logw.resize(q.size());
    a.pts.resize(q.size() * g.D);
    Vec u(g.d);
    for (std::size_t i = 0; i < q.size(); ++i) {
      for (int k = 0; k < g.d; ++k) u[k] = q.node(i)[k];
      Vec v = g.eval(u);
      std::copy(v.begin(), v.end(), a.pts.begin() + i * g.D);
      a.logw[i] = std::log(q.weights[i]);
    }
    return a;
  }

  // per-cell scaled rules so the piecewise structure of g° is integrated cell by cell
  static AtomTable from_surrogate(const LocalPolySurrogate& s, int nodes_per_cell_axis) {
    AtomTable a;
    a.D = s.D;
    const int d = s.grid.d;
    const double h = s.grid.width();
    for (std::size_t c = 0; c < s.grid.n_cells(); ++c) {
      Vec anc = s.grid.anchor(c);
      Vec lo(d);
      for (int k = 0; k < d; ++k) lo[k] = anc[k] - h;
      QuadratureRule q = QuadratureRule::tensor(d, nodes_per_cell_axis, lo, h);
      for (std::size_t i = 0; i < q.size(); ++i) {
        Vec u(q.node(i), q.node(i) + d);
        Vec v = s.eval_cell(c, u);
        a.pts.insert(a.pts.end(), v.begin(), v.end());
        a.logw.push_back(std::log(q.weights[i]));
      }
    }
    return a;
  }
};

// log-density and score of the Gaussian mixture, shared max-exponent normalizer
inline ScoreEval mixture_score(const AtomTable& a, const ScheduleValues& sv, const double* y) {
  const int D = a.D;
  const std::size_t n = a.size();
  thread_local std::vector<double> ex;
  ex.resize(n);
  const double inv2 = 1.0 / (2.0 * sv.tvar);
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    const double* p = a.atom(i);
    double r2 = 0.0;
    for (int k = 0; k < D; ++k) {
      double r = y[k] - sv.m * p[k];
      r2 += r * r;
    }
    ex[i] = a.logw[i] - r2 * inv2;
    mx = std::max(mx, ex[i]);
  }
  if (!std::isfinite(mx)) throw std::runtime_error("oracle: quadrature underflow (all exponents -inf)");
  ScoreEval out;
  out.f_value.assign(D, 0.0);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double e = std::exp(ex[i] - mx);
    z += e;
    const double* p = a.atom(i);
    for (int k = 0; k < D; ++k) out.f_value[k] += e * p[k];
  }
  for (auto& v : out.f_value) v /= z;
  out.log_density = -0.5 * D * std::log(2.0 * std::numbers::pi * sv.tvar) + mx + std::log(z);
  out.score.resize(D);
  for (int k = 0; k < D; ++k) out.score[k] = -y[k] / sv.tvar + (sv.m / sv.tvar) * out.f_value[k];
  return out;
}

// exact oracle for p_t*, s*, f* with cached generator values at the nodes
class ScoreOracle {
 public:
  ScoreOracle(const GeneratorSpec& g, const DiffusionSchedule& s, int nodes_per_axis = 0)
      : gen_(g), sched_(s), quad_(QuadratureRule::unit_cube(g.d, nodes_per_axis)),
        atoms_(AtomTable::from_generator(g, quad_)) {
    if (g.d > 3) throw std::invalid_argument("oracle: d > 3 unsupported");
  }

  ScoreOracle(const LocalPolySurrogate& sur, const DiffusionSchedule& s, int nodes_per_cell_axis = 16)
      : sched_(s), atoms_(AtomTable::from_surrogate(sur, nodes_per_cell_axis)) {
    gen_.d = sur.grid.d;
    gen_.D = sur.D;
    gen_.name = "surrogate";
  }

  ScoreEval eval(const Vec& y, double t) const {
    if (int(y.size()) != atoms_.D) throw std::invalid_argument("oracle: dimension mismatch");
    return mixture_score(atoms_, sched_.eval(t), y.data());
  }
  double log_density(const Vec& y, double t) const { return eval(y, t).log_density; }

  const DiffusionSchedule& schedule() const { return sched_; }
  const AtomTable& atoms() const { return atoms_; }
  int D() const { return atoms_.D; }

 private:
  GeneratorSpec gen_;
  DiffusionSchedule sched_;
  QuadratureRule quad_;
  AtomTable atoms_;
};

inline double density(const GeneratorSpec& g, const DiffusionSchedule& s, const Vec& y, double t,
                      int nodes_per_axis = 0) {
  return ScoreOracle(g, s, nodes_per_axis).log_density(y, t);
}

inline ScoreEval true_score(const GeneratorSpec& g, const DiffusionSchedule& s, const Vec& y, double t,
                            int nodes_per_axis = 0) {
  return ScoreOracle(g, s, nodes_per_axis).eval(y, t);
}

inline ScoreEval surrogate_score(const LocalPolySurrogate& sur, const DiffusionSchedule& s, const Vec& y,
                                 double t, int nodes_per_cell_axis = 16) {
  return ScoreOracle(sur, s, nodes_per_cell_axis).eval(y, t);
}

// R_t = tsd sqrt(D) + 16 tsd max(sqrt(D L), L), L = log(eps^{-2 beta}/D) clamped at 0
inline double truncation_radius(const DiffusionSchedule& s, double t, double eps, double beta, int D) {
  if (!(eps > 0.0 && eps < 1.0)) throw std::invalid_argument("truncation_radius: eps outside (0,1)");
  const double tsd = std::sqrt(s.eval(t).tvar);
  const double L = std::max(0.0, -2.0 * beta * std::log(eps) - std::log(double(D)));
  return tsd * std::sqrt(double(D)) + 16.0 * tsd * std::max(std::sqrt(D * L), L);
}

// dense image grid used for K_t membership: quadrature rule refined 4x per axis, plus the cube corners
inline std::vector<Vec> image_grid(const GeneratorSpec& g, int nodes_per_axis = 0) {
  const int n = 4 * (nodes_per_axis > 0 ? nodes_per_axis : default_nodes_per_axis(g.d)) + 1;
  std::size_t total = 1;
  for (int k = 0; k < g.d; ++k) total *= n;
  std::vector<Vec> out;
  out.reserve(total);
  Vec u(g.d);
  for (std::size_t i = 0; i < total; ++i) {
    std::size_t r = i;
    for (int k = g.d - 1; k >= 0; --k) {
      u[k] = double(r % n) / (n - 1);
      r /= n;
    }
    out.push_back(g.eval(u));
  }
  return out;
}

inline double distance_to_image(const std::vector<Vec>& img, double m, const double* y, int D) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : img) {
    double r2 = 0.0;
    for (int k = 0; k < D; ++k) {
      double r = y[k] - m * p[k];
      r2 += r * r;
    }
    best = std::min(best, r2);
  }
  return std::sqrt(best);
}

struct TailCheck {
  double empirical = 0.0;
  double bound = 0.0;
  double std_error = 0.0;
};

inline double tail_bound(double R, double tvar, int D) {
  const double excess = R * R - D * tvar;
  if (!(excess > 0.0)) throw std::invalid_argument("tail bound: need R^2 > D tvar");
  return std::exp(-std::min(excess / (D * tvar), std::sqrt(excess / tvar)) / 16.0);
}

inline TailCheck tail_mass_check(const GeneratorSpec& g, const DiffusionSchedule& s, double t, double R,
                                 std::size_t n_mc, Rng& rng) {
  const auto sv = s.eval(t);
  TailCheck out;
  out.bound = tail_bound(R, sv.tvar, g.D);
  if (n_mc == 0) throw std::invalid_argument("tail_mass_check: n_mc = 0");
  auto img = image_grid(g);
  auto xs = sample_data(g, s.sigma_data, n_mc, rng);
  const double sd = std::sqrt(sv.var);
  std::size_t outside = 0;
  Vec y(g.D);
  for (const auto& x : xs) {
    for (int k = 0; k < g.D; ++k) y[k] = sv.m * x[k] + sd * normal01(rng);
    if (distance_to_image(img, sv.m, y.data(), g.D) > R) ++outside;
  }
  out.empirical = double(outside) / n_mc;
  out.std_error = std::sqrt(out.empirical * (1.0 - out.empirical) / n_mc);
  return out;
}

// ---- derivatives of log h, h(y) = int exp(y.g/s^2 - |g|^2/(2 s^2)) du ----

inline double log_h(const AtomTable& a, double sigma, const double* y) {
  const double s2 = sigma * sigma;
  double mx = -std::numeric_limits<double>::infinity();
  thread_local std::vector<double> ex;
  ex.resize(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double* p = a.atom(i);
    double yg = 0.0, gg = 0.0;
    for (int k = 0; k < a.D; ++k) yg += y[k] * p[k], gg += p[k] * p[k];
    ex[i] = a.logw[i] + (yg - 0.5 * gg) / s2;
    mx = std::max(mx, ex[i]);
  }
  double z = 0.0;
  for (double e : ex) z += std::exp(e - mx);
  return mx + std::log(z);
}

struct DerivativeCheck {
  double max_norm = 0.0;
  double bound = 0.0;
};

inline DerivativeCheck analytic_derivative_check(const GeneratorSpec& g, double sigma, int k, std::size_t n_points,
                                                 Rng& rng) {
  if (k != 1 && k != 2) throw std::invalid_argument("analytic check: k must be 1 or 2");
  if (!(sigma > 0.0)) throw std::invalid_argument("analytic check: sigma must be positive");
  QuadratureRule q = QuadratureRule::unit_cube(g.d);
  AtomTable a = AtomTable::from_generator(g, q);
  double gmax = 0.0;
  for (const auto& p : image_grid(g)) {
    double n2 = 0.0;
    for (double v : p) n2 += v * v;
    gmax = std::max(gmax, std::sqrt(n2));
  }
  DerivativeCheck out;
  out.bound = std::pow(2.0, k - 1) * factorial(k - 1) * std::pow(gmax, k) / std::pow(sigma, 2 * k);
  const int D = g.D;
  const double eps = std::numeric_limits<double>::epsilon();
  const double scale = sigma * sigma;
  const double h = (k == 1 ? std::cbrt(eps) : std::sqrt(std::sqrt(eps))) * scale;
  Vec y(D), yp(D);
  auto f = [&](const Vec& v) { return log_h(a, sigma, v.data()); };
  for (std::size_t it = 0; it < n_points; ++it) {
    for (auto& v : y) v = normal01(rng);
    const double f0 = f(y);
    // round-off of the stencil relative to the bound
    const double roundoff = 30.0 * (std::abs(f0) + 1.0) * eps / std::pow(h, k);
    if (!std::isfinite(f0) || roundoff > 1e-3 * std::max(out.bound, 1e-300))
      throw std::runtime_error("analytic check: finite-difference stencil outside the stable range");
    auto shifted = [&](int i, double di, int j, double dj) {
      yp = y;
      yp[i] += di;
      if (j >= 0) yp[j] += dj;
      return f(yp);
    };
    double nrm = 0.0;
    if (k == 1) {
      for (int i = 0; i < D; ++i) {
        double gi = (-shifted(i, 2 * h, -1, 0) + 8 * shifted(i, h, -1, 0) - 8 * shifted(i, -h, -1, 0) +
                     shifted(i, -2 * h, -1, 0)) / (12 * h);
        nrm += gi * gi;
      }
      nrm = std::sqrt(nrm);
    } else {
      Eigen::MatrixXd Hs(D, D);
      for (int i = 0; i < D; ++i) {
        Hs(i, i) = (-shifted(i, 2 * h, -1, 0) + 16 * shifted(i, h, -1, 0) - 30 * f0 + 16 * shifted(i, -h, -1, 0) -
                    shifted(i, -2 * h, -1, 0)) / (12 * h * h);
        for (int j = 0; j < i; ++j) {
          double v = (shifted(i, h, j, h) - shifted(i, h, j, -h) - shifted(i, -h, j, h) + shifted(i, -h, j, -h)) /
                     (4 * h * h);
          Hs(i, j) = Hs(j, i) = v;
        }
      }
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Hs, Eigen::EigenvaluesOnly);
      nrm = es.eigenvalues().cwiseAbs().maxCoeff();
    }
    out.max_norm = std::max(out.max_norm, nrm);
  }
  return out;
}

}  // namespace scorelab
