#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "common.hpp"
#include "netcalc.hpp"
#include "rng.hpp"
#include "schedule.hpp"

namespace scorelab {

struct ConstructionReport {
  ReluNet net;
  std::string name;
  double target_accuracy = 0.0;
  std::string domain_spec;
  double measured_error = 0.0;
  double bound = 0.0;
  NetStats stats;
  bool ok() const { return measured_error <= bound; }
};

namespace detail {

// sawtooth depth m with C * 2^{-2m-2} <= eps; requests below double resolution are clamped
inline int sawtooth_levels(double scale, double eps) {
  int m = 1;
  while (m < 26 && scale * std::ldexp(1.0, -2 * m - 2) > eps) ++m;
  return m;
}

}  // namespace detail

// (x, y) -> x y for |x| <= Cx, |y| <= Cy; inputs are clipped to the box first, so |output| <= Cx Cy.
// Zero in either input gives exactly zero: the two squaring channels then see identical values.
inline ReluNet mult2_net(double Cx, double Cy, double eps) {
  const int m = detail::sawtooth_levels(Cx * Cy, eps);
  std::vector<Layer> ls;
  {
    Layer::Builder bl(2);
    const double sc[2] = {1.0 / Cx, 1.0 / Cy};
    for (int c = 0; c < 2; ++c) {
      bl.add(c, sc[c]), bl.end_row(0.0);
      bl.add(c, sc[c]), bl.end_row(1.0);
      bl.add(c, -sc[c]), bl.end_row(0.0);
      bl.add(c, -sc[c]), bl.end_row(1.0);
    }
    ls.push_back(bl.done());
  }
  {
    // s = (u+v)/2, d = (u-v)/2 with u = n0-n1-n2+n3, v = n4-n5-n6+n7
    const double cu[4] = {0.5, -0.5, -0.5, 0.5};
    Layer::Builder bl(8);
    auto row = [&](double su, double sv, double shift) {
      for (int k = 0; k < 4; ++k) bl.add(k, su * cu[k]);
      for (int k = 0; k < 4; ++k) bl.add(4 + k, sv * cu[k]);
      bl.end_row(shift);
    };
    // rows: relu(s), relu(d), relu(-s), relu(-d), relu(s-1/2), relu(d-1/2), relu(-s-1/2), relu(-d-1/2)
    for (double shift : {0.0, 0.5}) {
      row(1, 1, shift);
      row(1, -1, shift);
      row(-1, -1, shift);
      row(-1, 1, shift);
    }
    ls.push_back(bl.done());
  }
  {
    // level 1: a = N0+N2 (resp. N1+N3), ra = N4+N6; g1 = 2a - 4ra; acc1 = a - g1/4
    Layer::Builder bl(8);
    for (int type = 0; type < 3; ++type)
      for (int ch = 0; ch < 2; ++ch) {
        const int a0 = ch, a1 = ch + 2, r0 = ch + 4, r1 = ch + 6;
        double wa = 0, wr = 0, shift = 0;
        if (type == 0) wa = 2, wr = -4;
        if (type == 1) wa = 2, wr = -4, shift = 0.5;
        if (type == 2) wa = 1 - 0.5, wr = 1.0;  // a - (2a - 4 ra)/4
        // columns must increase: a0 < a1 < r0 < r1
        bl.add(a0, wa), bl.add(a1, wa), bl.add(r0, wr), bl.add(r1, wr);
        bl.end_row(shift);
      }
    ls.push_back(bl.done());
  }
  // neuron layout per level: [G_s, G_d, Gh_s, Gh_d, Acc_s, Acc_d]
  for (int k = 2; k <= m; ++k) {
    const double q = std::ldexp(1.0, -2 * k);
    Layer::Builder bl(6);
    for (int type = 0; type < 3; ++type)
      for (int ch = 0; ch < 2; ++ch) {
        const int G = ch, Gh = 2 + ch, Acc = 4 + ch;
        if (type < 2) {
          bl.add(G, 2.0), bl.add(Gh, -4.0);
          bl.end_row(type == 1 ? 0.5 : 0.0);
        } else {
          bl.add(G, -2.0 * q), bl.add(Gh, 4.0 * q), bl.add(Acc, 1.0);
          bl.end_row(0.0);
        }
      }
    ls.push_back(bl.done());
  }
  {
    Layer::Builder bl(6);
    bl.add(4, Cx * Cy), bl.add(5, -Cx * Cy);
    bl.end_row(0.0);
    ls.push_back(bl.done());
  }
  return ReluNet(2, std::move(ls));
}

inline double mult2_error_bound(double Cx, double Cy, double eps) {
  return Cx * Cy * std::ldexp(1.0, -2 * detail::sawtooth_levels(Cx * Cy, eps) - 2);
}

// x -> x restricted to coordinates idx then followed by net
inline ReluNet on_coords(const ReluNet& net, int n, const std::vector<int>& idx) {
  std::vector<double> M(std::size_t(idx.size()) * n, 0.0);
  for (std::size_t i = 0; i < idx.size(); ++i) M[i * n + idx[i]] = 1.0;
  return affine_pre(net, M, n, std::vector<double>(idx.size(), 0.0));
}

// prod_k x_k on [-C,C]^dim by a chain of pairwise products
inline ReluNet mult_net(int dim, double C, double eps) {
  if (dim < 2) throw std::invalid_argument("mult_net: dim < 2");
  if (!(C >= 1.0)) throw std::invalid_argument("mult_net: C < 1");
  if (!(eps > 0.0 && eps <= 1.0)) throw std::invalid_argument("mult_net: eps outside (0,1]");
  // error e_k <= eps_k + C e_{k-1}; split eps evenly over the chain
  auto stage_eps = [&](int k) { return eps / (2.0 * (dim - 1) * std::pow(C, dim - k)); };
  ReluNet net = on_coords(mult2_net(C, C, stage_eps(2)), dim, {0, 1});
  if (dim > 2) {
    std::vector<int> rest;
    for (int k = 2; k < dim; ++k) rest.push_back(k);
    net = parallel({net, select_net(dim, rest)}, true);
  }
  for (int k = 3; k <= dim; ++k) {
    // current layout: (p, x_k, ..., x_dim)
    const int w = dim - k + 2;
    ReluNet step = on_coords(mult2_net(std::pow(C, k - 1), C, stage_eps(k)), w, {0, 1});
    if (w > 2) {
      std::vector<int> rest;
      for (int j = 2; j < w; ++j) rest.push_back(j);
      step = parallel({step, select_net(w, rest)}, true);
    }
    net = concat(step, net);
  }
  return net;
}

// ---- exponential ----

struct ExpPlan {
  double X;    // clamp point, log(3/eps0)
  int k;       // squarings, 2^k >= 4X
  int n;       // Taylor degree of e^{-u}, u in [0, 1/4]
  double eps_m;
};

inline ExpPlan exp_plan(double eps0) {
  ExpPlan p;
  p.X = std::max(1.0, std::log(3.0 / eps0));
  p.k = 0;
  while (std::ldexp(1.0, p.k) < 4.0 * p.X) ++p.k;
  const double amp = std::ldexp(1.0, p.k);
  // truncation u^{n+1}/(n+1)! with u <= 1/4
  p.n = 1;
  while (std::pow(0.25, p.n + 1) / factorial(p.n + 1) > eps0 / (8.0 * amp)) ++p.n;
  p.eps_m = eps0 / (8.0 * amp * (p.n + p.k + 1));
  return p;
}

// x -> e^{-x} for x >= 0: clamp at X, Horner for e^{-x/2^k}, then k squarings
inline ReluNet exp_net(double eps0) {
  if (!(eps0 > 0.0)) throw std::invalid_argument("exp_net: eps0 <= 0");
  const ExpPlan p = exp_plan(eps0);
  const double amp = std::ldexp(1.0, p.k);
  auto coef = [](int i) { return (i % 2 ? -1.0 : 1.0) / factorial(i); };
  // x -> (u, c_{n-1} + c_n u), u = min(relu(x), X) / 2^k
  ReluNet net;
  {
    Layer::Builder l1(1);
    l1.add(0, 1.0), l1.end_row(0.0);
    l1.add(0, 1.0), l1.end_row(p.X);
    Layer::Builder l2(2);
    l2.add(0, 1.0 / amp), l2.add(1, -1.0 / amp), l2.end_row(0.0);
    l2.add(0, coef(p.n) / amp), l2.add(1, -coef(p.n) / amp), l2.end_row(-coef(p.n - 1));
    net = ReluNet(1, {l1.done(), l2.done()});
  }
  // Horner: (u, q) -> (u, c_i + u q), |q| <= e^{1/4}
  const ReluNet pass_u = select_net(2, {0});
  for (int i = p.n - 2; i >= 0; --i) {
    ReluNet step = parallel({pass_u, mult2_net(1.0, 1.5, p.eps_m)}, true);
    step = linear_post(step, {1, 0, 0, 1}, 2, {0.0, coef(i)});
    net = concat(step, net);
  }
  net = concat(select_net(2, {1}), net);
  for (int s = 0; s < p.k; ++s) net = concat(on_coords(mult2_net(1.0, 1.0, p.eps_m), 1, {0, 0}), net);
  return net;
}

// e^a exp_net(x' + a)
inline ReluNet shifted_exp_net(double eps0, double a) {
  if (!(a >= 0.0)) throw std::invalid_argument("shifted_exp_net: a < 0");
  ReluNet e = exp_net(eps0);
  if (a == 0.0) return e;
  e = affine_pre(e, {1.0}, 1, {a});
  return linear_post(e, {std::exp(a)}, 1, {0.0});
}

// ---- schedule nets ----

inline int chi_terms(const DiffusionSchedule& s, double eps) {
  const double tv0 = s.eval(s.t0).tvar;
  const double rate = 2.0 * (s.t0 + s.delta_sigma());
  return std::max(1, int(std::ceil((std::log(2.0 / eps) + std::log(1.0 / tv0)) / rate)));
}

// t -> m_t^gamma / tvar_t = sum_k e^{-2k Delta} e^{-(gamma+2k) t}
inline ReluNet chi_net(const DiffusionSchedule& s, int gamma, double eps) {
  if (gamma < 0 || gamma > 2) throw std::invalid_argument("chi_net: gamma must be 0, 1 or 2");
  if (!(eps > 0.0 && eps <= 1.0)) throw std::invalid_argument("chi_net: eps outside (0,1]");
  if (!(s.t0 + s.delta_sigma() > 0.0)) throw std::invalid_argument("chi_net: t0 + Delta_sigma must be positive");
  const int r = chi_terms(s, eps);
  const ReluNet e = exp_net(eps / (2.0 * r));
  std::vector<ReluNet> terms;
  std::vector<double> w;
  for (int k = 0; k < r; ++k) {
    terms.push_back(affine_pre(e, {double(gamma + 2 * k)}, 1, {0.0}));
    w.push_back(std::exp(-2.0 * k * s.delta_sigma()));
  }
  return linear_post(parallel(terms, true), w, 1, {0.0});
}

// C = (D M^2/2) v tvar_{t0}^{-1} v 1
inline double rho_range(const DiffusionSchedule& s, int D, double M) {
  return std::max({D * M * M / 2.0, 1.0 / s.eval(s.t0).tvar, 1.0});
}

// (y, t) -> |y|^2 / (2 tvar_t) on |y|_inf <= M
inline ReluNet rho_net(const DiffusionSchedule& s, int D, double M, double eps) {
  const double C = rho_range(s, D, M);
  std::vector<ReluNet> parts;
  parts.push_back(on_coords(chi_net(s, 0, eps / (4.0 * C)), D + 1, {D}));
  for (int i = 0; i < D; ++i) parts.push_back(on_coords(mult2_net(M, M, eps / (2.0 * D * C)), D + 1, {i, i}));
  ReluNet stage = parallel(parts, true);
  std::vector<double> Mx(2 * (D + 1), 0.0);
  Mx[0] = 1.0;
  for (int i = 0; i < D; ++i) Mx[(D + 1) + 1 + i] = 0.5;
  stage = linear_post(stage, Mx, 2, {0.0, 0.0});
  return concat(mult2_net(C, C, eps / 4.0), stage);
}

// (y, t) -> m_t (y.a) / tvar_t on |y|_inf <= M
inline ReluNet omega_net(const DiffusionSchedule& s, const std::vector<double>& a, double M, double eps) {
  const int D = int(a.size());
  double amax = 0.0;
  for (double v : a) amax = std::max(amax, std::abs(v));
  const double C = std::max({1.0 / s.eval(s.t0).tvar, D * M * amax, 1.0});
  Layer::Builder l1(D + 1);
  for (int i = 0; i < D; ++i) l1.add(i, a[i]);
  l1.end_row(0.0);
  ReluNet dot(D + 1, {l1.done()});
  ReluNet chi = on_coords(chi_net(s, 1, eps / (4.0 * C)), D + 1, {D});
  ReluNet stage = parallel({dot, chi}, true);
  return concat(mult2_net(C, C, eps / 2.0), stage);
}

// ---- division ----

struct DivSegmentPlan {
  int r;        // series length per the proof
  int p;        // number of factors, 2^p - 1 >= r
  double eps_m;
};

inline DivSegmentPlan div_segment_plan(double a, double b, double eps, double target) {
  DivSegmentPlan pl;
  pl.r = int(std::ceil(b / a * std::ceil(std::log(1.0 / eps))));
  pl.p = 1;
  while (std::ldexp(1.0, pl.p) - 1.0 < pl.r) ++pl.p;
  pl.eps_m = target * a / (b * 8.0 * (pl.p + 2));
  return pl;
}

// (x, y) -> x/y for y in [a,b], |x| <= y. The truncated series (x/b) sum_{i<2^p} z^i, z = 1 - y/b,
// is evaluated through the factorization prod_{i<p} (1 + z^{2^i}) so each factor is one product.
// `target` is the ratio accuracy aimed for; it defaults to eps.
inline ReluNet div_segment_net(double a, double b, double eps, double eps_in, double target = -1.0) {
  if (!(a > 0.0 && a <= b && b <= 1.0)) throw std::invalid_argument("div_segment_net: need 0 < a <= b <= 1");
  if (!(eps > 0.0 && eps < 1.0)) throw std::invalid_argument("div_segment_net: eps outside (0,1)");
  if (!(eps_in >= 0.0 && eps_in <= b)) throw std::invalid_argument("div_segment_net: eps_in outside [0,b]");
  if (target <= 0.0) target = eps;
  const DivSegmentPlan pl = div_segment_plan(a, b, eps, target);
  const double zmax = 1.0 - a / b, pmax = b / a;
  // layer 1: clipped xh = x/b in [-1,1] and z = 1 - y/b in [0, zmax]
  Layer::Builder l1(2);
  {
    const double w = 1.0 / b;
    l1.add(0, w), l1.end_row(0.0);
    l1.add(0, w), l1.end_row(1.0);
    l1.add(0, -w), l1.end_row(0.0);
    l1.add(0, -w), l1.end_row(1.0);
    // v = 1 - y/b: relu(v) = relu(-y/b + 1) -> shift -1
    l1.add(1, -w), l1.end_row(-1.0);
    l1.add(1, -w), l1.end_row(-1.0 + zmax);
  }
  // layer 2 (linear out): (xh, s0 = z, pi0 = 1 + z)
  Layer::Builder l2(6);
  l2.add(0, 1.0), l2.add(1, -1.0), l2.add(2, -1.0), l2.add(3, 1.0), l2.end_row(0.0);
  l2.add(4, 1.0), l2.add(5, -1.0), l2.end_row(0.0);
  l2.add(4, 1.0), l2.add(5, -1.0), l2.end_row(-1.0);
  ReluNet net(2, {l1.done(), l2.done()});
  // stage: (xh, s, pi) -> (xh, s^2, pi (1 + s^2)) done as two steps to keep each a single product
  const ReluNet sq = on_coords(mult2_net(1.0, 1.0, pl.eps_m), 3, {1, 1});
  for (int i = 1; i < pl.p; ++i) {
    // (xh, s, pi) -> (xh, s^2, pi)
    ReluNet st = parallel({select_net(3, {0}), sq, select_net(3, {2})}, true);
    net = concat(st, net);
    // (xh, s', pi) -> (xh, s', pi (1 + s'))
    ReluNet prod = affine_pre(mult2_net(pmax, 2.0, pl.eps_m), {0, 0, 1, 0, 1, 0}, 3, {0.0, 1.0});
    ReluNet st2 = parallel({select_net(3, {0, 1}), prod}, true);
    net = concat(st2, net);
  }
  ReluNet fin = on_coords(mult2_net(1.0, pmax, pl.eps_m), 3, {0, 2});
  return concat(fin, net);
}

inline double div_segment_bound(double a, double eps, double eps_in) {
  const double l = std::log(1.0 / eps);
  return 32.0 * l * l / (a * a) * (eps + eps_in);
}

// dyadic partition of unity on [2^{-K}, 1]: g_1, ..., g_{K-1}
inline std::vector<ReluNet> pou_weights(int K) {
  if (K < 4) throw std::invalid_argument("pou_weights: K < 4");
  auto t = [K](int k) { return std::ldexp(1.0, k - K); };
  std::vector<ReluNet> out;
  for (int k = 1; k <= K - 1; ++k) {
    // rise r1 = relu((y - t_{k-1}) / (t_k - t_{k-1})), fall r2 = relu((t_{k+1} - y) / (t_{k+1} - t_k))
    Layer::Builder l1(1);
    const bool first = k == 1, last = k == K - 1;
    if (!first) {
      const double w = 1.0 / (t(k) - t(k - 1));
      l1.add(0, w), l1.end_row(t(k - 1) * w);
    }
    if (!last) {
      const double w = 1.0 / (t(k + 1) - t(k));
      l1.add(0, -w), l1.end_row(-t(k + 1) * w);
    }
    Layer::Builder l2(l1.l.rows);
    std::vector<Layer> ls;
    if (first || last) {
      // min(r, 1) = 1 - relu(1 - r)
      l2.add(0, -1.0), l2.end_row(-1.0);
      Layer::Builder o(1);
      o.add(0, -1.0), o.end_row(-1.0);
      ls = {l1.done(), l2.done(), o.done()};
    } else {
      // min(r1, r2) = r1 - relu(r1 - r2)
      l2.add(0, 1.0), l2.end_row(0.0);
      l2.add(0, 1.0), l2.add(1, -1.0), l2.end_row(0.0);
      Layer::Builder o(2);
      o.add(0, 1.0), o.add(1, -1.0), o.end_row(0.0);
      ls = {l1.done(), l2.done(), o.done()};
    }
    out.emplace_back(1, std::move(ls));
  }
  return out;
}

inline double div_net_bound(int K, double eps) {
  const double l2 = std::log(2.0), le = std::log(1.0 / eps);
  return 2049.0 * (4.0 * K * K * l2 * l2 + le * le) * eps;
}

// (x, y) -> x/y for y in [2^{-K}, 1], |x| <= y: sum_k g_k(y) q_k(x, y)
inline ReluNet div_net(int K, double eps) {
  if (K < 4) throw std::invalid_argument("div_net: K < 4");
  if (!(eps > 0.0 && eps < 1.0)) throw std::invalid_argument("div_net: eps outside (0,1)");
  auto t = [K](int k) { return std::ldexp(1.0, k - K); };
  auto g = pou_weights(K);
  std::vector<ReluNet> parts;
  double qmax = 1.0;
  for (int k = 1; k <= K - 1; ++k) {
    const double a = t(std::max(k - 2, 0)), b = t(std::min(k + 2, K));
    const double ek = std::ldexp(eps, -2 * (K - k));
    parts.push_back(div_segment_net(a, b, ek, 0.0, eps / 4.0));
    parts.push_back(on_coords(g[k - 1], 2, {1}));
    qmax = std::max(qmax, b / a);
  }
  ReluNet stage = parallel(parts, true);
  // K-1 products g_k q_k, then sum
  const ReluNet h2 = mult2_net(1.0, qmax, eps / (4.0 * (K - 1)));
  std::vector<ReluNet> prods;
  const int w = 2 * (K - 1);
  for (int k = 0; k < K - 1; ++k) prods.push_back(on_coords(h2, w, {2 * k + 1, 2 * k}));
  ReluNet comb = linear_post(parallel(prods, true), std::vector<double>(K - 1, 1.0), 1, {0.0});
  return concat(comb, stage);
}

// radial clip: z if |z| <= R, else R z / |z|
inline std::vector<double> clip_to_ball(const std::vector<double>& z, double R) {
  if (!(R > 0.0)) throw std::invalid_argument("clip_to_ball: R <= 0");
  double n2 = 0.0;
  for (double v : z) n2 += v * v;
  const double n = std::sqrt(n2);
  if (n <= R) return z;
  std::vector<double> out(z);
  for (auto& v : out) v *= R / n;
  return out;
}

}  // namespace scorelab
