#pragma once

#include <boost/math/distributions/chi_squared.hpp>
#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "constructions.hpp"
#include "generator.hpp"
#include "oracle.hpp"
#include "quadrature.hpp"
#include "score_model.hpp"

namespace scorelab {

struct PreconditionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// R^2 / tvar such that a chi^2_D variable exceeds it with probability eps^{2 beta}
inline double desk_radius_ratio(double eps, double beta, int D) {
  boost::math::chi_squared_distribution<double> chi(D);
  return boost::math::quantile(boost::math::complement(chi, std::pow(eps, 2.0 * beta)));
}

// audit points covering C*: geometric t grid, per-t box grid restricted to K_t
struct AuditSet {
  int D = 1;
  std::vector<double> t;
  std::vector<std::vector<double>> Y;  // per time, flat n x D
  double M = 0.0;                      // sup |y|_inf over the covering boxes
  double radius_ratio = 0.0;           // R_t^2 / tvar_t
  std::vector<double> lo, hi;          // per-coordinate range of the image of g*

  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& y : Y) n += y.size() / D;
    return n;
  }
};

inline AuditSet audit_set(const GeneratorSpec& g, const DiffusionSchedule& s, double eps, int nt = 64, int ny = 32) {
  AuditSet a;
  a.D = g.D;
  a.radius_ratio = desk_radius_ratio(eps, g.beta, g.D);
  const auto img = image_grid(g);
  a.lo.assign(g.D, 1e300);
  a.hi.assign(g.D, -1e300);
  for (const auto& p : img)
    for (int k = 0; k < g.D; ++k) a.lo[k] = std::min(a.lo[k], p[k]), a.hi[k] = std::max(a.hi[k], p[k]);
  std::size_t total = 1;
  for (int k = 0; k < g.D; ++k) total *= ny;
  for (int i = 0; i < nt; ++i) {
    const double t = nt == 1 ? s.t0 : s.t0 * std::pow(s.T / s.t0, double(i) / (nt - 1));
    const auto sv = s.eval(t);
    const double R = std::sqrt(a.radius_ratio * sv.tvar);
    std::vector<double> blo(g.D), bhi(g.D);
    for (int k = 0; k < g.D; ++k) {
      blo[k] = std::min(sv.m * a.lo[k], sv.m * a.hi[k]) - R;
      bhi[k] = std::max(sv.m * a.lo[k], sv.m * a.hi[k]) + R;
      a.M = std::max({a.M, std::abs(blo[k]), std::abs(bhi[k])});
    }
    std::vector<double> ys;
    Vec y(g.D);
    for (std::size_t c = 0; c < total; ++c) {
      std::size_t r = c;
      for (int k = g.D - 1; k >= 0; --k) {
        y[k] = blo[k] + (bhi[k] - blo[k]) * double(r % ny) / (ny - 1);
        r /= ny;
      }
      if (distance_to_image(img, sv.m, y.data(), g.D) <= R) ys.insert(ys.end(), y.begin(), y.end());
    }
    a.t.push_back(t);
    a.Y.push_back(std::move(ys));
  }
  return a;
}

struct AssemblyOptions {
  double eps_prime = -1.0;  // <= 0: derived from the audit denominator floor
  int t_grid = 64;
  int y_grid = 32;
  double norm_margin = 0.05;
  int coef_nodes = 64;
};

struct AssemblyReport {
  ConstructionReport construction;  // measured sup |f~ - f°| on the audit set vs sqrt(D) eps^beta
  double eps = 0.0, eps_prime = 0.0, tau = 0.0;
  int N = 0, K = 0, max_degree = 0, n_monomials = 0;
  double radius_ratio = 0.0;
  double q_lower_bound = 0.0;   // h e^{-4 - R^2/tvar}
  double q_min_exact = 0.0;     // min of the quadrature denominator on the audit set
  double q_min_net = 0.0;       // min of the network denominator on the audit set
  double err_vs_fstar = 0.0;    // sup |f~ - f*| on the audit set
  double fcirc_max_norm = 0.0;  // max |f°| on the audit set
  double fnet_max_norm = 0.0;
  std::size_t audit_points = 0;
};

struct AssembledScore {
  ReluNet f_net;
  std::shared_ptr<NetScore> score;
  AssemblyReport report;
};

namespace detail {

// all multi-indices over q variables with 1 <= |a| <= n, by degree
inline std::vector<MultiIndex> monomials_upto(int q, int n) {
  std::vector<MultiIndex> out;
  if (q == 0) return out;
  for (const auto& a : multi_indices(q, n)) {
    int s = 0;
    for (int v : a) s += v;
    if (s >= 1) out.push_back(a);
  }
  return out;
}

inline int total_degree(const MultiIndex& a) {
  int s = 0;
  for (int v : a) s += v;
  return s;
}

inline int mono_level(int s) {
  int L = 0;
  while ((1 << L) < s) ++L;
  return L;
}

// z in [-1/2, 1/2]^q -> (z^a : a in monos) with pairwise products arranged in ceil(log2 n) rounds.
// Returns the net and, for each entry of `monos`, its output position.
inline ReluNet monomial_net(int q, const std::vector<MultiIndex>& monos, double eps_m, std::vector<int>& pos) {
  std::map<MultiIndex, int> where;
  int avail = q;
  for (int v = 0; v < q; ++v) {
    MultiIndex e(q, 0);
    e[v] = 1;
    where[e] = v;
  }
  int Lmax = 0;
  for (const auto& a : monos) Lmax = std::max(Lmax, mono_level(total_degree(a)));
  ReluNet net = identity_net(q);
  bool first = true;
  const ReluNet m2 = mult2_net(1.0, 1.0, eps_m);
  for (int L = 1; L <= Lmax; ++L) {
    std::vector<ReluNet> parts;
    std::vector<int> all(avail);
    for (int i = 0; i < avail; ++i) all[i] = i;
    parts.push_back(select_net(avail, all));
    int next = avail;
    for (const auto& a : monos) {
      if (mono_level(total_degree(a)) != L) continue;
      MultiIndex b(q, 0), c = a;
      int need = 1 << (L - 1);
      for (int v = 0; v < q && need > 0; ++v) {
        const int take = std::min(need, c[v]);
        b[v] += take, c[v] -= take, need -= take;
      }
      parts.push_back(on_coords(m2, avail, {where.at(b), where.at(c)}));
      where[a] = next++;
    }
    ReluNet stage = parallel(parts, true);
    net = first ? stage : concat(stage, net);
    first = false;
    avail = next;
  }
  pos.clear();
  for (const auto& a : monos) pos.push_back(where.at(a));
  return net;
}

struct CellPlan {
  std::vector<double> v0_row;                 // Ṽ_{j,0} over features
  std::vector<std::vector<double>> var_rows;  // active normalized variables: v = row . F + off
  std::vector<double> var_off;
  std::vector<MultiIndex> monos;
  std::vector<std::vector<double>> coef;      // [psi][mono]
  std::vector<double> c0;                     // [psi]
  int degree = 0;
  double psi_range = 1.0;
  double coef_l1 = 0.0;
};

}  // namespace detail

// Score network for d = 1 following the cell-wise construction: shared features (rho, m y/tvar, m^2/tvar),
// per-cell exponent pieces, Taylor surrogate of the normalized cell integral, weighted sums and division.
inline AssembledScore assemble_score_net(const GeneratorSpec& g, const DiffusionSchedule& s, double eps,
                                         const AssemblyOptions& opt = {}) {
  const int D = g.D;
  if (g.d != 1) throw PreconditionError("assembly: only d = 1 is supported");
  if (D > 3) throw PreconditionError("assembly: D > 3 is outside the desk-scale cap");
  const int p = std::max(0, g.degree());
  if (p > 2) throw PreconditionError("assembly: floor(beta) > 2 is outside the desk-scale cap");
  if (!(eps > 0.0 && eps < 1.0)) throw PreconditionError("assembly: eps outside (0,1)");
  if (!std::isfinite(g.H)) throw PreconditionError("assembly: generator has no finite Holder constant");
  const auto sv0 = s.eval(s.t0);
  const double small = D * eps * std::sqrt(std::log(1.0 / eps));
  if (small > sv0.tvar)
    throw PreconditionError("assembly: smallness condition D eps sqrt(log(1/eps)) = " + std::to_string(small) +
                            " exceeds tvar(t0) = " + std::to_string(sv0.tvar));
  const double gb = surrogate_error_bound(g, eps);
  const double lower_cond = (2.0 * g.H * g.H * D * eps * eps + 2.0 * gb * gb) / sv0.tvar;
  if (gb > 1.0 || lower_cond > 4.0)
    throw PreconditionError("assembly: generator too rough for eps (surrogate bound " + std::to_string(gb) +
                            ", denominator condition " + std::to_string(lower_cond) + " > 4)");

  AssembledScore out;
  AssemblyReport& rep = out.report;
  rep.eps = eps;
  const LocalPolySurrogate sur = build_surrogate(g, eps);
  const int N = sur.grid.N;
  const double h = sur.grid.width();
  rep.N = N;

  const AuditSet audit = audit_set(g, s, eps, opt.t_grid, opt.y_grid);
  rep.radius_ratio = audit.radius_ratio;
  rep.audit_points = audit.size();
  const double M = std::max(1.0, audit.M);

  // exact quadrature quantities on the audit set
  ScoreOracle fcirc(sur, s), fstar(g, s);
  double qmin = 1e300;
  std::vector<std::vector<Vec>> fc(audit.t.size());
  for (std::size_t i = 0; i < audit.t.size(); ++i) {
    const auto sv = s.eval(audit.t[i]);
    const auto& Y = audit.Y[i];
    for (std::size_t k = 0; k * D < Y.size(); ++k) {
      auto e = mixture_score(fcirc.atoms(), sv, Y.data() + k * D);
      qmin = std::min(qmin, std::exp(e.log_density + 0.5 * D * std::log(2.0 * std::numbers::pi * sv.tvar)));
      double n2 = 0.0;
      for (double v : e.f_value) n2 += v * v;
      rep.fcirc_max_norm = std::max(rep.fcirc_max_norm, std::sqrt(n2));
      fc[i].push_back(std::move(e.f_value));
    }
  }
  rep.q_min_exact = qmin;
  const double target = std::sqrt(double(D)) * std::pow(eps, g.beta);
  const double eps_prime = opt.eps_prime > 0.0 ? opt.eps_prime : std::pow(eps, g.beta - 1.0) * std::sqrt(double(D)) * qmin / 32.0;
  const double tau = eps * eps_prime;
  rep.eps_prime = eps_prime;
  rep.tau = tau;

  // cell coefficients G_k = g^(k)(u_j)/k!
  auto G = [&](std::size_t j, int k) -> const Vec& { return sur.coeffs[j][k]; };
  auto dot = [](const Vec& a, const Vec& b) {
    double r = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) r += a[i] * b[i];
    return r;
  };

  // features F = (rho, z_1..z_D, chi2), z = m y / tvar
  double Gl1 = 1.0, Cc = 1.0;
  for (int j = 0; j < N; ++j)
    for (int k = 0; k <= p; ++k) {
      double l1 = 0.0;
      for (double v : G(j, k)) l1 += std::abs(v);
      Gl1 = std::max(Gl1, l1);
      Cc = std::max(Cc, k == 0 ? dot(G(j, 0), G(j, 0)) / 2.0 : std::abs(dot(G(j, 0), G(j, k))));
    }
  const double d_rho = eps_prime / 4.0, d_z = eps_prime / (4.0 * Gl1), d_chi2 = eps_prime / (4.0 * Cc);
  const int F_dim = D + 2;
  ReluNet features;
  {
    std::vector<int> ys(D);
    for (int i = 0; i < D; ++i) ys[i] = i;
    std::vector<ReluNet> st1 = {rho_net(s, D, M, d_rho), select_net(D + 1, ys),
                                on_coords(chi_net(s, 1, std::min(1.0, d_z / (2.0 * M))), D + 1, {D}),
                                on_coords(chi_net(s, 2, std::min(1.0, d_chi2)), D + 1, {D})};
    ReluNet stage1 = parallel(st1, true);  // (rho, y, chi1, chi2)
    const double Cz = std::max({M, 1.0 / sv0.tvar, 1.0});
    const ReluNet mz = mult2_net(Cz, Cz, d_z / 2.0);
    std::vector<ReluNet> st2 = {select_net(D + 3, {0})};
    for (int i = 0; i < D; ++i) st2.push_back(on_coords(mz, D + 3, {1 + i, D + 1}));
    st2.push_back(select_net(D + 3, {D + 2}));
    features = concat(parallel(st2, true), stage1);
  }

  // sup norms of V_{j,k} (primed: g^(k)/k! absorbed) over the covering boxes, and of m^2/(2 tvar)
  auto box_sup = [&](const Vec& coef_z, double coef_chi2) {
    double best = 0.0;
    for (double t : audit.t) {
      const auto sv = s.eval(t);
      const double R = std::sqrt(audit.radius_ratio * sv.tvar);
      for (int c = 0; c < (1 << D); ++c) {
        double v = coef_chi2 * sv.m * sv.m / sv.tvar;
        for (int i = 0; i < D; ++i) {
          const double lo = std::min(sv.m * audit.lo[i], sv.m * audit.hi[i]) - R;
          const double hi = std::max(sv.m * audit.lo[i], sv.m * audit.hi[i]) + R;
          v += coef_z[i] * sv.m * ((c >> i) & 1 ? hi : lo) / sv.tvar;
        }
        best = std::max(best, std::abs(v));
      }
    }
    return best * (1.0 + opt.norm_margin);
  };
  const double NVV = (1.0 + opt.norm_margin) * sv0.m * sv0.m / (2.0 * sv0.tvar);

  const Rule1D gl = gauss_legendre(opt.coef_nodes);
  std::vector<ReluNet> cells;
  const double eps_mul = tau / 4.0;
  for (int j = 0; j < N; ++j) {
    detail::CellPlan cp;
    cp.v0_row.assign(F_dim, 0.0);
    cp.v0_row[0] = 1.0;
    for (int i = 0; i < D; ++i) cp.v0_row[1 + i] = -G(j, 0)[i];
    cp.v0_row[D + 1] = dot(G(j, 0), G(j, 0)) / 2.0;

    // active variables and their a_v(w) weights
    std::vector<std::function<double(double)>> a_fns;
    std::vector<double> NV(p + 1, 0.0);
    for (int k = 1; k <= p; ++k) {
      Vec cz(D);
      for (int i = 0; i < D; ++i) cz[i] = -G(j, k)[i];
      NV[k] = box_sup(cz, dot(G(j, 0), G(j, k)));
      if (NV[k] == 0.0) continue;
      std::vector<double> row(F_dim, 0.0);
      for (int i = 0; i < D; ++i) row[1 + i] = cz[i] / (2.0 * NV[k]);
      row[D + 1] = dot(G(j, 0), G(j, k)) / (2.0 * NV[k]);
      cp.var_rows.push_back(row);
      cp.var_off.push_back(0.5);
      const double nv = NV[k];
      a_fns.push_back([nv, h, k](double w) { return 2.0 * nv * std::pow(-h * w, k); });
    }
    auto dg = [&, j](double w) {
      Vec v(D, 0.0);
      for (int k = 1; k <= p; ++k)
        for (int i = 0; i < D; ++i) v[i] += G(j, k)[i] * std::pow(-h * w, k);
      return v;
    };
    bool curved = false;
    for (int k = 1; k <= p; ++k)
      for (double v : G(j, k)) curved = curved || v != 0.0;
    if (curved) {
      std::vector<double> row(F_dim, 0.0);
      row[D + 1] = 0.5 / NVV;
      cp.var_rows.push_back(row);
      cp.var_off.push_back(0.0);
      a_fns.push_back([dg, NVV](double w) {
        Vec v = dg(w);
        double n2 = 0.0;
        for (double x : v) n2 += x * x;
        return NVV * n2;
      });
    }
    auto b_fn = [&, j](double w) {
      double b = 0.0;
      for (int k = 1; k <= p; ++k) b -= NV[k] * std::pow(-h * w, k);
      return b;
    };
    auto psi = [&, j](int l, double w) {
      if (l == 0) return 1.0;
      double v = 0.0;
      for (int k = 0; k <= p; ++k) v += G(j, k)[l - 1] * std::pow(-h * w, k);
      return v;
    };
    const int q = int(a_fns.size());

    // Taylor degree from the analytic remainder
    double abar = 0.0, expo = -1e300, psimax = 0.0;
    {
      std::vector<double> amax(q, 0.0);
      for (int i = 0; i <= 1024; ++i) {
        const double w = i / 1024.0;
        double sa = 0.0;
        for (int v = 0; v < q; ++v) {
          const double a = a_fns[v](w);
          amax[v] = std::max(amax[v], std::abs(a));
          sa += a;
        }
        expo = std::max(expo, -0.5 * sa - b_fn(w));
        for (int l = 0; l <= D; ++l) psimax = std::max(psimax, std::abs(psi(l, w)));
      }
      for (double a : amax) abar += a;
    }
    const double A2 = expo + abar / 2.0 + 1e-12;
    int n = 0;
    if (q > 0)
      while (psimax * std::exp(A2) * std::pow(abar / 2.0, n + 1) / factorial(n + 1) > tau / 4.0) ++n;
    cp.degree = n;
    rep.max_degree = std::max(rep.max_degree, n);

    // coefficients c_a = (-1)^|a| / a! int psi a^a exp(-sum a/2 - b) dw
    cp.monos = detail::monomials_upto(q, n);
    cp.coef.assign(D + 1, std::vector<double>(cp.monos.size(), 0.0));
    cp.c0.assign(D + 1, 0.0);
    for (int node = 0; node < opt.coef_nodes; ++node) {
      const double w = gl.x[node], wt = gl.w[node];
      std::vector<double> av(q);
      double sa = 0.0;
      for (int v = 0; v < q; ++v) sa += (av[v] = a_fns[v](w));
      const double base = std::exp(-0.5 * sa - b_fn(w));
      for (int l = 0; l <= D; ++l) {
        const double pw = psi(l, w) * base * wt;
        cp.c0[l] += pw;
        for (std::size_t m = 0; m < cp.monos.size(); ++m) {
          double am = 1.0;
          for (int v = 0; v < q; ++v) am *= std::pow(av[v], cp.monos[m][v]);
          const double sgn = detail::total_degree(cp.monos[m]) % 2 ? -1.0 : 1.0;
          cp.coef[l][m] += sgn * pw * am / multi_factorial(cp.monos[m]);
        }
      }
    }
    for (int l = 0; l <= D; ++l) {
      double l1 = 0.0;
      for (double c : cp.coef[l]) l1 += std::abs(c);
      cp.coef_l1 = std::max(cp.coef_l1, l1);
    }
    cp.psi_range = std::max(1.0, psimax * std::exp(A2) * 1.01 + tau);
    rep.n_monomials += int(cp.monos.size());

    // exp branch on Ṽ_{j,0}
    const double eps0 = tau / (4.0 * cp.psi_range);
    ReluNet expb = affine_pre(exp_net(eps0), cp.v0_row, F_dim, {0.0});
    ReluNet cell;
    if (q == 0) {
      std::vector<double> Mc(D + 1);
      for (int l = 0; l <= D; ++l) Mc[l] = cp.c0[l];
      cell = linear_post(expb, Mc, D + 1, std::vector<double>(D + 1, 0.0));
    } else {
      // clipped normalized variables, centered: z_v = clip(v, 0, 1) - 1/2
      Layer::Builder l1(F_dim), l2(2 * q);
      for (int v = 0; v < q; ++v) {
        for (int c = 0; c < F_dim; ++c) l1.add(c, cp.var_rows[v][c]);
        l1.end_row(-cp.var_off[v]);
        for (int c = 0; c < F_dim; ++c) l1.add(c, cp.var_rows[v][c]);
        l1.end_row(-cp.var_off[v] + 1.0);
        l2.add(2 * v, 1.0), l2.add(2 * v + 1, -1.0), l2.end_row(0.5);
      }
      ReluNet zin(F_dim, {l1.done(), l2.done()});
      int Lmax = 0;
      for (const auto& a : cp.monos) Lmax = std::max(Lmax, detail::mono_level(detail::total_degree(a)));
      const double eps_m = tau / (4.0 * std::max(1.0, cp.coef_l1) * std::ldexp(1.0, Lmax));
      std::vector<int> pos;
      ReluNet mono = detail::monomial_net(q, cp.monos, eps_m, pos);
      ReluNet zm = Lmax == 0 ? zin : concat(mono, zin);
      const int od = zm.out_dim();
      std::vector<double> Cm(std::size_t(D + 1) * od, 0.0);
      for (int l = 0; l <= D; ++l)
        for (std::size_t m = 0; m < cp.monos.size(); ++m) Cm[std::size_t(l) * od + pos[m]] += cp.coef[l][m];
      ReluNet psin = linear_post(zm, Cm, D + 1, cp.c0);
      ReluNet both = parallel({expb, psin}, true);  // (e, Psi_0..Psi_D)
      const ReluNet pm = mult2_net(1.0, cp.psi_range, eps_mul);
      std::vector<ReluNet> prods;
      for (int l = 0; l <= D; ++l) prods.push_back(on_coords(pm, D + 2, {0, 1 + l}));
      cell = concat(parallel(prods, true), both);
    }
    cells.push_back(std::move(cell));
  }

  // P_l = sum_j h Y_{j,l}, Q = sum_j h Y_{j,0}; output order (P_1..P_D, Q)
  ReluNet sums;
  {
    ReluNet all = parallel(cells, true);
    const int od = all.out_dim();
    std::vector<double> Ms(std::size_t(D + 1) * od, 0.0);
    for (int j = 0; j < N; ++j) {
      for (int l = 1; l <= D; ++l) Ms[std::size_t(l - 1) * od + j * (D + 1) + l] = h;
      Ms[std::size_t(D) * od + j * (D + 1)] = h;
    }
    sums = concat(linear_post(all, Ms, D + 1, std::vector<double>(D + 1, 0.0)), features);
  }

  // f_l = 2 div(P_l / 2, Q)
  rep.q_lower_bound = h * std::exp(-4.0 - audit.radius_ratio);
  rep.K = std::max(4, int(std::ceil((4.0 + std::log(1.0 / h) + audit.radius_ratio) / std::log(2.0))));
  ReluNet divstage;
  {
    ReluNet dv = div_net(rep.K, std::pow(eps, g.beta) / 16.0);
    dv = linear_post(affine_pre(dv, {0.5, 0.0, 0.0, 1.0}, 2, {0.0, 0.0}), {2.0}, 1, {0.0});
    std::vector<ReluNet> divs;
    for (int l = 0; l < D; ++l) divs.push_back(on_coords(dv, D + 1, {l, D}));
    divstage = parallel(divs, true);
    out.f_net = concat(divstage, sums);
  }

  // audit
  double worst = 0.0, worst_star = 0.0;
  rep.q_min_net = 1e300;
  for (std::size_t i = 0; i < audit.t.size(); ++i) {
    const auto& Y = audit.Y[i];
    const std::size_t n = Y.size() / D;
    if (n == 0) continue;
    std::vector<double> X(n * (D + 1));
    for (std::size_t k = 0; k < n; ++k) {
      for (int c = 0; c < D; ++c) X[k * (D + 1) + c] = Y[k * D + c];
      X[k * (D + 1) + D] = audit.t[i];
    }
    const auto PQ = sums.evaluate_batch(X, n);
    const auto F = divstage.evaluate_batch(PQ, n);
    const auto sv = s.eval(audit.t[i]);
    for (std::size_t k = 0; k < n; ++k) {
      rep.q_min_net = std::min(rep.q_min_net, PQ[k * (D + 1) + D]);
      const Vec fs = mixture_score(fstar.atoms(), sv, Y.data() + k * D).f_value;
      double e2 = 0.0, s2 = 0.0, n2 = 0.0;
      for (int c = 0; c < D; ++c) {
        const double f = F[k * D + c];
        e2 += (f - fc[i][k][c]) * (f - fc[i][k][c]);
        s2 += (f - fs[c]) * (f - fs[c]);
        n2 += f * f;
      }
      worst = std::max(worst, std::sqrt(e2));
      worst_star = std::max(worst_star, std::sqrt(s2));
      rep.fnet_max_norm = std::max(rep.fnet_max_norm, std::sqrt(n2));
    }
  }
  rep.err_vs_fstar = worst_star;
  if (rep.q_min_net < rep.q_lower_bound)
    throw std::runtime_error("assembly: network denominator " + std::to_string(rep.q_min_net) +
                             " fell below the lower bound " + std::to_string(rep.q_lower_bound));

  auto& cr = rep.construction;
  cr.net = out.f_net;
  cr.name = "score_net";
  cr.target_accuracy = target;
  cr.domain_spec = "audit grid over C*: " + std::to_string(opt.t_grid) + " geometric t x " + std::to_string(opt.y_grid) +
                   "^D box points inside K_t, R_t^2/tvar = " + std::to_string(audit.radius_ratio);
  cr.measured_error = worst;
  cr.bound = target;
  cr.stats = out.f_net.stats();
  out.score = std::make_shared<NetScore>(out.f_net, s, s.sigma_data, 2.0);
  return out;
}

// sup_y |f(y,t) - f_ref(y,t)| over an audit set
inline double audit_sup_error(const ReluNet& f, const ScoreOracle& ref, const AuditSet& a) {
  const int D = a.D;
  double worst = 0.0;
  for (std::size_t i = 0; i < a.t.size(); ++i) {
    const auto& Y = a.Y[i];
    const std::size_t n = Y.size() / D;
    if (n == 0) continue;
    std::vector<double> X(n * (D + 1));
    for (std::size_t k = 0; k < n; ++k) {
      for (int c = 0; c < D; ++c) X[k * (D + 1) + c] = Y[k * D + c];
      X[k * (D + 1) + D] = a.t[i];
    }
    const auto F = f.evaluate_batch(X, n);
    const auto sv = ref.schedule().eval(a.t[i]);
    for (std::size_t k = 0; k < n; ++k) {
      const Vec fr = mixture_score(ref.atoms(), sv, Y.data() + k * D).f_value;
      double e2 = 0.0;
      for (int c = 0; c < D; ++c) e2 += (F[k * D + c] - fr[c]) * (F[k * D + c] - fr[c]);
      worst = std::max(worst, std::sqrt(e2));
    }
  }
  return worst;
}

}  // namespace scorelab
