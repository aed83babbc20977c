#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "common.hpp"
#include "rng.hpp"

namespace scorelab {

// largest integer strictly below beta
inline int holder_degree(double beta) { return int(std::ceil(beta)) - 1; }

// all multi-indices in N^d with |k| <= p, graded, lexicographic within a grade
inline std::vector<MultiIndex> multi_indices(int d, int p) {
  std::vector<MultiIndex> out;
  for (int total = 0; total <= p; ++total) {
    MultiIndex k(d, 0);
    std::function<void(int, int)> rec = [&](int pos, int left) {
      if (pos == d - 1) {
        k[pos] = left;
        out.push_back(k);
        return;
      }
      for (int v = left; v >= 0; --v) {
        k[pos] = v;
        rec(pos + 1, left - v);
      }
    };
    rec(0, total);
  }
  return out;
}

struct GeneratorSpec {
  std::string name;
  int d = 1;
  int D = 1;
  double beta = 1.0;
  double H = 1.0;
  std::string note;  // metadata, e.g. how H was rescaled
  std::function<Vec(const Vec&)> eval;
  // partial(k, u) = d^k g*(u), |k| <= holder_degree(beta)
  std::function<Vec(const MultiIndex&, const Vec&)> partial;

  int degree() const { return holder_degree(beta); }
  Vec operator()(const Vec& u) const { return eval(u); }
};

// ---- built-in zoo ----

inline GeneratorSpec make_constant(const Vec& c) {
  double nrm = 0.0;
  for (double v : c) nrm += v * v;
  if (std::sqrt(nrm) > 1.0 + 1e-15) throw std::invalid_argument("constant generator: |c| > 1");
  GeneratorSpec g;
  g.name = "constant";
  g.d = 1;
  g.D = int(c.size());
  g.beta = 2.0;
  g.H = 1.0;
  g.eval = [c](const Vec&) { return c; };
  g.partial = [c](const MultiIndex& k, const Vec&) {
    int tot = 0;
    for (int v : k) tot += v;
    return tot == 0 ? c : Vec(c.size(), 0.0);
  };
  return g;
}

// g(u) = a + B u, B is D x d row-major
inline GeneratorSpec make_affine(const Vec& a, const Vec& B, int d) {
  const int D = int(a.size());
  if (int(B.size()) != D * d) throw std::invalid_argument("affine generator: B has wrong size");
  GeneratorSpec g;
  g.name = "affine";
  g.d = d;
  g.D = D;
  g.beta = 2.0;
  auto f = [a, B, d, D](const Vec& u) {
    Vec y = a;
    for (int i = 0; i < D; ++i)
      for (int j = 0; j < d; ++j) y[i] += B[i * d + j] * u[j];
    return y;
  };
  // check the norm at the cube corners (convexity of |.|)
  double H = 0.0, worst = 0.0;
  for (int c = 0; c < (1 << d); ++c) {
    Vec u(d);
    for (int j = 0; j < d; ++j) u[j] = (c >> j) & 1;
    Vec y = f(u);
    double n2 = 0.0;
    for (int i = 0; i < D; ++i) n2 += y[i] * y[i], H = std::max(H, std::abs(y[i]));
    worst = std::max(worst, std::sqrt(n2));
  }
  if (worst > 1.0 + 1e-15) throw std::invalid_argument("affine generator: image leaves the unit ball");
  for (double v : B) H = std::max(H, std::abs(v));
  g.H = H;
  g.eval = f;
  g.partial = [f, B, d, D](const MultiIndex& k, const Vec& u) {
    int tot = 0, axis = -1;
    for (int j = 0; j < d; ++j) {
      tot += k[j];
      if (k[j] == 1) axis = j;
    }
    if (tot == 0) return f(u);
    Vec y(D, 0.0);
    if (tot == 1)
      for (int i = 0; i < D; ++i) y[i] = B[i * d + axis];
    return y;
  };
  return g;
}

// d = 1 trigonometric curve. D=1: amp*sin(2 pi f u). D>=2: amp*(cos, sin, cos, ...)(2 pi f u + phase_i)
// amp defaults to the largest value keeping |g| <= 1; H is the analytic Holder constant at that amp
inline GeneratorSpec make_sine(int D, double beta = 2.0, double freq = 1.0, double amp = -1.0) {
  if (D < 1) throw std::invalid_argument("sine generator: D < 1");
  const int npairs = D == 1 ? 1 : (D + 1) / 2;
  const double amax = 1.0 / std::sqrt(double(npairs));
  if (amp < 0) amp = amax;
  if (amp > amax + 1e-15) throw std::invalid_argument("sine generator: amplitude breaks |g| <= 1");
  GeneratorSpec g;
  g.name = "sine";
  g.d = 1;
  g.D = D;
  g.beta = beta;
  const double w = 2.0 * std::numbers::pi * freq;
  // component i: amp * trig(w u + phi_i); derivatives cycle through sin, cos
  auto comp = [=](int i, int order, double u) {
    // D == 1 -> sin; otherwise even i -> cos, odd i -> sin, with a phase per pair
    double phase = D == 1 ? 0.0 : 0.5 * (i / 2);
    bool is_cos = D != 1 && (i % 2 == 0);
    double arg = w * u + phase + (is_cos ? 0.5 * std::numbers::pi : 0.0);
    return amp * std::pow(w, order) * std::sin(arg + 0.5 * std::numbers::pi * order);
  };
  g.eval = [=](const Vec& u) {
    Vec y(D);
    for (int i = 0; i < D; ++i) y[i] = comp(i, 0, u[0]);
    return y;
  };
  g.partial = [=](const MultiIndex& k, const Vec& u) {
    Vec y(D);
    for (int i = 0; i < D; ++i) y[i] = comp(i, k[0], u[0]);
    return y;
  };
  const int p = holder_degree(beta);
  const double alpha = beta - p;
  double H = amp * std::pow(w, p + alpha) * std::pow(2.0, 1.0 - alpha);
  for (int q = 0; q <= p; ++q) H = std::max(H, amp * std::pow(w, q));
  g.H = H;
  g.note = "H computed at amplitude " + std::to_string(amp) + " (rescaled with the image)";
  return g;
}

// d in {1,2}: g(u) = c * (u_1 - 1/2, [u_2 - 1/2,] q(u)) with q = (u_1-1/2)^2 [- (u_2-1/2)^2]
inline GeneratorSpec make_quadratic(int d = 2, double beta = 2.0, double c = -1.0) {
  if (d != 1 && d != 2) throw std::invalid_argument("quadratic generator: d must be 1 or 2");
  const int D = d + 1;
  // |g|^2 <= c^2 (d/4 + 1/16)
  const double cmax = 1.0 / std::sqrt(d / 4.0 + 1.0 / 16.0);
  if (c < 0) c = cmax;
  if (c > cmax + 1e-15) throw std::invalid_argument("quadratic generator: scale breaks |g| <= 1");
  GeneratorSpec g;
  g.name = "quadratic";
  g.d = d;
  g.D = D;
  g.beta = beta;
  g.eval = [=](const Vec& u) {
    Vec y(D);
    double q = 0.0;
    for (int j = 0; j < d; ++j) {
      double v = u[j] - 0.5;
      y[j] = c * v;
      q += (j == 0 ? 1.0 : -1.0) * v * v;
    }
    y[d] = c * q;
    return y;
  };
  g.partial = [=](const MultiIndex& k, const Vec& u) {
    int tot = 0;
    for (int v : k) tot += v;
    Vec y(D, 0.0);
    if (tot == 0) {
      double q = 0.0;
      for (int j = 0; j < d; ++j) {
        double v = u[j] - 0.5;
        y[j] = c * v;
        q += (j == 0 ? 1.0 : -1.0) * v * v;
      }
      y[d] = c * q;
      return y;
    }
    int axis = 0;
    for (int j = 0; j < d; ++j)
      if (k[j] > 0) axis = j;
    const double sgn = axis == 0 ? 1.0 : -1.0;
    if (tot == 1) {
      y[axis] = c;
      y[d] = sgn * 2.0 * c * (u[axis] - 0.5);
    } else if (tot == 2 && k[axis] == 2) {
      y[d] = sgn * 2.0 * c;
    }
    return y;
  };
  // values <= c/2, first derivatives <= c, Lipschitz constant of g and of its gradient <= 2c (sup-norm on u)
  const double H = 2.0 * c;
  g.H = H;
  g.note = "H computed at scale " + std::to_string(c);
  return g;
}

// piecewise constant: c1 on u_1 < 1/2, c2 on u_1 >= 1/2; not Holder, H = inf
inline GeneratorSpec make_two_piece(const Vec& c1, const Vec& c2, int d = 1) {
  if (c1.size() != c2.size()) throw std::invalid_argument("two-piece generator: size mismatch");
  GeneratorSpec g;
  g.name = "two_piece";
  g.d = d;
  g.D = int(c1.size());
  g.beta = 1.0;
  g.H = std::numeric_limits<double>::infinity();
  g.note = "discontinuous; no finite Holder constant";
  g.eval = [=](const Vec& u) { return u[0] < 0.5 ? c1 : c2; };
  g.partial = [=](const MultiIndex&, const Vec& u) { return u[0] < 0.5 ? c1 : c2; };
  return g;
}

// ---- partition grid and local polynomial surrogate ----

struct PartitionGrid {
  double eps = 0.1;
  int N = 10;
  int d = 1;

  PartitionGrid() = default;
  PartitionGrid(double e, int d_) : eps(e), d(d_) {
    if (!(e > 0.0 && e < 1.0)) throw std::invalid_argument("partition: eps must lie in (0,1)");
    N = int(std::ceil(1.0 / e - 1e-12));
  }

  std::size_t n_cells() const {
    std::size_t n = 1;
    for (int k = 0; k < d; ++k) n *= N;
    return n;
  }
  double width() const { return 1.0 / N; }

  // per-axis 1-based index; cell j covers ((j-1)/N, j/N], the first also contains 0
  int axis_index(double x) const {
    int j = std::clamp(int(std::ceil(x * N)), 1, N);
    while (j > 1 && x <= double(j - 1) / N) --j;
    while (j < N && x > double(j) / N) ++j;
    return j;
  }

  std::size_t cell_of(const Vec& u) const {
    std::size_t id = 0;
    for (int k = 0; k < d; ++k) id = id * N + (axis_index(u[k]) - 1);
    return id;
  }

  std::vector<int> cell_index(std::size_t id) const {
    std::vector<int> j(d);
    for (int k = d - 1; k >= 0; --k) {
      j[k] = int(id % N) + 1;
      id /= N;
    }
    return j;
  }

  Vec anchor(std::size_t id) const {
    auto j = cell_index(id);
    Vec u(d);
    for (int k = 0; k < d; ++k) u[k] = double(j[k]) / N;
    return u;
  }
};

struct LocalPolySurrogate {
  PartitionGrid grid;
  int D = 1;
  int degree = 0;
  std::vector<MultiIndex> indices;
  std::vector<std::vector<Vec>> coeffs;  // [cell][index] -> R^D, d^k g(u_j)/k!

  Vec eval_cell(std::size_t cell, const Vec& u) const {
    Vec a = grid.anchor(cell);
    Vec y(D, 0.0);
    for (std::size_t m = 0; m < indices.size(); ++m) {
      double mono = 1.0;
      for (int k = 0; k < grid.d; ++k) mono *= std::pow(u[k] - a[k], indices[m][k]);
      for (int i = 0; i < D; ++i) y[i] += coeffs[cell][m][i] * mono;
    }
    return y;
  }

  Vec operator()(const Vec& u) const { return eval_cell(grid.cell_of(u), u); }
};

inline LocalPolySurrogate build_surrogate(const GeneratorSpec& g, double eps) {
  LocalPolySurrogate s;
  s.grid = PartitionGrid(eps, g.d);
  s.D = g.D;
  s.degree = std::max(0, g.degree());
  s.indices = multi_indices(g.d, s.degree);
  s.coeffs.resize(s.grid.n_cells());
  for (std::size_t c = 0; c < s.grid.n_cells(); ++c) {
    Vec a = s.grid.anchor(c);
    for (const auto& k : s.indices) {
      Vec v = g.partial(k, a);
      double kf = multi_factorial(k);
      for (auto& x : v) x /= kf;
      s.coeffs[c].push_back(v);
    }
  }
  return s;
}

inline double surrogate_error_bound(const GeneratorSpec& g, double eps) {
  const int p = std::max(0, g.degree());
  return g.H * std::pow(double(g.d), p) * std::pow(eps, g.beta) * std::sqrt(double(g.D)) / factorial(p);
}

// X_0 = g*(U) + sigma_data xi
inline std::vector<Vec> sample_data(const GeneratorSpec& g, double sigma_data, std::size_t n, Rng& rng) {
  if (n == 0) throw std::invalid_argument("sample_data: n = 0");
  if (!(sigma_data >= 0.0 && sigma_data < 1.0)) throw std::invalid_argument("sample_data: sigma_data outside [0,1)");
  std::vector<Vec> out;
  out.reserve(n);
  Vec u(g.d);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& v : u) v = uniform01(rng);
    Vec x = g.eval(u);
    for (auto& v : x) v += sigma_data * normal01(rng);
    out.push_back(std::move(x));
  }
  return out;
}

// max over a grid of `per_cell` points per axis per cell of |g* - g°|
inline double surrogate_sup_error(const GeneratorSpec& g, const LocalPolySurrogate& s, int per_cell = 0) {
  if (per_cell <= 0) per_cell = 10 * g.d;
  const int n = s.grid.N * per_cell + 1;
  std::size_t total = 1;
  for (int k = 0; k < g.d; ++k) total *= n;
  double worst = 0.0;
  Vec u(g.d);
  for (std::size_t i = 0; i < total; ++i) {
    std::size_t r = i;
    for (int k = g.d - 1; k >= 0; --k) {
      u[k] = double(r % n) / (n - 1);
      r /= n;
    }
    Vec a = g.eval(u), b = s(u);
    double e = 0.0;
    for (int c = 0; c < g.D; ++c) e += (a[c] - b[c]) * (a[c] - b[c]);
    worst = std::max(worst, std::sqrt(e));
  }
  return worst;
}

}  // namespace scorelab
