#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace scorelab {

struct Rule1D {
  std::vector<double> x;  // nodes on [0,1]
  std::vector<double> w;  // weights, sum 1
};

// Gauss-Legendre on [0,1], Newton iteration on P_n
inline Rule1D gauss_legendre(int n) {
  if (n < 1) throw std::invalid_argument("gauss_legendre: n < 1");
  Rule1D r;
  r.x.resize(n);
  r.w.resize(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = z;
      for (int k = 2; k <= n; ++k) {
        double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      if (n == 1) p0 = 1.0, p1 = z;
      dp = n * (z * p1 - p0) / (z * z - 1.0);
      double dz = p1 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    double p0 = 1.0, p1 = z;
    for (int k = 2; k <= n; ++k) {
      double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    dp = n * (z * p1 - p0) / (z * z - 1.0);
    double w = 2.0 / ((1.0 - z * z) * dp * dp);
    r.x[i] = 0.5 * (1.0 - z);
    r.x[n - 1 - i] = 0.5 * (1.0 + z);
    r.w[i] = r.w[n - 1 - i] = 0.5 * w;
  }
  if (n % 2 == 1) r.x[n / 2] = 0.5;
  return r;
}

inline int default_nodes_per_axis(int d) {
  switch (d) {
    case 1: return 64;
    case 2: return 32;
    case 3: return 16;
    default: throw std::invalid_argument("quadrature: d must be 1, 2 or 3");
  }
}

// tensorized rule over a box [lo, lo+h]^d, nodes stored flat (node-major)
struct QuadratureRule {
  int d = 1;
  int nodes_per_axis = 64;
  std::vector<double> nodes;
  std::vector<double> weights;

  std::size_t size() const { return weights.size(); }
  const double* node(std::size_t i) const { return nodes.data() + i * d; }

  static QuadratureRule tensor(int d, int n, const std::vector<double>& lo, double h) {
    if (d < 1 || d > 3) throw std::invalid_argument("quadrature: d must be 1, 2 or 3");
    Rule1D r = gauss_legendre(n);
    QuadratureRule q;
    q.d = d;
    q.nodes_per_axis = n;
    std::size_t total = 1;
    for (int k = 0; k < d; ++k) total *= n;
    q.nodes.resize(total * d);
    q.weights.resize(total);
    double vol = std::pow(h, d);
    for (std::size_t i = 0; i < total; ++i) {
      std::size_t rem = i;
      double w = vol;
      for (int k = d - 1; k >= 0; --k) {
        int a = int(rem % n);
        rem /= n;
        q.nodes[i * d + k] = lo[k] + h * r.x[a];
        w *= r.w[a];
      }
      q.weights[i] = w;
    }
    return q;
  }

  static QuadratureRule unit_cube(int d, int n = 0) {
    return tensor(d, n > 0 ? n : default_nodes_per_axis(d), std::vector<double>(d, 0.0), 1.0);
  }
};

}  // namespace scorelab
