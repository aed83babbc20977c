#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <scorelab/generator.hpp>

using namespace scorelab;

namespace {

std::vector<GeneratorSpec> zoo() {
  return {make_constant({0.3, -0.4}), make_affine({-0.3, 0.2}, {0.6, -0.3}, 1), make_sine(1), make_sine(2),
          make_sine(3, 2.0, 0.5), make_quadratic(1), make_quadratic(2), make_quadratic(2, 1.5)};
}

double norm(const Vec& v) {
  double s = 0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("holder degree is the largest integer below beta") {
  CHECK(holder_degree(1.0) == 0);
  CHECK(holder_degree(1.5) == 1);
  CHECK(holder_degree(2.0) == 1);
  CHECK(holder_degree(2.5) == 2);
  CHECK(holder_degree(0.5) == 0);
}

TEST_CASE("built-in generators stay in the unit ball") {
  for (const auto& g : zoo()) {
    const int n = g.d == 1 ? 2001 : 101;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < (g.d == 1 ? 1 : n); ++j) {
        Vec u = g.d == 1 ? Vec{double(i) / (n - 1)} : Vec{double(i) / (n - 1), double(j) / (n - 1)};
        CHECK(norm(g(u)) <= 1.0 + 1e-12);
      }
  }
}

TEST_CASE("declared derivatives match finite differences") {
  Rng rng(7);
  for (const auto& g : zoo()) {
    const int p = g.degree();
    for (const auto& k : multi_indices(g.d, p)) {
      int tot = 0, axis = 0;
      for (int j = 0; j < g.d; ++j) {
        tot += k[j];
        if (k[j]) axis = j;
      }
      if (tot == 0) continue;
      MultiIndex km = k;
      km[axis] -= 1;
      for (int rep = 0; rep < 20; ++rep) {
        Vec u(g.d);
        for (auto& v : u) v = 0.1 + 0.8 * uniform01(rng);
        const double h = 1e-5;
        Vec up = u, dn = u;
        up[axis] += h;
        dn[axis] -= h;
        Vec fp = g.partial(km, up), fm = g.partial(km, dn), d = g.partial(k, u);
        for (int i = 0; i < g.D; ++i) {
          double fd = (fp[i] - fm[i]) / (2 * h);
          CHECK(std::abs(fd - d[i]) <= 1e-4 * std::max(1.0, std::abs(d[i])));
        }
      }
    }
  }
}

TEST_CASE("sample_data") {
  Rng rng(1);
  auto c = make_constant({0.5, 0.1});
  for (auto& x : sample_data(c, 0.0, 10, rng)) CHECK(x == Vec{0.5, 0.1});
  const int n = 100000;
  auto xs = sample_data(c, 0.5, n, rng);
  for (int k = 0; k < 2; ++k) {
    double m = 0;
    for (auto& x : xs) m += x[k] / n;
    CHECK(std::abs(m - c.eval({0.0})[k]) <= 4 * 0.5 / std::sqrt(double(n)));
  }
  auto seg = make_affine({0.0, 0.0}, {1.0, 0.0}, 1);
  for (auto& x : sample_data(seg, 0.0, 1000, rng)) {
    CHECK(x[1] == 0.0);
    CHECK(x[0] >= 0.0);
    CHECK(x[0] <= 1.0);
  }
  CHECK_THROWS(sample_data(c, 0.5, 0, rng));
}

TEST_CASE("partition grid ties go to the lower cell") {
  PartitionGrid g(0.2, 1);
  CHECK(g.N == 5);
  CHECK(g.axis_index(0.0) == 1);
  CHECK(g.axis_index(0.2) == 1);
  CHECK(g.axis_index(0.2000001) == 2);
  CHECK(g.axis_index(1.0) == 5);
  CHECK(PartitionGrid(0.3, 1).N == 4);
  CHECK(PartitionGrid(0.05, 2).n_cells() == 400);
  auto a = PartitionGrid(0.25, 2).anchor(PartitionGrid(0.25, 2).cell_of({0.1, 0.6}));
  CHECK(a == Vec{0.25, 0.75});
}

TEST_CASE("surrogate reproduces low-degree polynomials") {
  auto c = make_constant({0.2});
  auto aff = make_affine({0.1, -0.2}, {0.5, 0.3}, 1);
  auto quad3 = make_quadratic(2, 3.0);  // degree 2 <= holder degree 2
  for (double eps : {0.3, 0.1, 0.05}) {
    CHECK(surrogate_sup_error(c, build_surrogate(c, eps)) == 0.0);
    CHECK(surrogate_sup_error(aff, build_surrogate(aff, eps)) <= 1e-12);
    CHECK(surrogate_sup_error(quad3, build_surrogate(quad3, eps)) <= 1e-12);
  }
  // equals g* at its anchors
  auto sn = make_sine(2);
  auto s = build_surrogate(sn, 0.1);
  for (std::size_t j = 0; j < s.grid.n_cells(); ++j) {
    Vec u = s.grid.anchor(j);
    auto a = sn(u), b = s(u);
    CHECK(a == b);
  }
}

TEST_CASE("surrogate error bound") {
  GeneratorSpec g = make_sine(1);
  CHECK(g.H == Catch::Approx(4 * std::numbers::pi * std::numbers::pi));
  auto s = build_surrogate(g, 0.05);
  const double bound = surrogate_error_bound(g, 0.05);
  CHECK(bound == Catch::Approx(4 * std::numbers::pi * std::numbers::pi * 0.0025));
  CHECK(surrogate_sup_error(g, s) <= bound);

  GeneratorSpec h;
  h.d = 1, h.D = 1, h.beta = 1, h.H = 1;
  CHECK(surrogate_error_bound(h, 0.1) == Catch::Approx(0.1));
  h.d = 2, h.D = 3, h.beta = 2, h.H = 2;
  CHECK(surrogate_error_bound(h, 0.1) == Catch::Approx(0.04 * std::sqrt(3.0)));
  CHECK(surrogate_error_bound(h, 0.05) == Catch::Approx(surrogate_error_bound(h, 0.1) / 4));
}

TEST_CASE("surrogate bound holds across the zoo and its norm stays below 1 + bound") {
  for (const auto& g : zoo()) {
    for (double eps : {0.2, 0.1, 0.05}) {
      auto s = build_surrogate(g, eps);
      const double err = surrogate_sup_error(g, s);
      const double bound = surrogate_error_bound(g, eps);
      INFO(g.name << " D=" << g.D << " eps=" << eps << " err=" << err << " bound=" << bound);
      CHECK(err <= bound);
      const int n = 200;
      for (int i = 0; i <= n; ++i) {
        Vec u(g.d, double(i) / n);
        CHECK(norm(s(u)) <= 1.0 + bound + 1e-12);
      }
    }
  }
}

TEST_CASE("mis-declared Holder constant is caught") {
  GeneratorSpec g = make_sine(1);
  g.H /= 10;
  auto s = build_surrogate(g, 0.1);
  CHECK(surrogate_sup_error(g, s) > surrogate_error_bound(g, 0.1));
}
