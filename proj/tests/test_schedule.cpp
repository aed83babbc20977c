#include <catch_amalgamated.hpp>

#include <cmath>
#include <scorelab/schedule.hpp>

using namespace scorelab;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("schedule closed forms") {
  DiffusionSchedule s0(0.0, 0.01, 5.0);
  auto v = s0.eval(std::log(2.0));
  CHECK_THAT(v.m, WithinRel(0.5, 1e-15));
  CHECK_THAT(v.var, WithinRel(0.75, 1e-15));
  CHECK_THAT(v.tvar, WithinRel(0.75, 1e-15));
  CHECK_THAT(v.calv, WithinRel(1.0 / 6.0, 1e-15));

  DiffusionSchedule s5(0.5, 0.01, 5.0);
  auto w = s5.eval(0.0);
  CHECK(w.m == 1.0);
  CHECK(w.var == 0.0);
  CHECK_THAT(w.tvar, WithinRel(0.25, 1e-15));
  CHECK_THAT(w.calv, WithinRel(2.0, 1e-15));

  DiffusionSchedule s1(0.1, 0.01, 5.0);
  auto u = s1.eval(1.0);
  CHECK_THAT(u.m, WithinAbs(0.3678794, 1e-7));
  CHECK_THAT(u.var, WithinAbs(0.8646647, 1e-7));
  CHECK_THAT(u.tvar, WithinAbs(0.8660181, 1e-7));
}

TEST_CASE("schedule rejects bad inputs") {
  DiffusionSchedule s(0.0, 0.01, 1.0);
  CHECK_THROWS(s.eval(-0.1));
  CHECK_THROWS(s.eval(1.5));
  CHECK_THROWS(s.eval(0.0));
  CHECK_THROWS(DiffusionSchedule(1.0, 0.1, 1.0));
  CHECK_THROWS(DiffusionSchedule(0.2, 0.0, 1.0));
  CHECK_THROWS(DiffusionSchedule(0.2, 2.0, 1.0));
}

TEST_CASE("tvar recomposition is bitwise and variances are monotone") {
  DiffusionSchedule s(0.3, 0.01, 4.0);
  double prev_var = -1.0, prev_m = 2.0;
  for (int i = 1; i <= 1000; ++i) {
    double t = 4.0 * i / 1000.0;
    auto v = s.eval(t);
    CHECK(v.tvar == v.m * v.m * 0.3 * 0.3 + v.var);
    CHECK(v.var > prev_var);
    CHECK(v.m < prev_m);
    CHECK(v.tvar > 0.0);
    CHECK(v.tvar <= 1.0);
    prev_var = v.var;
    prev_m = v.m;
  }
}

TEST_CASE("forward conditional sampling moments") {
  DiffusionSchedule s(0.2, 0.01, 3.0);
  const double t = 0.7;
  const std::vector<double> c = {0.4, -0.3};
  Rng rng(11);
  const int n = 100000;
  double mean[2] = {0, 0}, cov[2][2] = {{0, 0}, {0, 0}};
  std::vector<std::vector<double>> xs;
  for (int i = 0; i < n; ++i) xs.push_back(forward_conditional_sample(s, c, t, rng));
  for (auto& x : xs)
    for (int k = 0; k < 2; ++k) mean[k] += x[k] / n;
  for (auto& x : xs)
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) cov[a][b] += (x[a] - mean[a]) * (x[b] - mean[b]) / (n - 1);
  const double sd = std::sqrt(s.sigma2(t));
  for (int k = 0; k < 2; ++k) CHECK(std::abs(mean[k] - s.m(t) * c[k]) <= 4 * sd / std::sqrt(double(n)));
  // var of the sample variance of a Gaussian: 2 sigma^4/(n-1)
  const double se_diag = std::sqrt(2.0 / (n - 1)) * sd * sd;
  const double se_off = sd * sd / std::sqrt(double(n - 1));
  CHECK(std::abs(cov[0][0] - sd * sd) <= 5 * se_diag);
  CHECK(std::abs(cov[1][1] - sd * sd) <= 5 * se_diag);
  CHECK(std::abs(cov[0][1]) <= 5 * se_off);
}

TEST_CASE("forward sampling is deterministic and mixes") {
  DiffusionSchedule s(0.0, 0.01, 50.0);
  Rng a(5), b(5);
  CHECK(forward_conditional_sample(s, {1.0, 2.0}, 0.3, a) == forward_conditional_sample(s, {1.0, 2.0}, 0.3, b));
  Rng r(3);
  double m = 0, v = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    double y = forward_conditional_sample(s, {0.0}, 40.0, r)[0];
    m += y / n;
    v += y * y / n;
  }
  CHECK(std::abs(m) < 4.0 / std::sqrt(double(n)));
  CHECK(std::abs(v - 1.0) < 0.05);
  CHECK_THROWS(forward_conditional_sample(s, {0.0}, 0.0, r));
}
