#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <scorelab/assembly.hpp>

using namespace scorelab;

namespace {

AssemblyOptions quick() {
  AssemblyOptions o;
  o.t_grid = 12;
  o.y_grid = 24;
  return o;
}

const DiffusionSchedule sched(0.5, 0.5, 2.0);

}  // namespace

TEST_CASE("desk radius ratio matches chi-square closed forms") {
  // D = 2: P(chi2_2 > r) = e^{-r/2}
  for (double eps : {0.3, 0.1})
    for (double beta : {1.0, 2.0})
      CHECK(std::abs(desk_radius_ratio(eps, beta, 2) + 2.0 * std::log(std::pow(eps, 2 * beta))) < 1e-9);
  // D = 1: P(|Z| > sqrt(r)) = erfc(sqrt(r/2))
  const double r = desk_radius_ratio(0.2, 2.0, 1);
  CHECK(std::abs(std::erfc(std::sqrt(r / 2.0)) - std::pow(0.2, 4.0)) < 1e-12);
}

TEST_CASE("audit set stays inside K_t") {
  auto g = make_sine(2, 2.0, 1.0 / (2 * std::numbers::pi), 0.5);
  auto a = audit_set(g, sched, 0.3, 8, 16);
  REQUIRE(a.t.size() == 8);
  CHECK(a.t.front() == sched.t0);
  CHECK(std::abs(a.t.back() - sched.T) < 1e-12);
  const auto img = image_grid(g);
  for (std::size_t i = 0; i < a.t.size(); ++i) {
    const auto sv = sched.eval(a.t[i]);
    const double R = std::sqrt(a.radius_ratio * sv.tvar);
    for (std::size_t k = 0; k * 2 < a.Y[i].size(); ++k) {
      CHECK(distance_to_image(img, sv.m, a.Y[i].data() + 2 * k, 2) <= R);
      CHECK(std::abs(a.Y[i][2 * k]) <= a.M);
    }
  }
  CHECK(a.size() > 100);
}

TEST_CASE("monomial net reproduces products") {
  std::vector<int> pos;
  auto monos = detail::monomials_upto(2, 5);
  auto net = detail::monomial_net(2, monos, 1e-9, pos);
  Rng rng(5);
  for (int i = 0; i < 50; ++i) {
    const double x = uniform01(rng) - 0.5, y = uniform01(rng) - 0.5;
    const auto out = net.evaluate({x, y});
    for (std::size_t m = 0; m < monos.size(); ++m) {
      const double exact = std::pow(x, monos[m][0]) * std::pow(y, monos[m][1]);
      // (2^L - 1) eps per product round, L <= 3
      CHECK(std::abs(out[pos[m]] - exact) <= 7e-9);
    }
  }
}

TEST_CASE("constant generator: f~ recovers the constant") {
  auto g = make_constant({0.3, -0.2});
  auto a = assemble_score_net(g, sched, 0.3, quick());
  const auto& r = a.report;
  CHECK(r.construction.measured_error <= std::sqrt(2.0) * 0.09);
  CHECK(r.construction.measured_error == Catch::Approx(r.err_vs_fstar).margin(1e-15));
  CHECK(r.max_degree == 0);
  CHECK(r.q_min_net >= r.q_lower_bound);
  const Vec y{0.1, 0.05};
  const auto f = a.f_net.evaluate({y[0], y[1], 1.0});
  CHECK(std::abs(f[0] - 0.3) < 1e-3);
  CHECK(std::abs(f[1] + 0.2) < 1e-3);
  CHECK(a.f_net.recount() == a.f_net.stats());
}

TEST_CASE("affine generator: sup error vs f° within sqrt(D) eps^beta") {
  auto g = make_affine({-0.4}, {0.8}, 1);
  auto a = assemble_score_net(g, sched, 0.3, quick());
  const auto& r = a.report;
  CHECK(r.construction.ok());
  CHECK(r.construction.measured_error <= std::pow(0.3, 2.0));
  CHECK(r.q_min_net >= r.q_lower_bound);
  CHECK(r.max_degree >= 1);
  // clip inactive: |f°| well inside the ball of radius 2, and f~ too
  CHECK(r.fcirc_max_norm <= 1.0 + 1e-8);
  CHECK(r.fnet_max_norm < 2.0);

  // score recomposition against the oracle score
  ScoreOracle o(g, sched);
  for (double t : {0.6, 1.3}) {
    const Vec y{0.2};
    const auto sn = a.score->score(y, t);
    const auto so = o.eval(y, t).score;
    const auto sv = sched.eval(t);
    CHECK(std::abs(sn[0] - so[0]) <= sv.m / sv.tvar * r.construction.measured_error * 1.0001 + 1e-12);
  }
}

TEST_CASE("assembly refuses outside its preconditions") {
  CHECK_THROWS_AS(assemble_score_net(make_sine(3, 2.0, 0.2, 0.5), sched, 0.3, quick()), PreconditionError);
  CHECK_THROWS_AS(assemble_score_net(make_sine(1, 2.0, 0.5, 0.5), sched, 0.3, quick()), PreconditionError);
  CHECK_THROWS_AS(assemble_score_net(make_sine(1, 3.5), sched, 0.1, quick()), PreconditionError);
  CHECK_THROWS_AS(assemble_score_net(make_sine(4, 2.0, 0.1, 0.5), sched, 0.05, quick()), PreconditionError);
  CHECK_THROWS_AS(assemble_score_net(make_quadratic(2), sched, 0.3, quick()), PreconditionError);
}
