#include <catch_amalgamated.hpp>

#include <cmath>
#include <scorelab/dsm.hpp>

using namespace scorelab;

namespace {

// s = -y/tvar + m * a * f*(y)/tvar, i.e. the true score with f* scaled by a
std::shared_ptr<ScoreModel> scaled_f(std::shared_ptr<const ScoreOracle> o, double a) {
  return std::make_shared<FunctionScore>(o->D(), "scaled", [o, a](const double* Y, std::size_t n, double t, double* S) {
    const auto sv = o->schedule().eval(t);
    const int D = o->D();
    for (std::size_t i = 0; i < n; ++i) {
      const auto e = mixture_score(o->atoms(), sv, Y + i * D);
      for (int k = 0; k < D; ++k) S[i * D + k] = -Y[i * D + k] / sv.tvar + sv.m * a * e.f_value[k] / sv.tvar;
    }
  });
}

// composite Simpson on [a, b]
template <class F>
double simpson(F f, double a, double b, int n = 20000) {
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
  return s * h / 3.0;
}

}  // namespace

TEST_CASE("time nodes integrate smooth functions on [t0, T]") {
  DiffusionSchedule s(0.1, 0.05, 2.0);
  auto tn = time_nodes(s, 32);
  double w = 0.0, e = 0.0;
  for (std::size_t k = 0; k < tn.t.size(); ++k) w += tn.w[k], e += tn.w[k] * std::exp(-tn.t[k]);
  CHECK(std::abs(w - 1.95) < 1e-13);
  CHECK(std::abs(e - (std::exp(-0.05) - std::exp(-2.0))) < 1e-13);
}

TEST_CASE("pointwise loss of the conditional score is zero") {
  DiffusionSchedule s(0.3, 0.05, 2.0);
  const Vec x{0.4, -0.2};
  FunctionScore cond(2, "conditional", [&](const double* Y, std::size_t n, double t, double* S) {
    const auto sv = s.eval(t);
    for (std::size_t i = 0; i < n; ++i)
      for (int k = 0; k < 2; ++k) S[i * 2 + k] = -(Y[i * 2 + k] - sv.m * x[k]) / sv.var;
  });
  Rng rng = stream_rng(3, 0);
  auto e = pointwise_loss(cond, x, s, McConfig{32, 8}, rng);
  CHECK(std::abs(e.value) <= 3.0 * e.std_error + 1e-18);
  CHECK(e.value < 1e-20);
}

TEST_CASE("pointwise loss of s* matches the Gaussian closed form (constant generator)") {
  DiffusionSchedule s(0.3, 0.05, 2.0);
  const Vec c{0.5, -0.3};
  auto g = make_constant(c);
  OracleScore star(std::make_shared<ScoreOracle>(g, s));
  const Vec x{0.9, 0.1};
  const double dx2 = 0.16 + 0.16;
  // E|-(m(x-c) + sig xi)/tvar + xi/sig|^2 = m^2|x-c|^2/tvar^2 + D (1/sig - sig/tvar)^2
  const double ref = simpson(
      [&](double t) {
        const auto v = s.eval(t);
        const double sg = std::sqrt(v.var);
        return v.m * v.m * dx2 / (v.tvar * v.tvar) + 2.0 * std::pow(1.0 / sg - sg / v.tvar, 2);
      },
      s.t0, s.T);
  Rng rng = stream_rng(5, 0);
  auto e = pointwise_loss(star, x, s, McConfig{32, 4000}, rng);
  INFO("mc " << e.value << " +- " << e.std_error << " ref " << ref);
  CHECK(std::abs(e.value - ref) <= 3.0 * e.std_error + 1e-6 * ref);
}

TEST_CASE("pointwise loss standard error scales as 1/sqrt(n_mc)") {
  DiffusionSchedule s(0.3, 0.05, 2.0);
  auto g = make_constant({0.5});
  OracleScore star(std::make_shared<ScoreOracle>(g, s));
  Rng r1 = stream_rng(7, 0), r2 = stream_rng(7, 1);
  auto a = pointwise_loss(star, {0.2}, s, McConfig{32, 4000}, r1);
  auto b = pointwise_loss(star, {0.2}, s, McConfig{32, 8000}, r2);
  const double ratio = b.std_error / a.std_error;
  CHECK(std::abs(ratio - 1.0 / std::sqrt(2.0)) <= 0.2 / std::sqrt(2.0));
  Rng r3 = stream_rng(7, 2);
  CHECK_THROWS_AS(pointwise_loss(star, {0.2}, s, McConfig{32, 1}, r3), std::invalid_argument);
}

TEST_CASE("empirical risk on single and duplicated data") {
  DiffusionSchedule s(0.3, 0.05, 2.0);
  auto g = make_constant({0.5});
  OracleScore star(std::make_shared<ScoreOracle>(g, s));
  const McConfig mc{16, 64};
  Rng a = stream_rng(11, 0), b = stream_rng(11, 0);
  auto single = empirical_risk(star, {{0.3}}, s, mc, a);
  auto pw = pointwise_loss(star, {0.3}, s, mc, b);
  CHECK(single.value == pw.value);
  CHECK(single.std_error == pw.std_error);

  Rng r = stream_rng(11, 1);
  std::vector<Vec> data{{0.3}, {0.7}, {-0.1}, {0.4}};
  std::vector<Vec> dup;
  for (int k = 0; k < 8; ++k) dup.insert(dup.end(), data.begin(), data.end());
  auto e1 = empirical_risk(star, data, s, mc, r);
  auto e2 = empirical_risk(star, dup, s, mc, r);
  CHECK(std::abs(e1.value - e2.value) <= 3.0 * std::hypot(e1.std_error, e2.std_error));
  CHECK(e2.std_error < e1.std_error);
  CHECK_THROWS(empirical_risk(star, {}, s, mc, r));
}

TEST_CASE("empirical risk of s* agrees with an independent large Monte Carlo") {
  DiffusionSchedule s(0.1, 0.05, 2.0);
  auto g = make_sine(2, 2.0);
  auto o = std::make_shared<ScoreOracle>(g, s);
  OracleScore star(o);
  Rng rd = stream_rng(13, 0);
  const auto data = sample_data(g, s.sigma_data, 512, rd);
  Rng r = stream_rng(13, 1);
  auto er = empirical_risk(star, data, s, McConfig{32, 4}, r);

  // uniform t, one draw per sample
  const std::size_t N = 1000000;
  Rng q = stream_rng(13, 2);
  double mu = 0.0, m2 = 0.0;
  const double L = s.T - s.t0;
  Vec y(2);
  for (std::size_t i = 0; i < N; ++i) {
    const Vec x = sample_data(g, s.sigma_data, 1, q)[0];
    const double t = s.t0 + L * uniform01(q);
    const auto sv = s.eval(t);
    const double sd = std::sqrt(sv.var);
    double xi[2];
    for (int k = 0; k < 2; ++k) xi[k] = normal01(q), y[k] = sv.m * x[k] + sd * xi[k];
    const auto e = mixture_score(o->atoms(), sv, y.data());
    double v = 0.0;
    for (int k = 0; k < 2; ++k) v += std::pow(e.score[k] + xi[k] / sd, 2);
    v *= L;
    const double d = v - mu;
    mu += d / double(i + 1);
    m2 += d * (v - mu);
  }
  const double se = std::sqrt(m2 / double(N - 1) / double(N));
  INFO("erm " << er.value << " +- " << er.std_error << " big " << mu << " +- " << se);
  CHECK(std::abs(er.value - mu) <= 3.0 * std::hypot(er.std_error, se));
}

TEST_CASE("integrated score error: s*, surrogate and scaled f") {
  DiffusionSchedule s(0.1, 0.05, 2.0);
  auto g = make_sine(2, 2.0);
  auto o = std::make_shared<ScoreOracle>(g, s);
  OracleScore star(o);
  const McConfig mc{32, 1};
  Rng r = stream_rng(17, 0);
  auto z = integrated_score_error(star, star, g, s, 500, mc, r);
  CHECK(z.value == 0.0);

  const double eps = 0.1;
  const auto sur = build_surrogate(g, eps);
  OracleScore sc(std::make_shared<ScoreOracle>(sur, s));
  auto e = integrated_score_error(sc, star, g, s, 2000, mc, r);
  const auto v0 = s.eval(s.t0);
  const double b = surrogate_error_bound(g, eps);
  const double bound = v0.m * v0.m / (4.0 * v0.tvar) * b * b;
  INFO("surrogate error " << e.value << " +- " << e.std_error << " bound " << bound);
  CHECK(e.value >= -3.0 * e.std_error);
  CHECK(e.value <= bound + 3.0 * e.std_error);

  auto s09 = scaled_f(o, 0.9);
  auto e9 = integrated_score_error(*s09, star, g, s, 2000, mc, r);
  CHECK(e9.value > 5.0 * e9.std_error);
}

TEST_CASE("Vincent identity on s*, the surrogate score and a scaled model") {
  DiffusionSchedule s(0.1, 0.05, 2.0);
  auto g = make_sine(2, 2.0);
  auto o = std::make_shared<ScoreOracle>(g, s);
  OracleScore star(o);
  const McConfig mc{32, 1};
  Rng r = stream_rng(19, 0);
  auto v = vincent_check(star, star, g, s, 2000, mc, r);
  CHECK(v.lhs.value == 0.0);
  CHECK(v.rhs.value == 0.0);
  CHECK(v.gap_sigmas <= 3.0);

  OracleScore sc(std::make_shared<ScoreOracle>(build_surrogate(g, 0.1), s));
  auto vs = vincent_check(sc, star, g, s, 20000, mc, r);
  INFO("surrogate lhs " << vs.lhs.value << " rhs " << vs.rhs.value << " sigmas " << vs.gap_sigmas);
  CHECK(vs.gap_sigmas <= 3.0);

  auto s09 = scaled_f(o, 0.9);
  auto v9 = vincent_check(*s09, star, g, s, 20000, mc, r);
  INFO("scaled lhs " << v9.lhs.value << " rhs " << v9.rhs.value << " sigmas " << v9.gap_sigmas);
  CHECK(v9.gap_sigmas <= 3.0);
  CHECK(v9.lhs.value > 0.0);
}

TEST_CASE("loss-difference inequality holds for random score models") {
  DiffusionSchedule s(0.3, 0.05, 2.0);
  auto g = make_sine(2, 2.0);
  auto o = std::make_shared<ScoreOracle>(g, s);
  OracleScore star(o);
  Rng pick = stream_rng(23, 0);
  for (int i = 0; i < 10; ++i) {
    const double a = 2.0 * uniform01(pick) - 0.5, shift = uniform01(pick) - 0.5;
    FunctionScore m(2, "random", [o, a, shift](const double* Y, std::size_t n, double t, double* S) {
      const auto sv = o->schedule().eval(t);
      for (std::size_t j = 0; j < n; ++j) {
        const auto e = mixture_score(o->atoms(), sv, Y + j * 2);
        for (int k = 0; k < 2; ++k) S[j * 2 + k] = -Y[j * 2 + k] / sv.tvar + sv.m * (a * e.f_value[k] + shift) / sv.tvar;
      }
    });
    Rng r = stream_rng(23, 1 + i);
    auto b = bernstein_spot_check(m, star, g, s, 400, McConfig{16, 1}, r);
    INFO("model " << i << " lhs " << b.lhs << " rhs " << b.rhs);
    CHECK(b.ok());
  }
}

TEST_CASE("loss gradient matches finite differences, clip active and inactive") {
  DiffusionSchedule s(0.3, 0.05, 2.0);
  Rng rng = stream_rng(29, 0);
  auto g = make_sine(2, 2.0);
  Rng rd = stream_rng(29, 1);
  const auto data = sample_data(g, 0.3, 16, rd);
  std::vector<std::size_t> idx(16);
  for (std::size_t i = 0; i < 16; ++i) idx[i] = i;
  const auto tn = time_nodes(s, 4);
  const auto b = detail::make_batch(data, idx, tn, 1, rng);
  for (double out_scale : {0.1, 20.0}) {
    TrainableScore m(Mlp::random(2 + kTimeFeatures, {8, 8}, 2, rng, out_scale), 0.3, s, 2);
    std::vector<Eigen::MatrixXd> gW;
    std::vector<Eigen::VectorXd> gb;
    double gth = 0.0;
    detail::batch_loss(m, b, &gW, &gb, &gth);
    const double h = 1e-6;
    auto fd = [&](auto&& poke) {
      TrainableScore p = m, q = m;
      poke(p, h);
      poke(q, -h);
      return (detail::batch_loss(p, b, nullptr, nullptr, nullptr) - detail::batch_loss(q, b, nullptr, nullptr, nullptr)) / (2 * h);
    };
    for (std::size_t l = 0; l < m.net().n_layers(); ++l) {
      const double num = fd([&](TrainableScore& x, double d) { x.net().W[l](0, 1) += d; });
      CHECK(std::abs(num - gW[l](0, 1)) <= 1e-5 * (1.0 + std::abs(num)));
      const double numb = fd([&](TrainableScore& x, double d) { x.net().b[l](0) += d; });
      CHECK(std::abs(numb - gb[l](0)) <= 1e-5 * (1.0 + std::abs(numb)));
    }
    const double nth = fd([&](TrainableScore& x, double d) { x.set_theta(x.theta() + d); });
    CHECK(std::abs(nth - gth) <= 1e-5 * (1.0 + std::abs(nth)));
  }
}

TEST_CASE("training decreases risk and halves the score error") {
  DiffusionSchedule s(0.3, 0.05, 2.0);
  auto g = make_constant({0.6});
  Rng rd = stream_rng(31, 0);
  const auto data = sample_data(g, 0.3, 4096, rd);
  TrainConfig tc;
  tc.hidden = {16, 16};
  tc.n_epochs = 15;
  tc.batch_size = 128;
  tc.step_size = 3e-3;
  tc.seed = 5;
  auto res = erm_train(tc, data, s);
  CHECK(res.best_val <= res.initial_val);
  CHECK(res.trace.epoch.size() >= 1);

  // the initial state, rebuilt from the same streams
  Rng init = stream_rng(tc.seed, 0);
  const double s0 = std::clamp(nn_sigma_heuristic(data), 1e-3, 0.9);
  TrainableScore m0(Mlp::random(1 + kTimeFeatures, tc.hidden, 1, init), std::log(s0 / (1.0 - s0)), s, 1);
  OracleScore star(std::make_shared<ScoreOracle>(g, s));
  Rng r1 = stream_rng(31, 1), r2 = stream_rng(31, 1);
  auto e0 = integrated_score_error(m0, star, g, s, 2000, McConfig{32, 1}, r1);
  auto e1 = integrated_score_error(*res.model, star, g, s, 2000, McConfig{32, 1}, r2);
  INFO("init " << e0.value << " trained " << e1.value);
  CHECK(e1.value <= 0.5 * e0.value);
}

TEST_CASE("training is deterministic for a fixed seed") {
  DiffusionSchedule s(0.3, 0.05, 2.0);
  auto g = make_sine(2, 2.0);
  Rng rd = stream_rng(37, 0);
  const auto data = sample_data(g, 0.3, 256, rd);
  TrainConfig tc;
  tc.hidden = {8, 8};
  tc.n_epochs = 4;
  tc.seed = 9;
  auto a = erm_train(tc, data, s), b = erm_train(tc, data, s);
  CHECK(a.trace.train_loss == b.trace.train_loss);
  CHECK(a.trace.val_loss == b.trace.val_loss);
  CHECK(a.model->theta() == b.model->theta());
  tc.optimizer = "sgd";
  auto c = erm_train(tc, data, s), d = erm_train(tc, data, s);
  CHECK(c.trace.val_loss == d.trace.val_loss);
}

TEST_CASE("training signals divergence and rejects bad configs") {
  DiffusionSchedule s(0.3, 0.05, 2.0);
  auto g = make_sine(2, 2.0);
  Rng rd = stream_rng(41, 0);
  const auto data = sample_data(g, 0.3, 256, rd);
  TrainConfig tc;
  tc.hidden = {8};
  tc.n_epochs = 20;
  tc.optimizer = "sgd";
  tc.step_size = 1e300;  // weights overflow; the clip keeps finite steps from exceeding 10x
  CHECK_THROWS_AS(erm_train(tc, data, s), TrainingDivergence);
  TrainConfig bad;
  bad.batch_size = 0;
  CHECK_THROWS_AS(erm_train(bad, data, s), std::invalid_argument);
  bad = TrainConfig{};
  bad.optimizer = "lbfgs";
  CHECK_THROWS_AS(erm_train(bad, data, s), std::invalid_argument);
  CHECK_THROWS_AS(erm_train(TrainConfig{}, {data[0]}, s), std::invalid_argument);
}

TEST_CASE("trainable score follows the clipped recomposition") {
  DiffusionSchedule s(0.3, 0.05, 2.0);
  Rng rng = stream_rng(43, 0);
  TrainableScore m(Mlp::random(2 + kTimeFeatures, {8}, 2, rng, 20.0), -0.4, s, 2);
  const double Y[2] = {0.3, -1.1}, t = 0.7;
  double S[2];
  m.score_batch(Y, 1, t, S);
  std::vector<double> tt{t};
  const Eigen::MatrixXd F = m.net().forward(m.features(Y, 1, tt.data()));
  const double nf = std::hypot(F(0, 0), F(1, 0)), sc = nf > 2.0 ? 2.0 / nf : 1.0;
  const double mm = s.m(t), sg = sigmoid(-0.4), tv = mm * mm * sg * sg + s.sigma2(t);
  for (int k = 0; k < 2; ++k) CHECK(S[k] == -Y[k] / tv + mm * sc * F(k, 0) / tv);
  // the exported ReLU net computes the same f
  const auto rn = m.net().to_relu_net();
  std::vector<double> in{Y[0], Y[1], 0, 0, 0};
  time_features(t, &in[2]);
  const auto fo = rn.evaluate(in);
  for (int k = 0; k < 2; ++k) CHECK(std::abs(fo[k] - F(k, 0)) <= 1e-12 * (1.0 + std::abs(F(k, 0))));
}
