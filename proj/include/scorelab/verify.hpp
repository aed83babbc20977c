#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "constructions.hpp"
#include "rng.hpp"
#include "schedule.hpp"

namespace scorelab {

namespace detail {

// sup over n random points of |net(x) - f(x)|; draw() fills one input
inline double audit_sup(const ReluNet& net, std::size_t n, Rng& rng, const std::function<std::vector<double>(Rng&)>& draw,
                        const std::function<double(const std::vector<double>&)>& f) {
  const int in = net.in_dim();
  std::vector<double> X;
  std::vector<double> ref;
  X.reserve(n * in);
  for (std::size_t i = 0; i < n; ++i) {
    auto x = draw(rng);
    ref.push_back(f(x));
    X.insert(X.end(), x.begin(), x.end());
  }
  const auto out = net.evaluate_batch(X, n);
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i) worst = std::max(worst, std::abs(out[i] - ref[i]));
  return worst;
}

inline ConstructionReport make_report(ReluNet net, std::string name, double target, std::string domain, double measured,
                                      double bound) {
  ConstructionReport r;
  r.stats = net.stats();
  r.net = std::move(net);
  r.name = std::move(name);
  r.target_accuracy = target;
  r.domain_spec = std::move(domain);
  r.measured_error = measured;
  r.bound = bound;
  return r;
}

}  // namespace detail

struct PouReport {
  int K = 0;
  double max_deviation = 0.0;  // max |sum_k g_k(y) - 1|
  double tolerance = 1e-12;
  bool ok() const { return max_deviation <= tolerance; }
};

inline PouReport verify_pou(int K, std::size_t n, Rng& rng) {
  const auto g = pou_weights(K);
  PouReport r;
  r.K = K;
  const double lo = std::ldexp(1.0, -K);
  for (std::size_t i = 0; i < n; ++i) {
    // log-uniform on [2^{-K}, 1] plus a few points outside
    const double y = i % 10 == 9 ? 4.0 * uniform01(rng) - 1.5 : std::exp(std::log(lo) * uniform01(rng));
    double s = 0.0;
    for (const auto& net : g) s += net.evaluate({y})[0];
    r.max_deviation = std::max(r.max_deviation, std::abs(s - 1.0));
  }
  return r;
}

// every primitive against its stated bound on n random audit points
inline std::vector<ConstructionReport> verify_constructions(std::size_t n, Rng& rng) {
  using V = std::vector<double>;
  std::vector<ConstructionReport> out;
  auto U = [](Rng& r, double a, double b) { return a + (b - a) * uniform01(r); };

  {
    const double eps = 1e-3;
    ReluNet m = mult2_net(4.0, 4.0, eps);
    const double e = detail::audit_sup(m, n, rng, [&](Rng& r) { return V{U(r, -4, 4), U(r, -4, 4)}; },
                                       [](const V& x) { return x[0] * x[1]; });
    out.push_back(detail::make_report(m, "mult2_net", eps, "[-4,4]^2", e, mult2_error_bound(4.0, 4.0, eps)));
  }
  {
    const double eps = 1e-4;
    ReluNet m = mult_net(3, 2.0, eps);
    const double e = detail::audit_sup(m, n, rng, [&](Rng& r) { return V{U(r, -2, 2), U(r, -2, 2), U(r, -2, 2)}; },
                                       [](const V& x) { return x[0] * x[1] * x[2]; });
    out.push_back(detail::make_report(m, "mult_net", eps, "[-2,2]^3", e, eps));
  }
  {
    const double eps = 1e-4;
    ReluNet m = exp_net(eps);
    const double e = detail::audit_sup(m, n, rng, [&](Rng& r) { return V{U(r, 0, 20)}; },
                                       [](const V& x) { return std::exp(-x[0]); });
    out.push_back(detail::make_report(m, "exp_net", eps, "[0,20]", e, eps));
  }
  const DiffusionSchedule s(0.5, 0.1, 2.0);
  for (int gamma = 0; gamma <= 2; ++gamma) {
    const double eps = 1e-2;
    ReluNet m = chi_net(s, gamma, eps);
    const double e = detail::audit_sup(m, n, rng, [&](Rng& r) { return V{s.t0 * std::pow(s.T / s.t0, uniform01(r))}; },
                                       [&](const V& x) {
                                         const auto v = s.eval(x[0]);
                                         return std::pow(v.m, gamma) / v.tvar;
                                       });
    out.push_back(detail::make_report(m, "chi_net(gamma=" + std::to_string(gamma) + ")", eps, "t in [0.1,2]", e, eps));
  }
  {
    const double eps = 1e-2;
    ReluNet m = rho_net(s, 2, 1.0, eps);
    const double e = detail::audit_sup(m, n, rng, [&](Rng& r) { return V{U(r, -1, 1), U(r, -1, 1), U(r, s.t0, s.T)}; },
                                       [&](const V& x) { return (x[0] * x[0] + x[1] * x[1]) / (2.0 * s.tvar(x[2])); });
    out.push_back(detail::make_report(m, "rho_net", eps, "[-1,1]^2 x [0.1,2]", e, eps));
  }
  {
    const double eps = 1e-2;
    const V a{0.4, -0.7};
    ReluNet m = omega_net(s, a, 1.5, eps);
    const double e = detail::audit_sup(m, n, rng, [&](Rng& r) { return V{U(r, -1.5, 1.5), U(r, -1.5, 1.5), U(r, s.t0, s.T)}; },
                                       [&](const V& x) { return s.m(x[2]) * (a[0] * x[0] + a[1] * x[1]) / s.tvar(x[2]); });
    out.push_back(detail::make_report(m, "omega_net", eps, "[-1.5,1.5]^2 x [0.1,2]", e, eps));
  }
  {
    const double a = 0.25, b = 1.0, eps = 1e-3;
    ReluNet m = div_segment_net(a, b, eps, 0.0);
    const double e = detail::audit_sup(m, n, rng,
                                       [&](Rng& r) {
                                         const double y = U(r, a, b);
                                         return V{y * U(r, -1, 1), y};
                                       },
                                       [](const V& x) { return x[0] / x[1]; });
    out.push_back(detail::make_report(m, "div_segment_net", eps, "y in [0.25,1], |x| <= y", e, div_segment_bound(a, eps, 0.0)));
  }
  {
    const int K = 8;
    const double eps = 1e-2, lo = std::ldexp(1.0, -K);
    ReluNet m = div_net(K, eps);
    const double e = detail::audit_sup(m, n, rng,
                                       [&](Rng& r) {
                                         const double y = std::exp(std::log(lo) * uniform01(r));
                                         return V{y * U(r, -1, 1), y};
                                       },
                                       [](const V& x) { return x[0] / x[1]; });
    out.push_back(detail::make_report(m, "div_net(K=8)", eps, "y in [2^-8,1], |x| <= y", e, div_net_bound(K, eps)));
  }
  return out;
}

}  // namespace scorelab
