#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "rng.hpp"

namespace scorelab {

struct ScheduleValues {
  double m;     // e^{-t}
  double var;   // sigma_t^2
  double tvar;  // m^2 sigma_data^2 + sigma_t^2
  double calv;  // m^2 / (2 tvar)
};

// OU forward process on [t0, T] with data noise sigma_data
struct DiffusionSchedule {
  double sigma_data = 0.0;
  double t0 = 0.01;
  double T = 1.0;

  DiffusionSchedule() = default;
  DiffusionSchedule(double sd, double t0_, double T_) : sigma_data(sd), t0(t0_), T(T_) { validate(); }

  void validate() const {
    if (!(sigma_data >= 0.0 && sigma_data < 1.0))
      throw std::invalid_argument("schedule: sigma_data must lie in [0,1)");
    if (!(t0 > 0.0 && t0 <= T)) throw std::invalid_argument("schedule: need 0 < t0 <= T");
  }

  ScheduleValues eval(double t) const {
    if (!(t >= 0.0) || t > T) throw std::domain_error("schedule: t outside [0,T]");
    if (t == 0.0 && sigma_data == 0.0)
      throw std::domain_error("schedule: t = 0 with sigma_data = 0 has zero variance");
    ScheduleValues v;
    v.m = std::exp(-t);
    v.var = -std::expm1(-2.0 * t);
    v.tvar = v.m * v.m * sigma_data * sigma_data + v.var;
    v.calv = v.m * v.m / (2.0 * v.tvar);
    return v;
  }

  double m(double t) const { return std::exp(-t); }
  double sigma2(double t) const { return -std::expm1(-2.0 * t); }
  double tvar(double t) const { return eval(t).tvar; }

  // Delta_sigma = -1/2 log(1 - sigma_data^2); tvar_t = 1 - e^{-2(t + Delta_sigma)}
  double delta_sigma() const { return -0.5 * std::log1p(-sigma_data * sigma_data); }
};

inline ScheduleValues schedule_eval(const DiffusionSchedule& s, double t) { return s.eval(t); }

// X_t | X_0 = x0  ~  N(m_t x0, sigma_t^2 I)
inline std::vector<double> forward_conditional_sample(const DiffusionSchedule& s,
                                                      const std::vector<double>& x0, double t,
                                                      Rng& rng) {
  if (!(t > 0.0) || t > s.T) throw std::domain_error("forward sample: t outside (0,T]");
  const double m = s.m(t), sd = std::sqrt(s.sigma2(t));
  std::vector<double> y(x0.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = m * x0[i] + sd * normal01(rng);
  return y;
}

}  // namespace scorelab
