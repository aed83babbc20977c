#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "constructions.hpp"
#include "netcalc.hpp"
#include "oracle.hpp"
#include "schedule.hpp"

namespace scorelab {

// s(y, t) on R^D x [t0, T]; batches share one time value
class ScoreModel {
 public:
  virtual ~ScoreModel() = default;
  virtual int D() const = 0;
  virtual std::string backend() const = 0;
  // Y and S are n x D row-major
  virtual void score_batch(const double* Y, std::size_t n, double t, double* S) const = 0;

  Vec score(const Vec& y, double t) const {
    Vec s(y.size());
    score_batch(y.data(), 1, t, s.data());
    return s;
  }
};

using ScoreModelPtr = std::shared_ptr<const ScoreModel>;

// -y/tv + m clip(f, R)/tv with tv = m^2 sigma^2 + sigma_t^2
inline void recompose_score(const double* Y, const double* F, std::size_t n, int D, double m, double tv, double clip_radius,
                            double* S) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* f = F + i * D;
    double n2 = 0.0;
    for (int k = 0; k < D; ++k) n2 += f[k] * f[k];
    const double nf = std::sqrt(n2);
    const double c = nf > clip_radius ? clip_radius / nf : 1.0;
    for (int k = 0; k < D; ++k) S[i * D + k] = -Y[i * D + k] / tv + m * c * f[k] / tv;
  }
}

class OracleScore final : public ScoreModel {
 public:
  explicit OracleScore(std::shared_ptr<const ScoreOracle> o) : o_(std::move(o)) {}
  int D() const override { return o_->D(); }
  std::string backend() const override { return "oracle"; }
  void score_batch(const double* Y, std::size_t n, double t, double* S) const override {
    const auto sv = o_->schedule().eval(t);
    const int D = o_->D();
    for (std::size_t i = 0; i < n; ++i) {
      auto e = mixture_score(o_->atoms(), sv, Y + i * D);
      for (int k = 0; k < D; ++k) S[i * D + k] = e.score[k];
    }
  }
  const ScoreOracle& oracle() const { return *o_; }

 private:
  std::shared_ptr<const ScoreOracle> o_;
};

// arbitrary batch function; used for perturbed reference models
class FunctionScore final : public ScoreModel {
 public:
  using Fn = std::function<void(const double*, std::size_t, double, double*)>;
  FunctionScore(int D, std::string name, Fn fn) : D_(D), name_(std::move(name)), fn_(std::move(fn)) {}
  int D() const override { return D_; }
  std::string backend() const override { return name_; }
  void score_batch(const double* Y, std::size_t n, double t, double* S) const override { fn_(Y, n, t, S); }

 private:
  int D_;
  std::string name_;
  Fn fn_;
};

// ReLU network f(y, t) plugged into the clipped score class
class NetScore final : public ScoreModel {
 public:
  NetScore(ReluNet f, DiffusionSchedule s, double sigma, double clip_radius = 2.0)
      : f_(std::move(f)), sched_(s), sigma_(sigma), clip_(clip_radius) {
    if (f_.in_dim() != f_.out_dim() + 1) throw std::invalid_argument("NetScore: net must map (y, t) to R^D");
  }
  int D() const override { return f_.out_dim(); }
  std::string backend() const override { return "constructed-net"; }
  void score_batch(const double* Y, std::size_t n, double t, double* S) const override {
    const int D = this->D();
    std::vector<double> X(n * (D + 1));
    for (std::size_t i = 0; i < n; ++i) {
      for (int k = 0; k < D; ++k) X[i * (D + 1) + k] = Y[i * D + k];
      X[i * (D + 1) + D] = t;
    }
    auto F = f_.evaluate_batch(X, n);
    const double m = sched_.m(t), tv = m * m * sigma_ * sigma_ + sched_.sigma2(t);
    recompose_score(Y, F.data(), n, D, m, tv, clip_, S);
  }
  const ReluNet& net() const { return f_; }
  double sigma() const { return sigma_; }

 private:
  ReluNet f_;
  DiffusionSchedule sched_;
  double sigma_;
  double clip_;
};

}  // namespace scorelab
