#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <iomanip>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "netcalc.hpp"
#include "rng.hpp"
#include "schedule.hpp"
#include "score_model.hpp"

namespace scorelab {

// (y, t) -> (y, t, e^{-t}, 1 - e^{-2t})
constexpr int kTimeFeatures = 3;

inline void time_features(double t, double* out) {
  out[0] = t;
  out[1] = std::exp(-t);
  out[2] = -std::expm1(-2.0 * t);
}

// dense ReLU perceptron, column-major batches (one sample per column)
struct Mlp {
  std::vector<Eigen::MatrixXd> W;
  std::vector<Eigen::VectorXd> b;

  int in_dim() const { return int(W.front().cols()); }
  int out_dim() const { return int(W.back().rows()); }
  std::size_t n_layers() const { return W.size(); }

  static Mlp random(int in, const std::vector<int>& hidden, int out, Rng& rng, double out_scale = 0.1) {
    Mlp m;
    int prev = in;
    std::vector<int> sizes = hidden;
    sizes.push_back(out);
    for (std::size_t l = 0; l < sizes.size(); ++l) {
      const bool last = l + 1 == sizes.size();
      const double sd = std::sqrt(2.0 / prev) * (last ? out_scale : 1.0);
      Eigen::MatrixXd w(sizes[l], prev);
      for (int j = 0; j < w.cols(); ++j)
        for (int i = 0; i < w.rows(); ++i) w(i, j) = sd * normal01(rng);
      m.W.push_back(std::move(w));
      m.b.push_back(Eigen::VectorXd::Zero(sizes[l]));
      prev = sizes[l];
    }
    return m;
  }

  // acts[0] = X, acts[l] = post-activation of layer l-1; returns the output
  Eigen::MatrixXd forward(const Eigen::MatrixXd& X, std::vector<Eigen::MatrixXd>* acts = nullptr) const {
    Eigen::MatrixXd a = X;
    if (acts) acts->assign(1, X);
    for (std::size_t l = 0; l < W.size(); ++l) {
      Eigen::MatrixXd z = W[l] * a;
      z.colwise() += b[l];
      if (l + 1 < W.size()) z = z.cwiseMax(0.0);
      a = std::move(z);
      if (acts && l + 1 < W.size()) acts->push_back(a);
    }
    return a;
  }

  // gradients of sum over columns given dL/d(output)
  void backward(const std::vector<Eigen::MatrixXd>& acts, Eigen::MatrixXd delta, std::vector<Eigen::MatrixXd>& gW,
                std::vector<Eigen::VectorXd>& gb) const {
    gW.resize(W.size());
    gb.resize(W.size());
    for (std::size_t l = W.size(); l-- > 0;) {
      gW[l] = delta * acts[l].transpose();
      gb[l] = delta.rowwise().sum();
      if (l == 0) break;
      Eigen::MatrixXd up = W[l].transpose() * delta;
      delta = up.cwiseProduct((acts[l].array() > 0.0).cast<double>().matrix());
    }
  }

  // same map in the layer convention relu(A x - b), output A x - b
  ReluNet to_relu_net() const {
    std::vector<Layer> layers;
    for (std::size_t l = 0; l < W.size(); ++l) {
      const int r = int(W[l].rows()), c = int(W[l].cols());
      std::vector<double> A(std::size_t(r) * c), sh(r);
      for (int i = 0; i < r; ++i) {
        for (int j = 0; j < c; ++j) A[std::size_t(i) * c + j] = W[l](i, j);
        sh[i] = -b[l](i);
      }
      layers.push_back(Layer::from_dense(r, c, A, sh));
    }
    return ReluNet(in_dim(), std::move(layers));
  }

  static Mlp from_relu_net(const ReluNet& net) {
    Mlp m;
    for (const auto& l : net.layers()) {
      const auto A = l.dense();
      Eigen::MatrixXd w(l.rows, l.cols);
      Eigen::VectorXd bb(l.rows);
      for (int i = 0; i < l.rows; ++i) {
        for (int j = 0; j < l.cols; ++j) w(i, j) = A[std::size_t(i) * l.cols + j];
        bb(i) = -l.b[i];
      }
      m.W.push_back(std::move(w));
      m.b.push_back(std::move(bb));
    }
    return m;
  }
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// clipped score class with a learnable sigma = sigmoid(theta) in (0,1)
class TrainableScore final : public ScoreModel {
 public:
  TrainableScore(Mlp net, double theta, DiffusionSchedule s, int D, double clip_radius = 2.0)
      : net_(std::move(net)), theta_(theta), sched_(s), D_(D), clip_(clip_radius) {
    if (net_.in_dim() != D + kTimeFeatures || net_.out_dim() != D)
      throw std::invalid_argument("TrainableScore: net must map D + 3 features to R^D");
  }
  int D() const override { return D_; }
  std::string backend() const override { return "trainable-net"; }

  Eigen::MatrixXd features(const double* Y, std::size_t n, const double* t) const {
    Eigen::MatrixXd X(D_ + kTimeFeatures, Eigen::Index(n));
    for (std::size_t i = 0; i < n; ++i) {
      for (int k = 0; k < D_; ++k) X(k, Eigen::Index(i)) = Y[i * D_ + k];
      time_features(t[i], &X(D_, Eigen::Index(i)));
    }
    return X;
  }

  void score_batch(const double* Y, std::size_t n, double t, double* S) const override {
    std::vector<double> ts(n, t);
    const Eigen::MatrixXd F = net_.forward(features(Y, n, ts.data()));
    const double m = sched_.m(t), sg = sigma(), tv = m * m * sg * sg + sched_.sigma2(t);
    recompose_score(Y, F.data(), n, D_, m, tv, clip_, S);
  }

  double sigma() const { return sigmoid(theta_); }
  double theta() const { return theta_; }
  double clip_radius() const { return clip_; }
  const Mlp& net() const { return net_; }
  Mlp& net() { return net_; }
  void set_theta(double th) { theta_ = th; }
  const DiffusionSchedule& schedule() const { return sched_; }

 private:
  Mlp net_;
  double theta_;
  DiffusionSchedule sched_;
  int D_;
  double clip_;
};

inline void write_trained(std::ostream& os, const TrainableScore& s) {
  os << "trained_score 1\n";
  os << "D " << s.D() << "\n";
  os << "sigma_theta " << format_double(s.theta()) << "\n";
  os << "clip " << format_double(s.clip_radius()) << "\n";
  const auto& sc = s.schedule();
  os << "schedule " << format_double(sc.sigma_data) << " " << format_double(sc.t0) << " " << format_double(sc.T) << "\n";
  write_net(os, s.net().to_relu_net());
}

inline std::shared_ptr<TrainableScore> read_trained(std::istream& is) {
  LineReader r(is, "trained_score");
  {
    auto ss = r.expect("trained_score");
    if (r.read<int>(ss, "trained_score") != 1) r.fail("unsupported format version");
  }
  auto s1 = r.expect("D");
  const int D = r.read<int>(s1, "D");
  auto s2 = r.expect("sigma_theta");
  const double th = r.read_double(s2, "sigma_theta");
  auto s3 = r.expect("clip");
  const double clip = r.read_double(s3, "clip");
  auto s4 = r.expect("schedule");
  const double sd = r.read_double(s4, "schedule.sigma_data");
  const double t0 = r.read_double(s4, "schedule.t0");
  const double T = r.read_double(s4, "schedule.T");
  ReluNet net = read_net(is);
  try {
    return std::make_shared<TrainableScore>(Mlp::from_relu_net(net), th, DiffusionSchedule(sd, t0, T), D, clip);
  } catch (const std::invalid_argument& e) {
    throw ParseError(std::string("trained_score: ") + e.what());
  }
}

inline void save_trained(const std::string& path, const TrainableScore& s) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  write_trained(os, s);
}

inline std::shared_ptr<TrainableScore> load_trained(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path);
  return read_trained(is);
}

}  // namespace scorelab
