#pragma once

// Noise-conditioned score network S(y; sigma) trained as a residual denoising
// autoencoder on received pilots only.
//
// Architecture (n = pilot length, H = hidden width):
//   z_0     = E_y y + e_sigma (sigma / sigma_scale) + b_E        (H)
//   z_{k+1} = z_k + W2_k tanh(W1_k z_k + b1_k) + b2_k           (H)
//   D       = P z_K + b_P                                      (n)
//   S       = (D - g y) / (v + sigma^2)
// v = exp(log_v) is a learned noise floor and g a learned skip gain. In the
// directions that carry noise only, the score of the sigma-smoothed pilot
// density is -y / (1/rho + sigma^2); the skip path represents that exactly and
// the hidden path models the channel subspace.
//
// Training minimizes E || u + sigma S(y + sigma u; sigma) ||^2 with sigma drawn
// around an annealed scale xi. At inference sigma = 0.

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "hmimo/channel.hpp"
#include "hmimo/error.hpp"
#include "hmimo/numerics.hpp"
#include "hmimo/snr.hpp"

namespace hmimo {

struct NetworkShape {
  int dim = 0;
  int hidden = 256;
  int blocks = 1;

  bool operator==(const NetworkShape&) const = default;
};

template <typename Scalar>
class ScoreNetwork {
 public:
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using MatMap = Eigen::Map<Mat>;
  using ConstMatMap = Eigen::Map<const Mat>;
  using VecMap = Eigen::Map<Vec>;
  using ConstVecMap = Eigen::Map<const Vec>;

  ScoreNetwork() = default;

  /// All parameters zero except the noise floor (v = 1) and skip gain (g = 1).
  explicit ScoreNetwork(NetworkShape shape) : shape_(shape) {
    require(shape.dim >= 1 && shape.hidden >= 1 && shape.blocks >= 0,
            "ScoreNetwork: invalid shape");
    theta_ = Vec::Zero(layout_size());
    theta_[skip_offset()] = Scalar(1);
    theta_[log_floor_offset()] = Scalar(0);
  }

  /// Uniform(+-1/sqrt(fan_in)) weights and biases; the second layer of each
  /// residual block starts at zero so blocks begin as identities.
  static ScoreNetwork initialized(NetworkShape shape, RngStream& rng) {
    ScoreNetwork net(shape);
    auto fill = [&](Scalar* p, Eigen::Index count, double fan_in) {
      const double bound = 1.0 / std::sqrt(fan_in);
      for (Eigen::Index i = 0; i < count; ++i) {
        p[i] = static_cast<Scalar>(bound * (2.0 * rng.uniform() - 1.0));
      }
    };
    const int n = shape.dim;
    const int h = shape.hidden;
    Scalar* t = net.theta_.data();
    fill(t + net.enc_w_offset(), Eigen::Index(h) * (n + 1), n + 1);
    fill(t + net.enc_b_offset(), h, n + 1);
    for (int k = 0; k < shape.blocks; ++k) {
      fill(t + net.block_offset(k), Eigen::Index(h) * h, h);
      fill(t + net.block_offset(k) + Eigen::Index(h) * h, h, h);
    }
    fill(t + net.out_w_offset(), Eigen::Index(n) * h, h);
    fill(t + net.out_b_offset(), n, h);
    return net;
  }

  const NetworkShape& shape() const { return shape_; }
  int dim() const { return shape_.dim; }
  Eigen::Index parameter_count() const { return theta_.size(); }
  Vec& parameters() { return theta_; }
  const Vec& parameters() const { return theta_; }

  Scalar sigma_scale() const { return sigma_scale_; }
  void set_sigma_scale(Scalar s) {
    require(s > Scalar(0), "ScoreNetwork: sigma scale must be positive");
    sigma_scale_ = s;
  }

  double noise_floor() const { return std::exp(static_cast<double>(theta_[log_floor_offset()])); }
  void set_noise_floor(double v) {
    require(v > 0.0, "ScoreNetwork: noise floor must be positive");
    theta_[log_floor_offset()] = static_cast<Scalar>(std::log(v));
  }
  Scalar skip_gain() const { return theta_[skip_offset()]; }
  void set_skip_gain(Scalar g) { theta_[skip_offset()] = g; }

  /// Zeroes the readout (P, b_P, g); the network then outputs 0 everywhere.
  void zero_output_layer() {
    out_w() = Mat::Zero(shape_.dim, shape_.hidden);
    out_b() = Vec::Zero(shape_.dim);
    theta_[skip_offset()] = Scalar(0);
  }

  /// Sets the encoder to project onto the leading columns of `basis` and the
  /// readout to map back with per-direction gains, so D starts as the linear
  /// filter basis * diag(gains) * basis^T.
  void init_from_subspace(const Matrix& basis, const Vector& gains) {
    require(basis.rows() == shape_.dim, "init_from_subspace: basis has wrong row count");
    require(gains.size() == basis.cols(), "init_from_subspace: one gain per column");
    const Eigen::Index k = std::min<Eigen::Index>(basis.cols(), shape_.hidden);
    auto e = enc_w();
    e.topRows(k).leftCols(shape_.dim) = basis.leftCols(k).transpose().template cast<Scalar>();
    e.topRows(k).col(shape_.dim).setZero();
    enc_b().head(k).setZero();
    auto p = out_w();
    p.leftCols(k) = (basis.leftCols(k) * gains.head(k).asDiagonal()).template cast<Scalar>();
    p.rightCols(shape_.hidden - k).setZero();
    out_b().setZero();
  }

  void check_finite() const {
    if (!theta_.allFinite()) {
      throw Error(ErrorCategory::kNumerical, "ScoreNetwork: non-finite parameters");
    }
  }

  /// Intermediate values kept for the backward pass.
  struct Tape {
    Mat y;
    Vec sigma_feature;
    Vec denom;
    std::vector<Mat> z;  // blocks + 1 entries
    std::vector<Mat> g;  // tanh activations, one per block
    Mat s;
  };

  /// Batched evaluation; columns of y are samples, sigma holds one value per column.
  Mat forward(const Mat& y, const Vec& sigma, Tape* tape = nullptr) const {
    require(y.rows() == shape_.dim, "ScoreNetwork::forward: input has wrong length");
    require(sigma.size() == y.cols(), "ScoreNetwork::forward: one sigma per sample");
    const int n = shape_.dim;
    const Scalar v = static_cast<Scalar>(noise_floor());
    const Scalar g = skip_gain();
    const Vec feature = sigma / sigma_scale_;

    const auto e = enc_w();
    Mat z = e.leftCols(n) * y + e.col(n) * feature.transpose();
    z.colwise() += enc_b();
    if (tape) {
      tape->z.clear();
      tape->g.clear();
      tape->z.push_back(z);
    }
    for (int k = 0; k < shape_.blocks; ++k) {
      Mat a = block_w1(k) * z;
      a.colwise() += block_b1(k);
      Mat act = a.array().tanh().matrix();
      z += block_w2(k) * act;
      z.colwise() += block_b2(k);
      if (tape) {
        tape->g.push_back(std::move(act));
        tape->z.push_back(z);
      }
    }
    Mat d = out_w() * z;
    d.colwise() += out_b();
    const Vec denom = (sigma.array().square() + v).matrix();
    Mat s = (d - g * y) * denom.cwiseInverse().asDiagonal();
    if (tape) {
      tape->y = y;
      tape->sigma_feature = feature;
      tape->denom = denom;
      tape->s = s;
    }
    return s;
  }

  /// Single-vector evaluation in double precision at the interface.
  Vector forward(const Vector& y, double sigma) const {
    require(sigma >= 0.0, "ScoreNetwork::forward: sigma must be nonnegative");
    Vec sig(1);
    sig[0] = static_cast<Scalar>(sigma);
    const Mat out = forward(Mat(y.template cast<Scalar>()), sig);
    return out.col(0).template cast<double>();
  }

  /// Accumulates d(loss)/d(theta) into grad, given d(loss)/dS for the taped batch.
  void backward(const Tape& tape, const Mat& grad_s, Vec& grad) const {
    require(grad.size() == theta_.size(), "ScoreNetwork::backward: gradient has wrong size");
    const int n = shape_.dim;
    const Scalar v = static_cast<Scalar>(noise_floor());
    const Mat grad_d = grad_s * tape.denom.cwiseInverse().asDiagonal();

    grad[skip_offset()] -= grad_d.cwiseProduct(tape.y).sum();
    // dS/dv = -S / (v + sigma^2); chain through v = exp(log_v).
    const Vec per_sample = grad_s.cwiseProduct(tape.s).colwise().sum().transpose();
    grad[log_floor_offset()] -= v * per_sample.cwiseQuotient(tape.denom).sum();

    const Mat& z_last = tape.z.back();
    grad_view(grad, out_w_offset(), n, shape_.hidden).noalias() += grad_d * z_last.transpose();
    grad_vec(grad, out_b_offset(), n) += grad_d.rowwise().sum();
    Mat grad_z = out_w().transpose() * grad_d;

    for (int k = shape_.blocks - 1; k >= 0; --k) {
      const Mat& act = tape.g[k];
      const Mat& z_in = tape.z[k];
      const Eigen::Index hh = Eigen::Index(shape_.hidden) * shape_.hidden;
      const Eigen::Index base = block_offset(k);
      grad_view(grad, base + hh + shape_.hidden, shape_.hidden, shape_.hidden).noalias() +=
          grad_z * act.transpose();
      grad_vec(grad, base + 2 * hh + shape_.hidden, shape_.hidden) += grad_z.rowwise().sum();
      Mat grad_a = (block_w2(k).transpose() * grad_z).cwiseProduct(
          (Scalar(1) - act.array().square()).matrix());
      grad_view(grad, base, shape_.hidden, shape_.hidden).noalias() += grad_a * z_in.transpose();
      grad_vec(grad, base + hh, shape_.hidden) += grad_a.rowwise().sum();
      grad_z.noalias() += block_w1(k).transpose() * grad_a;
    }

    auto ge = grad_view(grad, enc_w_offset(), shape_.hidden, n + 1);
    ge.leftCols(n).noalias() += grad_z * tape.y.transpose();
    ge.col(n).noalias() += grad_z * tape.sigma_feature;
    grad_vec(grad, enc_b_offset(), shape_.hidden) += grad_z.rowwise().sum();
  }

  template <typename Other>
  ScoreNetwork<Other> cast() const {
    ScoreNetwork<Other> out(shape_);
    out.parameters() = theta_.template cast<Other>();
    out.set_sigma_scale(static_cast<Other>(sigma_scale_));
    return out;
  }

  // Parameter views.
  ConstMatMap enc_w() const { return cmat(enc_w_offset(), shape_.hidden, shape_.dim + 1); }
  MatMap enc_w() { return mmat(enc_w_offset(), shape_.hidden, shape_.dim + 1); }
  ConstVecMap enc_b() const { return cvec(enc_b_offset(), shape_.hidden); }
  VecMap enc_b() { return mvec(enc_b_offset(), shape_.hidden); }
  ConstMatMap block_w1(int k) const { return cmat(block_offset(k), shape_.hidden, shape_.hidden); }
  ConstVecMap block_b1(int k) const { return cvec(block_offset(k) + hh(), shape_.hidden); }
  ConstMatMap block_w2(int k) const {
    return cmat(block_offset(k) + hh() + shape_.hidden, shape_.hidden, shape_.hidden);
  }
  ConstVecMap block_b2(int k) const {
    return cvec(block_offset(k) + 2 * hh() + shape_.hidden, shape_.hidden);
  }
  ConstMatMap out_w() const { return cmat(out_w_offset(), shape_.dim, shape_.hidden); }
  MatMap out_w() { return mmat(out_w_offset(), shape_.dim, shape_.hidden); }
  ConstVecMap out_b() const { return cvec(out_b_offset(), shape_.dim); }
  VecMap out_b() { return mvec(out_b_offset(), shape_.dim); }

 private:
  Eigen::Index hh() const { return Eigen::Index(shape_.hidden) * shape_.hidden; }
  Eigen::Index enc_w_offset() const { return 0; }
  Eigen::Index enc_b_offset() const { return Eigen::Index(shape_.hidden) * (shape_.dim + 1); }
  Eigen::Index block_offset(int k) const {
    return enc_b_offset() + shape_.hidden + k * (2 * hh() + 2 * shape_.hidden);
  }
  Eigen::Index out_w_offset() const { return block_offset(shape_.blocks); }
  Eigen::Index out_b_offset() const { return out_w_offset() + Eigen::Index(shape_.dim) * shape_.hidden; }
  Eigen::Index skip_offset() const { return out_b_offset() + shape_.dim; }
  Eigen::Index log_floor_offset() const { return skip_offset() + 1; }
  Eigen::Index layout_size() const { return log_floor_offset() + 1; }

  ConstMatMap cmat(Eigen::Index off, Eigen::Index r, Eigen::Index c) const {
    return ConstMatMap(theta_.data() + off, r, c);
  }
  MatMap mmat(Eigen::Index off, Eigen::Index r, Eigen::Index c) {
    return MatMap(theta_.data() + off, r, c);
  }
  ConstVecMap cvec(Eigen::Index off, Eigen::Index n) const { return ConstVecMap(theta_.data() + off, n); }
  VecMap mvec(Eigen::Index off, Eigen::Index n) { return VecMap(theta_.data() + off, n); }
  static MatMap grad_view(Vec& g, Eigen::Index off, Eigen::Index r, Eigen::Index c) {
    return MatMap(g.data() + off, r, c);
  }
  static VecMap grad_vec(Vec& g, Eigen::Index off, Eigen::Index n) { return VecMap(g.data() + off, n); }

  NetworkShape shape_;
  Vec theta_;
  Scalar sigma_scale_ = Scalar(1);
};

/// Inference-time score estimate S(y; 0).
template <typename Scalar>
Vector score(const ScoreNetwork<Scalar>& net, const Vector& y) {
  return net.forward(y, 0.0);
}

template <typename Scalar>
Matrix score_batch(const ScoreNetwork<Scalar>& net, const Matrix& y) {
  using Vec = typename ScoreNetwork<Scalar>::Vec;
  using Mat = typename ScoreNetwork<Scalar>::Mat;
  const Mat out = net.forward(Mat(y.template cast<Scalar>()), Vec::Zero(y.cols()));
  return out.template cast<double>();
}

template <typename Scalar>
struct LossAndGradient {
  double loss = 0.0;
  typename ScoreNetwork<Scalar>::Vec gradient;
};

/// || u + sigma S(y_clean + sigma u; sigma) ||^2 and its parameter gradient.
template <typename Scalar>
LossAndGradient<Scalar> dae_loss(const ScoreNetwork<Scalar>& net, const Vector& y_clean,
                                 const Vector& u, double sigma) {
  using Mat = typename ScoreNetwork<Scalar>::Mat;
  using Vec = typename ScoreNetwork<Scalar>::Vec;
  if (!(sigma > 0.0)) {
    throw Error(ErrorCategory::kInvalidArgument, "dae_loss: sigma must be positive in training");
  }
  require(y_clean.size() == net.dim() && u.size() == net.dim(), "dae_loss: length mismatch");
  typename ScoreNetwork<Scalar>::Tape tape;
  Vec sig(1);
  sig[0] = static_cast<Scalar>(sigma);
  const Mat noisy = (y_clean + sigma * u).template cast<Scalar>();
  const Mat s = net.forward(noisy, sig, &tape);
  const Mat r = u.template cast<Scalar>() + static_cast<Scalar>(sigma) * s;
  LossAndGradient<Scalar> out;
  out.loss = static_cast<double>(r.squaredNorm());
  out.gradient = Vec::Zero(net.parameter_count());
  net.backward(tape, (Scalar(2) * static_cast<Scalar>(sigma)) * r, out.gradient);
  return out;
}

/// Mean loss over a minibatch. With `antithetic`, each sample is also
/// evaluated at -u and the pair is averaged; the expected loss is unchanged.
template <typename Scalar>
LossAndGradient<Scalar> batch_dae_loss(const ScoreNetwork<Scalar>& net,
                                       const typename ScoreNetwork<Scalar>::Mat& y_clean,
                                       const typename ScoreNetwork<Scalar>::Mat& u,
                                       const typename ScoreNetwork<Scalar>::Vec& sigma,
                                       bool antithetic) {
  using Mat = typename ScoreNetwork<Scalar>::Mat;
  using Vec = typename ScoreNetwork<Scalar>::Vec;
  const Eigen::Index b = y_clean.cols();
  const Eigen::Index copies = antithetic ? 2 : 1;
  Mat noisy(y_clean.rows(), b * copies);
  Mat signed_u(y_clean.rows(), b * copies);
  Vec sig(b * copies);
  noisy.leftCols(b) = y_clean + u * sigma.asDiagonal();
  signed_u.leftCols(b) = u;
  sig.head(b) = sigma;
  if (antithetic) {
    noisy.rightCols(b) = y_clean - u * sigma.asDiagonal();
    signed_u.rightCols(b) = -u;
    sig.tail(b) = sigma;
  }
  typename ScoreNetwork<Scalar>::Tape tape;
  const Mat s = net.forward(noisy, sig, &tape);
  const Mat r = signed_u + s * sig.asDiagonal();
  const Scalar weight = Scalar(1) / static_cast<Scalar>(b * copies);
  LossAndGradient<Scalar> out;
  out.loss = static_cast<double>(r.squaredNorm() * weight);
  out.gradient = Vec::Zero(net.parameter_count());
  net.backward(tape, (r * sig.asDiagonal()) * (Scalar(2) * weight), out.gradient);
  return out;
}

enum class OptimizerKind { kSgd, kAdam };
enum class Annealing { kDecreasing, kIncreasing };
enum class NoiseFloorInit { kBlindPca, kFixed };

inline std::string to_string(OptimizerKind k) { return k == OptimizerKind::kSgd ? "sgd" : "adam"; }
inline std::string to_string(Annealing a) {
  return a == Annealing::kDecreasing ? "decreasing" : "increasing";
}

struct TrainConfig {
  double learning_rate = 1e-3;
  double sigma_min = 1e-3;
  double sigma_max = 0.1;
  int epochs = 100;
  int batch_size = 128;
  int lr_halving_epochs = 25;
  std::uint64_t seed = 1;
  Annealing annealing = Annealing::kDecreasing;
  OptimizerKind optimizer = OptimizerKind::kSgd;
  bool antithetic = true;
  /// Rescale each minibatch gradient to at most this Euclidean norm; 0 disables.
  double clip_norm = 1.0;
  double sigma_floor = 1e-5;
  int hidden = 256;
  int blocks = 1;
  /// Initialize encoder/readout as the shrinkage filter built from the pilot
  /// second moment (see shrinkage_init).
  bool subspace_init = true;
  NoiseFloorInit noise_floor_init = NoiseFloorInit::kBlindPca;
  double noise_floor = 1.0;  // used with kFixed, and as the fallback
  int window_side = 0;       // 0 selects default_window_side()
};

inline void validate(const TrainConfig& cfg) {
  require(cfg.learning_rate > 0.0, "TrainConfig: learning rate must be positive");
  require(cfg.sigma_min > 0.0 && cfg.sigma_min < cfg.sigma_max,
          "TrainConfig: need 0 < sigma_min < sigma_max");
  require(cfg.epochs >= 1 && cfg.batch_size >= 1, "TrainConfig: epochs and batch size must be >= 1");
  require(cfg.lr_halving_epochs >= 1, "TrainConfig: lr halving period must be >= 1");
  require(cfg.hidden >= 1 && cfg.blocks >= 0, "TrainConfig: invalid network shape");
  require(cfg.noise_floor > 0.0, "TrainConfig: noise floor must be positive");
  require(cfg.clip_norm >= 0.0, "TrainConfig: clip norm must be nonnegative");
}

/// Noise-scale schedule for epoch q in 1..Q.
inline double annealed_xi(const TrainConfig& cfg, int q) {
  const double big_q = cfg.epochs;
  const double frac = static_cast<double>(q) / big_q;
  if (cfg.annealing == Annealing::kDecreasing) {
    return frac * cfg.sigma_min + (1.0 - frac) * cfg.sigma_max;
  }
  return (1.0 - frac) * cfg.sigma_min + frac * cfg.sigma_max;
}

inline double learning_rate_at(const TrainConfig& cfg, int q) {
  return cfg.learning_rate * std::pow(0.5, (q - 1) / cfg.lr_halving_epochs);
}

struct EpochRecord {
  int epoch = 0;
  double mean_loss = 0.0;
  double xi = 0.0;
  double learning_rate = 0.0;
  double seconds = 0.0;
  double noise_floor = 0.0;
};

struct TrainTrace {
  std::vector<EpochRecord> epochs;
  double initial_noise_floor = 0.0;
};

class TrainingDiverged : public Error {
 public:
  TrainingDiverged(const std::string& what, TrainTrace trace)
      : Error(ErrorCategory::kDiverged, what), trace_(std::move(trace)) {}
  const TrainTrace& trace() const { return trace_; }

 private:
  TrainTrace trace_;
};

template <typename Scalar>
class Optimizer {
 public:
  using Vec = typename ScoreNetwork<Scalar>::Vec;

  Optimizer(OptimizerKind kind, Eigen::Index size) : kind_(kind) {
    if (kind_ == OptimizerKind::kAdam) {
      m_ = Vec::Zero(size);
      v_ = Vec::Zero(size);
    }
  }

  void step(Vec& theta, const Vec& grad, double lr) {
    if (kind_ == OptimizerKind::kSgd) {
      theta -= static_cast<Scalar>(lr) * grad;
      return;
    }
    constexpr double kBeta1 = 0.9;
    constexpr double kBeta2 = 0.999;
    constexpr double kEps = 1e-8;
    ++t_;
    m_ = Scalar(kBeta1) * m_ + Scalar(1 - kBeta1) * grad;
    v_ = Scalar(kBeta2) * v_ + Scalar(1 - kBeta2) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(kBeta1, t_);
    const double c2 = 1.0 - std::pow(kBeta2, t_);
    const Scalar step = static_cast<Scalar>(lr / c1);
    const Scalar inv_c2 = static_cast<Scalar>(1.0 / c2);
    theta.array() -= step * m_.array() / ((v_.array() * inv_c2).sqrt() + Scalar(kEps));
  }

 private:
  OptimizerKind kind_;
  Vec m_;
  Vec v_;
  long t_ = 0;
};

/// Blind 1/rho estimate used to seed the noise floor: median of per-pilot
/// estimates over (at most) the first `max_pilots` pilots. Returns nullopt when
/// the pilot length is not 2 * (perfect square) or no pilot yields an estimate.
inline std::optional<double> blind_noise_floor(const PilotSet& pilots, int window_side,
                                               int max_pilots = 256) {
  long long side = 0;
  if (pilots.dim() % 2 != 0 || !is_perfect_square(pilots.dim() / 2, &side) || side < 3) {
    return std::nullopt;
  }
  VscConfig cfg{window_side > 0 ? window_side : default_window_side(static_cast<int>(side))};
  std::vector<double> est;
  const Eigen::Index count = std::min<Eigen::Index>(pilots.size(), max_pilots);
  for (Eigen::Index i = 0; i < count; ++i) {
    try {
      est.push_back(estimate_inv_snr(pilots.sample(i), cfg).inv_rho_hat);
    } catch (const Error&) {
    }
  }
  if (est.empty()) return std::nullopt;
  auto mid = est.begin() + static_cast<std::ptrdiff_t>(est.size() / 2);
  std::nth_element(est.begin(), mid, est.end());
  return *mid > 0.0 ? std::optional<double>(*mid) : std::nullopt;
}

struct ShrinkageInit {
  Matrix basis;  // leading eigenvectors of (1/M) sum y y^T
  Vector gains;  // (mu - v) / mu above the bulk edge, 0 inside it
};

/// Linear denoiser seeded from the pilots alone. Eigenvalues mu of the pilot
/// second moment that clear the Marchenko-Pastur edge v (1 + sqrt(n / M))^2
/// get the Wiener gain (mu - v) / mu; the rest are treated as noise.
inline ShrinkageInit shrinkage_init(const PilotSet& pilots, int count, double noise_floor) {
  const Eigen::Index dim = pilots.dim();
  const double m = static_cast<double>(pilots.size());
  Matrix s = Matrix::Zero(dim, dim);
  s.selfadjointView<Eigen::Lower>().rankUpdate(pilots.matrix(), 1.0 / m);
  s.triangularView<Eigen::StrictlyUpper>() = s.transpose();
  const EigenPairs eig = eigh(SymMatrix(std::move(s)));
  const Eigen::Index k = std::min<Eigen::Index>(count, dim);
  const double edge = noise_floor * std::pow(1.0 + std::sqrt(static_cast<double>(dim) / m), 2);
  ShrinkageInit out{eig.vectors.leftCols(k), Vector::Zero(k)};
  for (Eigen::Index i = 0; i < k; ++i) {
    const double mu = eig.values[i];
    if (mu > edge) out.gains[i] = (mu - noise_floor) / mu;
  }
  return out;
}

template <typename Scalar = float>
struct TrainResult {
  ScoreNetwork<Scalar> network;
  TrainTrace trace;
};

template <typename Scalar>
using EpochCallback = std::function<void(const EpochRecord&, const ScoreNetwork<Scalar>&)>;

/// Self-supervised training from received pilots only.
template <typename Scalar = float>
TrainResult<Scalar> train(const PilotSet& pilots, const TrainConfig& cfg,
                          const EpochCallback<Scalar>& on_epoch = {}) {
  using Mat = typename ScoreNetwork<Scalar>::Mat;
  using Vec = typename ScoreNetwork<Scalar>::Vec;
  validate(cfg);
  require(pilots.size() >= 1, "train: empty dataset");

  RngStream init_rng(cfg.seed, 0);
  NetworkShape shape{static_cast<int>(pilots.dim()), cfg.hidden, cfg.blocks};
  TrainResult<Scalar> result{ScoreNetwork<Scalar>::initialized(shape, init_rng), {}};
  ScoreNetwork<Scalar>& net = result.network;
  net.set_sigma_scale(static_cast<Scalar>(cfg.sigma_max));

  double floor = cfg.noise_floor;
  if (cfg.noise_floor_init == NoiseFloorInit::kBlindPca) {
    if (auto est = blind_noise_floor(pilots, cfg.window_side)) floor = *est;
  }
  net.set_noise_floor(floor);
  result.trace.initial_noise_floor = floor;
  if (cfg.subspace_init) {
    const ShrinkageInit init = shrinkage_init(pilots, cfg.hidden, floor);
    net.init_from_subspace(init.basis, init.gains);
  }

  Optimizer<Scalar> opt(cfg.optimizer, net.parameter_count());
  RngStream rng(cfg.seed, 1);
  const Eigen::Index m = pilots.size();
  const Eigen::Index dim = pilots.dim();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const auto start = std::chrono::steady_clock::now();

  for (int q = 1; q <= cfg.epochs; ++q) {
    const double xi = annealed_xi(cfg, q);
    const double lr = learning_rate_at(cfg, q);
    std::shuffle(order.begin(), order.end(), rng.engine());
    double loss_sum = 0.0;
    int batches = 0;
    for (Eigen::Index b0 = 0; b0 < m; b0 += cfg.batch_size) {
      const Eigen::Index b = std::min<Eigen::Index>(cfg.batch_size, m - b0);
      Mat y(dim, b);
      Mat u(dim, b);
      Vec sigma(b);
      for (Eigen::Index j = 0; j < b; ++j) {
        y.col(j) = pilots.sample(order[static_cast<std::size_t>(b0 + j)]).template cast<Scalar>();
        sigma[j] = static_cast<Scalar>(std::max(std::abs(xi * rng.normal()), cfg.sigma_floor));
        for (Eigen::Index i = 0; i < dim; ++i) u(i, j) = static_cast<Scalar>(rng.normal());
      }
      auto lg = batch_dae_loss(net, y, u, sigma, cfg.antithetic);
      if (!std::isfinite(lg.loss) || !lg.gradient.allFinite()) {
        throw TrainingDiverged("train: non-finite loss at epoch " + std::to_string(q),
                               result.trace);
      }
      if (cfg.clip_norm > 0.0) {
        const double norm = static_cast<double>(lg.gradient.norm());
        if (norm > cfg.clip_norm) lg.gradient *= static_cast<Scalar>(cfg.clip_norm / norm);
      }
      opt.step(net.parameters(), lg.gradient, lr);
      loss_sum += lg.loss;
      ++batches;
    }
    EpochRecord rec;
    rec.epoch = q;
    rec.mean_loss = loss_sum / batches;
    rec.xi = xi;
    rec.learning_rate = lr;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    rec.noise_floor = net.noise_floor();
    result.trace.epochs.push_back(rec);
    if (!net.parameters().allFinite()) {
      throw TrainingDiverged("train: non-finite parameters at epoch " + std::to_string(q),
                             result.trace);
    }
    if (on_epoch) on_epoch(rec, net);
  }
  return result;
}

}  // namespace hmimo
