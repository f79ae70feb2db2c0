#pragma once

// Blind estimation of the noise variance 1/rho from one pilot vector.
//
// The pilot is arranged as a sqrt(N) x sqrt(N) x 2 tensor and cut into
// overlapping sqrt(d) x sqrt(d) x 2 windows (virtual subarray channels). The
// channel part of those windows lives in a low-dimensional subspace, so most
// eigenvalues of their sample covariance carry noise only. Those redundant
// eigenvalues are split from the principal ones iteratively and averaged.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "hmimo/error.hpp"
#include "hmimo/numerics.hpp"

namespace hmimo {

/// Window geometry for the virtual subarray decomposition.
struct VscConfig {
  int window_side = 7;
};

struct VscLayout {
  int array_side = 0;
  int window_side = 0;
  int window_dim = 0;  // 2d
  int count = 0;       // s = (sqrt(N) - sqrt(d) + 1)^2
  /// True when s < 2d; the sample covariance is then poorly conditioned.
  bool undersampled = false;
};

inline VscLayout vsc_layout(Eigen::Index pilot_dim, const VscConfig& cfg) {
  require(pilot_dim > 0 && pilot_dim % 2 == 0, "vsc: pilot length must be 2N");
  long long side = 0;
  if (!is_perfect_square(pilot_dim / 2, &side)) {
    throw Error(ErrorCategory::kInvalidArgument, "vsc: N is not a perfect square");
  }
  require(cfg.window_side >= 1, "vsc: window side must be >= 1");
  if (cfg.window_side > side) {
    throw Error(ErrorCategory::kInvalidArgument,
                "vsc: window " + std::to_string(cfg.window_side) + "x" +
                    std::to_string(cfg.window_side) + " larger than array " +
                    std::to_string(side) + "x" + std::to_string(side));
  }
  VscLayout l;
  l.array_side = static_cast<int>(side);
  l.window_side = cfg.window_side;
  l.window_dim = 2 * cfg.window_side * cfg.window_side;
  const int per_axis = l.array_side - cfg.window_side + 1;
  l.count = per_axis * per_axis;
  l.undersampled = l.count < l.window_dim;
  return l;
}

/// Sliding-window patches, one per column. Each column holds the real window
/// (row-major) followed by the imaginary window. Columns are ordered by window
/// origin, row-major.
inline Matrix extract_vscs(const Eigen::Ref<const Vector>& y, const VscConfig& cfg) {
  const VscLayout l = vsc_layout(y.size(), cfg);
  const int n = l.array_side * l.array_side;
  const int w = l.window_side;
  const int d = w * w;
  const int per_axis = l.array_side - w + 1;
  Matrix out(l.window_dim, l.count);
  int t = 0;
  for (int r0 = 0; r0 < per_axis; ++r0) {
    for (int c0 = 0; c0 < per_axis; ++c0, ++t) {
      for (int part = 0; part < 2; ++part) {
        for (int i = 0; i < w; ++i) {
          const int base = part * n + (r0 + i) * l.array_side + c0;
          out.col(t).segment(part * d + i * w, w) = y.segment(base, w);
        }
      }
    }
  }
  return out;
}

/// (1/s) sum_t y_t y_t^T, no mean removal.
inline SymMatrix vsc_covariance(const Matrix& vscs) {
  require(vscs.cols() >= 1, "vsc_covariance: need at least one window");
  Matrix s = Matrix::Zero(vscs.rows(), vscs.rows());
  s.selfadjointView<Eigen::Lower>().rankUpdate(vscs, 1.0 / static_cast<double>(vscs.cols()));
  s.triangularView<Eigen::StrictlyUpper>() = s.transpose();
  return SymMatrix(std::move(s));
}

enum class SeparationRule {
  /// Gate at the Marchenko-Pastur upper edge mu (1 + sqrt(r / s))^2, where r is
  /// the current redundant count.
  kMarchenkoPastur,
  /// Gate at mu (1 + c sqrt(2 / s)), treating each redundant eigenvalue as
  /// N(1/rho, 2 / (s rho^2)).
  kGaussian,
};

inline std::string to_string(SeparationRule rule) {
  return rule == SeparationRule::kGaussian ? "gaussian" : "marchenko-pastur";
}

inline SeparationRule separation_rule_from_string(const std::string& s) {
  if (s == "gaussian") return SeparationRule::kGaussian;
  if (s == "marchenko-pastur" || s == "mp") return SeparationRule::kMarchenkoPastur;
  throw Error(ErrorCategory::kInvalidArgument, "unknown separation rule '" + s + "'");
}

struct SnrEstimate {
  double inv_rho_hat = 0.0;
  int redundant = 0;
  int principal = 0;
  int iterations = 0;
};

struct SeparationOptions {
  SeparationRule rule = SeparationRule::kMarchenkoPastur;
  double gate_sigmas = 3.0;  // only used by kGaussian
  int max_iterations = 50;
};

/// Splits descending eigenvalues into principal and redundant sets and returns
/// the mean of the redundant ones.
inline SnrEstimate separate_redundant(const Vector& descending, int sample_count,
                                      const SeparationOptions& opt = {}) {
  const auto m = static_cast<int>(descending.size());
  require(m >= 1 && sample_count >= 1, "separate_redundant: empty input");
  // Redundant eigenvalues always form a suffix of the sorted list.
  int redundant = m;
  int iterations = 0;
  double mu = 0.0;
  for (; iterations < opt.max_iterations; ++iterations) {
    if (redundant == 0) break;
    mu = descending.tail(redundant).mean();
    double gate = 0.0;
    if (opt.rule == SeparationRule::kGaussian) {
      gate = mu * (1.0 + opt.gate_sigmas * std::sqrt(2.0 / sample_count));
    } else {
      const double edge = 1.0 + std::sqrt(static_cast<double>(redundant) / sample_count);
      gate = mu * edge * edge;
    }
    int next = 0;
    for (int i = m - 1; i >= 0 && descending[i] <= gate; --i) ++next;
    if (next == redundant) break;
    redundant = next;
  }
  if (redundant == 0 || !(mu > 0.0)) {
    throw Error(ErrorCategory::kNumerical,
                "estimate_inv_snr: no redundant subspace (every eigenvalue classified principal)");
  }
  SnrEstimate est;
  est.inv_rho_hat = descending.tail(redundant).mean();
  est.redundant = redundant;
  est.principal = m - redundant;
  est.iterations = iterations + 1;
  return est;
}

inline SnrEstimate estimate_inv_snr(const Eigen::Ref<const Vector>& y, const VscConfig& cfg,
                                    const SeparationOptions& opt = {}) {
  const Matrix vscs = extract_vscs(y, cfg);
  if (vscs.cols() < 2) {
    throw Error(ErrorCategory::kInvalidArgument,
                "estimate_inv_snr: need at least 2 windows, window equals the array");
  }
  const Vector lambda = eigvalsh(vsc_covariance(vscs));
  return separate_redundant(lambda, static_cast<int>(vscs.cols()), opt);
}

/// Averages per-pilot estimates over the columns of `pilots`.
inline double estimate_inv_snr_mean(const Matrix& pilots, const VscConfig& cfg,
                                    const SeparationOptions& opt = {}) {
  require(pilots.cols() >= 1, "estimate_inv_snr_mean: no pilots");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < pilots.cols(); ++i) {
    acc += estimate_inv_snr(pilots.col(i), cfg, opt).inv_rho_hat;
  }
  return acc / static_cast<double>(pilots.cols());
}

/// Accuracy of a set of 1/rho estimates against the true value:
/// bias = |truth - mean|, std = population standard deviation,
/// rmse = sqrt(mean (truth - estimate)^2).
struct SnrStats {
  double truth = 0.0;
  double mean = 0.0;
  double bias = 0.0;
  double std = 0.0;
  double rmse = 0.0;
  std::size_t count = 0;
};

inline SnrStats summarize_estimates(const std::vector<double>& estimates, double truth) {
  require(!estimates.empty(), "summarize_estimates: no estimates");
  SnrStats s;
  s.truth = truth;
  s.count = estimates.size();
  const double n = static_cast<double>(estimates.size());
  for (double e : estimates) s.mean += e;
  s.mean /= n;
  double var = 0.0;
  double mse = 0.0;
  for (double e : estimates) {
    var += (e - s.mean) * (e - s.mean);
    mse += (e - truth) * (e - truth);
  }
  s.bias = std::abs(truth - s.mean);
  s.std = std::sqrt(var / n);
  s.rmse = std::sqrt(mse / n);
  return s;
}

/// Window side used when none is configured: 7 for large arrays, 5 for medium.
inline int default_window_side(int array_side) {
  if (array_side >= 24) return 7;
  if (array_side >= 10) return 5;
  return std::max(2, array_side / 2);
}

}  // namespace hmimo
