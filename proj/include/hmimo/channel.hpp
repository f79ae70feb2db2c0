#pragma once

// UPA geometry, spatial correlation models, and correlated-Rayleigh pilot
// synthesis under the measurement model y = h + n, n ~ N(0, (1/rho) I).

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "hmimo/error.hpp"
#include "hmimo/numerics.hpp"

namespace hmimo {

using ComplexVector = Eigen::VectorXcd;
using ComplexMatrix = Eigen::MatrixXcd;

enum class Environment { kIsotropic, kTruncated, kCustom };

inline std::string to_string(Environment env) {
  switch (env) {
    case Environment::kIsotropic: return "isotropic";
    case Environment::kTruncated: return "truncated";
    case Environment::kCustom: return "custom";
  }
  return "unknown";
}

inline Environment environment_from_string(const std::string& s) {
  if (s == "isotropic") return Environment::kIsotropic;
  if (s == "truncated") return Environment::kTruncated;
  if (s == "custom") return Environment::kCustom;
  throw Error(ErrorCategory::kInvalidArgument, "unknown environment '" + s + "'");
}

/// Uniform planar array, sqrt(N) x sqrt(N), antennas indexed row by row.
/// Positions are in carrier wavelengths; z is always 0.
struct ArrayGeometry {
  int n_antennas = 0;
  int side = 0;
  double spacing = 0.0;
  Eigen::Matrix3Xd positions;

  Eigen::Vector3d position(int n) const { return positions.col(n); }
};

inline ArrayGeometry build_geometry(int n_antennas, double spacing) {
  long long side = 0;
  if (n_antennas < 1 || !is_perfect_square(n_antennas, &side)) {
    throw Error(ErrorCategory::kInvalidArgument,
                "build_geometry: N=" + std::to_string(n_antennas) + " is not a perfect square");
  }
  require(spacing > 0.0, "build_geometry: spacing must be positive");

  ArrayGeometry g;
  g.n_antennas = n_antennas;
  g.side = static_cast<int>(side);
  g.spacing = spacing;
  g.positions.resize(3, n_antennas);
  const double half = 0.5 * static_cast<double>(side - 1) * spacing;
  for (int n = 0; n < n_antennas; ++n) {
    g.positions(0, n) = -half + spacing * static_cast<double>(n % side);
    g.positions(1, n) = half - spacing * static_cast<double>(n / side);
    g.positions(2, n) = 0.0;
  }
  return g;
}

inline Eigen::Vector3d direction(double azimuth, double elevation) {
  return {std::cos(elevation) * std::cos(azimuth), std::cos(elevation) * std::sin(azimuth),
          std::sin(elevation)};
}

inline ComplexVector array_response(const ArrayGeometry& g, double azimuth, double elevation) {
  constexpr double kHalfPi = std::numbers::pi / 2;
  require(std::abs(azimuth) <= kHalfPi + 1e-12 && std::abs(elevation) <= kHalfPi + 1e-12,
          "array_response: angles must lie in [-pi/2, pi/2]");
  const Eigen::Vector3d t = direction(azimuth, elevation);
  ComplexVector a(g.n_antennas);
  for (int n = 0; n < g.n_antennas; ++n) {
    const double phase = 2.0 * std::numbers::pi * t.dot(g.positions.col(n));
    a[n] = std::polar(1.0, phase);
  }
  return a;
}

/// Normalized sinc, sin(pi x) / (pi x).
inline double sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

/// Joint azimuth/elevation density on [-pi/2, pi/2]^2 plus the average gain.
struct ScatteringDensity {
  std::function<double(double azimuth, double elevation)> density;
  double gain = 1.0;
};

/// Real 2N x 2N covariance of [Re h; Im h] for h ~ CN(0, R):
/// (1/2) [[Re R, -Im R], [Im R, Re R]].
inline SymMatrix real_representation(const ComplexMatrix& r) {
  const Eigen::Index n = r.rows();
  Matrix c(2 * n, 2 * n);
  c.topLeftCorner(n, n) = r.real();
  c.topRightCorner(n, n) = -r.imag();
  c.bottomLeftCorner(n, n) = r.imag();
  c.bottomRightCorner(n, n) = r.real();
  return SymMatrix::symmetrized(0.5 * c);
}

struct SpatialCovariance {
  ComplexMatrix r;
  SymMatrix real_cov;
  /// Eigenpairs of Re R; present whenever Im R vanishes.
  std::optional<EigenPairs> eigen;
  Environment environment = Environment::kIsotropic;
  double gain = 1.0;

  int n_antennas() const { return static_cast<int>(r.rows()); }
  bool is_real() const { return r.imag().cwiseAbs().maxCoeff() == 0.0; }
};

namespace detail {

inline SpatialCovariance finish_covariance(ComplexMatrix r, Environment env, double gain) {
  SpatialCovariance cov;
  // Exact Hermitian symmetry; quadrature leaves rounding-level asymmetry.
  r = 0.5 * (r + r.adjoint()).eval();
  cov.real_cov = real_representation(r);
  if (r.imag().cwiseAbs().maxCoeff() == 0.0) {
    cov.eigen = eigh(SymMatrix(r.real()));
  }
  cov.r = std::move(r);
  cov.environment = env;
  cov.gain = gain;
  return cov;
}

}  // namespace detail

inline SpatialCovariance isotropic_covariance(const ArrayGeometry& g, double gain = 1.0) {
  require(gain > 0.0, "isotropic_covariance: gain must be positive");
  const int n = g.n_antennas;
  Matrix r(n, n);
  for (int l = 0; l < n; ++l) {
    r(l, l) = gain;
    for (int m = l + 1; m < n; ++m) {
      const double dist = (g.positions.col(l) - g.positions.col(m)).norm();
      r(l, m) = r(m, l) = gain * sinc(2.0 * dist);
    }
  }
  return detail::finish_covariance(r.cast<std::complex<double>>(), Environment::kIsotropic, gain);
}

/// Midpoint-rule evaluation of beta * integral f(phi, theta) a a^H over [-pi/2, pi/2]^2.
inline SpatialCovariance numerical_covariance(const ArrayGeometry& g, const ScatteringDensity& f,
                                              int nodes_per_axis = 181) {
  require(f.gain > 0.0, "numerical_covariance: gain must be positive");
  require(nodes_per_axis >= 2, "numerical_covariance: need at least 2 nodes per axis");
  const double step = std::numbers::pi / nodes_per_axis;
  const double start = -std::numbers::pi / 2 + 0.5 * step;

  std::vector<std::pair<Eigen::Vector3d, double>> nodes;
  double mass = 0.0;
  for (int i = 0; i < nodes_per_axis; ++i) {
    const double az = start + i * step;
    for (int j = 0; j < nodes_per_axis; ++j) {
      const double el = start + j * step;
      const double w = f.density(az, el) * step * step;
      if (w < 0.0 || !std::isfinite(w)) {
        throw Error(ErrorCategory::kInvalidArgument,
                    "numerical_covariance: density must be finite and nonnegative");
      }
      mass += w;
      if (w > 0.0) nodes.emplace_back(direction(az, el), w);
    }
  }
  if (std::abs(mass - 1.0) > 1e-3) {
    throw Error(ErrorCategory::kInvalidArgument,
                "numerical_covariance: density integrates to " + std::to_string(mass) +
                    ", expected 1");
  }

  const int n = g.n_antennas;
  const auto k = static_cast<Eigen::Index>(nodes.size());
  // R = beta * A W A^H with A the N x K steering matrix.
  ComplexMatrix a(n, k);
  Vector w(k);
  for (Eigen::Index c = 0; c < k; ++c) {
    w[c] = nodes[c].second;
    for (int m = 0; m < n; ++m) {
      a(m, c) = std::polar(1.0, 2.0 * std::numbers::pi * nodes[c].first.dot(g.positions.col(m)));
    }
  }
  ComplexMatrix weighted = a * w.cwiseSqrt().asDiagonal();
  ComplexMatrix r = f.gain * (weighted * weighted.adjoint());
  return detail::finish_covariance(std::move(r), Environment::kCustom, f.gain);
}

/// Number of eigenvalues above rel_threshold * lambda_max.
inline int effective_rank(const Vector& descending_values, double rel_threshold) {
  if (descending_values.size() == 0) return 0;
  const double cut = rel_threshold * descending_values[0];
  int count = 0;
  for (Eigen::Index i = 0; i < descending_values.size(); ++i) {
    if (descending_values[i] > cut) ++count;
  }
  return count;
}

/// Non-isotropic covariance that keeps the leading ceil(rank/denominator)
/// eigenpairs of an isotropic covariance, rescaled so tr(R) = beta N.
/// rank counts eigenvalues above 1e-6 lambda_max.
inline SpatialCovariance truncated_covariance(const SpatialCovariance& iso, int denominator) {
  require(iso.environment == Environment::kIsotropic,
          "truncated_covariance: input must be an isotropic covariance");
  require(denominator >= 1, "truncated_covariance: denominator must be >= 1");
  require(iso.eigen.has_value(), "truncated_covariance: isotropic eigenpairs missing");

  const EigenPairs& eig = *iso.eigen;
  const int rank = effective_rank(eig.values, 1e-6);
  const int keep = (rank + denominator - 1) / denominator;
  if (keep <= 0 || eig.values.head(keep).sum() <= 0.0) {
    throw Error(ErrorCategory::kNumerical, "truncated_covariance: no eigenvalues kept");
  }
  const int n = iso.n_antennas();
  const double scale = iso.gain * n / eig.values.head(keep).sum();
  Matrix v = eig.vectors.leftCols(keep);
  Matrix r = v * (scale * eig.values.head(keep)).asDiagonal() * v.transpose();
  r = 0.5 * (r + r.transpose()).eval();

  SpatialCovariance out;
  out.r = r.cast<std::complex<double>>();
  out.real_cov = real_representation(out.r);
  EigenPairs kept;
  kept.values = Vector::Zero(n);
  kept.values.head(keep) = scale * eig.values.head(keep);
  kept.vectors = eig.vectors;
  out.eigen = std::move(kept);
  out.environment = Environment::kTruncated;
  out.gain = iso.gain;
  return out;
}

/// Draws real channel vectors [Re h; Im h] with h ~ CN(0, R).
class ChannelSampler {
 public:
  explicit ChannelSampler(const SpatialCovariance& cov) : n_(cov.n_antennas()) {
    if (cov.eigen.has_value()) {
      // Re and Im parts are i.i.d. N(0, R / 2) when R is real.
      const EigenPairs& eig = *cov.eigen;
      const double scale = eig.values.size() ? eig.values.cwiseAbs().maxCoeff() : 0.0;
      Eigen::Index keep = 0;
      for (Eigen::Index i = 0; i < eig.values.size(); ++i) {
        if (eig.values[i] < -1e-9 * scale) {
          throw Error(ErrorCategory::kNumerical, "ChannelSampler: covariance is not PSD");
        }
        if (eig.values[i] > 0.0) ++keep;
      }
      half_factor_ = eig.vectors.leftCols(keep) *
                     (0.5 * eig.values.head(keep)).cwiseSqrt().asDiagonal();
    } else {
      full_ = GaussianSampler(cov.real_cov);
    }
  }

  int n_antennas() const { return n_; }

  Vector draw(RngStream& rng) const {
    if (full_) return full_->draw(rng);
    Vector h(2 * n_);
    const Eigen::Index k = half_factor_.cols();
    if (k == 0) return Vector::Zero(2 * n_);
    Matrix z(k, 2);
    for (int c = 0; c < 2; ++c) rng.fill_normal(z.col(c));
    Matrix hz = half_factor_ * z;
    h.head(n_) = hz.col(0);
    h.tail(n_) = hz.col(1);
    return h;
  }

 private:
  int n_;
  Matrix half_factor_;
  std::optional<GaussianSampler> full_;
};

/// Received pilots only; this is everything the self-supervised trainer sees.
class PilotSet {
 public:
  PilotSet() = default;
  explicit PilotSet(Matrix y) : y_(std::move(y)) {}

  Eigen::Index dim() const { return y_.rows(); }
  Eigen::Index size() const { return y_.cols(); }
  auto sample(Eigen::Index i) const { return y_.col(i); }
  const Matrix& matrix() const { return y_; }

 private:
  Matrix y_;  // one column per observation
};

struct PilotObservation {
  Vector y;
  double inv_snr = 0.0;
  Environment environment = Environment::kIsotropic;
  std::size_t index = 0;
  std::optional<Vector> h;
};

/// Pilots plus evaluation metadata; ground truth only when requested.
struct PilotDataset {
  PilotSet pilots;
  std::optional<Matrix> truth;
  double inv_snr = 0.0;
  Environment environment = Environment::kIsotropic;

  Eigen::Index size() const { return pilots.size(); }
  bool has_truth() const { return truth.has_value(); }

  PilotObservation observation(Eigen::Index i) const {
    PilotObservation obs;
    obs.y = pilots.sample(i);
    obs.inv_snr = inv_snr;
    obs.environment = environment;
    obs.index = static_cast<std::size_t>(i);
    if (truth) obs.h = truth->col(i);
    return obs;
  }
};

/// Sample i uses stream `rng.child(i)`, so the result does not depend on how
/// the samples are scheduled.
inline PilotDataset synthesize_dataset(const SpatialCovariance& cov, double inv_snr, int count,
                                       const RngStream& rng, bool with_truth) {
  require(inv_snr >= 0.0, "synthesize_dataset: inv_snr must be nonnegative");
  require(count >= 1, "synthesize_dataset: count must be >= 1");
  const ChannelSampler sampler(cov);
  const int dim = 2 * cov.n_antennas();
  const double noise_std = std::sqrt(inv_snr);

  Matrix y(dim, count);
  Matrix h;
  if (with_truth) h.resize(dim, count);
  for (int i = 0; i < count; ++i) {
    RngStream stream = rng.child(static_cast<std::uint64_t>(i));
    Vector hi = sampler.draw(stream);
    Vector noise = stream.normal_vector(dim);
    y.col(i) = hi + noise_std * noise;
    if (with_truth) h.col(i) = hi;
  }

  PilotDataset ds;
  ds.pilots = PilotSet(std::move(y));
  if (with_truth) ds.truth = std::move(h);
  ds.inv_snr = inv_snr;
  ds.environment = cov.environment;
  return ds;
}

}  // namespace hmimo
