#pragma once

// Channel estimators compared by the benchmark: least squares, oracle and
// sample-covariance MMSE, and the score-based estimator
// h_hat = y + (1/rho) * score(y).

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <string>

#include "hmimo/error.hpp"
#include "hmimo/numerics.hpp"
#include "hmimo/scorenet.hpp"

namespace hmimo {

enum class EstimatorKind { kLs, kOracleMmse, kSampleMmse, kScoreMmse };

inline std::string to_string(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::kLs: return "ls";
    case EstimatorKind::kOracleMmse: return "oracle_mmse";
    case EstimatorKind::kSampleMmse: return "sample_mmse";
    case EstimatorKind::kScoreMmse: return "score_mmse";
  }
  return "unknown";
}

struct ChannelEstimate {
  Vector h_hat;
  EstimatorKind kind = EstimatorKind::kLs;
  double inv_rho = 0.0;  // noise variance the estimator was given (0 for LS)
};

inline ChannelEstimate estimate_ls(const Vector& y) {
  return {y, EstimatorKind::kLs, 0.0};
}

/// Linear MMSE filter C (C + inv_rho I)^{-1}, factored once and applied to
/// any number of pilots.
class LinearMmse {
 public:
  LinearMmse(const SymMatrix& cov, double inv_rho)
      : cov_(cov.matrix()),
        inv_rho_(inv_rho),
        solver_(SymMatrix(cov.matrix() + inv_rho * Matrix::Identity(cov.dim(), cov.dim()))) {
    require(inv_rho > 0.0, "LinearMmse: inv_rho must be positive");
  }

  double inv_rho() const { return inv_rho_; }

  Vector apply(const Vector& y) const { return cov_ * solver_.solve(y); }
  Matrix apply(const Matrix& y) const { return cov_ * solver_.solve(y); }

 private:
  Matrix cov_;
  double inv_rho_;
  SpdSolver solver_;
};

inline ChannelEstimate estimate_oracle_mmse(const Vector& y, const SymMatrix& cov,
                                            double inv_rho) {
  require(y.size() == cov.dim(), "estimate_oracle_mmse: dimension mismatch");
  return {LinearMmse(cov, inv_rho).apply(y), EstimatorKind::kOracleMmse, inv_rho};
}

/// (1/L) sum_l y_l y_l^T - inv_rho I, with negative eigenvalues clipped to 0.
struct SampleCovariance {
  SymMatrix cov;
  Eigen::Index sample_count = 0;
  bool clipped = false;
};

inline SampleCovariance sample_covariance(const Matrix& pilots, double inv_rho) {
  require(pilots.cols() >= 2, "sample_covariance: need at least 2 pilots");
  const Eigen::Index dim = pilots.rows();
  Matrix s = Matrix::Zero(dim, dim);
  s.selfadjointView<Eigen::Lower>().rankUpdate(pilots, 1.0 / static_cast<double>(pilots.cols()));
  s.triangularView<Eigen::StrictlyUpper>() = s.transpose();
  s.diagonal().array() -= inv_rho;

  EigenPairs eig = eigh(SymMatrix(std::move(s)));
  SampleCovariance out;
  out.sample_count = pilots.cols();
  out.clipped = eig.values.minCoeff() < 0.0;
  eig.values = eig.values.cwiseMax(0.0);
  out.cov = SymMatrix::symmetrized(eig.reconstruct());
  return out;
}

inline ChannelEstimate estimate_sample_mmse(const Vector& y, const SampleCovariance& cs,
                                            double inv_rho) {
  return {LinearMmse(cs.cov, inv_rho).apply(y), EstimatorKind::kSampleMmse, inv_rho};
}

inline ChannelEstimate estimate_sample_mmse(const Vector& y, const Matrix& pilots,
                                            double inv_rho) {
  return estimate_sample_mmse(y, sample_covariance(pilots, inv_rho), inv_rho);
}

/// Tweedie form: y + inv_rho * score(y).
template <typename Scalar>
ChannelEstimate estimate_score_mmse(const Vector& y, const ScoreNetwork<Scalar>& net,
                                    double inv_rho) {
  require(inv_rho >= 0.0, "estimate_score_mmse: inv_rho must be nonnegative");
  Vector s = score(net, y);
  return {y + inv_rho * s, EstimatorKind::kScoreMmse, inv_rho};
}

/// Same with a caller-supplied score function, e.g. an exact one.
template <typename ScoreFn>
ChannelEstimate estimate_score_mmse_with(const Vector& y, ScoreFn&& score_fn, double inv_rho) {
  Vector s = score_fn(y);
  return {y + inv_rho * s, EstimatorKind::kScoreMmse, inv_rho};
}

/// Score of N(0, C + inv_rho I): -(C + inv_rho I)^{-1} y.
class GaussianScore {
 public:
  GaussianScore(const SymMatrix& cov, double inv_rho)
      : solver_(SymMatrix(cov.matrix() + inv_rho * Matrix::Identity(cov.dim(), cov.dim()))) {}

  Vector operator()(const Vector& y) const { return -solver_.solve(y); }

 private:
  SpdSolver solver_;
};

struct Nmse {
  double ratio = 0.0;
  double db = 0.0;  // -infinity for an exact estimate
};

inline double to_db(double ratio) {
  return ratio > 0.0 ? 10.0 * std::log10(ratio) : -std::numeric_limits<double>::infinity();
}

/// sum ||h_hat - h||^2 / sum ||h||^2 over matching columns.
inline Nmse nmse(const Matrix& estimates, const Matrix& truths) {
  require(estimates.size() > 0, "nmse: empty input");
  require(estimates.rows() == truths.rows() && estimates.cols() == truths.cols(),
          "nmse: shape mismatch");
  const double signal = truths.squaredNorm();
  if (!(signal > 0.0)) throw Error(ErrorCategory::kNumerical, "nmse: zero signal energy");
  Nmse out;
  out.ratio = (estimates - truths).squaredNorm() / signal;
  out.db = to_db(out.ratio);
  return out;
}

/// Analytic oracle NMSE: tr(C - C (C + inv_rho I)^{-1} C) / tr(C).
inline double oracle_nmse_analytic(const SymMatrix& cov, double inv_rho) {
  const Matrix& c = cov.matrix();
  const SpdSolver solver(SymMatrix(c + inv_rho * Matrix::Identity(cov.dim(), cov.dim())));
  const Matrix x = solver.solve(c);
  return (c.trace() - (c * x).trace()) / c.trace();
}

}  // namespace hmimo
