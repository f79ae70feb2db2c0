#pragma once

// Dense linear-algebra substrate: symmetric eigendecomposition, Gaussian
// sampling from (possibly rank-deficient) covariances, SPD solves, and keyed
// random streams. Backed by Eigen.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>

#include "hmimo/error.hpp"

namespace hmimo {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Real symmetric matrix. Construction checks symmetry.
class SymMatrix {
 public:
  SymMatrix() = default;

  explicit SymMatrix(Matrix m) : m_(std::move(m)) {
    require(m_.rows() == m_.cols(), "SymMatrix: matrix is not square");
    const double scale = std::max(1.0, m_.cwiseAbs().maxCoeff());
    const double asym = (m_ - m_.transpose()).cwiseAbs().maxCoeff();
    require(asym <= 1e-12 * scale,
            "SymMatrix: asymmetry " + std::to_string(asym) + " exceeds tolerance");
  }

  /// Averages m with its transpose; for products that are symmetric only up to rounding.
  static SymMatrix symmetrized(const Matrix& m) {
    Matrix s = 0.5 * (m + m.transpose());
    return SymMatrix(std::move(s));
  }

  static SymMatrix identity(Eigen::Index dim) { return SymMatrix(Matrix::Identity(dim, dim)); }

  Eigen::Index dim() const { return m_.rows(); }
  const Matrix& matrix() const { return m_; }
  double operator()(Eigen::Index i, Eigen::Index j) const { return m_(i, j); }

 private:
  Matrix m_;
};

/// Eigenpairs with values in descending order and orthonormal columns in `vectors`.
struct EigenPairs {
  Vector values;
  Matrix vectors;

  Matrix reconstruct() const {
    return vectors * values.asDiagonal() * vectors.transpose();
  }
};

inline EigenPairs eigh(const SymMatrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(m.matrix());
  if (solver.info() != Eigen::Success) {
    throw Error(ErrorCategory::kNumerical,
                "eigh: no convergence for " + std::to_string(m.dim()) + "x" +
                    std::to_string(m.dim()) + " matrix");
  }
  // Eigen returns ascending order.
  EigenPairs out;
  out.values = solver.eigenvalues().reverse();
  out.vectors = solver.eigenvectors().rowwise().reverse();
  return out;
}

/// Eigenvalues only, descending.
inline Vector eigvalsh(const SymMatrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(m.matrix(), Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) {
    throw Error(ErrorCategory::kNumerical,
                "eigvalsh: no convergence for " + std::to_string(m.dim()) + "x" +
                    std::to_string(m.dim()) + " matrix");
  }
  return solver.eigenvalues().reverse();
}

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace detail

/// Random stream keyed by (seed, stream id). The same key always yields the
/// same sequence, so work split across any number of workers stays
/// reproducible as long as each unit of work owns its own stream id.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id)
      : seed_(seed), stream_(stream_id), engine_(key(seed, stream_id)) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_; }

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  std::uint64_t bits() { return engine_(); }

  void fill_normal(Eigen::Ref<Vector> v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = normal_(engine_);
  }

  Vector normal_vector(Eigen::Index n) {
    Vector v(n);
    fill_normal(v);
    return v;
  }

  /// Child stream derived from this key; does not advance this stream.
  RngStream child(std::uint64_t sub) const {
    return RngStream(detail::splitmix64(seed_ ^ detail::splitmix64(stream_ + 1)), sub);
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  static std::uint64_t key(std::uint64_t seed, std::uint64_t stream) {
    return detail::splitmix64(detail::splitmix64(seed) ^ (stream * 0xd1b54a32d192ed03ULL));
  }

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

/// Draws x ~ N(0, cov) as U diag(sqrt(lambda)) z. Works for singular covariances;
/// eigenvalues in [-1e-9 max|lambda|, 0) are clamped to zero.
class GaussianSampler {
 public:
  explicit GaussianSampler(const SymMatrix& cov) : GaussianSampler(eigh(cov)) {}

  explicit GaussianSampler(const EigenPairs& eig) {
    const Eigen::Index n = eig.values.size();
    dim_ = n;
    const double scale = n > 0 ? eig.values.cwiseAbs().maxCoeff() : 0.0;
    Eigen::Index keep = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double lam = eig.values[i];
      if (lam < -1e-9 * scale) {
        throw Error(ErrorCategory::kNumerical,
                    "sample_gaussian: covariance is not PSD (eigenvalue " +
                        std::to_string(lam) + ")");
      }
      // Eigenvalues at rounding level carry no variance; keeping them leaks
      // noise into directions the covariance does not span.
      if (lam > 1e-12 * scale) ++keep;
    }
    // Descending order, so positive eigenvalues come first.
    factor_ = eig.vectors.leftCols(keep) *
              eig.values.head(keep).cwiseSqrt().asDiagonal();
  }

  Eigen::Index dim() const { return dim_; }
  Eigen::Index rank() const { return factor_.cols(); }
  const Matrix& factor() const { return factor_; }

  Vector draw(RngStream& rng) const {
    if (factor_.cols() == 0) return Vector::Zero(dim_);
    return factor_ * rng.normal_vector(factor_.cols());
  }

 private:
  Eigen::Index dim_ = 0;
  Matrix factor_;
};

inline Vector sample_gaussian(const SymMatrix& cov, RngStream& rng) {
  return GaussianSampler(cov).draw(rng);
}

/// Cholesky factorization of an SPD matrix, reusable across right-hand sides.
class SpdSolver {
 public:
  explicit SpdSolver(const SymMatrix& m) : llt_(m.matrix()) {
    bool ok = llt_.info() == Eigen::Success;
    if (ok) {
      const auto diag = llt_.matrixLLT().diagonal();
      // Squared pivots are bounded below by the smallest eigenvalue.
      ok = diag.minCoeff() > 0.0 && diag.cwiseAbs2().minCoeff() > 1e-12;
    }
    if (!ok) {
      throw Error(ErrorCategory::kNumerical,
                  "solve_spd: matrix of dimension " + std::to_string(m.dim()) +
                      " is not symmetric positive definite");
    }
  }

  Vector solve(const Vector& rhs) const { return llt_.solve(rhs); }
  Matrix solve(const Matrix& rhs) const { return llt_.solve(rhs); }

 private:
  Eigen::LLT<Matrix> llt_;
};

inline Vector solve_spd(const SymMatrix& m, const Vector& rhs) {
  require(rhs.size() == m.dim(), "solve_spd: dimension mismatch");
  return SpdSolver(m).solve(rhs);
}

inline bool is_perfect_square(long long n, long long* root = nullptr) {
  if (n < 0) return false;
  auto r = static_cast<long long>(std::llround(std::sqrt(static_cast<double>(n))));
  while (r * r > n) --r;
  while ((r + 1) * (r + 1) <= n) ++r;
  if (root) *root = r;
  return r * r == n;
}

}  // namespace hmimo
