#include <gtest/gtest.h>

#include "hmimo/numerics.hpp"

using namespace hmimo;

namespace {

Matrix random_symmetric(Eigen::Index n, RngStream& rng) {
  Matrix a(n, n);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = rng.normal();
  return 0.5 * (a + a.transpose());
}

Matrix random_spd(Eigen::Index n, RngStream& rng) {
  Matrix a(n, n);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = rng.normal();
  return a * a.transpose() + Matrix::Identity(n, n);
}

}  // namespace

TEST(SymMatrix, RejectsAsymmetricInput) {
  Matrix m = Matrix::Identity(3, 3);
  m(0, 1) = 1e-6;
  EXPECT_THROW(SymMatrix{m}, Error);
  m(0, 1) = 1e-13;
  EXPECT_NO_THROW(SymMatrix{m});
}

TEST(Eigh, IdentityTwoByTwo) {
  const EigenPairs e = eigh(SymMatrix::identity(2));
  EXPECT_DOUBLE_EQ(e.values[0], 1.0);
  EXPECT_DOUBLE_EQ(e.values[1], 1.0);
  EXPECT_LT((e.vectors.transpose() * e.vectors - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Eigh, DiagonalIsSortedDescending) {
  Matrix m(2, 2);
  m << 1, 0, 0, 2;
  const EigenPairs e = eigh(SymMatrix(m));
  EXPECT_DOUBLE_EQ(e.values[0], 2.0);
  EXPECT_DOUBLE_EQ(e.values[1], 1.0);
  EXPECT_NEAR(std::abs(e.vectors(1, 0)), 1.0, 1e-12);
  EXPECT_NEAR(std::abs(e.vectors(0, 1)), 1.0, 1e-12);
}

TEST(Eigh, RandomEightByEightReconstructs) {
  RngStream rng(11, 0);
  const Matrix m = random_symmetric(8, rng);
  const EigenPairs e = eigh(SymMatrix(m));
  EXPECT_LT((e.reconstruct() - m).cwiseAbs().maxCoeff(), 1e-10);
  for (Eigen::Index i = 1; i < 8; ++i) EXPECT_GE(e.values[i - 1], e.values[i]);
  EXPECT_LT((e.vectors.transpose() * e.vectors - Matrix::Identity(8, 8)).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Eigh, ReconstructionIsIdempotent) {
  RngStream rng(12, 0);
  const Matrix m = random_symmetric(40, rng);
  const Matrix once = eigh(SymMatrix(m)).reconstruct();
  const Matrix twice = eigh(SymMatrix::symmetrized(once)).reconstruct();
  EXPECT_LT((twice - once).norm() / once.norm(), 1e-7);
}

TEST(RngStream, SameKeySameSequence) {
  RngStream a(5, 9);
  RngStream b(5, 9);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.bits(), b.bits());
}

TEST(RngStream, SwappedStreamsAreUncorrelated) {
  RngStream a(5, 1);
  RngStream b(5, 2);
  const Vector x = a.normal_vector(10000);
  const Vector y = b.normal_vector(10000);
  const double corr = (x.array() - x.mean()).matrix().dot((y.array() - y.mean()).matrix()) /
                      std::sqrt((x.array() - x.mean()).square().sum() * (y.array() - y.mean()).square().sum());
  EXPECT_LT(std::abs(corr), 0.05);
}

TEST(SampleGaussian, ZeroCovarianceGivesZero) {
  RngStream rng(1, 0);
  const Vector v = sample_gaussian(SymMatrix(Matrix::Zero(4, 4)), rng);
  EXPECT_EQ(v, Vector::Zero(4));
}

TEST(SampleGaussian, IdentityCovarianceMonteCarlo) {
  RngStream rng(2, 0);
  const GaussianSampler sampler(SymMatrix::identity(3));
  Matrix acc = Matrix::Zero(3, 3);
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) {
    const Vector v = sampler.draw(rng);
    acc += v * v.transpose();
  }
  acc /= draws;
  EXPECT_LT((acc - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff(), 0.05);
}

TEST(SampleGaussian, RankOneDrawsAreParallel) {
  Vector v(3);
  v << 1, -2, 0.5;
  RngStream rng(3, 0);
  const GaussianSampler sampler(SymMatrix(v * v.transpose()));
  EXPECT_EQ(sampler.rank(), 1);
  for (int i = 0; i < 20; ++i) {
    const Vector d = sampler.draw(rng);
    EXPECT_LT((d - d.dot(v) / v.squaredNorm() * v).norm(), 1e-10 * std::max(1.0, d.norm()));
  }
}

TEST(SampleGaussian, RejectsIndefinite) {
  Matrix m = Matrix::Identity(2, 2);
  m(1, 1) = -0.1;
  RngStream rng(4, 0);
  try {
    sample_gaussian(SymMatrix(m), rng);
    FAIL() << "expected error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("not PSD"), std::string::npos);
  }
}

TEST(SampleGaussian, TinyNegativeEigenvalueIsClamped) {
  Matrix m = Matrix::Identity(2, 2);
  m(1, 1) = -1e-12;
  RngStream rng(4, 0);
  EXPECT_NO_THROW(sample_gaussian(SymMatrix(m), rng));
}

TEST(SolveSpd, IdentityAndScaledIdentity) {
  Vector b(3);
  b << 1, 2, 3;
  EXPECT_LT((solve_spd(SymMatrix::identity(3), b) - b).norm(), 1e-15);
  EXPECT_LT((solve_spd(SymMatrix(2.0 * Matrix::Identity(3, 3)), b) - b / 2).norm(), 1e-15);
}

TEST(SolveSpd, RandomSixteenResidual) {
  RngStream rng(6, 0);
  const Matrix m = random_spd(16, rng);
  const Vector b = rng.normal_vector(16);
  const Vector x = solve_spd(SymMatrix(m), b);
  EXPECT_LT((m * x - b).norm() / b.norm(), 1e-8);
}

TEST(SolveSpd, RejectsSingular) {
  Matrix m = Matrix::Identity(3, 3);
  m(2, 2) = 0.0;
  EXPECT_THROW(solve_spd(SymMatrix(m), Vector::Ones(3)), Error);
}

TEST(PerfectSquare, Basics) {
  long long r = 0;
  EXPECT_TRUE(is_perfect_square(1024, &r));
  EXPECT_EQ(r, 32);
  EXPECT_FALSE(is_perfect_square(1000));
  EXPECT_TRUE(is_perfect_square(1, &r));
  EXPECT_EQ(r, 1);
}
