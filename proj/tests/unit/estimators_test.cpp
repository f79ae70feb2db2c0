#include <gtest/gtest.h>

#include <limits>

#include "hmimo/channel.hpp"
#include "hmimo/estimators.hpp"

using namespace hmimo;

TEST(Ls, IdentityMap) {
  Vector y(3);
  y << 1, -2, 3;
  const ChannelEstimate e = estimate_ls(y);
  EXPECT_EQ(e.h_hat, y);
  EXPECT_EQ(e.kind, EstimatorKind::kLs);
}

TEST(Ls, NoiselessDatasetHasZeroError) {
  const SpatialCovariance c = isotropic_covariance(build_geometry(16, 0.25));
  const PilotDataset ds = synthesize_dataset(c, 0.0, 20, RngStream(1, 0), true);
  EXPECT_EQ(nmse(ds.pilots.matrix(), *ds.truth).ratio, 0.0);
}

TEST(Ls, ZeroDbNmseIsTwoNoiseToSignal) {
  // E||n||^2 / E||h||^2 = 2N tau / tr(R) = 2 at tau = 1, tr(R) = N.
  const SpatialCovariance c = isotropic_covariance(build_geometry(64, 0.25));
  const PilotDataset ds = synthesize_dataset(c, 1.0, 4000, RngStream(2, 0), true);
  EXPECT_NEAR(nmse(ds.pilots.matrix(), *ds.truth).ratio, 2.0, 0.1);
}

TEST(OracleMmse, IdentityCovarianceHalves) {
  Vector y(4);
  y << 1, 2, 3, 4;
  const ChannelEstimate e = estimate_oracle_mmse(y, SymMatrix::identity(4), 1.0);
  EXPECT_LT((e.h_hat - y / 2).norm(), 1e-14);
}

TEST(OracleMmse, ScalarCase) {
  Vector y(1);
  y << 3;
  const ChannelEstimate e = estimate_oracle_mmse(y, SymMatrix(Matrix::Constant(1, 1, 2.0)), 1.0);
  EXPECT_NEAR(e.h_hat[0], 2.0, 1e-14);
}

TEST(OracleMmse, NoiselessLimit) {
  RngStream rng(3, 0);
  Matrix a(6, 6);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = rng.normal();
  const SymMatrix c(a * a.transpose() + Matrix::Identity(6, 6));
  const Vector y = rng.normal_vector(6);
  EXPECT_LT((estimate_oracle_mmse(y, c, 1e-10).h_hat - y).norm(), 1e-8 * y.norm());
}

TEST(OracleMmse, RejectsNonPositiveInvRho) {
  EXPECT_THROW(estimate_oracle_mmse(Vector::Ones(2), SymMatrix::identity(2), 0.0), Error);
}

TEST(OracleMmse, MatchesLiteralScaledConvention) {
  // sqrt(rho) R (rho R + I)^{-1} applied to sqrt(rho) h + n equals the
  // canonical filter applied to h + n / sqrt(rho).
  const SpatialCovariance cov = isotropic_covariance(build_geometry(9, 0.25));
  const Matrix& c = cov.real_cov.matrix();
  const double rho = 3.0;
  RngStream rng(4, 0);
  const Vector h = rng.normal_vector(18);
  const Vector n = rng.normal_vector(18);
  const Matrix lit = std::sqrt(rho) * c * (rho * c + Matrix::Identity(18, 18)).inverse();
  const Vector a = lit * (std::sqrt(rho) * h + n);
  const Vector b = estimate_oracle_mmse(h + n / std::sqrt(rho), cov.real_cov, 1.0 / rho).h_hat;
  EXPECT_LT((a - b).norm(), 1e-10 * a.norm());
}

TEST(OracleMmse, AnalyticNmseMatchesMonteCarlo) {
  const SpatialCovariance cov = isotropic_covariance(build_geometry(64, 0.25));
  const double tau = 0.3;
  const PilotDataset ds = synthesize_dataset(cov, tau, 10000, RngStream(5, 0), true);
  const LinearMmse f(cov.real_cov, tau);
  const double mc = nmse(f.apply(ds.pilots.matrix()), *ds.truth).ratio;
  const double an = oracle_nmse_analytic(cov.real_cov, tau);
  EXPECT_NEAR(mc / an, 1.0, 0.03);
}

TEST(SampleMmse, ZeroPilotsClipToZero) {
  const SampleCovariance cs = sample_covariance(Matrix::Zero(4, 10), 0.5);
  EXPECT_TRUE(cs.clipped);
  EXPECT_EQ(cs.cov.matrix(), Matrix::Zero(4, 4));
  const ChannelEstimate e = estimate_sample_mmse(Vector::Ones(4), cs, 0.5);
  EXPECT_EQ(e.h_hat, Vector::Zero(4));
}

TEST(SampleMmse, NeedsTwoPilots) {
  EXPECT_THROW(sample_covariance(Matrix::Zero(4, 1), 0.5), Error);
}

TEST(SampleMmse, ConvergesToOracleWithManyPilots) {
  const SpatialCovariance cov = isotropic_covariance(build_geometry(16, 0.25));
  const double tau = 0.1;
  const PilotDataset ds = synthesize_dataset(cov, tau, 10000, RngStream(6, 0), true);
  const Matrix& y = ds.pilots.matrix();
  const SampleCovariance cs = sample_covariance(y, tau);
  const double sample_db = nmse(LinearMmse(cs.cov, tau).apply(y), *ds.truth).db;
  const double oracle_db = nmse(LinearMmse(cov.real_cov, tau).apply(y), *ds.truth).db;
  EXPECT_LT(sample_db - oracle_db, 0.5);
}

TEST(SampleMmse, SitsBetweenLsAndOracle) {
  const SpatialCovariance cov = isotropic_covariance(build_geometry(64, 0.25));
  const double tau = 0.5;
  const PilotDataset ds = synthesize_dataset(cov, tau, 1000, RngStream(7, 0), true);
  const Matrix& y = ds.pilots.matrix();
  const double ls = nmse(y, *ds.truth).db;
  const double sample = nmse(LinearMmse(sample_covariance(y, tau).cov, tau).apply(y), *ds.truth).db;
  const double oracle = nmse(LinearMmse(cov.real_cov, tau).apply(y), *ds.truth).db;
  EXPECT_LE(sample, ls + 0.1);
  EXPECT_LE(oracle, sample + 0.1);
}

TEST(ScoreMmse, ZeroScoreFallsBackToLs) {
  ScoreNetwork<double> net = ScoreNetwork<double>(NetworkShape{8, 4, 1});
  net.zero_output_layer();
  RngStream rng(8, 0);
  const Vector y = rng.normal_vector(8);
  EXPECT_EQ(estimate_score_mmse(y, net, 0.7).h_hat, y);
}

TEST(ScoreMmse, ExactGaussianScoreEqualsOracle) {
  const SpatialCovariance cov = isotropic_covariance(build_geometry(64, 0.25));
  const double tau = 0.2;
  const GaussianScore exact(cov.real_cov, tau);
  RngStream rng(9, 0);
  for (int i = 0; i < 20; ++i) {
    const Vector y = rng.normal_vector(128);
    const Vector a = estimate_score_mmse_with(y, exact, tau).h_hat;
    const Vector b = estimate_oracle_mmse(y, cov.real_cov, tau).h_hat;
    EXPECT_LT((a - b).norm(), 1e-8 * b.norm());
  }
}

TEST(Nmse, Sentinels) {
  Matrix h(2, 2);
  h << 1, 2, 3, 4;
  const Nmse exact = nmse(h, h);
  EXPECT_EQ(exact.ratio, 0.0);
  EXPECT_EQ(exact.db, -std::numeric_limits<double>::infinity());
  EXPECT_DOUBLE_EQ(nmse(Matrix::Zero(2, 2), h).ratio, 1.0);
  EXPECT_DOUBLE_EQ(nmse(Matrix::Zero(2, 2), h).db, 0.0);
  EXPECT_DOUBLE_EQ(nmse(2 * h, h).ratio, 1.0);
}

TEST(Nmse, Errors) {
  EXPECT_THROW(nmse(Matrix::Zero(2, 2), Matrix::Zero(2, 2)), Error);
  EXPECT_THROW(nmse(Matrix::Zero(2, 2), Matrix::Ones(2, 3)), Error);
  EXPECT_THROW(nmse(Matrix(0, 0), Matrix(0, 0)), Error);
}
