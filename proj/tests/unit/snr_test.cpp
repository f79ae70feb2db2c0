#include <gtest/gtest.h>

#include <chrono>

#include "hmimo/channel.hpp"
#include "hmimo/snr.hpp"

using namespace hmimo;

TEST(Vsc, PaperScaleWindowCount) {
  const VscLayout l = vsc_layout(2 * 1024, VscConfig{7});
  EXPECT_EQ(l.count, 26 * 26);
  EXPECT_EQ(l.window_dim, 98);
  EXPECT_FALSE(l.undersampled);
}

TEST(Vsc, WholeArrayWindow) {
  const Vector y = Vector::LinSpaced(32, 0, 31);
  const Matrix v = extract_vscs(y, VscConfig{4});
  ASSERT_EQ(v.cols(), 1);
  EXPECT_EQ(v.col(0), y);
}

TEST(Vsc, WindowLargerThanArrayFails) {
  EXPECT_THROW(vsc_layout(2 * 16, VscConfig{5}), Error);
  EXPECT_THROW(vsc_layout(2 * 15, VscConfig{2}), Error);
}

TEST(Vsc, ConstantInputGivesConstantWindows) {
  const Vector y = Vector::Constant(2 * 64, 0.7);
  const Matrix v = extract_vscs(y, VscConfig{3});
  EXPECT_EQ(v.cols(), 36);
  EXPECT_TRUE((v.array() == 0.7).all());
}

TEST(Vsc, WindowLayoutRealThenImaginary) {
  // 3x3 array, 2x2 window: second window starts at column 1.
  Vector y(18);
  for (int i = 0; i < 18; ++i) y[i] = i;
  const Matrix v = extract_vscs(y, VscConfig{2});
  ASSERT_EQ(v.cols(), 4);
  Vector expect(8);
  expect << 1, 2, 4, 5, 10, 11, 13, 14;
  EXPECT_EQ(v.col(1), expect);
}

TEST(VscCovariance, ZeroAndRankOne) {
  EXPECT_EQ(vsc_covariance(Matrix::Zero(4, 10)).matrix(), Matrix::Zero(4, 4));
  Vector v(3);
  v << 1, 2, 3;
  const Matrix same = v.replicate(1, 5);
  EXPECT_LT((vsc_covariance(same).matrix() - v * v.transpose()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(VscCovariance, PureNoiseEigenvaluesClusterAtNoiseLevel) {
  RngStream rng(1, 0);
  const double tau = 0.4;
  const Vector y = std::sqrt(tau) * rng.normal_vector(2 * 64 * 64);
  const Vector lambda = eigvalsh(vsc_covariance(extract_vscs(y, VscConfig{5})));
  EXPECT_NEAR(lambda.mean(), tau, 0.05 * tau);
  // Spread bounded by the Marchenko-Pastur edges for gamma = 50 / 3600.
  const double g = 50.0 / 3600.0;
  EXPECT_LT(lambda.maxCoeff(), tau * std::pow(1 + std::sqrt(g), 2) * 1.15);
  EXPECT_GT(lambda.minCoeff(), tau * std::pow(1 - std::sqrt(g), 2) * 0.85);
}

TEST(Separation, GaussianRuleFollowsStatedGate) {
  Vector d(6);
  d << 10, 5, 1.05, 1.0, 0.98, 0.97;
  SeparationOptions opt;
  opt.rule = SeparationRule::kGaussian;
  const SnrEstimate e = separate_redundant(d, 1000, opt);
  EXPECT_EQ(e.principal, 2);
  EXPECT_EQ(e.redundant, 4);
  EXPECT_NEAR(e.inv_rho_hat, (1.05 + 1.0 + 0.98 + 0.97) / 4, 1e-12);
}

TEST(Separation, MarchenkoPasturRuleWidensGateWithRedundantCount) {
  // s = 40: with 4 redundant values the MP gate is mu * 1.73, the one-sigma
  // Gaussian gate mu * 1.22. 1.43 passes only the former.
  Vector d(5);
  d << 8, 1.43, 1.0, 0.9, 0.8;
  SeparationOptions mp;
  const SnrEstimate a = separate_redundant(d, 40, mp);
  EXPECT_EQ(a.principal, 1);
  SeparationOptions gs;
  gs.rule = SeparationRule::kGaussian;
  gs.gate_sigmas = 1.0;
  const SnrEstimate b = separate_redundant(d, 40, gs);
  EXPECT_EQ(b.principal, 2);
  EXPECT_EQ(a.redundant + a.principal, 5);
}

TEST(Separation, NoRedundantSubspaceIsAnError) {
  Vector d(2);
  d << 0.0, 0.0;
  EXPECT_THROW(separate_redundant(d, 10), Error);
}

TEST(EstimateInvSnr, PureNoisePaperScale) {
  // Claim: estimate in [0.9, 1.1] with probability >= 0.99. Under p = 0.99,
  // more than 18 misses in 1000 trials has probability below 1%.
  int misses = 0;
  const int trials = 1000;
  for (int t = 0; t < trials; ++t) {
    RngStream rng(100, static_cast<std::uint64_t>(t));
    const Vector y = rng.normal_vector(2 * 1024);
    const double est = estimate_inv_snr(y, VscConfig{7}).inv_rho_hat;
    if (est < 0.9 || est > 1.1) ++misses;
  }
  EXPECT_LE(misses, 18);
}

TEST(EstimateInvSnr, ScaleEquivariance) {
  const SpatialCovariance cov = isotropic_covariance(build_geometry(256, 0.25));
  const PilotDataset ds = synthesize_dataset(cov, 0.3, 1, RngStream(7, 0), false);
  const Vector y = ds.pilots.sample(0);
  const double a = estimate_inv_snr(y, VscConfig{5}).inv_rho_hat;
  const double b = estimate_inv_snr(3.0 * y, VscConfig{5}).inv_rho_hat;
  EXPECT_NEAR(b, 9.0 * a, 1e-9 * b);
}

TEST(EstimateInvSnr, CountsAddUp) {
  const SpatialCovariance cov = isotropic_covariance(build_geometry(256, 0.25));
  const PilotDataset ds = synthesize_dataset(cov, 0.1, 1, RngStream(8, 0), false);
  const SnrEstimate e = estimate_inv_snr(ds.pilots.sample(0), VscConfig{5});
  EXPECT_EQ(e.redundant + e.principal, 50);
  EXPECT_GT(e.inv_rho_hat, 0.0);
  EXPECT_GT(e.principal, 0);
}

TEST(EstimateInvSnr, RedundantEigenvaluesStayBelowNoiseEdge) {
  // The smaller half of the window-covariance eigenvalues stays below the
  // Marchenko-Pastur upper edge tau (1 + sqrt(g))^2, g = 2d / s, which is the
  // gate the separation uses, in at least 95% of trials.
  const SpatialCovariance cov = isotropic_covariance(build_geometry(1024, 0.25));
  const double tau = 1.0;
  const PilotDataset ds = synthesize_dataset(cov, tau, 200, RngStream(9, 0), false);
  const double hi = tau * std::pow(1 + std::sqrt(98.0 / 676.0), 2);
  int ok = 0;
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    const Vector lambda = eigvalsh(vsc_covariance(extract_vscs(ds.pilots.sample(i), VscConfig{7})));
    if (lambda.tail(49).maxCoeff() <= hi) ++ok;
  }
  EXPECT_GE(ok, 190);
}

TEST(EstimateInvSnr, RuntimeGrowsLinearly) {
  auto time_for = [](int n) {
    const SpatialCovariance cov = isotropic_covariance(build_geometry(n, 0.25));
    const PilotDataset ds = synthesize_dataset(cov, 0.1, 21, RngStream(10, 0), false);
    std::vector<double> t;
    for (int i = 0; i < 21; ++i) {
      const auto t0 = std::chrono::steady_clock::now();
      volatile double v = estimate_inv_snr(ds.pilots.sample(i), VscConfig{7}).inv_rho_hat;
      (void)v;
      t.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    std::sort(t.begin(), t.end());
    return t[10];
  };
  const double t256 = time_for(256);
  const double t1024 = time_for(1024);
  EXPECT_LT(t1024 / t256, 5.0);
}

TEST(SnrStats, RmseDecomposition) {
  const std::vector<double> est{0.9, 1.2, 1.05, 0.97, 1.4};
  const SnrStats s = summarize_estimates(est, 1.0);
  EXPECT_NEAR(s.rmse * s.rmse, s.bias * s.bias + s.std * s.std, 1e-9);
}
