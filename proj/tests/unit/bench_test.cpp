#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "hmimo/bench.hpp"

using namespace hmimo;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("hmimo_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

ExperimentConfig tiny_config() {
  ExperimentConfig c;
  c.n_antennas = 64;
  c.train_count = 100;
  c.test_count = 50;
  c.window_side = 3;
  c.snr_db = {10.0};
  return c;
}

}  // namespace

TEST(Dataset, RecordSizeAndPilotOnlyTrainFile) {
  ExperimentConfig cfg = tiny_config();
  cfg.n_antennas = 256;
  const SpatialCovariance cov = isotropic_covariance(build_geometry(256, 0.25));
  const ScenarioData s = make_scenario(cfg, cov, 10.0);
  const fs::path dir = scratch("dataset");
  write_dataset(dir / "train.bin", s.train, make_manifest(cfg, cov.environment, s.inv_snr), true);
  EXPECT_EQ(fs::file_size(dir / "train.bin"), 24u + 100u * 512u * 4u);
  const LoadedDataset back = read_dataset(dir / "train.bin");
  EXPECT_FALSE(back.data.has_truth());
  EXPECT_FALSE(back.manifest.with_truth);
  EXPECT_EQ(back.manifest.n_antennas, 256);
  EXPECT_NEAR(back.manifest.inv_snr, 0.1, 1e-15);
  EXPECT_LT((back.data.pilots.matrix() - s.train.pilots.matrix()).cwiseAbs().maxCoeff(), 1e-5);
}

TEST(Dataset, SameSeedByteIdentical) {
  const ExperimentConfig cfg = tiny_config();
  const SpatialCovariance cov = isotropic_covariance(build_geometry(64, 0.25));
  const fs::path dir = scratch("determinism");
  for (const char* name : {"a.bin", "b.bin"}) {
    const ScenarioData s = make_scenario(cfg, cov, 10.0);
    write_dataset(dir / name, s.test, make_manifest(cfg, cov.environment, s.inv_snr), true);
  }
  EXPECT_EQ(slurp(dir / "a.bin"), slurp(dir / "b.bin"));
  EXPECT_EQ(slurp(dir / "a.bin.json"), slurp(dir / "b.bin.json"));
}

TEST(Dataset, TruthRoundTrip) {
  const ExperimentConfig cfg = tiny_config();
  const SpatialCovariance cov = isotropic_covariance(build_geometry(64, 0.25));
  const ScenarioData s = make_scenario(cfg, cov, 10.0);
  const fs::path dir = scratch("truth");
  write_dataset(dir / "test.bin", s.test, make_manifest(cfg, cov.environment, s.inv_snr), true);
  const LoadedDataset back = read_dataset(dir / "test.bin");
  ASSERT_TRUE(back.data.has_truth());
  EXPECT_LT((*back.data.truth - *s.test.truth).cwiseAbs().maxCoeff(), 1e-5);
  EXPECT_EQ(back.data.environment, Environment::kIsotropic);
}

TEST(Dataset, CorruptFilesAreFormatErrors) {
  const fs::path dir = scratch("corrupt");
  { std::ofstream(dir / "bad.bin") << "NOTAFILE........"; }
  try {
    read_dataset(dir / "bad.bin");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.category(), ErrorCategory::kFormat);
  }
  try {
    read_dataset(dir / "missing.bin");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.category(), ErrorCategory::kIo);
  }
}

TEST(Model, RoundTripPreservesOutputs) {
  RngStream rng(1, 0);
  auto net = ScoreNetwork<float>::initialized({16, 8, 2}, rng);
  net.set_sigma_scale(0.1f);
  net.set_noise_floor(0.3);
  TrainConfig cfg;
  cfg.epochs = 7;
  cfg.optimizer = OptimizerKind::kAdam;
  const fs::path dir = scratch("model");
  write_model(dir / "m.net", net, cfg);
  const LoadedModel back = read_model(dir / "m.net");
  EXPECT_EQ(back.network.shape(), net.shape());
  EXPECT_EQ(back.network.parameters(), net.parameters());
  EXPECT_EQ(back.config.epochs, 7);
  EXPECT_EQ(back.config.optimizer, OptimizerKind::kAdam);
  const Vector y = rng.normal_vector(16);
  EXPECT_EQ(score(back.network, y), score(net, y));
}

TEST(Config, JsonOverridesAndEcho) {
  ExperimentConfig c;
  apply_json(nlohmann::json{{"n_antennas", 64}, {"snr_db", {1.0, 2.0}}, {"train", {{"epochs", 3}}}}, c);
  EXPECT_EQ(c.n_antennas, 64);
  EXPECT_EQ(c.snr_db.size(), 2u);
  EXPECT_EQ(c.train.epochs, 3);
  EXPECT_EQ(c.train.learning_rate, 1e-3);
  ExperimentConfig d;
  apply_json(to_json(c), d);
  EXPECT_EQ(to_json(c), to_json(d));
}

TEST(Config, PaperHyperparametersAccepted) {
  ExperimentConfig c;
  apply_json(nlohmann::json{{"train", {{"learning_rate", 0.001}, {"sigma_min", 0.001}, {"sigma_max", 0.1}, {"epochs", 100}}}}, c);
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, EmptyGridRejected) {
  ExperimentConfig c;
  c.snr_db.clear();
  EXPECT_THROW(c.validate(), Error);
}

TEST(OutputRoot, EnvironmentOverride) {
  ::setenv("HMIMO_OUTPUT_DIR", "/tmp/hmimo_env_dir", 1);
  EXPECT_EQ(output_root("x"), fs::path("/tmp/hmimo_env_dir"));
  ::unsetenv("HMIMO_OUTPUT_DIR");
  EXPECT_EQ(output_root("x"), fs::path("x"));
}

TEST(Evaluate, CellIsReproducibleAndOrdered) {
  const ExperimentConfig cfg = tiny_config();
  const SpatialCovariance cov = isotropic_covariance(build_geometry(64, 0.25));
  const ScenarioData s = make_scenario(cfg, cov, 10.0);
  RngStream rng(3, 0);
  auto net = ScoreNetwork<float>::initialized({128, 8, 1}, rng);
  const CellReport a = evaluate_cell(cov, s.test, net, s.inv_snr, cfg.window_side);
  const CellReport b = evaluate_cell(cov, s.test, net, s.inv_snr, cfg.window_side);
  EXPECT_EQ(a.ls_db, b.ls_db);
  EXPECT_EQ(a.score_est_db, b.score_est_db);
  EXPECT_LE(a.oracle_db, a.ls_db);
  EXPECT_NEAR(a.snr.rmse * a.snr.rmse, a.snr.bias * a.snr.bias + a.snr.std * a.snr.std, 1e-9);
  const std::string row = csv_row(a);
  const std::string header = csv_header();
  EXPECT_EQ(std::count(row.begin(), row.end(), ','), std::count(header.begin(), header.end(), ','));
}

TEST(Sweep, ZeroWeightIsLs) {
  const ExperimentConfig cfg = tiny_config();
  const SpatialCovariance cov = isotropic_covariance(build_geometry(64, 0.25));
  const ScenarioData s = make_scenario(cfg, cov, 10.0);
  RngStream rng(4, 0);
  auto net = ScoreNetwork<float>::initialized({128, 8, 1}, rng);
  const auto pts = sweep_inv_snr(s.test, net, {0.0, 0.1});
  EXPECT_EQ(pts[0].nmse_db, nmse(s.test.pilots.matrix(), *s.test.truth).db);
}

TEST(Timing, MedianLatenciesArePositive) {
  TrainConfig tc;
  tc.hidden = 16;
  const TimingRow r = time_estimators(64, 0.25, tc, 3, 3, 1);
  EXPECT_GT(r.score_seconds, 0.0);
  EXPECT_GT(r.oracle_seconds, 0.0);
}
