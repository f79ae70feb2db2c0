#pragma once

// Experiment harness: scenario synthesis, per-cell evaluation of the four
// estimators, the 1/rho robustness sweep, SNR-estimation statistics and
// latency measurement. The CLI and the acceptance suite both drive this.

#include "json.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "hmimo/channel.hpp"
#include "hmimo/error.hpp"
#include "hmimo/estimators.hpp"
#include "hmimo/io.hpp"
#include "hmimo/numerics.hpp"
#include "hmimo/scorenet.hpp"
#include "hmimo/snr.hpp"

namespace hmimo {

inline constexpr int kCsvSchemaVersion = 1;

enum class InvSnrSource { kTrue, kEstimated, kValue };

inline std::string to_string(InvSnrSource s) {
  switch (s) {
    case InvSnrSource::kTrue: return "true";
    case InvSnrSource::kEstimated: return "estimated";
    case InvSnrSource::kValue: return "value";
  }
  return "unknown";
}

inline InvSnrSource inv_snr_source_from_string(const std::string& s) {
  if (s == "true") return InvSnrSource::kTrue;
  if (s == "estimated") return InvSnrSource::kEstimated;
  if (s == "value") return InvSnrSource::kValue;
  throw Error(ErrorCategory::kInvalidArgument, "unknown inv-snr source '" + s + "'");
}

inline double db_to_inv_snr(double snr_db) { return std::pow(10.0, -snr_db / 10.0); }

struct ExperimentConfig {
  int n_antennas = 256;
  double spacing = 0.25;  // in wavelengths
  double gain = 1.0;
  std::vector<std::string> environments{"isotropic", "truncated"};
  int truncation = 8;
  std::vector<double> snr_db{0.0, 5.0, 10.0, 15.0, 20.0};
  int train_count = 5000;
  int test_count = 2000;
  int window_side = 5;
  TrainConfig train;
  std::uint64_t seed = 20240901;
  InvSnrSource inv_snr_source = InvSnrSource::kEstimated;
  double inv_snr_value = 0.1;
  double sweep_snr_db = 10.0;
  std::vector<double> sweep_values{0.0,  0.02, 0.04, 0.06, 0.08, 0.10, 0.12,
                                   0.14, 0.16, 0.18, 0.20, 0.22, 0.24};
  std::vector<int> timing_sizes{256, 1024};
  int timing_repeats = 20;
  int timing_window_side = 7;  // held fixed across sizes

  void validate() const {
    require(!snr_db.empty(), "config: SNR grid is empty");
    require(!environments.empty(), "config: no environments");
    require(test_count >= 1, "config: test_count must be >= 1");
    require(train_count >= 1, "config: train_count must be >= 1");
    require(spacing > 0.0 && gain > 0.0, "config: spacing and gain must be positive");
    require(truncation >= 1, "config: truncation denominator must be >= 1");
    for (const auto& e : environments) {
      const Environment env = environment_from_string(e);
      require(env != Environment::kCustom, "config: custom densities are library-only");
    }
    hmimo::validate(train);
  }
};

inline nlohmann::json to_json(const ExperimentConfig& c) {
  return {{"n_antennas", c.n_antennas},
          {"spacing", c.spacing},
          {"gain", c.gain},
          {"environments", c.environments},
          {"truncation", c.truncation},
          {"snr_db", c.snr_db},
          {"train_count", c.train_count},
          {"test_count", c.test_count},
          {"window_side", c.window_side},
          {"train", to_json(c.train)},
          {"seed", c.seed},
          {"inv_snr_source", to_string(c.inv_snr_source)},
          {"inv_snr_value", c.inv_snr_value},
          {"sweep_snr_db", c.sweep_snr_db},
          {"sweep_values", c.sweep_values},
          {"timing_sizes", c.timing_sizes},
          {"timing_repeats", c.timing_repeats},
          {"timing_window_side", c.timing_window_side}};
}

inline void apply_json(const nlohmann::json& j, ExperimentConfig& c) {
  try {
    if (j.contains("n_antennas")) c.n_antennas = j["n_antennas"].get<int>();
    if (j.contains("spacing")) c.spacing = j["spacing"].get<double>();
    if (j.contains("gain")) c.gain = j["gain"].get<double>();
    if (j.contains("environments")) c.environments = j["environments"].get<std::vector<std::string>>();
    if (j.contains("truncation")) c.truncation = j["truncation"].get<int>();
    if (j.contains("snr_db")) c.snr_db = j["snr_db"].get<std::vector<double>>();
    if (j.contains("train_count")) c.train_count = j["train_count"].get<int>();
    if (j.contains("test_count")) c.test_count = j["test_count"].get<int>();
    if (j.contains("window_side")) c.window_side = j["window_side"].get<int>();
    if (j.contains("train")) apply_json(j["train"], c.train);
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("inv_snr_source")) {
      c.inv_snr_source = inv_snr_source_from_string(j["inv_snr_source"].get<std::string>());
    }
    if (j.contains("inv_snr_value")) c.inv_snr_value = j["inv_snr_value"].get<double>();
    if (j.contains("sweep_snr_db")) c.sweep_snr_db = j["sweep_snr_db"].get<double>();
    if (j.contains("sweep_values")) c.sweep_values = j["sweep_values"].get<std::vector<double>>();
    if (j.contains("timing_sizes")) c.timing_sizes = j["timing_sizes"].get<std::vector<int>>();
    if (j.contains("timing_repeats")) c.timing_repeats = j["timing_repeats"].get<int>();
    if (j.contains("timing_window_side")) c.timing_window_side = j["timing_window_side"].get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCategory::kFormat, std::string("config: ") + e.what());
  }
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  ExperimentConfig c;
  apply_json(read_json(path), c);
  return c;
}

/// Output root: $HMIMO_OUTPUT_DIR when set, else `fallback`.
inline std::filesystem::path output_root(const std::filesystem::path& fallback) {
  if (const char* env = std::getenv("HMIMO_OUTPUT_DIR"); env && *env) return env;
  return fallback;
}

inline SpatialCovariance scenario_covariance(int n_antennas, double spacing, double gain,
                                             Environment env, int truncation) {
  const ArrayGeometry g = build_geometry(n_antennas, spacing);
  SpatialCovariance iso = isotropic_covariance(g, gain);
  if (env == Environment::kTruncated) return truncated_covariance(iso, truncation);
  require(env == Environment::kIsotropic, "scenario_covariance: custom density needs the library API");
  return iso;
}

inline SpatialCovariance scenario_covariance(const DatasetManifest& m) {
  return scenario_covariance(m.n_antennas, m.spacing, m.gain, environment_from_string(m.environment),
                             m.truncation);
}

/// Deterministic RNG stream for one (environment, SNR point, role) cell.
enum class DataRole : std::uint64_t { kTrain = 1, kTest = 2 };

inline RngStream cell_stream(std::uint64_t seed, Environment env, double snr_db, DataRole role) {
  const auto snr_key = static_cast<std::uint64_t>(std::llround((snr_db + 1000.0) * 1000.0));
  const std::uint64_t id = (static_cast<std::uint64_t>(env) << 56) ^ (snr_key << 8) ^
                           static_cast<std::uint64_t>(role);
  return RngStream(seed, id);
}

inline std::string cell_name(Environment env, double snr_db) {
  std::ostringstream os;
  os << to_string(env) << "_" << std::fixed << std::setprecision(1) << snr_db << "dB";
  return os.str();
}

struct ScenarioData {
  Environment environment = Environment::kIsotropic;
  double snr_db = 0.0;
  double inv_snr = 0.0;
  PilotDataset train;  // pilots only
  PilotDataset test;   // pilots and channels
};

inline ScenarioData make_scenario(const ExperimentConfig& cfg, const SpatialCovariance& cov,
                                  double snr_db) {
  ScenarioData s;
  s.environment = cov.environment;
  s.snr_db = snr_db;
  s.inv_snr = db_to_inv_snr(snr_db);
  s.train = synthesize_dataset(cov, s.inv_snr, cfg.train_count,
                               cell_stream(cfg.seed, cov.environment, snr_db, DataRole::kTrain), false);
  s.test = synthesize_dataset(cov, s.inv_snr, cfg.test_count,
                              cell_stream(cfg.seed, cov.environment, snr_db, DataRole::kTest), true);
  return s;
}

inline DatasetManifest make_manifest(const ExperimentConfig& cfg, Environment env, double inv_snr) {
  DatasetManifest m;
  m.n_antennas = cfg.n_antennas;
  m.spacing = cfg.spacing;
  m.environment = to_string(env);
  m.truncation = cfg.truncation;
  m.gain = cfg.gain;
  m.inv_snr = inv_snr;
  m.seed = cfg.seed;
  return m;
}

/// Per-pilot blind estimates of 1/rho over the columns of `pilots`.
inline std::vector<double> estimate_inv_snr_each(const Matrix& pilots, int window_side,
                                                 const SeparationOptions& opt = {}) {
  const VscConfig vsc{window_side};
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(pilots.cols()));
  for (Eigen::Index i = 0; i < pilots.cols(); ++i) {
    out.push_back(estimate_inv_snr(pilots.col(i), vsc, opt).inv_rho_hat);
  }
  return out;
}

struct CellReport {
  std::string environment;
  double snr_db = 0.0;
  double inv_snr = 0.0;
  Eigen::Index test_count = 0;
  double ls_db = 0.0;
  double oracle_db = 0.0;
  double oracle_analytic_db = 0.0;
  double sample_db = 0.0;
  double score_true_db = 0.0;
  double score_est_db = 0.0;
  SnrStats snr;
  bool sample_clipped = false;
  double seconds_score_per_estimate = 0.0;
  double seconds_oracle_per_estimate = 0.0;
};

/// Runs all four estimators on one test set. The score estimator is evaluated
/// with the true 1/rho and with per-pilot blind estimates.
template <typename Scalar>
CellReport evaluate_cell(const SpatialCovariance& cov, const PilotDataset& test,
                         const ScoreNetwork<Scalar>& net, double inv_snr, int window_side) {
  require(test.has_truth(), "evaluate: test dataset has no channels");
  require(inv_snr > 0.0, "evaluate: inv_snr must be positive");
  using clock = std::chrono::steady_clock;
  const Matrix& y = test.pilots.matrix();
  const Matrix& h = *test.truth;
  CellReport r;
  r.environment = to_string(cov.environment);
  r.inv_snr = inv_snr;
  r.snr_db = -10.0 * std::log10(inv_snr);
  r.test_count = y.cols();

  r.ls_db = nmse(y, h).db;
  auto t0 = clock::now();
  const LinearMmse oracle(cov.real_cov, inv_snr);
  r.oracle_db = nmse(oracle.apply(y), h).db;
  r.seconds_oracle_per_estimate =
      std::chrono::duration<double>(clock::now() - t0).count() / static_cast<double>(y.cols());
  r.oracle_analytic_db = to_db(oracle_nmse_analytic(cov.real_cov, inv_snr));

  const SampleCovariance cs = sample_covariance(y, inv_snr);
  r.sample_clipped = cs.clipped;
  r.sample_db = nmse(LinearMmse(cs.cov, inv_snr).apply(y), h).db;

  const Matrix s = score_batch(net, y);
  r.score_true_db = nmse(y + inv_snr * s, h).db;

  t0 = clock::now();
  const std::vector<double> est = estimate_inv_snr_each(y, window_side);
  const Matrix s_timed = score_batch(net, y);
  Matrix h_est(y.rows(), y.cols());
  for (Eigen::Index i = 0; i < y.cols(); ++i) {
    h_est.col(i) = y.col(i) + est[static_cast<std::size_t>(i)] * s_timed.col(i);
  }
  r.seconds_score_per_estimate =
      std::chrono::duration<double>(clock::now() - t0).count() / static_cast<double>(y.cols());
  r.score_est_db = nmse(h_est, h).db;
  r.snr = summarize_estimates(est, inv_snr);
  return r;
}

inline std::string csv_header() {
  return "schema_version,environment,snr_db,inv_snr,test_count,nmse_ls_db,nmse_oracle_db,"
         "nmse_oracle_analytic_db,nmse_sample_db,nmse_score_true_db,nmse_score_est_db,"
         "inv_snr_hat_mean,inv_snr_bias,inv_snr_std,inv_snr_rmse,sample_clipped,"
         "sec_score_per_estimate,sec_oracle_per_estimate";
}

inline std::string csv_row(const CellReport& r) {
  std::ostringstream os;
  os << std::setprecision(10) << kCsvSchemaVersion << ',' << r.environment << ',' << r.snr_db << ','
     << r.inv_snr << ',' << r.test_count << ',' << r.ls_db << ',' << r.oracle_db << ','
     << r.oracle_analytic_db << ',' << r.sample_db << ',' << r.score_true_db << ','
     << r.score_est_db << ',' << r.snr.mean << ',' << r.snr.bias << ',' << r.snr.std << ','
     << r.snr.rmse << ',' << (r.sample_clipped ? 1 : 0) << ',' << r.seconds_score_per_estimate
     << ',' << r.seconds_oracle_per_estimate;
  return os.str();
}

inline nlohmann::json to_json(const CellReport& r) {
  return {{"environment", r.environment},
          {"snr_db", r.snr_db},
          {"inv_snr", r.inv_snr},
          {"test_count", r.test_count},
          {"nmse_db",
           {{"ls", r.ls_db},
            {"oracle_mmse", r.oracle_db},
            {"oracle_mmse_analytic", r.oracle_analytic_db},
            {"sample_mmse", r.sample_db},
            {"score_mmse_true_inv_snr", r.score_true_db},
            {"score_mmse_estimated_inv_snr", r.score_est_db}}},
          {"inv_snr_estimation",
           {{"mean", r.snr.mean}, {"bias", r.snr.bias}, {"std", r.snr.std}, {"rmse", r.snr.rmse}}},
          {"sample_clipped", r.sample_clipped},
          {"seconds_per_estimate",
           {{"score_mmse", r.seconds_score_per_estimate}, {"oracle_mmse", r.seconds_oracle_per_estimate}}}};
}

struct SweepPoint {
  double inv_snr_hat = 0.0;
  double nmse_db = 0.0;
};

/// Score-estimator NMSE when a fixed 1/rho-hat replaces the true value.
template <typename Scalar>
std::vector<SweepPoint> sweep_inv_snr(const PilotDataset& test, const ScoreNetwork<Scalar>& net,
                                      const std::vector<double>& values) {
  require(test.has_truth(), "sweep: test dataset has no channels");
  require(!values.empty(), "sweep: no values");
  const Matrix& y = test.pilots.matrix();
  const Matrix& h = *test.truth;
  const Matrix s = score_batch(net, y);
  std::vector<SweepPoint> out;
  for (double v : values) {
    require(v >= 0.0, "sweep: values must be nonnegative");
    out.push_back({v, nmse(y + v * s, h).db});
  }
  return out;
}

struct TimingRow {
  int n_antennas = 0;
  double score_seconds = 0.0;      // blind 1/rho + score + Tweedie step
  double score_net_seconds = 0.0;  // score + Tweedie step only
  double oracle_seconds = 0.0;     // factor (C + tau I), solve, multiply by C
  double oracle_apply_seconds = 0.0;
};

inline double median_of(std::vector<double> v) {
  require(!v.empty(), "median_of: empty");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Median single-pilot latencies. Weights are random: latency does not
/// depend on their values.
inline TimingRow time_estimators(int n_antennas, double spacing, const TrainConfig& tc,
                                 int window_side, int repeats, std::uint64_t seed) {
  require(repeats >= 1, "timing: repeats must be >= 1");
  using clock = std::chrono::steady_clock;
  const SpatialCovariance cov =
      scenario_covariance(n_antennas, spacing, 1.0, Environment::kIsotropic, 8);
  const double inv_snr = 0.1;
  RngStream rng(seed, 7);
  const PilotDataset ds = synthesize_dataset(cov, inv_snr, repeats + 1, rng, false);
  RngStream init(seed, 8);
  const auto net = ScoreNetwork<float>::initialized({2 * n_antennas, tc.hidden, tc.blocks}, init);
  const VscConfig vsc{window_side};

  auto time_one = [&](auto&& fn) {
    std::vector<double> t;
    volatile double sink = fn(ds.pilots.sample(repeats));  // warm-up
    for (int i = 0; i < repeats; ++i) {
      const auto t0 = clock::now();
      sink = fn(ds.pilots.sample(i));
      t.push_back(std::chrono::duration<double>(clock::now() - t0).count());
    }
    (void)sink;
    return median_of(t);
  };

  TimingRow row;
  row.n_antennas = n_antennas;
  row.score_seconds = time_one([&](const Vector& y) {
    const double tau = estimate_inv_snr(y, vsc).inv_rho_hat;
    return estimate_score_mmse(y, net, tau).h_hat[0];
  });
  row.score_net_seconds = time_one([&](const Vector& y) {
    return estimate_score_mmse(y, net, inv_snr).h_hat[0];
  });
  row.oracle_seconds = time_one([&](const Vector& y) {
    return estimate_oracle_mmse(y, cov.real_cov, inv_snr).h_hat[0];
  });
  const LinearMmse factored(cov.real_cov, inv_snr);
  row.oracle_apply_seconds = time_one([&](const Vector& y) { return factored.apply(y)[0]; });
  return row;
}

}  // namespace hmimo
