// Command-line front end: generate, train, estimate-snr, evaluate,
// sweep-invsnr, timing, and run (all of the first four over the grid).

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "hmimo/bench.hpp"

namespace fs = std::filesystem;
using namespace hmimo;

namespace {

struct CommonOptions {
  std::string config_path;
  std::string out_dir;
  std::optional<int> epochs;
  std::optional<std::string> optimizer;
  std::optional<double> learning_rate;
  std::optional<std::uint64_t> seed;
  std::optional<int> n_antennas;
  std::optional<int> train_count;
  std::optional<int> test_count;
  std::vector<std::string> environments;
  std::vector<double> snr_db;
};

ExperimentConfig resolve_config(const CommonOptions& o) {
  ExperimentConfig c;
  if (!o.config_path.empty()) c = load_config(o.config_path);
  if (o.epochs) c.train.epochs = *o.epochs;
  if (o.optimizer) apply_json({{"optimizer", *o.optimizer}}, c.train);
  if (o.learning_rate) c.train.learning_rate = *o.learning_rate;
  if (o.seed) c.seed = *o.seed;
  if (o.n_antennas) c.n_antennas = *o.n_antennas;
  if (o.train_count) c.train_count = *o.train_count;
  if (o.test_count) c.test_count = *o.test_count;
  if (!o.environments.empty()) c.environments = o.environments;
  if (!o.snr_db.empty()) c.snr_db = o.snr_db;
  if (c.train.window_side == 0) c.train.window_side = c.window_side;
  c.validate();
  return c;
}

fs::path out_dir(const CommonOptions& o) {
  return o.out_dir.empty() ? output_root("hmimo_out") : fs::path(o.out_dir);
}

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("-c,--config", o.config_path, "experiment config (JSON)");
  cmd->add_option("-o,--out-dir", o.out_dir, "output directory (default $HMIMO_OUTPUT_DIR or ./hmimo_out)");
  cmd->add_option("--seed", o.seed, "master seed");
  cmd->add_option("--antennas", o.n_antennas, "antenna count N (perfect square)");
  cmd->add_option("--train-count", o.train_count, "training pilots M per cell");
  cmd->add_option("--test-count", o.test_count, "test pilots L per cell");
  cmd->add_option("--env", o.environments, "environments (isotropic, truncated)");
  cmd->add_option("--snr-db", o.snr_db, "SNR grid in dB");
  cmd->add_option("--epochs", o.epochs, "training epochs Q");
  cmd->add_option("--optimizer", o.optimizer, "sgd or adam");
  cmd->add_option("--lr", o.learning_rate, "learning rate");
}

fs::path train_path(const fs::path& dir, Environment env, double snr) {
  return dir / (cell_name(env, snr) + "_train.bin");
}
fs::path test_path(const fs::path& dir, Environment env, double snr) {
  return dir / (cell_name(env, snr) + "_test.bin");
}
fs::path model_path(const fs::path& dir, Environment env, double snr) {
  return dir / (cell_name(env, snr) + ".net");
}

void do_generate(const ExperimentConfig& cfg, const fs::path& dir) {
  for (const auto& name : cfg.environments) {
    const Environment env = environment_from_string(name);
    const SpatialCovariance cov =
        scenario_covariance(cfg.n_antennas, cfg.spacing, cfg.gain, env, cfg.truncation);
    for (double snr : cfg.snr_db) {
      const ScenarioData s = make_scenario(cfg, cov, snr);
      const DatasetManifest m = make_manifest(cfg, env, s.inv_snr);
      write_dataset(train_path(dir, env, snr), s.train, m, false);
      write_dataset(test_path(dir, env, snr), s.test, m, true);
      std::cerr << "generated " << cell_name(env, snr) << "\n";
    }
  }
}

void train_one(const fs::path& data, const fs::path& model, const TrainConfig& tc) {
  const LoadedDataset ds = read_dataset(data);
  // Training sees pilots only, whatever the file holds.
  const PilotSet& pilots = ds.data.pilots;
  try {
    auto result = train<float>(pilots, tc);
    write_model(model, result.network, tc);
    auto trace = model;
    trace += ".trace.json";
    write_json(trace, to_json(result.trace));
    std::cerr << "trained " << model.string() << " in " << result.trace.epochs.back().seconds
              << " s, final loss " << result.trace.epochs.back().mean_loss << "\n";
  } catch (const TrainingDiverged& e) {
    auto trace = model;
    trace += ".trace.json";
    write_json(trace, to_json(e.trace()));
    throw;
  }
}

void do_evaluate(const ExperimentConfig& cfg, const fs::path& dir, const fs::path& out) {
  fs::create_directories(out);
  std::ofstream csv(out / "evaluate.csv");
  if (!csv) throw Error(ErrorCategory::kIo, "cannot write " + (out / "evaluate.csv").string());
  csv << csv_header() << "\n";
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& name : cfg.environments) {
    const Environment env = environment_from_string(name);
    for (double snr : cfg.snr_db) {
      const LoadedDataset test = read_dataset(test_path(dir, env, snr));
      const LoadedModel model = read_model(model_path(dir, env, snr));
      const SpatialCovariance cov = scenario_covariance(test.manifest);
      const CellReport r =
          evaluate_cell(cov, test.data, model.network, test.manifest.inv_snr, cfg.window_side);
      csv << csv_row(r) << "\n";
      cells.push_back(to_json(r));
      std::cerr << cell_name(env, snr) << ": ls " << r.ls_db << " oracle " << r.oracle_db
                << " sample " << r.sample_db << " score(est) " << r.score_est_db << " dB\n";
    }
  }
  write_json(out / "summary.json",
             {{"schema_version", kCsvSchemaVersion}, {"config", to_json(cfg)}, {"cells", cells}});
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-supervised score-based channel estimation for holographic MIMO"};
  app.require_subcommand(1);

  CommonOptions gen_opt;
  auto* gen = app.add_subcommand("generate", "write train (pilots only) and test datasets per grid cell");
  add_common(gen, gen_opt);

  CommonOptions train_opt;
  std::string train_data;
  std::string train_model;
  auto* trn = app.add_subcommand("train", "train a score network from a pilot dataset");
  add_common(trn, train_opt);
  trn->add_option("-d,--data", train_data, "training dataset (.bin)")->required();
  trn->add_option("-m,--model", train_model, "output model file")->required();

  std::string snr_data;
  std::string snr_out;
  int snr_window = 0;
  std::string snr_rule = "marchenko-pastur";
  auto* est = app.add_subcommand("estimate-snr", "blind per-pilot 1/rho estimates");
  est->add_option("-d,--data", snr_data, "dataset (.bin)")->required();
  est->add_option("-o,--out", snr_out, "per-sample CSV (summary goes to stdout)");
  est->add_option("-w,--window", snr_window, "window side (default from array size)");
  est->add_option("--rule", snr_rule, "marchenko-pastur or gaussian");

  CommonOptions eval_opt;
  std::string eval_dir;
  auto* evl = app.add_subcommand("evaluate", "run all estimators on every grid cell");
  add_common(evl, eval_opt);
  evl->add_option("--data-dir", eval_dir, "directory with datasets and models (default: out dir)");

  std::string sweep_model;
  std::string sweep_data;
  std::string sweep_out;
  std::vector<double> sweep_values;
  auto* swp = app.add_subcommand("sweep-invsnr", "score NMSE versus the supplied 1/rho");
  swp->add_option("-m,--model", sweep_model, "model file")->required();
  swp->add_option("-d,--data", sweep_data, "test dataset with channels")->required();
  swp->add_option("-o,--out", sweep_out, "CSV output (default stdout)");
  swp->add_option("--values", sweep_values, "1/rho values (default 0..0.24 step 0.02)");

  CommonOptions timing_opt;
  auto* tim = app.add_subcommand("timing", "per-estimate latency of score and oracle estimators");
  add_common(tim, timing_opt);

  CommonOptions run_opt;
  auto* run = app.add_subcommand("run", "generate, train and evaluate the whole grid");
  add_common(run, run_opt);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      const auto cfg = resolve_config(gen_opt);
      do_generate(cfg, out_dir(gen_opt));
    } else if (trn->parsed()) {
      const auto cfg = resolve_config(train_opt);
      train_one(train_data, train_model, cfg.train);
    } else if (est->parsed()) {
      const LoadedDataset ds = read_dataset(snr_data);
      const Matrix& y = ds.data.pilots.matrix();
      long long side = 0;
      if (y.rows() % 2 != 0 || !is_perfect_square(y.rows() / 2, &side)) {
        throw Error(ErrorCategory::kInvalidArgument, "estimate-snr: N is not a perfect square");
      }
      const int window = snr_window > 0 ? snr_window : default_window_side(static_cast<int>(side));
      SeparationOptions opt;
      opt.rule = separation_rule_from_string(snr_rule);
      const auto values = estimate_inv_snr_each(y, window, opt);
      if (!snr_out.empty()) {
        std::ofstream csv(snr_out);
        if (!csv) throw Error(ErrorCategory::kIo, "cannot write " + snr_out);
        csv << "schema_version,index,inv_snr_hat\n" << std::setprecision(10);
        for (std::size_t i = 0; i < values.size(); ++i) {
          csv << kCsvSchemaVersion << ',' << i << ',' << values[i] << "\n";
        }
      }
      const SnrStats s = summarize_estimates(values, ds.manifest.inv_snr);
      std::cout << nlohmann::json{{"window_side", window},
                                  {"rule", to_string(opt.rule)},
                                  {"count", s.count},
                                  {"inv_snr", s.truth},
                                  {"mean", s.mean},
                                  {"bias", s.bias},
                                  {"std", s.std},
                                  {"rmse", s.rmse}}
                       .dump(2)
                << "\n";
    } else if (evl->parsed()) {
      const auto cfg = resolve_config(eval_opt);
      const fs::path out = out_dir(eval_opt);
      do_evaluate(cfg, eval_dir.empty() ? out : fs::path(eval_dir), out);
    } else if (swp->parsed()) {
      const LoadedModel model = read_model(sweep_model);
      const LoadedDataset ds = read_dataset(sweep_data);
      if (sweep_values.empty()) sweep_values = ExperimentConfig{}.sweep_values;
      const auto points = sweep_inv_snr(ds.data, model.network, sweep_values);
      std::ofstream file;
      if (!sweep_out.empty()) {
        file.open(sweep_out);
        if (!file) throw Error(ErrorCategory::kIo, "cannot write " + sweep_out);
      }
      std::ostream& os = sweep_out.empty() ? std::cout : file;
      os << "schema_version,inv_snr_hat,nmse_score_db,nmse_ls_db\n" << std::setprecision(10);
      const double ls = nmse(ds.data.pilots.matrix(), *ds.data.truth).db;
      for (const auto& p : points) {
        os << kCsvSchemaVersion << ',' << p.inv_snr_hat << ',' << p.nmse_db << ',' << ls << "\n";
      }
    } else if (tim->parsed()) {
      const auto cfg = resolve_config(timing_opt);
      std::cout << "schema_version,n_antennas,sec_score,sec_score_net_only,sec_oracle,sec_oracle_apply\n"
                << std::setprecision(6);
      for (int n : cfg.timing_sizes) {
        const TimingRow r = time_estimators(n, cfg.spacing, cfg.train, cfg.timing_window_side, cfg.timing_repeats, cfg.seed);
        std::cout << kCsvSchemaVersion << ',' << r.n_antennas << ',' << r.score_seconds << ','
                  << r.score_net_seconds << ',' << r.oracle_seconds << ',' << r.oracle_apply_seconds
                  << "\n";
      }
    } else if (run->parsed()) {
      const auto cfg = resolve_config(run_opt);
      const fs::path dir = out_dir(run_opt);
      do_generate(cfg, dir);
      for (const auto& name : cfg.environments) {
        const Environment env = environment_from_string(name);
        for (double snr : cfg.snr_db) {
          train_one(train_path(dir, env, snr), model_path(dir, env, snr), cfg.train);
        }
      }
      do_evaluate(cfg, dir, dir);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
