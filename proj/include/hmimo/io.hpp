#pragma once

// On-disk formats.
//
// Dataset binary (little-endian):
//   char[8] "HMIMOPLT", u32 version, u32 flags (bit 0: truth present),
//   u32 dim (2N), u32 count, then `count` records of dim float32 pilot values,
//   then (bit 0 only) `count` records of dim float32 channel values.
// A JSON manifest with the scenario parameters sits next to each dataset.
//
// Model binary (little-endian):
//   char[8] "HMIMONET", u32 version, u32 dim, u32 hidden, u32 blocks,
//   u32 conditioning (0: sigma appended as an input feature), f64 sigma_scale,
//   u32 config length, config JSON bytes, u64 parameter count, float32 params.

#include "json.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "hmimo/channel.hpp"
#include "hmimo/error.hpp"
#include "hmimo/scorenet.hpp"

namespace hmimo {

static_assert(std::endian::native == std::endian::little, "file formats assume a little-endian host");

namespace io_detail {

inline std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCategory::kIo, "cannot open '" + path.string() + "' for writing");
  return out;
}

inline std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCategory::kIo, "cannot open '" + path.string() + "'");
  return in;
}

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::string& what) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw Error(ErrorCategory::kFormat, what + ": truncated header");
  return value;
}

inline void check_magic(std::istream& in, const char* magic, const std::string& what) {
  std::array<char, 8> buf{};
  in.read(buf.data(), 8);
  if (!in || std::memcmp(buf.data(), magic, 8) != 0) {
    throw Error(ErrorCategory::kFormat, what + ": bad magic");
  }
}

inline void write_f32(std::ostream& out, const double* data, Eigen::Index n) {
  std::vector<float> buf(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) buf[static_cast<std::size_t>(i)] = static_cast<float>(data[i]);
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(n * 4));
}

inline void read_f32(std::istream& in, double* data, Eigen::Index n, const std::string& what) {
  std::vector<float> buf(static_cast<std::size_t>(n));
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n * 4));
  if (!in) throw Error(ErrorCategory::kFormat, what + ": truncated payload");
  for (Eigen::Index i = 0; i < n; ++i) data[i] = buf[static_cast<std::size_t>(i)];
}

}  // namespace io_detail

inline constexpr std::uint32_t kDatasetVersion = 1;
inline constexpr std::uint32_t kModelVersion = 1;

/// Scenario parameters stored beside a dataset.
struct DatasetManifest {
  int n_antennas = 0;
  double spacing = 0.0;
  std::string environment;
  int truncation = 8;
  double gain = 1.0;
  double inv_snr = 0.0;
  long long count = 0;
  std::uint64_t seed = 0;
  bool with_truth = false;
};

inline nlohmann::json to_json(const DatasetManifest& m) {
  return {{"format_version", kDatasetVersion}, {"n_antennas", m.n_antennas},
          {"spacing", m.spacing},               {"environment", m.environment},
          {"truncation", m.truncation},
          {"gain", m.gain},                     {"inv_snr", m.inv_snr},
          {"count", m.count},                   {"seed", m.seed},
          {"with_truth", m.with_truth}};
}

inline DatasetManifest manifest_from_json(const nlohmann::json& j) {
  try {
    DatasetManifest m;
    m.n_antennas = j.at("n_antennas").get<int>();
    m.spacing = j.at("spacing").get<double>();
    m.environment = j.at("environment").get<std::string>();
    m.truncation = j.value("truncation", 8);
    m.gain = j.at("gain").get<double>();
    m.inv_snr = j.at("inv_snr").get<double>();
    m.count = j.at("count").get<long long>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.with_truth = j.at("with_truth").get<bool>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCategory::kFormat, std::string("manifest: ") + e.what());
  }
}

inline std::filesystem::path manifest_path(const std::filesystem::path& dataset) {
  auto p = dataset;
  p += ".json";
  return p;
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
  auto in = io_detail::open_in(path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCategory::kFormat, "'" + path.string() + "': " + e.what());
  }
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  auto out = io_detail::open_out(path);
  out << j.dump(2) << '\n';
  if (!out) throw Error(ErrorCategory::kIo, "write failed: '" + path.string() + "'");
}

/// Writes the binary and its manifest. Truth records are written only when
/// `with_truth` is set and the dataset carries them.
inline void write_dataset(const std::filesystem::path& path, const PilotDataset& ds,
                          DatasetManifest manifest, bool with_truth) {
  with_truth = with_truth && ds.has_truth();
  auto out = io_detail::open_out(path);
  out.write("HMIMOPLT", 8);
  io_detail::put<std::uint32_t>(out, kDatasetVersion);
  io_detail::put<std::uint32_t>(out, with_truth ? 1u : 0u);
  io_detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(ds.pilots.dim()));
  io_detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(ds.size()));
  const Matrix& y = ds.pilots.matrix();
  io_detail::write_f32(out, y.data(), y.size());
  if (with_truth) io_detail::write_f32(out, ds.truth->data(), ds.truth->size());
  if (!out) throw Error(ErrorCategory::kIo, "write failed: '" + path.string() + "'");
  manifest.with_truth = with_truth;
  manifest.count = ds.size();
  write_json(manifest_path(path), to_json(manifest));
}

struct LoadedDataset {
  PilotDataset data;
  DatasetManifest manifest;
};

inline LoadedDataset read_dataset(const std::filesystem::path& path) {
  const std::string what = "dataset '" + path.string() + "'";
  auto in = io_detail::open_in(path);
  io_detail::check_magic(in, "HMIMOPLT", what);
  const auto version = io_detail::get<std::uint32_t>(in, what);
  if (version != kDatasetVersion) {
    throw Error(ErrorCategory::kFormat, what + ": unsupported version " + std::to_string(version));
  }
  const auto flags = io_detail::get<std::uint32_t>(in, what);
  const auto dim = io_detail::get<std::uint32_t>(in, what);
  const auto count = io_detail::get<std::uint32_t>(in, what);
  if (dim == 0) throw Error(ErrorCategory::kFormat, what + ": zero record length");
  Matrix y(dim, count);
  io_detail::read_f32(in, y.data(), y.size(), what);
  std::optional<Matrix> truth;
  if (flags & 1u) {
    truth = Matrix(dim, count);
    io_detail::read_f32(in, truth->data(), truth->size(), what);
  }
  LoadedDataset out{PilotDataset{PilotSet(std::move(y)), std::move(truth), 0.0, Environment::kCustom},
                    {}};
  const auto mpath = manifest_path(path);
  if (std::filesystem::exists(mpath)) {
    out.manifest = manifest_from_json(read_json(mpath));
    out.data.inv_snr = out.manifest.inv_snr;
    try {
      out.data.environment = environment_from_string(out.manifest.environment);
    } catch (const Error&) {
      out.data.environment = Environment::kCustom;
    }
  }
  return out;
}

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"sigma_min", c.sigma_min},
          {"sigma_max", c.sigma_max},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"lr_halving_epochs", c.lr_halving_epochs},
          {"seed", c.seed},
          {"annealing", to_string(c.annealing)},
          {"optimizer", to_string(c.optimizer)},
          {"antithetic", c.antithetic},
          {"clip_norm", c.clip_norm},
          {"sigma_floor", c.sigma_floor},
          {"hidden", c.hidden},
          {"blocks", c.blocks},
          {"subspace_init", c.subspace_init},
          {"noise_floor_init", c.noise_floor_init == NoiseFloorInit::kBlindPca ? "blind-pca" : "fixed"},
          {"noise_floor", c.noise_floor},
          {"window_side", c.window_side}};
}

/// Applies the keys present in `j` on top of `c`.
inline void apply_json(const nlohmann::json& j, TrainConfig& c) {
  try {
    if (j.contains("learning_rate")) c.learning_rate = j["learning_rate"].get<double>();
    if (j.contains("sigma_min")) c.sigma_min = j["sigma_min"].get<double>();
    if (j.contains("sigma_max")) c.sigma_max = j["sigma_max"].get<double>();
    if (j.contains("epochs")) c.epochs = j["epochs"].get<int>();
    if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<int>();
    if (j.contains("lr_halving_epochs")) c.lr_halving_epochs = j["lr_halving_epochs"].get<int>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("annealing")) {
      const auto s = j["annealing"].get<std::string>();
      if (s == "decreasing") c.annealing = Annealing::kDecreasing;
      else if (s == "increasing") c.annealing = Annealing::kIncreasing;
      else throw Error(ErrorCategory::kInvalidArgument, "unknown annealing '" + s + "'");
    }
    if (j.contains("optimizer")) {
      const auto s = j["optimizer"].get<std::string>();
      if (s == "sgd") c.optimizer = OptimizerKind::kSgd;
      else if (s == "adam") c.optimizer = OptimizerKind::kAdam;
      else throw Error(ErrorCategory::kInvalidArgument, "unknown optimizer '" + s + "'");
    }
    if (j.contains("antithetic")) c.antithetic = j["antithetic"].get<bool>();
    if (j.contains("clip_norm")) c.clip_norm = j["clip_norm"].get<double>();
    if (j.contains("sigma_floor")) c.sigma_floor = j["sigma_floor"].get<double>();
    if (j.contains("hidden")) c.hidden = j["hidden"].get<int>();
    if (j.contains("blocks")) c.blocks = j["blocks"].get<int>();
    if (j.contains("subspace_init")) c.subspace_init = j["subspace_init"].get<bool>();
    if (j.contains("noise_floor_init")) {
      const auto s = j["noise_floor_init"].get<std::string>();
      if (s == "blind-pca") c.noise_floor_init = NoiseFloorInit::kBlindPca;
      else if (s == "fixed") c.noise_floor_init = NoiseFloorInit::kFixed;
      else throw Error(ErrorCategory::kInvalidArgument, "unknown noise_floor_init '" + s + "'");
    }
    if (j.contains("noise_floor")) c.noise_floor = j["noise_floor"].get<double>();
    if (j.contains("window_side")) c.window_side = j["window_side"].get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCategory::kFormat, std::string("train config: ") + e.what());
  }
}

template <typename Scalar>
void write_model(const std::filesystem::path& path, const ScoreNetwork<Scalar>& net,
                 const TrainConfig& cfg) {
  auto out = io_detail::open_out(path);
  out.write("HMIMONET", 8);
  io_detail::put<std::uint32_t>(out, kModelVersion);
  io_detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(net.shape().dim));
  io_detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(net.shape().hidden));
  io_detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(net.shape().blocks));
  io_detail::put<std::uint32_t>(out, 0u);
  io_detail::put<double>(out, static_cast<double>(net.sigma_scale()));
  const std::string echo = to_json(cfg).dump();
  io_detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(echo.size()));
  out.write(echo.data(), static_cast<std::streamsize>(echo.size()));
  io_detail::put<std::uint64_t>(out, static_cast<std::uint64_t>(net.parameter_count()));
  std::vector<float> buf(static_cast<std::size_t>(net.parameter_count()));
  for (Eigen::Index i = 0; i < net.parameter_count(); ++i) {
    buf[static_cast<std::size_t>(i)] = static_cast<float>(net.parameters()[i]);
  }
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
  if (!out) throw Error(ErrorCategory::kIo, "write failed: '" + path.string() + "'");
}

struct LoadedModel {
  ScoreNetwork<float> network;
  TrainConfig config;
};

inline LoadedModel read_model(const std::filesystem::path& path) {
  const std::string what = "model '" + path.string() + "'";
  auto in = io_detail::open_in(path);
  io_detail::check_magic(in, "HMIMONET", what);
  const auto version = io_detail::get<std::uint32_t>(in, what);
  if (version != kModelVersion) {
    throw Error(ErrorCategory::kFormat, what + ": unsupported version " + std::to_string(version));
  }
  NetworkShape shape;
  shape.dim = static_cast<int>(io_detail::get<std::uint32_t>(in, what));
  shape.hidden = static_cast<int>(io_detail::get<std::uint32_t>(in, what));
  shape.blocks = static_cast<int>(io_detail::get<std::uint32_t>(in, what));
  const auto conditioning = io_detail::get<std::uint32_t>(in, what);
  if (conditioning != 0) throw Error(ErrorCategory::kFormat, what + ": unknown conditioning mode");
  const auto sigma_scale = io_detail::get<double>(in, what);
  const auto echo_len = io_detail::get<std::uint32_t>(in, what);
  std::string echo(echo_len, '\0');
  in.read(echo.data(), echo_len);
  if (!in) throw Error(ErrorCategory::kFormat, what + ": truncated config");
  if (shape.dim < 1 || shape.hidden < 1 || !(sigma_scale > 0.0)) {
    throw Error(ErrorCategory::kFormat, what + ": invalid shape");
  }
  LoadedModel out{ScoreNetwork<float>(shape), {}};
  try {
    apply_json(nlohmann::json::parse(echo), out.config);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCategory::kFormat, what + ": " + e.what());
  }
  const auto count = io_detail::get<std::uint64_t>(in, what);
  if (static_cast<Eigen::Index>(count) != out.network.parameter_count()) {
    throw Error(ErrorCategory::kFormat, what + ": parameter count does not match shape");
  }
  in.read(reinterpret_cast<char*>(out.network.parameters().data()),
          static_cast<std::streamsize>(count * 4));
  if (!in) throw Error(ErrorCategory::kFormat, what + ": truncated parameters");
  out.network.set_sigma_scale(static_cast<float>(sigma_scale));
  out.network.check_finite();
  return out;
}

inline nlohmann::json to_json(const TrainTrace& t) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : t.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"mean_loss", e.mean_loss},
                      {"xi", e.xi},
                      {"learning_rate", e.learning_rate},
                      {"seconds", e.seconds},
                      {"noise_floor", e.noise_floor}});
  }
  return {{"initial_noise_floor", t.initial_noise_floor}, {"epochs", epochs}};
}

}  // namespace hmimo
