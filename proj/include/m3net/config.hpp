#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "m3net/losses.hpp"
#include "m3net/model.hpp"

namespace m3net {

struct OptimConfig {
  Real lr = 1e-4;
  Real beta1 = 0.9;
  Real beta2 = 0.999;
  Real eps = 1e-8;
  std::size_t epochs = 120;
  std::size_t batch = 8;
  std::optional<std::size_t> lr_drop_epoch;  // nullopt: round(epochs · 100 / 120)
  Real lr_drop_lr = 2e-5;

  /// Epochs after this one train at lr_drop_lr.
  std::size_t drop_epoch() const;
  Real lr_at(std::size_t epoch) const;  // epoch is 1-based
};

struct DataConfig {
  std::size_t image_size = 64;
  std::size_t synthetic = 0;  // samples to generate when no dataset is given
  Real val_fraction = 0.2;
  bool rotate = true;
  Real crop = 0.9;
};

struct RunConfig {
  std::uint64_t seed = 0;
  ModelConfig model;
  BceReduction bce_reduction = BceReduction::mean;
  OptimConfig optim;
  DataConfig data;

  void validate() const;
};

/// `key = value` lines with `#` comments; unknown keys are ConfigError.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);
/// Applies one dotted key.
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);
std::vector<std::string> config_keys();

/// Every key in fixed order, one `key = value` line each; parse_config of
/// the result reproduces the config.
std::string serialize_config(const RunConfig& cfg);
/// FNV-1a 64 of the canonical text, leaving out the listed keys.
std::uint64_t config_hash(const RunConfig& cfg, const std::vector<std::string>& exclude = {});
std::string hex64(std::uint64_t v);

}  // namespace m3net
