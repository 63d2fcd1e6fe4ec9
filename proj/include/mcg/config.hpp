#pragma once

#include "mcg/basis.hpp"
#include "mcg/harness.hpp"
#include "mcg/model.hpp"
#include "mcg/training.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace mcg {

/// Invalid or unknown configuration entry. key() names the offending key.
class ConfigError : public std::runtime_error {
public:
  ConfigError(std::string key, const std::string& what)
      : std::runtime_error(what), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

private:
  std::string key_;
};

struct DataOptions {
  std::string kind = "shapes"; // shapes | denoise | idx | cifar
  std::string path, labels, test_path, test_labels;
  int train_size = 256;
  int test_size = 128;
  int image_size = 20;
  int patch_size = 41;
  double sigma_lo = 0.0;
  double sigma_hi = 55.0;
  double eval_sigma = 25.0;
};

struct MgeOptions {
  MgeConfig measure;       // transform ranges of the probe g
  std::string layer = "wmcg"; // wmcg | conv
  int channels = 8;
  int images = 32;
  int image_size = 32;
  int seeds = 1;
};

/// Parsed run configuration.
///
/// Grammar: one `key = value` per line, `#` starts a comment, and a
/// `[section]` line prefixes following keys with `section.`. Reals accept a
/// `pi` suffix (`0.25pi`). Every key has a default; unknown keys are errors.
struct ExperimentConfig {
  std::uint64_t seed = 0;
  BasisSpec basis;
  SampleRanges ranges;
  bool sample_out = false;
  bool residual_output = true;
  Task task = Task::Classify;
  std::vector<LayerSpec> layers;
  TrainConfig train;
  DataOptions data;
  MgeOptions mge;
  ConvergenceSpec converge;

  /// Sorted `key=value` lines over every key, defaults included.
  std::string canonical_text() const { return canonical_; }
  /// FNV-1a 64 of canonical_text().
  std::uint64_t hash() const;
  std::string hash_hex() const;

  NetworkSpec network_spec(int in_channels, int num_classes) const;

  /// Replaces one value and re-validates everything.
  void set(const std::string& key, const std::string& value);

  static ExperimentConfig defaults();
  static ExperimentConfig parse(const std::string& text);
  static ExperimentConfig load(const std::filesystem::path& path);

private:
  void apply();
  std::map<std::string, std::string> values_;
  std::string canonical_;
};

/// `kind:key=value:...` entries separated by `;`.
std::vector<LayerSpec> parse_layers(const std::string& text);

/// Real with optional `pi` suffix. Throws ConfigError naming `key`.
double parse_real(const std::string& key, const std::string& text);

std::uint64_t fnv1a64(const std::string& text);

} // namespace mcg
