#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "tergan/data.hpp"
#include "tergan/losses.hpp"
#include "tergan/networks.hpp"
#include "tergan/optimizer.hpp"

namespace tergan {

struct OptimizerConfig {
  AdamConfig adam;
  std::size_t batch_size = 64;

  void validate() const;
  friend bool operator==(const OptimizerConfig&, const OptimizerConfig&) = default;
};

enum class DataSource { synth, folder, manifest };
const char* to_string(DataSource s);

struct DataConfig {
  DataSource source = DataSource::synth;
  std::string path;  // folder root or manifest file; unused for synth
  std::size_t synth_identities = 80;
  std::size_t synth_expressions = 6;
  std::uint64_t synth_seed = 7;
  std::size_t folds = 8;      // 0 keeps the manifest's own folds (or none)
  std::uint64_t fold_seed = 0;
  int held_out_fold = -1;     // -1 trains on every identity

  friend bool operator==(const DataConfig&, const DataConfig&) = default;
};

struct StageBudgets {
  std::uint64_t pretrain_expr = 2000;
  std::uint64_t pretrain_id = 2000;
  std::uint64_t adversarial = 10000;

  friend bool operator==(const StageBudgets&, const StageBudgets&) = default;
};

struct RunConfig {
  NetworkSpec network;
  OptimizerConfig optimizer;
  LossWeights weights;
  DataConfig data;
  AugmentationConfig augmentation;
  double same_identity_prob = 1.0;
  StageBudgets stages;
  double grl_scale = 1.0;
  std::uint64_t seed = 0;
  std::string output_dir = "run";
  std::uint64_t checkpoint_every = 500;

  /// Throws ConfigError when any nested invariant fails.
  void validate() const;
  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// The published hyperparameters at full width.
RunConfig published_config();
/// Reduced width (channels / 8), 32-pixel images and short budgets.
RunConfig desk_config();

/// Canonical JSON text; parse(serialize(c)) == c and serialize is a fixed point.
std::string serialize_config(const RunConfig& config);
/// Strict parse: every key required, unknown keys rejected, errors name the key
/// and its line.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);
void save_config(const RunConfig& config, const std::filesystem::path& path);

/// Compact JSON of one config section, parsed with the same strict rules.
std::string serialize_network(const NetworkSpec& spec);
NetworkSpec parse_network(const std::string& text);
std::string serialize_augmentation(const AugmentationConfig& aug);
AugmentationConfig parse_augmentation(const std::string& text);

/// Builds (or loads) the manifest described by `data`, applying folds.
DatasetManifest resolve_dataset(const DataConfig& data, std::size_t image_size);

}  // namespace tergan
