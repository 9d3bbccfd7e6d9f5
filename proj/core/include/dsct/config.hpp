#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dsct/attention.hpp"

namespace dsct {

enum class StageMode { dual, coarse, fine };

std::string to_string(StageMode mode);
StageMode parse_stage_mode(const std::string& text);

struct ModelConfig {
  std::size_t base_channels = 32;
  std::array<std::size_t, 2> scale_channels{64, 128};
  std::size_t patch_size = 4;
  std::size_t heads = 4;
  std::size_t mlp_ratio = 2;
  AggregationMode aggregation_mode = AggregationMode::tfam;
  bool enable_scem = true;
  bool enable_fskip = true;
  bool enable_cfskip = true;
  bool enable_tfam_skip = true;
  bool share_branch_weights = true;
  StageMode stage_mode = StageMode::dual;
  // Inputs are reflect-padded to a multiple of this before the network.
  std::size_t pad_multiple = 16;

  // Throws ConfigError on inconsistent settings.
  void validate() const;
};

struct NoiseConfig {
  enum class Sampling { fixed, uniform };
  Sampling sampling = Sampling::uniform;
  double sigma = 25.0;  // fixed mode, 0-255 scale
  double sigma_min = 5.0;
  double sigma_max = 50.0;

  void validate() const;
};

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  std::vector<std::size_t> lr_decay_epochs{50, 60, 80};
  double lr_decay_factor = 10.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  std::size_t crop_size = 96;
  NoiseConfig noise;
  // 0 means no cap; otherwise training stops after this many optimizer steps.
  std::size_t max_steps = 0;
  // Adds the l2 loss of the coarse output in dual mode.
  bool aux_coarse_loss = false;
  // Caps frames per video used for training; 0 uses all.
  std::size_t max_frames_per_video = 0;

  void validate() const;
};

using KeyValues = std::map<std::string, std::string>;

KeyValues parse_key_values(const std::string& text);
KeyValues read_key_value_file(const std::filesystem::path& path);
std::string format_key_values(const KeyValues& kv);

// Unknown keys raise ConfigError; missing keys keep defaults.
void apply_settings(ModelConfig& cfg, const KeyValues& kv, bool ignore_unknown = false);
void apply_settings(TrainConfig& cfg, const KeyValues& kv, bool ignore_unknown = false);
void apply_settings(ModelConfig& model, TrainConfig& train, const KeyValues& kv);

KeyValues to_key_values(const ModelConfig& cfg);
KeyValues to_key_values(const TrainConfig& cfg);

// Shortest round-trip decimal form.
std::string format_double(double value);

}  // namespace dsct
