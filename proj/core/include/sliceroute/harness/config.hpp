#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "sliceroute/datagen/datagen.hpp"
#include "sliceroute/slice_aware/slice_aware.hpp"
#include "sliceroute/slicing/slicing.hpp"

namespace sliceroute::harness {

// Flat `section.key = value` settings. Lines starting with '#' are comments.
using KeyValues = std::map<std::string, std::string>;

KeyValues read_key_values(const std::filesystem::path& path);
KeyValues parse_key_values(const std::string& text);
void write_key_values(const KeyValues& values, const std::filesystem::path& path);
std::string format_key_values(const KeyValues& values);

enum class ModelKind { P, P_UP, S, S_UP };

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& text);
bool is_slice_aware(ModelKind kind);
bool is_upsampled(ModelKind kind);

enum class CheckpointSelection { BestValidation, FinalEpoch };

struct ExperimentConfig {
  ModelKind model_kind = ModelKind::P;
  std::string run_id;
  std::uint64_t seed = 1;

  std::filesystem::path train_path;
  // Empty: carve validation_ratio off the training file with the run seed.
  std::filesystem::path validation_path;
  std::filesystem::path test_path;
  double validation_ratio = 0.1;
  double upsample_multiplier = 3.0;

  slicing::SliceConfig slices;

  std::size_t epochs = 10;
  std::size_t batch_size = 256;
  double lr = 1e-3;
  CheckpointSelection selection = CheckpointSelection::BestValidation;

  std::size_t representation_dim = 128;
  std::size_t token_dim = 32;
  std::size_t encoder_hidden = 32;
  std::size_t feature_dim = 16;
  std::filesystem::path backbone_checkpoint;

  slice_aware::AttentionMethod attention_method = slice_aware::AttentionMethod::IndicatorOnly;
  double tau = 1.0;
  slice_aware::SliceAwareOptions slice_options;

  void validate() const;
  // Every key with its current value; parse_experiment_config(echo()) is an
  // identity.
  KeyValues echo() const;
};

// Unknown keys raise ConfigError. Relative paths resolve against `base_dir`.
ExperimentConfig parse_experiment_config(const KeyValues& values, const std::filesystem::path& base_dir = {});
ExperimentConfig read_experiment_config(const std::filesystem::path& path);

datagen::TrafficConfig parse_traffic_config(const KeyValues& values);
datagen::TrafficConfig read_traffic_config(const std::filesystem::path& path);

// Directory for run outputs: SLICEROUTE_OUT if set, else `fallback`.
std::filesystem::path output_directory(const std::filesystem::path& fallback);

}  // namespace sliceroute::harness
