#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sliceroute/backbone/checkpoint.hpp"
#include "sliceroute/datagen/datagen.hpp"
#include "sliceroute/harness/config.hpp"
#include "sliceroute/slice_aware/slice_aware.hpp"

namespace sliceroute::harness {

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double validation_loss = 0.0;
};

struct TrainReport {
  std::string run_id;
  ModelKind model_kind = ModelKind::P;
  std::size_t train_samples = 0;
  std::size_t validation_samples = 0;
  std::vector<EpochRecord> epochs;
  // 0 means the initial parameters were kept.
  std::size_t selected_epoch = 0;
  double initial_validation_loss = 0.0;
  std::string parameter_hash;
  KeyValues config;
  std::vector<std::string> warnings;
};

struct TrainResult {
  Checkpoint checkpoint;
  TrainReport report;
};

struct TrainingData {
  std::vector<Sample> train;
  std::vector<Sample> validation;
  datagen::DatasetSchema schema;
  std::vector<std::string> warnings;
};

// Reads the training file (and its manifest for the schema), carves off the
// validation part, and upsamples the training part for *_UP kinds.
TrainingData load_training_data(const ExperimentConfig& config);
TrainingData prepare_training_data(const ExperimentConfig& config, std::vector<Sample> train,
                                   std::vector<Sample> validation, const datagen::DatasetSchema& schema);

// Sample indices grouped into batches that share one hypothesis count. The
// order within each group and the order of batches both come from `rng`.
std::vector<std::vector<std::size_t>> batch_plan(std::span<const Sample> samples, std::size_t batch_size,
                                                 std::mt19937_64& rng);

// Optional per-epoch callback for progress output.
using EpochObserver = std::function<void(const EpochRecord&)>;

backbone::BackboneConfig backbone_config_for(const ExperimentConfig& config, const datagen::DatasetSchema& schema);

TrainResult train_backbone(const ExperimentConfig& config, const TrainingData& data,
                           const EpochObserver& observer = {});
TrainResult train_slice_aware(const ExperimentConfig& config, const TrainingData& data,
                              const backbone::BackboneParams& backbone, const EpochObserver& observer = {});

// Dispatches on config.model_kind; loads the backbone checkpoint for S kinds.
TrainResult train(const ExperimentConfig& config, const EpochObserver& observer = {});

// Backbone representations x for each sample, computed once; rows of sample
// i are cache[i] ([n_i * d] row-major).
std::vector<std::vector<double>> encode_all(std::span<const Sample> samples, const backbone::BackboneParams& params,
                                            std::size_t batch_size = 256);

void write_train_report(const TrainReport& report, const std::filesystem::path& path);

}  // namespace sliceroute::harness
