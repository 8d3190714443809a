#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sliceroute/datagen/datagen.hpp"
#include "sliceroute/harness/compare.hpp"
#include "sliceroute/harness/config.hpp"
#include "sliceroute/harness/evaluate.hpp"
#include "sliceroute/harness/train.hpp"

namespace sliceroute::harness {

using Logger = std::function<void(const std::string&)>;

// FNV-1a of the samples' serialized dataset lines; equals file_hash of the
// file write_dataset would produce.
std::string dataset_hash(std::span<const Sample> samples);

std::map<std::string, std::size_t> intent_counts(std::span<const Sample> samples);

struct FourWayPlan {
  // Training traffic; the test set uses the same world on stream + 1.
  datagen::TrafficConfig traffic;
  std::size_t test_samples = 10000;
  // Shared settings (epochs, d, lr, slices, ...). model_kind, run_id and
  // paths are filled in per run.
  ExperimentConfig settings;
  // Written when non-empty: datasets, checkpoints, train and eval reports,
  // and the comparison table.
  std::filesystem::path out_dir;
};

struct FourWayResult {
  std::vector<TrainReport> train_reports;  // P, P_UP, S, S_UP
  std::vector<EvalReport> reports;         // same order
  Comparison comparison;                   // baseline P
  // Indicator AUC of S per slice on the test set.
  std::vector<std::optional<double>> indicator_auc;
  std::map<std::string, std::size_t> train_intent_counts;
};

FourWayResult run_four_way(const FourWayPlan& plan, const Logger& log = {});

struct SweepCell {
  slice_aware::AttentionMethod method = slice_aware::AttentionMethod::IndicatorOnly;
  double tau = 1.0;
};

std::string sweep_run_id(const SweepCell& cell);
// IndicatorOnly and IndicatorPlusExpert, each at tau 1.0 and 0.1.
std::vector<SweepCell> default_sweep_grid();

struct SweepResult {
  std::vector<EvalReport> reports;  // baseline first, then one per cell
  std::vector<TrainReport> train_reports;
  Comparison comparison;
};

// Trains one slice-aware model per cell on top of `backbone` and compares
// each against the backbone itself.
SweepResult run_sweep(const ExperimentConfig& settings, const TrainingData& data, const Checkpoint& backbone,
                      std::span<const Sample> test, std::span<const SweepCell> cells,
                      const std::filesystem::path& out_dir = {}, const Logger& log = {});

void write_comparison(const Comparison& comparison, const std::filesystem::path& out_dir, const std::string& stem);

}  // namespace sliceroute::harness
