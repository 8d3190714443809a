#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sliceroute/backbone/checkpoint.hpp"
#include "sliceroute/slice_aware/slice_aware.hpp"
#include "sliceroute/slicing/slicing.hpp"

namespace sliceroute::harness {

// Routing scorer built from a checkpoint of either kind.
class Router {
 public:
  static Router from_checkpoint(const Checkpoint& checkpoint);
  static Router backbone_only(backbone::BackboneParams params);
  static Router with_slices(slice_aware::SliceAwareModel model);

  bool is_slice_aware() const { return model_.has_value(); }
  const backbone::BackboneParams& backbone() const;
  const slice_aware::SliceAwareModel& model() const { return *model_; }
  std::string model_kind() const { return kind_; }
  // Set when built from a checkpoint.
  const std::string& parameter_hash() const { return hash_; }

  // Routing scores for one batch of samples sharing n: [B*n].
  num::Tensor scores(std::span<const Sample* const> batch) const;
  // Per-slice membership likelihoods [B x k]; slice-aware routers only.
  num::Tensor indicators(std::span<const Sample* const> batch) const;

 private:
  std::optional<backbone::BackboneParams> backbone_;
  std::optional<slice_aware::SliceAwareModel> model_;
  std::string kind_;
  std::string hash_;
};

struct SamplePrediction {
  std::string id;
  std::size_t predicted = 0;
  std::size_t ground_truth = 0;
  // Slices whose gamma is active for this sample.
  std::vector<std::size_t> slices;

  bool correct() const { return predicted == ground_truth; }
};

struct SliceAccuracy {
  std::string name;
  std::size_t support = 0;
  std::size_t correct = 0;
  // Training volume of the slice when known; drives the volume bands.
  std::optional<std::size_t> train_support;

  // Undefined (nullopt) for an empty slice.
  std::optional<double> ra() const;
};

struct EvalReport {
  std::string run_id;
  std::string model_kind;
  std::string parameter_hash;
  std::string test_hash;
  std::size_t test_size = 0;
  std::size_t correct = 0;
  // Index 0 is the base slice, then one entry per monitored intent.
  std::vector<SliceAccuracy> slices;
  std::vector<SamplePrediction> predictions;

  double overall_ra() const;
  // Mean RA over the defined tail slices (1..k-1); nullopt if none is defined.
  std::optional<double> tail_macro_ra() const;
};

// Replication accuracy: the share of samples whose argmax routing score hits
// the ground-truth hypothesis, overall and per slice. `test_hash` is recorded
// verbatim for later comparison.
EvalReport replication_accuracy(const Router& router, std::span<const Sample> test, const slicing::SliceConfig& slices,
                                const std::string& run_id, const std::string& test_hash,
                                std::size_t batch_size = 256);

// Attaches training volumes (by intent name; the base slice gets the
// remainder) to every slice of the report.
void attach_train_support(EvalReport& report, const std::map<std::string, std::size_t>& intent_counts);

void write_eval_report(const EvalReport& report, const std::filesystem::path& path);
EvalReport read_eval_report(const std::filesystem::path& path);
std::string eval_report_json(const EvalReport& report);

// Human-readable aligned summary, RA in percentage points with 2 decimals.
std::string format_eval_report(const EvalReport& report);

// Rank-based area under the ROC curve of `scores` against binary `labels`
// (ties share the average rank). nullopt when either class is absent.
std::optional<double> roc_auc(std::span<const double> scores, std::span<const bool> labels);

// Indicator AUC per slice (index 0 is the base slice) over `samples`.
std::vector<std::optional<double>> indicator_auc(const Router& router, std::span<const Sample> samples,
                                                 std::size_t batch_size = 256);

}  // namespace sliceroute::harness
