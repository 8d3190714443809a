#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sliceroute/harness/evaluate.hpp"

namespace sliceroute::harness {

// Training-volume strata for tail slices.
enum class VolumeBand { Over10K, Between1KAnd10K, Below1K };

inline constexpr VolumeBand kVolumeBands[] = {VolumeBand::Over10K, VolumeBand::Between1KAnd10K, VolumeBand::Below1K};

std::string band_label(VolumeBand band);
// > 10,000 | 1,000 to 10,000 | < 1,000
VolumeBand volume_band(std::size_t count);

// A slice counts as degraded when its delta is below this many points.
inline constexpr double kDegradationThreshold = -0.05;

struct ComparisonRow {
  std::string run_id;
  std::string model_kind;
  double overall_ra = 0.0;
  double overall_delta = 0.0;  // percentage points
  std::optional<double> tail_macro_ra;
  std::optional<double> tail_macro_delta;
  std::vector<std::optional<double>> slice_ra;
  std::vector<std::optional<double>> slice_delta;
  // Mean tail-slice delta per volume band, in kVolumeBands order.
  std::vector<std::optional<double>> band_delta;
  std::size_t degraded_tails = 0;
  std::size_t improved_tails = 0;
};

struct Comparison {
  std::string baseline;
  std::size_t test_size = 0;
  std::vector<std::string> slice_names;
  std::vector<std::size_t> test_support;
  // Volume used for banding: training support when reports carry it, else
  // test support.
  std::vector<std::size_t> volume;
  std::vector<ComparisonRow> rows;
};

// Deltas of every run against the run named `baseline`. Refuses reports from
// different test files or slice layouts.
Comparison compare(std::span<const EvalReport> reports, const std::string& baseline);

// Long format: one line per (run, slice) plus overall and tail-macro lines.
std::string comparison_csv(const Comparison& comparison);
// One row per run with overall / tail-macro / band deltas, then per-slice
// deltas.
std::string format_comparison(const Comparison& comparison);

std::string format_points(double points);

}  // namespace sliceroute::harness
