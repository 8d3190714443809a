#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "sliceroute/backbone/sample.hpp"

namespace sliceroute::slicing {

// Slice 0 is the base slice; slice i >= 1 monitors monitored_intents[i - 1].
struct SliceConfig {
  std::vector<std::string> monitored_intents;
  // Base slice membership. false: complement of the tail slices, so every
  // sample is in exactly one slice. true: every sample is in the base slice
  // as well as its tail slice.
  bool base_covers_all = false;

  SliceConfig() = default;
  explicit SliceConfig(std::vector<std::string> intents, bool covers_all = false);

  std::size_t k() const { return monitored_intents.size() + 1; }
  std::string slice_name(std::size_t slice) const;
  void validate() const;
  bool operator==(const SliceConfig&) const = default;
};

struct SliceLabelVector {
  std::vector<double> gamma;

  std::size_t k() const { return gamma.size(); }
  bool in_slice(std::size_t i) const { return gamma.at(i) == 1.0; }
  bool is_tail() const;
  // The single tail slice this sample belongs to, or 0.
  std::size_t primary_slice() const;
};

// Exact, case-sensitive match of the sample's ground-truth intent.
SliceLabelVector assign_slices(const Sample& sample, const SliceConfig& config);

struct SliceStats {
  std::vector<std::size_t> counts;
  std::vector<double> fractions;
  std::size_t total = 0;
  // Set when the dataset was empty; counts are zero and fractions undefined.
  bool empty = false;
};

SliceStats slice_stats(std::span<const Sample> dataset, const SliceConfig& config);

// One intent per line, order defines slice ids 1..k-1. Blank lines and
// surrounding whitespace are ignored.
SliceConfig read_slice_config(const std::filesystem::path& path);
void write_slice_config(const SliceConfig& config, const std::filesystem::path& path);

}  // namespace sliceroute::slicing
