#include "sliceroute/slicing/slicing.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "sliceroute/errors.hpp"

namespace sliceroute::slicing {

SliceConfig::SliceConfig(std::vector<std::string> intents, bool covers_all)
    : monitored_intents(std::move(intents)), base_covers_all(covers_all) {
  validate();
}

std::string SliceConfig::slice_name(std::size_t slice) const {
  if (slice == 0) return "base";
  return monitored_intents.at(slice - 1);
}

void SliceConfig::validate() const {
  std::set<std::string> seen;
  for (const auto& intent : monitored_intents) {
    if (intent.empty()) throw ConfigError("slice config contains an empty intent");
    if (!seen.insert(intent).second) throw ConfigError("slice config lists intent '" + intent + "' twice");
  }
}

bool SliceLabelVector::is_tail() const {
  for (std::size_t i = 1; i < gamma.size(); ++i) {
    if (gamma[i] == 1.0) return true;
  }
  return false;
}

std::size_t SliceLabelVector::primary_slice() const {
  for (std::size_t i = 1; i < gamma.size(); ++i) {
    if (gamma[i] == 1.0) return i;
  }
  return 0;
}

SliceLabelVector assign_slices(const Sample& sample, const SliceConfig& config) {
  SliceLabelVector labels;
  labels.gamma.assign(config.k(), 0.0);
  bool matched = false;
  for (std::size_t i = 0; i < config.monitored_intents.size(); ++i) {
    if (sample.ground_truth_intent == config.monitored_intents[i]) {
      labels.gamma[i + 1] = 1.0;
      matched = true;
    }
  }
  if (!matched || config.base_covers_all) labels.gamma[0] = 1.0;
  return labels;
}

SliceStats slice_stats(std::span<const Sample> dataset, const SliceConfig& config) {
  SliceStats stats;
  stats.counts.assign(config.k(), 0);
  stats.total = dataset.size();
  if (dataset.empty()) {
    stats.empty = true;
    return stats;
  }
  for (const auto& s : dataset) {
    auto labels = assign_slices(s, config);
    for (std::size_t i = 0; i < labels.k(); ++i) {
      if (labels.in_slice(i)) ++stats.counts[i];
    }
  }
  for (auto c : stats.counts) stats.fractions.push_back(static_cast<double>(c) / static_cast<double>(stats.total));
  return stats;
}

namespace {

std::string trim(const std::string& s) {
  auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

}  // namespace

SliceConfig read_slice_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open slice config " + path.string());
  std::vector<std::string> intents;
  for (std::string line; std::getline(in, line);) {
    auto t = trim(line);
    if (!t.empty()) intents.push_back(t);
  }
  return SliceConfig(std::move(intents));
}

void write_slice_config(const SliceConfig& config, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw InputError("cannot write slice config " + path.string());
  for (const auto& intent : config.monitored_intents) out << intent << '\n';
}

}  // namespace sliceroute::slicing
