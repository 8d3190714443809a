#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sliceroute/backbone/backbone.hpp"
#include "sliceroute/backbone/sample.hpp"
#include "sliceroute/slicing/slicing.hpp"

namespace sliceroute::datagen {

inline constexpr int kDatasetFormatVersion = 1;

// Parameters of the synthetic routing traffic. Intent i has popularity rank
// i; intents are drawn from a Zipf(zipf_exponent) law over ranks.
struct TrafficConfig {
  std::size_t num_samples = 10000;
  std::size_t num_intents = 40;
  double zipf_exponent = 1.2;
  std::vector<std::string> tail_intents;
  std::size_t vocab_size = 600;
  std::pair<std::size_t, std::size_t> utterance_length_range{3, 9};
  std::pair<std::size_t, std::size_t> hypotheses_range{2, 5};
  std::size_t num_skills = 80;
  std::size_t num_devices = 4;
  std::size_t num_context_values = 6;
  double label_noise_rate = 0.01;
  std::uint64_t seed = 1;
  // Independent sample stream over the same intent world (e.g. a test set).
  std::uint64_t stream = 0;

  // Token model: every intent owns `signature_tokens` tokens, of which a
  // fraction `intent_overlap` are borrowed from a more popular partner
  // intent. Each utterance token comes from the signature with probability
  // `signal_rate`, otherwise uniformly from the vocabulary.
  std::size_t signature_tokens = 6;
  double intent_overlap = 0.5;
  double signal_rate = 0.6;
  // Interpretation confidence buckets attached to each hypothesis.
  std::size_t confidence_buckets = 5;
  // Popularity rank from which intents route against their NLU confidence:
  // the production rules prefer the intent's hypothesis even when the
  // partner's interpretation scores higher.
  std::size_t override_from_rank = 8;
  std::size_t skills_per_intent = 2;

  void validate() const;
  std::map<std::string, std::string> echo() const;
};

// Intent inventory and per-intent generative parameters derived from the
// seed (never from the stream).
struct TrafficWorld {
  std::vector<std::string> intents;
  std::vector<std::size_t> partner;                  // more popular confusable intent (self for rank 0)
  std::vector<std::vector<std::size_t>> signatures;  // token ids
  std::vector<std::vector<std::size_t>> skills;      // candidate skills per intent
  std::vector<std::vector<std::size_t>> device_rule; // [intent][device] -> index into skills
  std::vector<double> popularity;                    // normalised Zipf weights

  std::size_t num_interpretation_features = 0;
};

TrafficWorld build_world(const TrafficConfig& config);

// Canonical intent names for ranks 0..n-1.
std::vector<std::string> intent_names(std::size_t n);
// Every second intent by popularity (ranks 2, 4, ...): a monitored tail set
// that spans the whole popularity range.
std::vector<std::string> default_tail_intents(std::size_t num_intents);

struct DatasetSchema {
  std::size_t vocab_size = 0;
  std::size_t num_devices = 0;
  std::size_t num_context_values = 0;
  std::size_t num_skills = 0;
  std::size_t num_interpretation_features = 0;
  std::size_t max_hypotheses = 0;
  std::vector<std::string> intents;

  backbone::BackboneConfig backbone_config() const;
};

DatasetSchema schema_of(const TrafficConfig& config);

struct DatasetManifest {
  int format_version = kDatasetFormatVersion;
  std::string path;
  std::size_t sample_count = 0;
  std::map<std::string, std::size_t> intent_counts;
  std::map<std::string, std::string> config;
  std::uint64_t seed = 0;
  DatasetSchema schema;
  std::vector<std::string> warnings;
  std::string content_hash;
};

// Deterministic in (config, seed, stream). Samples are produced in fixed-size
// shards whose RNG streams derive from (seed, stream, shard index).
std::vector<Sample> generate(const TrafficConfig& config);

// generate + write dataset and manifest (<path>.manifest.json).
DatasetManifest generate_to_file(const TrafficConfig& config, const std::filesystem::path& path);

// 0 < ratio < 1; the first part holds round(ratio * N) samples.
std::pair<std::vector<Sample>, std::vector<Sample>> split(std::span<const Sample> dataset, double ratio,
                                                          std::uint64_t seed);

struct UpsampleResult {
  std::vector<Sample> samples;
  std::vector<std::string> warnings;
};

// Duplicates samples of each monitored intent until its count reaches
// round(count * multiplier); duplicates get fresh ids. Output order is a
// seeded shuffle.
UpsampleResult upsample(std::span<const Sample> dataset, const slicing::SliceConfig& config, double multiplier,
                        std::uint64_t seed);

// --- files -------------------------------------------------------------------

std::string sample_to_json_line(const Sample& sample);
Sample sample_from_json_line(const std::string& line);

void write_dataset(std::span<const Sample> samples, const std::filesystem::path& path);
std::vector<Sample> read_dataset(const std::filesystem::path& path);

DatasetManifest make_manifest(std::span<const Sample> samples, const std::filesystem::path& path,
                              const DatasetSchema& schema, std::map<std::string, std::string> config,
                              std::uint64_t seed);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest read_manifest(const std::filesystem::path& path);
std::filesystem::path manifest_path_for(const std::filesystem::path& dataset_path);

// FNV-1a of the file bytes.
std::string file_hash(const std::filesystem::path& path);

}  // namespace sliceroute::datagen
