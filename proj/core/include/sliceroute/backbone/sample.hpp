#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace sliceroute {

// X: the query-level signals shared by every hypothesis.
struct QuerySignals {
  std::vector<std::size_t> utterance_tokens;
  std::size_t device_type = 0;
  std::vector<std::size_t> shared_context;

  bool operator==(const QuerySignals&) const = default;
};

// One routing candidate.
struct Hypothesis {
  std::string intent;
  std::size_t skill = 0;
  std::vector<std::size_t> interpretation_features;

  bool operator==(const Hypothesis&) const = default;
};

struct Sample {
  std::string id;
  QuerySignals signals;
  std::vector<Hypothesis> hypotheses;
  std::size_t ground_truth_index = 0;
  std::string ground_truth_intent;

  std::size_t num_hypotheses() const { return hypotheses.size(); }
  bool operator==(const Sample&) const = default;
};

// Structural invariants only (non-empty utterance, g in range, the ground
// truth intent matches hypothesis g). Vocabulary bounds are checked by the
// model that consumes the sample. Throws InputError.
void validate_sample(const Sample& sample, std::size_t max_hypotheses = 0);

}  // namespace sliceroute
