#pragma once

// Small models and random samples shared by the unit tests.

#include <random>
#include <string>
#include <vector>

#include "sliceroute/backbone/backbone.hpp"
#include "sliceroute/backbone/sample.hpp"
#include "sliceroute/slice_aware/slice_aware.hpp"

namespace sliceroute::testing {

inline backbone::BackboneConfig tiny_config(std::size_t d = 6) {
  backbone::BackboneConfig c;
  c.vocab_size = 20;
  c.num_devices = 3;
  c.num_context_values = 4;
  c.num_skills = 7;
  c.num_interpretation_features = 5;
  c.intents = {"A", "B", "C", "D"};
  c.token_dim = 4;
  c.encoder_hidden = 3;
  c.feature_dim = 3;
  c.representation_dim = d;
  return c;
}

inline Sample random_sample(const backbone::BackboneConfig& c, std::size_t n, std::mt19937_64& rng,
                            const std::string& id = "s") {
  auto pick = [&](std::size_t m) { return std::uniform_int_distribution<std::size_t>(0, m - 1)(rng); };
  Sample s;
  s.id = id;
  const std::size_t len = 1 + pick(6);
  for (std::size_t t = 0; t < len; ++t) s.signals.utterance_tokens.push_back(pick(c.vocab_size));
  s.signals.device_type = pick(c.num_devices);
  s.signals.shared_context = {pick(c.num_context_values)};
  for (std::size_t h = 0; h < n; ++h) {
    Hypothesis hyp;
    hyp.intent = c.intents[pick(c.intents.size())];
    hyp.skill = pick(c.num_skills);
    hyp.interpretation_features = {pick(c.num_interpretation_features), pick(c.num_interpretation_features)};
    s.hypotheses.push_back(hyp);
  }
  s.ground_truth_index = pick(n);
  s.ground_truth_intent = s.hypotheses[s.ground_truth_index].intent;
  return s;
}

inline void randomize(num::Tensor& t, std::mt19937_64& rng, double scale = 0.5) {
  std::uniform_real_distribution<double> u(-scale, scale);
  for (auto& v : t.mutable_values()) v = u(rng);
}

// k = 3 slices over the fixture intents, with every head perturbed away from
// its warm start so the loss terms are not degenerate.
inline slice_aware::SliceAwareModel toy_model(std::size_t d, slice_aware::AttentionMethod method, std::uint64_t seed,
                                              bool freeze = true) {
  auto backbone = backbone::BackboneParams::init(tiny_config(d), seed);
  slice_aware::AttentionConfig att;
  att.method = method;
  slice_aware::SliceAwareOptions opt;
  opt.max_hypotheses = 6;
  opt.freeze_backbone = freeze;
  auto m = slice_aware::SliceAwareModel::init(backbone, slicing::SliceConfig({"B", "C"}), att, opt, seed + 1);
  std::mt19937_64 rng(seed + 2);
  for (auto& [name, t] : m.named_heads()) {
    num::Tensor h = t;
    randomize(h, rng);
  }
  return m;
}

}  // namespace sliceroute::testing
