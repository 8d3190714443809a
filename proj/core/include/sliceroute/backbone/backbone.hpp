#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sliceroute/backbone/sample.hpp"
#include "sliceroute/numerics/lstm.hpp"
#include "sliceroute/numerics/tensor.hpp"

namespace sliceroute::backbone {

struct BackboneConfig {
  std::size_t vocab_size = 0;
  std::size_t num_devices = 0;
  std::size_t num_context_values = 0;
  std::size_t num_skills = 0;
  std::size_t num_interpretation_features = 0;
  // Intent inventory; a hypothesis intent is embedded by its position here.
  std::vector<std::string> intents;

  std::size_t token_dim = 32;
  std::size_t encoder_hidden = 32;  // per direction
  std::size_t feature_dim = 16;
  std::size_t representation_dim = 128;  // d

  void validate() const;
  std::size_t intent_id(const std::string& intent) const;
  bool operator==(const BackboneConfig&) const = default;
};

using NamedTensors = std::vector<std::pair<std::string, num::Tensor>>;

// M and pi. Query tokens go through a BiLSTM with single-vector attention
// pooling; the pooled state plus device and context embeddings form the
// query encoding, which is concatenated onto each hypothesis' feature
// embedding and passed through two tanh layers to give one d-wide row per
// hypothesis. pi is a row-wise linear map to one logit.
struct BackboneParams {
  BackboneConfig config;
  num::Tensor token_embedding;
  num::Tensor device_embedding;
  num::Tensor context_embedding;
  num::Tensor intent_embedding;
  num::Tensor skill_embedding;
  num::Tensor feature_embedding;
  num::BiLstm encoder;
  num::Tensor pool_context;  // [2h x 1]
  num::Tensor fc1_weight;    // [(2h + 5f) x d]
  num::Tensor fc1_bias;
  num::Tensor fc2_weight;    // [d x d]
  num::Tensor fc2_bias;
  num::Tensor predictor_weight;  // [d x 1]
  num::Tensor predictor_bias;    // [1]

  static BackboneParams init(const BackboneConfig& config, std::uint64_t seed);

  NamedTensors named() const;
  std::vector<num::Tensor> trainable() const;
  void set_requires_grad(bool flag);
  // Copies every value from `other`; shapes must match.
  void assign_values(const BackboneParams& other);
  BackboneParams clone() const;
};

// A group of samples sharing one hypothesis count n, converted to ids.
struct EncodedBatch {
  std::size_t batch_size = 0;
  std::size_t num_hypotheses = 0;
  std::vector<std::vector<std::size_t>> step_tokens;  // [T][B], padded with 0
  std::vector<std::size_t> lengths;                  // [B]
  std::vector<std::vector<std::size_t>> devices;     // [B][1]
  std::vector<std::vector<std::size_t>> contexts;    // [B][*]
  std::vector<std::vector<std::size_t>> hyp_intents;   // [B*n][1]
  std::vector<std::vector<std::size_t>> hyp_skills;    // [B*n][1]
  std::vector<std::vector<std::size_t>> hyp_features;  // [B*n][*]
  std::vector<std::size_t> ground_truth;             // [B]
};

// Throws InputError on unknown ids or mixed hypothesis counts.
EncodedBatch make_batch(std::span<const Sample* const> samples, const BackboneConfig& config);

// x = M(X, H) for a batch: [B*n x d], rows grouped by sample.
num::Tensor encode_batch(const EncodedBatch& batch, const BackboneParams& params);
num::Tensor encode(const Sample& sample, const BackboneParams& params);

// sigmoid(pi(x)) row-wise: [rows x d] -> [rows].
num::Tensor predict_base(const num::Tensor& x, const BackboneParams& params);

// BCE against one-hot(g) over one sample's n scores.
num::Tensor base_loss(const num::Tensor& scores, std::size_t ground_truth);
// Mean over samples of the per-sample base loss; scores is [B*n].
num::Tensor base_loss_batch(const num::Tensor& scores, std::span<const std::size_t> ground_truth,
                            std::size_t num_hypotheses);

// argmax, ties to the lowest index.
std::size_t select_hypothesis(std::span<const double> scores);

}  // namespace sliceroute::backbone
