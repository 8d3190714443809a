#include "sliceroute/backbone/backbone.hpp"

#include <algorithm>
#include <cmath>

#include "sliceroute/errors.hpp"
#include "sliceroute/numerics/ops.hpp"

namespace sliceroute {

void validate_sample(const Sample& sample, std::size_t max_hypotheses) {
  if (sample.signals.utterance_tokens.empty()) throw InputError("sample " + sample.id + ": empty utterance");
  if (sample.hypotheses.empty()) throw InputError("sample " + sample.id + ": empty hypothesis list");
  if (max_hypotheses != 0 && sample.hypotheses.size() > max_hypotheses) {
    throw InputError("sample " + sample.id + ": " + std::to_string(sample.hypotheses.size()) +
                     " hypotheses exceeds the maximum of " + std::to_string(max_hypotheses));
  }
  if (sample.ground_truth_index >= sample.hypotheses.size()) {
    throw InputError("sample " + sample.id + ": ground truth index out of range");
  }
  for (const auto& h : sample.hypotheses) {
    if (h.intent.empty()) throw InputError("sample " + sample.id + ": hypothesis with empty intent");
  }
  if (sample.hypotheses[sample.ground_truth_index].intent != sample.ground_truth_intent) {
    throw InputError("sample " + sample.id + ": ground truth intent '" + sample.ground_truth_intent +
                     "' differs from hypothesis intent '" + sample.hypotheses[sample.ground_truth_index].intent + "'");
  }
}

}  // namespace sliceroute

namespace sliceroute::backbone {

using num::Tensor;

void BackboneConfig::validate() const {
  if (vocab_size == 0 || num_devices == 0 || num_skills == 0 || intents.empty()) {
    throw ConfigError("backbone config needs non-zero vocab, device, skill and intent inventories");
  }
  if (token_dim == 0 || encoder_hidden == 0 || feature_dim == 0 || representation_dim == 0) {
    throw ConfigError("backbone layer widths must be positive");
  }
  std::vector<std::string> sorted(intents);
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw ConfigError("backbone intent inventory has duplicates");
  }
}

std::size_t BackboneConfig::intent_id(const std::string& intent) const {
  auto it = std::find(intents.begin(), intents.end(), intent);
  if (it == intents.end()) throw InputError("unknown intent '" + intent + "'");
  return static_cast<std::size_t>(it - intents.begin());
}

namespace {

Tensor uniform(num::Shape shape, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> v(num::numel(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor::from(std::move(shape), std::move(v), true);
}

Tensor xavier(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  return uniform({fan_in, fan_out}, std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)), rng);
}

}  // namespace

BackboneParams BackboneParams::init(const BackboneConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  const std::size_t f = config.feature_dim, h = config.encoder_hidden, d = config.representation_dim;
  BackboneParams p;
  p.config = config;
  p.token_embedding = uniform({config.vocab_size, config.token_dim}, 0.5, rng);
  p.device_embedding = uniform({config.num_devices, f}, 0.5, rng);
  p.context_embedding = uniform({std::max<std::size_t>(config.num_context_values, 1), f}, 0.5, rng);
  p.intent_embedding = uniform({config.intents.size(), f}, 0.5, rng);
  p.skill_embedding = uniform({config.num_skills, f}, 0.5, rng);
  p.feature_embedding = uniform({std::max<std::size_t>(config.num_interpretation_features, 1), f}, 0.5, rng);
  p.encoder.forward = num::LstmCell::create(config.token_dim, h, rng);
  p.encoder.backward = num::LstmCell::create(config.token_dim, h, rng);
  p.pool_context = xavier(2 * h, 1, rng);
  p.fc1_weight = xavier(2 * h + 5 * f, d, rng);
  p.fc1_bias = Tensor::zeros({d}, true);
  p.fc2_weight = xavier(d, d, rng);
  p.fc2_bias = Tensor::zeros({d}, true);
  p.predictor_weight = xavier(d, 1, rng);
  p.predictor_bias = Tensor::zeros({1}, true);
  return p;
}

NamedTensors BackboneParams::named() const {
  return {
      {"backbone.token_embedding", token_embedding},
      {"backbone.device_embedding", device_embedding},
      {"backbone.context_embedding", context_embedding},
      {"backbone.intent_embedding", intent_embedding},
      {"backbone.skill_embedding", skill_embedding},
      {"backbone.feature_embedding", feature_embedding},
      {"backbone.encoder.forward.input_weights", encoder.forward.input_weights},
      {"backbone.encoder.forward.hidden_weights", encoder.forward.hidden_weights},
      {"backbone.encoder.forward.bias", encoder.forward.bias},
      {"backbone.encoder.backward.input_weights", encoder.backward.input_weights},
      {"backbone.encoder.backward.hidden_weights", encoder.backward.hidden_weights},
      {"backbone.encoder.backward.bias", encoder.backward.bias},
      {"backbone.pool_context", pool_context},
      {"backbone.fc1.weight", fc1_weight},
      {"backbone.fc1.bias", fc1_bias},
      {"backbone.fc2.weight", fc2_weight},
      {"backbone.fc2.bias", fc2_bias},
      {"backbone.predictor.weight", predictor_weight},
      {"backbone.predictor.bias", predictor_bias},
  };
}

std::vector<Tensor> BackboneParams::trainable() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named()) out.push_back(t);
  return out;
}

void BackboneParams::set_requires_grad(bool flag) {
  for (auto& [name, t] : named()) {
    Tensor handle = t;
    handle.set_requires_grad(flag);
  }
}

void BackboneParams::assign_values(const BackboneParams& other) {
  auto mine = named();
  auto theirs = other.named();
  for (std::size_t i = 0; i < mine.size(); ++i) {
    if (mine[i].second.shape() != theirs[i].second.shape()) {
      throw DimensionError("cannot assign " + mine[i].first + ": shape " + num::shape_string(theirs[i].second.shape()) +
                           " vs " + num::shape_string(mine[i].second.shape()));
    }
    auto dst = mine[i].second.mutable_values();
    std::copy(theirs[i].second.values().begin(), theirs[i].second.values().end(), dst.begin());
  }
}

BackboneParams BackboneParams::clone() const {
  BackboneParams copy = init(config, 0);
  copy.assign_values(*this);
  return copy;
}

EncodedBatch make_batch(std::span<const Sample* const> samples, const BackboneConfig& config) {
  if (samples.empty()) throw InputError("empty batch");
  EncodedBatch b;
  b.batch_size = samples.size();
  b.num_hypotheses = samples.front()->num_hypotheses();
  std::size_t max_len = 0;
  for (const Sample* s : samples) {
    validate_sample(*s);
    if (s->num_hypotheses() != b.num_hypotheses) throw InputError("batch mixes hypothesis counts");
    max_len = std::max(max_len, s->signals.utterance_tokens.size());
  }
  b.step_tokens.assign(max_len, std::vector<std::size_t>(b.batch_size, 0));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = *samples[i];
    const auto& toks = s.signals.utterance_tokens;
    for (std::size_t t = 0; t < toks.size(); ++t) {
      if (toks[t] >= config.vocab_size) {
        throw InputError("sample " + s.id + ": token id " + std::to_string(toks[t]) + " outside vocabulary of " +
                         std::to_string(config.vocab_size));
      }
      b.step_tokens[t][i] = toks[t];
    }
    b.lengths.push_back(toks.size());
    if (s.signals.device_type >= config.num_devices) {
      throw InputError("sample " + s.id + ": unknown device type " + std::to_string(s.signals.device_type));
    }
    b.devices.push_back({s.signals.device_type});
    for (auto c : s.signals.shared_context) {
      if (c >= config.num_context_values) throw InputError("sample " + s.id + ": unknown context id " + std::to_string(c));
    }
    b.contexts.push_back(s.signals.shared_context);
    for (const auto& h : s.hypotheses) {
      if (h.skill >= config.num_skills) throw InputError("sample " + s.id + ": unknown skill id " + std::to_string(h.skill));
      for (auto fid : h.interpretation_features) {
        if (fid >= config.num_interpretation_features) {
          throw InputError("sample " + s.id + ": unknown interpretation feature " + std::to_string(fid));
        }
      }
      b.hyp_intents.push_back({config.intent_id(h.intent)});
      b.hyp_skills.push_back({h.skill});
      b.hyp_features.push_back(h.interpretation_features);
    }
    b.ground_truth.push_back(s.ground_truth_index);
  }
  return b;
}

Tensor encode_batch(const EncodedBatch& batch, const BackboneParams& params) {
  using namespace num;
  const std::size_t B = batch.batch_size, n = batch.num_hypotheses, T = batch.step_tokens.size();
  const std::size_t width = params.encoder.output_dim();

  std::vector<Tensor> steps;
  steps.reserve(T);
  for (std::size_t t = 0; t < T; ++t) {
    std::vector<std::vector<std::size_t>> ids(B);
    for (std::size_t b = 0; b < B; ++b) ids[b] = {batch.step_tokens[t][b]};
    steps.push_back(embedding_bag(params.token_embedding, ids));
  }
  auto states = bilstm_encode(params.encoder, steps, batch.lengths);

  // attention pooling over time with one learned context vector
  Tensor stacked = concat_cols(states);  // [B x T*2h]
  Tensor scores = reshape(matmul(reshape(stacked, {B * T, width}), params.pool_context), {B, T});
  Tensor weights = softmax_temp(scores, 1.0, batch.lengths);
  Tensor pooled = mix_blocks(stacked, weights, 1);  // [B x 2h]

  Tensor query = concat_cols({pooled, embedding_bag(params.device_embedding, batch.devices),
                              embedding_bag(params.context_embedding, batch.contexts)});
  Tensor hyp = concat_cols({embedding_bag(params.intent_embedding, batch.hyp_intents),
                            embedding_bag(params.skill_embedding, batch.hyp_skills),
                            embedding_bag(params.feature_embedding, batch.hyp_features)});
  Tensor fused = concat_cols({repeat_rows(query, n), hyp});
  Tensor h1 = tanh(linear(fused, params.fc1_weight, params.fc1_bias));
  return tanh(linear(h1, params.fc2_weight, params.fc2_bias));
}

Tensor encode(const Sample& sample, const BackboneParams& params) {
  const Sample* one[] = {&sample};
  return encode_batch(make_batch(one, params.config), params);
}

Tensor predict_base(const Tensor& x, const BackboneParams& params) {
  const std::size_t d = params.config.representation_dim;
  if (x.rank() != 2 || x.dim(1) != d) {
    throw DimensionError("predict_base: representation " + num::shape_string(x.shape()) + " does not have width " +
                         std::to_string(d));
  }
  Tensor logits = num::add_bias(num::matmul(x, params.predictor_weight), params.predictor_bias);
  return num::sigmoid(num::reshape(logits, {x.dim(0)}));
}

Tensor base_loss(const Tensor& scores, std::size_t ground_truth) {
  const std::size_t g[] = {ground_truth};
  return base_loss_batch(scores, g, scores.size());
}

Tensor base_loss_batch(const Tensor& scores, std::span<const std::size_t> ground_truth, std::size_t num_hypotheses) {
  const std::size_t B = ground_truth.size(), n = num_hypotheses;
  if (n == 0 || scores.size() != B * n) {
    throw DimensionError("base_loss: " + std::to_string(scores.size()) + " scores for " + std::to_string(B) +
                         " samples of " + std::to_string(n) + " hypotheses");
  }
  std::vector<double> target(B * n, 0.0);
  for (std::size_t b = 0; b < B; ++b) {
    if (ground_truth[b] >= n) {
      throw IndexError("ground truth index " + std::to_string(ground_truth[b]) + " out of range for " +
                       std::to_string(n) + " hypotheses");
    }
    target[b * n + ground_truth[b]] = 1.0;
  }
  std::vector<double> weights(B * n, 1.0 / static_cast<double>(B * n));
  return num::weighted_bce(scores, target, weights);
}

std::size_t select_hypothesis(std::span<const double> scores) {
  if (scores.empty()) throw InputError("select_hypothesis on an empty score list");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  return best;
}

}  // namespace sliceroute::backbone
