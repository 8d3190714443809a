#include "sliceroute/slice_aware/slice_aware.hpp"

#include <cmath>
#include <sstream>

#include "sliceroute/errors.hpp"
#include "sliceroute/numerics/ops.hpp"

namespace sliceroute::slice_aware {

using namespace sliceroute::num;
using slicing::SliceLabelVector;

std::string to_string(AttentionMethod method) {
  return method == AttentionMethod::IndicatorOnly ? "indicator_only" : "indicator_plus_expert";
}

AttentionMethod parse_attention_method(const std::string& text) {
  if (text == "indicator_only") return AttentionMethod::IndicatorOnly;
  if (text == "indicator_plus_expert") return AttentionMethod::IndicatorPlusExpert;
  throw ConfigError("unknown attention method '" + text + "' (expected indicator_only or indicator_plus_expert)");
}

void AttentionConfig::validate() const {
  if (!(tau > 0.0)) throw ParameterError("attention temperature must be > 0, got " + std::to_string(tau));
}

double SliceAwareOptions::noise_stddev() const {
  if (!(augment_sigma >= 0.0)) throw ParameterError("augmentation sigma must be >= 0");
  return augment_sigma_is_variance ? std::sqrt(augment_sigma) : augment_sigma;
}

namespace {

Tensor copy_of(const Tensor& t) { return Tensor::from(t.shape(), {t.values().begin(), t.values().end()}, true); }

Tensor uniform(Shape shape, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor::from(std::move(shape), std::move(v), true);
}

void require_width(const Tensor& x, std::size_t d, const char* what) {
  if (x.rank() != 2 || x.dim(1) != d) {
    throw DimensionError(std::string(what) + ": representation " + shape_string(x.shape()) +
                         " does not have width " + std::to_string(d));
  }
}

void require_gammas(std::span<const SliceLabelVector> gammas, std::size_t batch, std::size_t k, const char* what) {
  if (gammas.size() != batch) {
    throw DimensionError(std::string(what) + ": " + std::to_string(gammas.size()) + " slice label vectors for " +
                         std::to_string(batch) + " samples");
  }
  for (const auto& g : gammas) {
    if (g.k() != k) {
      throw DimensionError(std::string(what) + ": slice label vector of length " + std::to_string(g.k()) +
                           ", expected " + std::to_string(k));
    }
  }
}

}  // namespace

SliceAwareModel SliceAwareModel::init(const backbone::BackboneParams& backbone, const slicing::SliceConfig& slices,
                                      AttentionConfig attention, SliceAwareOptions options, std::uint64_t seed) {
  attention.validate();
  slices.validate();
  options.noise_stddev();
  if (options.max_hypotheses == 0) throw ConfigError("max_hypotheses must be positive");
  std::mt19937_64 rng(seed);
  const std::size_t d = backbone.config.representation_dim, k = slices.k();

  SliceAwareModel m;
  m.backbone = backbone.clone();
  m.backbone.set_requires_grad(!options.freeze_backbone);
  m.slices = slices;
  m.options = options;

  const double bound = std::sqrt(6.0 / static_cast<double>(d + 1));
  m.indicators = {uniform({d, k}, bound, rng), Tensor::zeros({k}, true)};

  std::vector<double> eye(d * k * d, 0.0);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t r = 0; r < d; ++r) eye[r * k * d + i * d + r] = 1.0;
  m.experts = {Tensor::from({d, k * d}, std::move(eye), true), Tensor::zeros({k * d}, true)};

  m.shared_head = {copy_of(backbone.predictor_weight), copy_of(backbone.predictor_bias)};
  m.final_head = {copy_of(backbone.predictor_weight), copy_of(backbone.predictor_bias)};

  m.attention = attention;
  const double qb = 1.0 / std::sqrt(static_cast<double>(options.max_hypotheses));
  m.attention.q_transform = {uniform({options.max_hypotheses, 1}, qb, rng), Tensor::zeros({1}, true)};
  return m;
}

backbone::NamedTensors SliceAwareModel::named_heads() const {
  return {
      {"slice.indicator.weight", indicators.weight}, {"slice.indicator.bias", indicators.bias},
      {"slice.expert.weight", experts.weight},       {"slice.expert.bias", experts.bias},
      {"slice.shared_head.weight", shared_head.weight}, {"slice.shared_head.bias", shared_head.bias},
      {"slice.final_head.weight", final_head.weight},   {"slice.final_head.bias", final_head.bias},
      {"slice.q_transform.weight", attention.q_transform.weight},
      {"slice.q_transform.bias", attention.q_transform.bias},
  };
}

std::vector<Tensor> SliceAwareModel::head_params() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_heads()) out.push_back(t);
  return out;
}

std::vector<Tensor> SliceAwareModel::trainable() const {
  auto out = head_params();
  if (!options.freeze_backbone) {
    auto b = backbone.trainable();
    out.insert(out.end(), b.begin(), b.end());
  }
  return out;
}

Tensor indicator_forward(const Tensor& x, std::size_t n, const IndicatorParams& indicators) {
  require_width(x, indicators.weight.dim(0), "indicator_forward");
  Tensor pooled = segment_mean(x, n);
  return sigmoid(linear(pooled, indicators.weight, indicators.bias));
}

Tensor indicator_loss(const Tensor& P, std::span<const SliceLabelVector> gammas) {
  const std::size_t B = P.rank() == 2 ? P.dim(0) : 1;
  const std::size_t k = P.rank() == 2 ? P.dim(1) : P.size();
  require_gammas(gammas, B, k, "indicator_loss");
  std::vector<double> target;
  target.reserve(B * k);
  for (const auto& g : gammas) target.insert(target.end(), g.gamma.begin(), g.gamma.end());
  std::vector<double> weights(B * k, 1.0 / static_cast<double>(B));
  return weighted_bce(P, target, weights);
}

Tensor expert_forward(const Tensor& x, const ExpertParams& experts) {
  require_width(x, experts.weight.dim(0), "expert_forward");
  return linear(x, experts.weight, experts.bias);
}

Tensor expert_output(const Tensor& R, std::size_t slice, std::size_t d) { return slice_cols(R, slice * d, d); }

Tensor expert_scores(const Tensor& R, const SharedHeadParams& shared, std::size_t n) {
  const std::size_t d = shared.weight.dim(0);
  if (R.rank() != 2 || R.dim(1) % d != 0 || n == 0 || R.dim(0) % n != 0) {
    throw DimensionError("expert_scores: expert outputs " + shape_string(R.shape()) + " incompatible with d=" +
                         std::to_string(d) + ", n=" + std::to_string(n));
  }
  const std::size_t rows = R.dim(0), k = R.dim(1) / d;
  Tensor flat = reshape(R, {rows * k, d});
  Tensor scores = sigmoid(linear(flat, shared.weight, shared.bias));  // [(B*n*k) x 1]
  return transpose_blocks(reshape(scores, {rows, k}), n);                       // [B*k x n]
}

Tensor expert_loss(const Tensor& Q, std::span<const SliceLabelVector> gammas, std::span<const std::size_t> ground_truth,
                   std::size_t n) {
  if (Q.rank() != 2 || Q.dim(1) != n) throw DimensionError("expert_loss: Q " + shape_string(Q.shape()));
  const std::size_t B = ground_truth.size();
  if (B == 0 || Q.dim(0) % B != 0) throw DimensionError("expert_loss: Q rows do not divide into samples");
  const std::size_t k = Q.dim(0) / B;
  require_gammas(gammas, B, k, "expert_loss");
  std::vector<double> target(B * k * n, 0.0), weights(B * k * n, 0.0);
  const double scale = 1.0 / static_cast<double>(B * n);
  for (std::size_t b = 0; b < B; ++b) {
    if (ground_truth[b] >= n) {
      throw IndexError("ground truth index " + std::to_string(ground_truth[b]) + " out of range for " +
                       std::to_string(n) + " hypotheses");
    }
    for (std::size_t i = 0; i < k; ++i) {
      const double gi = gammas[b].gamma[i];
      for (std::size_t j = 0; j < n; ++j) {
        target[(b * k + i) * n + j] = j == ground_truth[b] ? 1.0 : 0.0;
        weights[(b * k + i) * n + j] = gi * scale;
      }
    }
  }
  return weighted_bce(Q, target, weights);
}

Tensor attention_weights(const Tensor& P, const Tensor& Q, const AttentionConfig& config, std::size_t n) {
  config.validate();
  if (P.rank() != 2) throw DimensionError("attention_weights: P must be [B x k], got " + shape_string(P.shape()));
  const std::size_t B = P.dim(0), k = P.dim(1);
  if (config.method == AttentionMethod::IndicatorOnly) return softmax_temp(P, config.tau);

  if (Q.rank() != 2 || Q.dim(0) != B * k || Q.dim(1) != n) {
    throw DimensionError("attention_weights: Q " + shape_string(Q.shape()) + " does not match P " +
                         shape_string(P.shape()) + " and n=" + std::to_string(n));
  }
  if (n > config.q_transform.weight.dim(0)) {
    throw DimensionError("attention_weights: " + std::to_string(n) + " hypotheses exceed the q_transform width " +
                         std::to_string(config.q_transform.weight.dim(0)));
  }
  Tensor phi = linear(Q, slice_rows(config.q_transform.weight, 0, n), config.q_transform.bias);
  return softmax_temp(add(P, abs(reshape(phi, {B, k}))), config.tau);
}

Tensor slice_representation(const Tensor& R, const Tensor& a, std::size_t n) { return mix_blocks(R, a, n); }

Tensor predict_final(const Tensor& s, const SliceAwareModel& model) {
  const LinearHead& head = model.options.final_uses_shared_head ? model.shared_head : model.final_head;
  require_width(s, head.weight.dim(0), "predict_final");
  return sigmoid(reshape(linear(s, head.weight, head.bias), {s.dim(0)}));
}

ForwardResult forward_from_representation(const Tensor& x, std::size_t n, const SliceAwareModel& model) {
  ForwardResult f;
  f.P = indicator_forward(x, n, model.indicators);
  f.R = expert_forward(x, model.experts);
  f.Q = expert_scores(f.R, model.shared_head, n);
  f.a = attention_weights(f.P, f.Q, model.attention, n);
  f.s = slice_representation(f.R, f.a, n);
  f.scores = predict_final(f.s, model);
  return f;
}

LossBreakdown total_loss_from_representation(const Tensor& x_backbone, const Tensor& x_slice,
                                             std::span<const SliceLabelVector> gammas,
                                             std::span<const std::size_t> ground_truth, std::size_t n,
                                             const SliceAwareModel& model) {
  const auto& w = model.options.loss_weights;
  auto f = forward_from_representation(x_slice, n, model);
  LossBreakdown out;
  std::vector<Tensor> terms;
  auto add_term = [&](double weight, const Tensor& term, double& slot) {
    slot = term.item();
    if (weight != 0.0) terms.push_back(weight == 1.0 ? term : scale(term, weight));
  };
  if (w.base != 0.0) {
    add_term(w.base, backbone::base_loss_batch(backbone::predict_base(x_backbone, model.backbone), ground_truth, n),
             out.base);
  }
  add_term(w.indicator, indicator_loss(f.P, gammas), out.indicator);
  add_term(w.expert, expert_loss(f.Q, gammas, ground_truth, n), out.expert);
  add_term(w.final, backbone::base_loss_batch(f.scores, ground_truth, n), out.final);

  if (terms.empty()) {
    out.total = Tensor::scalar(0.0);
  } else {
    out.total = terms.front();
    for (std::size_t i = 1; i < terms.size(); ++i) out.total = add(out.total, terms[i]);
  }
  return out;
}

LossBreakdown total_loss(const Sample& sample, const SliceAwareModel& model, const SliceLabelVector& gamma) {
  Tensor x = backbone::encode(sample, model.backbone);
  const std::size_t g[] = {sample.ground_truth_index};
  const SliceLabelVector gammas[] = {gamma};
  return total_loss_from_representation(x, x, gammas, g, sample.num_hypotheses(), model);
}

Tensor augment_tail(const Tensor& x, std::span<const SliceLabelVector> gammas, std::size_t n, double stddev,
                    std::mt19937_64& rng) {
  if (!(stddev >= 0.0)) throw ParameterError("augmentation sigma must be >= 0, got " + std::to_string(stddev));
  if (x.rank() != 2 || n == 0 || x.dim(0) != gammas.size() * n) {
    throw DimensionError("augment_tail: representation " + shape_string(x.shape()) + " does not hold " +
                         std::to_string(gammas.size()) + " samples of " + std::to_string(n) + " rows");
  }
  if (stddev == 0.0) return x;
  bool any_tail = false;
  for (const auto& g : gammas) any_tail = any_tail || g.is_tail();
  if (!any_tail) return x;

  const std::size_t d = x.dim(1);
  std::normal_distribution<double> noise(0.0, stddev);
  std::vector<double> delta(x.size(), 0.0);
  for (std::size_t b = 0; b < gammas.size(); ++b) {
    if (!gammas[b].is_tail()) continue;
    for (std::size_t i = b * n * d; i < (b + 1) * n * d; ++i) delta[i] = noise(rng);
  }
  return add(x, Tensor::from(x.shape(), std::move(delta)));
}

namespace {

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

Checkpoint make_checkpoint(const SliceAwareModel& model) {
  Checkpoint c;
  c.kind = "S";
  c.config = backbone::config_echo(model.backbone.config);
  std::string intents;
  for (std::size_t i = 0; i < model.slices.monitored_intents.size(); ++i) {
    intents += (i ? "|" : "") + model.slices.monitored_intents[i];
  }
  c.config["slices.monitored"] = intents;
  c.config["slices.base_covers_all"] = model.slices.base_covers_all ? "true" : "false";
  c.config["attention.method"] = to_string(model.attention.method);
  c.config["attention.tau"] = fmt_double(model.attention.tau);
  c.config["slice.max_hypotheses"] = std::to_string(model.options.max_hypotheses);
  c.config["slice.lambda_base"] = fmt_double(model.options.loss_weights.base);
  c.config["slice.lambda_indicator"] = fmt_double(model.options.loss_weights.indicator);
  c.config["slice.lambda_expert"] = fmt_double(model.options.loss_weights.expert);
  c.config["slice.lambda_final"] = fmt_double(model.options.loss_weights.final);
  c.config["slice.augment_sigma"] = fmt_double(model.options.augment_sigma);
  c.config["slice.augment_sigma_is_variance"] = model.options.augment_sigma_is_variance ? "true" : "false";
  c.config["slice.freeze_backbone"] = model.options.freeze_backbone ? "true" : "false";
  c.config["slice.final_uses_shared_head"] = model.options.final_uses_shared_head ? "true" : "false";
  c.add(model.backbone.named());
  c.add(model.named_heads());
  return c;
}

SliceAwareModel model_from_checkpoint(const Checkpoint& checkpoint) {
  if (checkpoint.kind != "S") throw FormatError("checkpoint kind '" + checkpoint.kind + "' is not a slice-aware model");
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = checkpoint.config.find(key);
    if (it == checkpoint.config.end()) throw FormatError("checkpoint config is missing '" + key + "'");
    return it->second;
  };
  auto flag = [&](const std::string& key) { return get(key) == "true"; };
  auto backbone_params = backbone::params_from_checkpoint(checkpoint);

  std::vector<std::string> monitored;
  std::stringstream ss(get("slices.monitored"));
  for (std::string item; std::getline(ss, item, '|');) monitored.push_back(item);
  slicing::SliceConfig slices(std::move(monitored), flag("slices.base_covers_all"));

  AttentionConfig attention;
  attention.method = parse_attention_method(get("attention.method"));
  attention.tau = std::stod(get("attention.tau"));
  SliceAwareOptions options;
  options.max_hypotheses = std::stoull(get("slice.max_hypotheses"));
  options.loss_weights = {std::stod(get("slice.lambda_base")), std::stod(get("slice.lambda_indicator")),
                          std::stod(get("slice.lambda_expert")), std::stod(get("slice.lambda_final"))};
  options.augment_sigma = std::stod(get("slice.augment_sigma"));
  options.augment_sigma_is_variance = flag("slice.augment_sigma_is_variance");
  options.freeze_backbone = flag("slice.freeze_backbone");
  options.final_uses_shared_head = flag("slice.final_uses_shared_head");

  SliceAwareModel m = SliceAwareModel::init(backbone_params, slices, attention, options, 0);
  checkpoint.load_into(m.backbone.named());
  checkpoint.load_into(m.named_heads());
  return m;
}

}  // namespace sliceroute::slice_aware
