#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sliceroute/backbone/backbone.hpp"
#include "sliceroute/backbone/checkpoint.hpp"
#include "sliceroute/slicing/slicing.hpp"

namespace sliceroute::slice_aware {

using num::Tensor;

// Per-slice membership heads f_i, stored column-wise: column i of `weight`
// is w^f_i.
struct IndicatorParams {
  Tensor weight;  // [d x k]
  Tensor bias;    // [k]
};

// Per-slice square maps g_i, stored as k column blocks: columns
// [i*d, (i+1)*d) of `weight` are w^g_i.
struct ExpertParams {
  Tensor weight;  // [d x k*d]
  Tensor bias;    // [k*d]
};

// A row-wise linear head R^d -> R^1.
struct LinearHead {
  Tensor weight;  // [d x 1]
  Tensor bias;    // [1]
};
using SharedHeadParams = LinearHead;

enum class AttentionMethod {
  IndicatorOnly,       // softmax(P / tau)
  IndicatorPlusExpert  // softmax((P + |q_transform(Q)|) / tau)
};

std::string to_string(AttentionMethod method);
AttentionMethod parse_attention_method(const std::string& text);

struct AttentionConfig {
  AttentionMethod method = AttentionMethod::IndicatorOnly;
  double tau = 1.0;
  // Maps one expert's length-n score row to a scalar. Sized for the largest
  // hypothesis count; a list of n hypotheses uses the first n weights.
  LinearHead q_transform;

  void validate() const;
};

struct LossWeights {
  double base = 1.0;
  double indicator = 1.0;
  double expert = 1.0;
  double final = 1.0;
};

struct SliceAwareOptions {
  std::size_t max_hypotheses = 8;
  LossWeights loss_weights;
  double augment_sigma = 0.005;
  // Read augment_sigma as a variance instead of a standard deviation.
  bool augment_sigma_is_variance = false;
  bool freeze_backbone = true;
  // Score s with the shared head instead of the dedicated final head.
  bool final_uses_shared_head = false;

  double noise_stddev() const;
};

struct SliceAwareModel {
  backbone::BackboneParams backbone;
  slicing::SliceConfig slices;
  IndicatorParams indicators;
  ExpertParams experts;
  SharedHeadParams shared_head;
  LinearHead final_head;
  AttentionConfig attention;
  SliceAwareOptions options;

  // Heads start from the backbone: identity experts, and both the shared and
  // final head copy the predictor pi, so an untrained model routes exactly
  // like its backbone. Indicators and q_transform are small random maps.
  static SliceAwareModel init(const backbone::BackboneParams& backbone, const slicing::SliceConfig& slices,
                              AttentionConfig attention, SliceAwareOptions options, std::uint64_t seed);

  std::size_t k() const { return slices.k(); }
  std::size_t d() const { return backbone.config.representation_dim; }

  backbone::NamedTensors named_heads() const;
  std::vector<Tensor> head_params() const;
  // Everything the optimizer should update: heads, plus the backbone unless
  // frozen.
  std::vector<Tensor> trainable() const;
};

// --- component forwards; x is [B*n x d] with rows grouped by sample --------

// P: [B x k] membership likelihoods from the mean-pooled rows of each sample.
Tensor indicator_forward(const Tensor& x, std::size_t n, const IndicatorParams& indicators);

// sum_i BCE(P_i, gamma_i), averaged over the B samples.
Tensor indicator_loss(const Tensor& P, std::span<const slicing::SliceLabelVector> gammas);

// R: [B*n x k*d]; block i of row (b, j) is r_i for hypothesis j of sample b.
Tensor expert_forward(const Tensor& x, const ExpertParams& experts);
// r_i alone, [B*n x d].
Tensor expert_output(const Tensor& R, std::size_t slice, std::size_t d);

// Q: [B*k x n]; row (b, i) is sigmoid(shared_head(r_i)) over the n hypotheses.
Tensor expert_scores(const Tensor& R, const SharedHeadParams& shared, std::size_t n);

// sum_i gamma_i * BCE(Q_i, one-hot(g)), averaged over the B samples. Rows with
// gamma_i = 0 contribute no loss and no gradient.
Tensor expert_loss(const Tensor& Q, std::span<const slicing::SliceLabelVector> gammas,
                   std::span<const std::size_t> ground_truth, std::size_t n);

// a: [B x k].
Tensor attention_weights(const Tensor& P, const Tensor& Q, const AttentionConfig& config, std::size_t n);

// s = sum_i a_i r_i per hypothesis row: [B*n x d].
Tensor slice_representation(const Tensor& R, const Tensor& a, std::size_t n);

// [B*n] routing scores.
Tensor predict_final(const Tensor& s, const SliceAwareModel& model);

struct ForwardResult {
  Tensor P;
  Tensor R;
  Tensor Q;
  Tensor a;
  Tensor s;
  Tensor scores;
};

// Slice-aware path from a backbone representation.
ForwardResult forward_from_representation(const Tensor& x, std::size_t n, const SliceAwareModel& model);

struct LossBreakdown {
  Tensor total;
  double base = 0.0;
  double indicator = 0.0;
  double expert = 0.0;
  double final = 0.0;
};

// lambda_base * base + lambda_ind * indicator + lambda_exp * expert +
// lambda_final * final, each averaged over the batch. `x_slice` feeds the
// slice-aware heads (possibly augmented); `x_backbone` feeds the base loss.
LossBreakdown total_loss_from_representation(const Tensor& x_backbone, const Tensor& x_slice,
                                             std::span<const slicing::SliceLabelVector> gammas,
                                             std::span<const std::size_t> ground_truth, std::size_t n,
                                             const SliceAwareModel& model);

// Single-sample total loss through the full backbone.
LossBreakdown total_loss(const Sample& sample, const SliceAwareModel& model, const slicing::SliceLabelVector& gamma);

// x + delta on the rows of tail-slice samples, delta ~ N(0, stddev^2)
// elementwise; other rows pass through unchanged.
Tensor augment_tail(const Tensor& x, std::span<const slicing::SliceLabelVector> gammas, std::size_t n,
                    double stddev, std::mt19937_64& rng);

// --- checkpointing ------------------------------------------------------------

Checkpoint make_checkpoint(const SliceAwareModel& model);
SliceAwareModel model_from_checkpoint(const Checkpoint& checkpoint);

}  // namespace sliceroute::slice_aware
