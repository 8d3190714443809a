#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "sliceroute/numerics/tensor.hpp"

namespace sliceroute::num {

inline constexpr double kBceEpsilon = 1e-7;

// --- linear algebra -------------------------------------------------------

// [m x p] * [p x q] -> [m x q]
Tensor matmul(const Tensor& a, const Tensor& b);

// a[m x q] + bias[q] broadcast over rows.
Tensor add_bias(const Tensor& a, const Tensor& bias);

// x[m x p] * w[p x q] + bias[q]; same result as add_bias(matmul(x, w), bias)
// without materialising the product separately.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);

// --- elementwise ----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// Subgradient sign(0) = 0.
Tensor abs(const Tensor& a);
Tensor scale(const Tensor& a, double factor);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);

// Multiplies row r of a 2-D tensor by the constant factors[r].
Tensor scale_rows(const Tensor& a, std::span<const double> factors);

// --- normalisation and losses ---------------------------------------------

// Temperature softmax. Rank-1 input is normalised as a whole; rank-2 input is
// normalised row by row. When `lengths` is non-empty, row r only normalises
// its first lengths[r] entries and the rest are exactly zero.
Tensor softmax_temp(const Tensor& logits, double tau, std::span<const std::size_t> lengths = {});

// Mean binary cross entropy, predictions clamped into [eps, 1 - eps].
Tensor bce_loss(const Tensor& pred, const Tensor& target);

// sum_e weights[e] * bce(pred[e], target[e]). Entries with weight exactly 0
// contribute neither loss nor gradient.
Tensor weighted_bce(const Tensor& pred, std::span<const double> target, std::span<const double> weights);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// --- layout ---------------------------------------------------------------

Tensor reshape(const Tensor& a, Shape shape);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t count);
Tensor slice_rows(const Tensor& a, std::size_t start, std::size_t count);

// [B x q] -> [B*n x q], each row repeated n times consecutively.
Tensor repeat_rows(const Tensor& a, std::size_t n);

// [B*n x d] -> [B x d], mean over each consecutive group of n rows.
Tensor segment_mean(const Tensor& a, std::size_t n);

// Batched transpose: a is B stacked [r x c] blocks ([B*r x c]); the result is
// B stacked [c x r] blocks ([B*c x r]).
Tensor transpose_blocks(const Tensor& a, std::size_t block_rows);

// Convex mixing of per-block representations. blocks is [B*n x k*d]: row
// (b, j) holds k consecutive d-wide blocks. weights is [B x k]. Output row
// (b, j) is sum_i weights[b, i] * block_i(b, j), shape [B*n x d].
Tensor mix_blocks(const Tensor& blocks, const Tensor& weights, std::size_t n);

// Mean of the embedding rows listed for each output row. An empty list yields
// a zero row. Ids must be < table rows.
Tensor embedding_bag(const Tensor& table, const std::vector<std::vector<std::size_t>>& ids);

}  // namespace sliceroute::num
