#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "sliceroute/numerics/tensor.hpp"

namespace sliceroute::num {

// Standard single-layer LSTM cell. Gate blocks along the 4h axis are ordered
// input, forget, candidate, output.
struct LstmCell {
  Tensor input_weights;   // [e x 4h]
  Tensor hidden_weights;  // [h x 4h]
  Tensor bias;            // [4h]

  static LstmCell create(std::size_t input_dim, std::size_t hidden_dim, std::mt19937_64& rng);
  static LstmCell zeros(std::size_t input_dim, std::size_t hidden_dim);

  std::size_t input_dim() const { return input_weights.dim(0); }
  std::size_t hidden_dim() const { return hidden_weights.dim(0); }
};

struct BiLstm {
  LstmCell forward;
  LstmCell backward;

  std::size_t output_dim() const { return forward.hidden_dim() + backward.hidden_dim(); }
};

struct LstmState {
  Tensor hidden;  // [B x h]
  Tensor cell;    // [B x h]
};

LstmState lstm_step(const LstmCell& cell, const Tensor& input, const LstmState& previous);

// Batched bidirectional pass. steps[t] is the [B x e] input at time t;
// sequence b only occupies its first lengths[b] steps. Padded steps leave the
// recurrent state untouched, so the backward direction starts at each
// sequence's own last element. Returns one [B x 2h] tensor per time step,
// forward state then backward state.
std::vector<Tensor> bilstm_encode(const BiLstm& net, std::span<const Tensor> steps,
                                  std::span<const std::size_t> lengths);

// Single sequence [T x e] -> [T x 2h].
Tensor recurrent_encode(const Tensor& sequence, const BiLstm& net);

}  // namespace sliceroute::num
