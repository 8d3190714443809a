#include "sliceroute/numerics/lstm.hpp"

#include <cmath>
#include <string>

#include "sliceroute/errors.hpp"
#include "sliceroute/numerics/ops.hpp"

namespace sliceroute::num {

LstmCell LstmCell::create(std::size_t input_dim, std::size_t hidden_dim, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
  std::uniform_real_distribution<double> dist(-bound, bound);
  auto draw = [&](Shape shape) {
    std::vector<double> v(numel(shape));
    for (auto& x : v) x = dist(rng);
    return Tensor::from(std::move(shape), std::move(v), true);
  };
  LstmCell cell;
  cell.input_weights = draw({input_dim, 4 * hidden_dim});
  cell.hidden_weights = draw({hidden_dim, 4 * hidden_dim});
  cell.bias = Tensor::zeros({4 * hidden_dim}, true);
  // forget-gate bias of 1 keeps early gradients flowing through the cell
  for (std::size_t i = hidden_dim; i < 2 * hidden_dim; ++i) cell.bias.mutable_values()[i] = 1.0;
  return cell;
}

LstmCell LstmCell::zeros(std::size_t input_dim, std::size_t hidden_dim) {
  return {Tensor::zeros({input_dim, 4 * hidden_dim}, true), Tensor::zeros({hidden_dim, 4 * hidden_dim}, true),
          Tensor::zeros({4 * hidden_dim}, true)};
}

LstmState lstm_step(const LstmCell& cell, const Tensor& input, const LstmState& previous) {
  const std::size_t h = cell.hidden_dim();
  if (input.rank() != 2 || input.dim(1) != cell.input_dim()) {
    throw DimensionError("lstm_step: input " + shape_string(input.shape()) + " does not match cell input width " +
                         std::to_string(cell.input_dim()));
  }
  Tensor gates = add_bias(add(matmul(input, cell.input_weights), matmul(previous.hidden, cell.hidden_weights)), cell.bias);
  Tensor in_gate = sigmoid(slice_cols(gates, 0, h));
  Tensor forget_gate = sigmoid(slice_cols(gates, h, h));
  Tensor candidate = tanh(slice_cols(gates, 2 * h, h));
  Tensor out_gate = sigmoid(slice_cols(gates, 3 * h, h));
  Tensor c = add(mul(forget_gate, previous.cell), mul(in_gate, candidate));
  Tensor hidden = mul(out_gate, tanh(c));
  return {hidden, c};
}

namespace {

// prev + mask * (next - prev); identity on rows whose mask is 0.
Tensor blend(const Tensor& previous, const Tensor& next, std::span<const double> mask, bool all_active) {
  if (all_active) return next;
  return add(previous, scale_rows(sub(next, previous), mask));
}

}  // namespace

std::vector<Tensor> bilstm_encode(const BiLstm& net, std::span<const Tensor> steps,
                                  std::span<const std::size_t> lengths) {
  const std::size_t T = steps.size();
  if (T == 0) throw InputError("recurrent encoder needs at least one time step");
  const std::size_t B = steps[0].dim(0);
  if (lengths.size() != B) throw DimensionError("bilstm_encode: lengths do not match batch size");
  for (auto len : lengths) {
    if (len == 0 || len > T) throw InputError("bilstm_encode: sequence length out of range");
  }

  std::vector<std::vector<double>> masks(T, std::vector<double>(B, 0.0));
  std::vector<bool> full(T, true);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t b = 0; b < B; ++b) {
      masks[t][b] = t < lengths[b] ? 1.0 : 0.0;
      if (masks[t][b] == 0.0) full[t] = false;
    }

  auto run = [&](const LstmCell& cell, bool reverse) {
    const std::size_t h = cell.hidden_dim();
    LstmState state{Tensor::zeros({B, h}), Tensor::zeros({B, h})};
    std::vector<Tensor> out(T);
    for (std::size_t k = 0; k < T; ++k) {
      const std::size_t t = reverse ? T - 1 - k : k;
      LstmState next = lstm_step(cell, steps[t], state);
      state.hidden = blend(state.hidden, next.hidden, masks[t], full[t]);
      state.cell = blend(state.cell, next.cell, masks[t], full[t]);
      out[t] = state.hidden;
    }
    return out;
  };

  auto fwd = run(net.forward, false);
  auto bwd = run(net.backward, true);
  std::vector<Tensor> out(T);
  for (std::size_t t = 0; t < T; ++t) out[t] = concat_cols({fwd[t], bwd[t]});
  return out;
}

Tensor recurrent_encode(const Tensor& sequence, const BiLstm& net) {
  if (sequence.rank() != 2 || sequence.dim(0) == 0) {
    throw InputError("recurrent_encode needs a non-empty [T x e] sequence");
  }
  const std::size_t T = sequence.dim(0);
  std::vector<Tensor> steps;
  steps.reserve(T);
  for (std::size_t t = 0; t < T; ++t) steps.push_back(slice_rows(sequence, t, 1));
  std::vector<std::size_t> lengths{T};
  return concat_rows(bilstm_encode(net, steps, lengths));
}

}  // namespace sliceroute::num
