#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sliceroute/numerics/tensor.hpp"

namespace sliceroute::num {

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::int64_t t = 0;
  // One buffer per parameter, in the order parameters are passed to
  // adam_step. Empty until the first step.
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
};

// Bias-corrected Adam update, in place. Gradients are read, not cleared.
void adam_step(std::span<Tensor> params, AdamState& state);

void zero_grads(std::span<Tensor> params);

}  // namespace sliceroute::num
