#include "sliceroute/numerics/adam.hpp"

#include <cmath>
#include <string>

#include "sliceroute/errors.hpp"

namespace sliceroute::num {

void adam_step(std::span<Tensor> params, AdamState& state) {
  if (state.first_moment.empty() && state.second_moment.empty() && state.t == 0) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.size(), 0.0);
      state.second_moment.emplace_back(p.size(), 0.0);
    }
  }
  if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size()) {
    throw StateError("adam state tracks " + std::to_string(state.first_moment.size()) + " parameters, got " +
                     std::to_string(params.size()));
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (state.first_moment[k].size() != params[k].size() || state.second_moment[k].size() != params[k].size()) {
      throw StateError("adam moment buffer " + std::to_string(k) + " does not match parameter shape " +
                       shape_string(params[k].shape()));
    }
  }

  state.t += 1;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto values = params[k].mutable_values();
    auto grad = params[k].grad();
    auto& m = state.first_moment[k];
    auto& v = state.second_moment[k];
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = grad[i];
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
      values[i] -= state.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + state.epsilon);
    }
  }
}

void zero_grads(std::span<Tensor> params) {
  for (auto& p : params) p.zero_grad();
}

}  // namespace sliceroute::num
