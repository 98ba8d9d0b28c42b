#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "m2a/tensor.hpp"

namespace m2a::optim {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // L2 term added to the gradient
};

struct AdamState {
  AdamConfig config;
  std::vector<std::vector<double>> first;   // one buffer per parameter
  std::vector<std::vector<double>> second;
  std::size_t step = 0;
};

AdamState make_adam(std::span<const ad::Tensor> params, const AdamConfig& config);

/// One bias-corrected Adam update of every parameter from its gradient buffer.
/// Throws ContractError when a parameter has no gradient or shapes changed.
void adam_step(AdamState& state, std::span<ad::Tensor> params);

}  // namespace m2a::optim
