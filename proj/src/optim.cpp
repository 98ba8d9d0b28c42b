#include "m2a/optim.hpp"

#include <cmath>
#include <string>

#include "m2a/errors.hpp"

namespace m2a::optim {

AdamState make_adam(std::span<const ad::Tensor> params, const AdamConfig& config) {
  AdamState state{config, {}, {}, 0};
  for (const auto& p : params) {
    state.first.emplace_back(p.numel(), 0.0);
    state.second.emplace_back(p.numel(), 0.0);
  }
  return state;
}

void adam_step(AdamState& state, std::span<ad::Tensor> params) {
  if (params.size() != state.first.size()) {
    throw ContractError("adam_step: optimizer holds " + std::to_string(state.first.size()) +
                        " moment buffers, got " + std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].has_grad()) throw ContractError("adam_step: parameter " + std::to_string(i) + " has no gradient");
    if (params[i].numel() != state.first[i].size()) throw ContractError("adam_step: parameter shape changed");
  }
  const auto& c = state.config;
  ++state.step;
  const double correct1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double correct2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto value = params[i].mutable_data();
    const auto grad = params[i].grad();
    auto& m = state.first[i];
    auto& v = state.second[i];
    for (std::size_t j = 0; j < value.size(); ++j) {
      const double g = grad[j] + c.weight_decay * value[j];
      m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g;
      v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g * g;
      const double m_hat = m[j] / correct1;
      const double v_hat = v[j] / correct2;
      value[j] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
    }
  }
}

}  // namespace m2a::optim
