// SPDX-License-Identifier: Apache-2.0
#include "owlfed/optim.hpp"

#include <cmath>
#include <string>

#include "owlfed/errors.hpp"

namespace owlfed {

OptimizerKind parse_optimizer_kind(std::string_view name) {
  if (name == "plain" || name == "sgd") return OptimizerKind::kPlain;
  if (name == "adamw") return OptimizerKind::kAdamW;
  throw ArgumentError("unknown optimizer '" + std::string(name) + "' (expected plain|adamw)");
}

std::string_view to_string(OptimizerKind kind) {
  return kind == OptimizerKind::kPlain ? "plain" : "adamw";
}

void optimizer_step(std::span<Tensor2* const> params, std::span<const Tensor2* const> grads,
                    OptimState& state) {
  if (params.size() != grads.size()) {
    throw DimensionError("optimizer_step: " + std::to_string(params.size()) +
                         " parameters but " + std::to_string(grads.size()) + " gradients");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->same_shape(*grads[i])) {
      throw DimensionError("optimizer_step: parameter " + std::to_string(i) + " is " +
                           params[i]->shape_string() + " but its gradient is " +
                           grads[i]->shape_string());
    }
    if (!grads[i]->all_finite()) {
      throw NumericError("optimizer_step: non-finite gradient for parameter " +
                         std::to_string(i) + ", update refused");
    }
  }

  const auto& cfg = state.config;
  if (cfg.kind == OptimizerKind::kPlain) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      Tensor2& p = *params[i];
      const Tensor2& g = *grads[i];
      for (std::size_t j = 0; j < p.size(); ++j) p[j] -= cfg.learning_rate * g[j];
    }
    ++state.step;
    return;
  }

  if (state.first_moment.empty()) {
    for (const Tensor2* p : params) {
      state.first_moment.push_back(Tensor2::zeros_like(*p));
      state.second_moment.push_back(Tensor2::zeros_like(*p));
    }
  } else if (state.first_moment.size() != params.size()) {
    throw DimensionError("optimizer_step: optimizer state tracks " +
                         std::to_string(state.first_moment.size()) + " parameters, got " +
                         std::to_string(params.size()));
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(cfg.beta1, t);
  const double bias2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor2& p = *params[i];
    const Tensor2& g = *grads[i];
    Tensor2& m = state.first_moment[i];
    Tensor2& v = state.second_moment[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      p[j] -= cfg.learning_rate * cfg.weight_decay * p[j];
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
      const double m_hat = m[j] / bias1;
      const double v_hat = v[j] / bias2;
      p[j] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
  }
}

}  // namespace owlfed
