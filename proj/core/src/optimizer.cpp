#include "conrad/optimizer.hpp"

#include <cmath>

namespace conrad {

const char* to_string(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::kAdan:
      return "adan";
    case OptimizerKind::kAdam:
      return "adam";
  }
  return "unknown";
}

OptimizerKind optimizer_kind_from_string(const std::string& name) {
  if (name == "adan") return OptimizerKind::kAdan;
  if (name == "adam") return OptimizerKind::kAdam;
  throw InvalidArgument("unknown optimizer '" + name + "' (expected adan or adam)");
}

OptimizerConfig OptimizerConfig::adam_defaults() {
  OptimizerConfig c;
  c.kind = OptimizerKind::kAdam;
  c.beta1 = 0.9;
  c.beta2 = 0.999;
  return c;
}

void OptimizerConfig::validate() const {
  if (!(learning_rate > 0.0)) throw InvalidArgument("learning rate must be positive");
  if (!(weight_decay >= 0.0)) throw InvalidArgument("weight decay must be non-negative");
  for (double b : {beta1, beta2, beta3}) {
    if (!(b >= 0.0 && b < 1.0)) throw InvalidArgument("optimizer betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw InvalidArgument("optimizer eps must be positive");
}

Optimizer::Optimizer(OptimizerConfig config, std::size_t n_params) : config_(config), size_(n_params) {
  config_.validate();
  state_.m.assign(n_params, 0.0f);
  state_.v.assign(n_params, 0.0f);
  if (config_.kind == OptimizerKind::kAdan) {
    state_.n.assign(n_params, 0.0f);
    state_.prev_grad.assign(n_params, 0.0f);
  }
}

void Optimizer::set_state(OptimizerState state) {
  const bool adan = config_.kind == OptimizerKind::kAdan;
  if (state.m.size() != size_ || state.v.size() != size_ || state.n.size() != (adan ? size_ : 0) ||
      state.prev_grad.size() != (adan ? size_ : 0)) {
    throw InvalidArgument("optimizer state does not match the parameter count or optimizer kind");
  }
  state_ = std::move(state);
}

void Optimizer::step(std::span<float> params, std::span<const float> grads) {
  if (params.size() != size_ || grads.size() != size_) throw InvalidArgument("optimizer size mismatch");
  for (float g : grads) {
    if (!std::isfinite(g)) throw NumericError("non-finite gradient rejected by the optimizer");
  }
  const std::uint64_t k = ++state_.step;
  const double lr = config_.learning_rate;
  const double decay = 1.0 - lr * config_.weight_decay;
  const double b1 = config_.beta1, b2 = config_.beta2, b3 = config_.beta3;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(k));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(k));
  if (config_.kind == OptimizerKind::kAdam) {
    for (std::size_t i = 0; i < size_; ++i) {
      const double g = grads[i];
      const double m = b1 * state_.m[i] + (1.0 - b1) * g;
      const double v = b2 * state_.v[i] + (1.0 - b2) * g * g;
      state_.m[i] = static_cast<float>(m);
      state_.v[i] = static_cast<float>(v);
      const double update = (m / bc1) / (std::sqrt(v / bc2) + config_.eps);
      params[i] = static_cast<float>(params[i] * decay - lr * update);
    }
    return;
  }
  const double bc3 = 1.0 - std::pow(b3, static_cast<double>(k));
  for (std::size_t i = 0; i < size_; ++i) {
    const double g = grads[i];
    const double diff = k == 1 ? 0.0 : g - static_cast<double>(state_.prev_grad[i]);
    const double m = b1 * state_.m[i] + (1.0 - b1) * g;
    const double v = b2 * state_.v[i] + (1.0 - b2) * diff;
    const double u = g + b2 * diff;
    const double n = b3 * state_.n[i] + (1.0 - b3) * u * u;
    state_.m[i] = static_cast<float>(m);
    state_.v[i] = static_cast<float>(v);
    state_.n[i] = static_cast<float>(n);
    state_.prev_grad[i] = static_cast<float>(g);
    const double update = (m / bc1 + b2 * v / bc2) / (std::sqrt(n / bc3) + config_.eps);
    params[i] = static_cast<float>(params[i] * decay - lr * update);
  }
}

}  // namespace conrad
