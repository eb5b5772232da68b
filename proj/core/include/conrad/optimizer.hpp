#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "conrad/common.hpp"

namespace conrad {

enum class OptimizerKind { kAdan, kAdam };

const char* to_string(OptimizerKind kind);
OptimizerKind optimizer_kind_from_string(const std::string& name);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdan;
  double learning_rate = 0.005;
  double weight_decay = 2e-5;
  // Adan uses all three; Adam uses beta1 and beta2.
  double beta1 = 0.98;
  double beta2 = 0.92;
  double beta3 = 0.99;
  double eps = 1e-8;

  static OptimizerConfig adam_defaults();
  void validate() const;
};

/// Moments kept between steps; serialized into checkpoints.
struct OptimizerState {
  std::uint64_t step = 0;
  std::vector<float> m;
  std::vector<float> v;
  std::vector<float> n;          // Adan only
  std::vector<float> prev_grad;  // Adan only

  bool operator==(const OptimizerState&) const = default;
};

/// Adan (Xie et al.) with decoupled weight decay and bias correction:
///   m = b1 m + (1-b1) g
///   v = b2 v + (1-b2) (g - g_prev)
///   n = b3 n + (1-b3) (g + b2 (g - g_prev))^2
///   p = p (1 - lr wd) - lr (m/bc1 + b2 v/bc2) / (sqrt(n/bc3) + eps)
/// with g_prev = g on the first step. Adam is AdamW with the same decay rule.
class Optimizer {
 public:
  Optimizer(OptimizerConfig config, std::size_t n_params);

  const OptimizerConfig& config() const { return config_; }
  const OptimizerState& state() const { return state_; }
  void set_state(OptimizerState state);

  /// Throws NumericError (leaving params untouched) if any gradient is non-finite.
  void step(std::span<float> params, std::span<const float> grads);

 private:
  OptimizerConfig config_;
  std::size_t size_;
  OptimizerState state_;
};

}  // namespace conrad
