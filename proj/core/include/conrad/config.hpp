#pragma once

#include <cstdint>
#include <string>

#include "conrad/objectives.hpp"
#include "conrad/optimizer.hpp"
#include "conrad/radiance_field.hpp"
#include "conrad/scene.hpp"

namespace conrad {

struct DiffusionSettings {
  int n_steps = 1000;
  double beta_start = 1e-4;
  double beta_end = 2e-2;
  double t_min = 0.02;
  double t_max = 0.98;
  int max_retries = 3;
};

struct RegularizerSettings {
  /// Rays of each view used for the normal-based terms (0 = all rays).
  int rays = 0;
  /// Smoothness is evaluated at samples of those rays whose rendering weight
  /// exceeds this floor, at most `smooth_points` of them (0 = no cap).
  double smooth_weight_floor = 1e-3;
  int smooth_points = 0;
  double smooth_radius = 0.01;
  double normal_step = 1e-3;
};

/// Everything a training run depends on. Serialized field-for-field to JSON;
/// unknown keys are rejected on load.
struct TrainConfig {
  int total_steps = 5000;
  OptimizerConfig optimizer;
  LossWeights loss_weights;
  PoseBounds pose_bounds;
  CameraIntrinsics render;
  std::uint64_t seed = 0;
  double eta = 0.1;
  double plateau_fraction = 0.5;
  int n_samples = 128;
  double bound_radius = 1.5;
  FieldConfig field;
  DiffusionSettings diffusion;
  RegularizerSettings regularizers;
  /// Negate the depth estimate before correlation (inverse-depth inputs).
  bool depth_inverse = false;
  int views_per_step = 1;
  int checkpoint_every = 500;
  int preview_every = 500;

  void validate() const;
};

std::string to_json(const TrainConfig& config);
/// Missing keys keep their defaults; unknown keys and ill-typed values throw
/// InvalidArgument.
TrainConfig train_config_from_json(const std::string& text);

}  // namespace conrad
