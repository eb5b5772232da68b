#pragma once

#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "conrad/checkpoint.hpp"
#include "conrad/config.hpp"
#include "conrad/constraints.hpp"
#include "conrad/objectives.hpp"
#include "conrad/optimizer.hpp"
#include "conrad/radiance_field.hpp"
#include "conrad/renderer.hpp"
#include "conrad/score_provider.hpp"

namespace conrad {

struct TrainHooks {
  std::function<void(const LossReport&)> on_step;
  /// Called every checkpoint_every steps, at the end, and before rethrowing a
  /// provider failure (so the run can be resumed).
  std::function<void(const Checkpoint&)> on_checkpoint;
  std::function<void(int completed_steps)> on_preview;
};

/// One ConRad optimization (Algorithm 1). Each step:
///   1. alpha = warm_alpha(step)
///   2. visibility depth from the constrained density on the reference rays
///   3-4. reference depth render and Pearson loss against the estimate
///   5. random pose, render through the constrained field
///   6. SDS adjoint from the provider
///   7. entropy / orientation / smoothness on the view's samples
///   8. one optimizer update
/// All randomness is drawn from streams derived from (seed, step), so a
/// resumed run replays an uninterrupted one exactly.
class Trainer {
 public:
  Trainer(ReferenceConditioning conditioning, TrainConfig config, ScoreProvider& provider);

  /// Restores parameters, optimizer state and step counter.
  void resume(const Checkpoint& ckpt);

  /// Runs one step and returns its report.
  LossReport step();
  /// Runs until total_steps; returns the final checkpoint.
  Checkpoint run(const TrainHooks& hooks = {});

  Checkpoint checkpoint() const;

  int completed_steps() const { return step_; }
  const TrainConfig& config() const { return config_; }
  const ReferenceConditioning& conditioning() const { return conditioning_; }
  const RadianceField<float>& field() const { return field_; }
  std::span<const float> params() const { return params_.values(); }
  std::span<float> mutable_params() { return params_.values(); }
  double current_alpha() const;

  /// Visibility depth of the current parameters at constraint strength alpha.
  VisibilityDepthMap visibility(double alpha) const;
  /// Evaluation render (bin midpoints) through the constrained field.
  RenderOutput render(const CameraPose& pose, const CameraIntrinsics& intrinsics, double alpha) const;
  /// The unconstrained field as a FieldFn over the current parameters.
  FieldFn<float> raw_field() const;

  MarchConfig march_config(bool perturb) const;

 private:
  ReferenceConditioning conditioning_;
  TrainConfig config_;
  ScoreProvider& provider_;
  DiffusionSchedule schedule_;
  RadianceField<float> field_;
  ParamStore<float> params_;
  Optimizer optimizer_;
  int step_ = 0;
  std::string config_json_;
  std::shared_ptr<const RaySamples<float>> ref_samples_;
  std::vector<float> ref_mask_;            // bilinear mask per reference sample
  std::vector<float> depth_target_;        // normalized estimate per pixel
  std::vector<std::uint8_t> depth_pixels_; // mask >= 0.5
};

/// Visibility depth of a parameter vector on the reference rays at constraint
/// strength alpha.
VisibilityDepthMap constrained_visibility(const RadianceField<float>& field, std::span<const float> params,
                                          const ReferenceConditioning& conditioning, const TrainConfig& config,
                                          double alpha);
/// Evaluation render (bin midpoints) of a parameter vector through the
/// constrained field. Needs only the reference inputs, not a provider.
RenderOutput render_constrained(const RadianceField<float>& field, std::span<const float> params,
                                const ReferenceConditioning& conditioning, const TrainConfig& config,
                                const CameraPose& pose, const CameraIntrinsics& intrinsics, double alpha);

/// One JSON line of the loss log.
std::string loss_log_line(const LossReport& report);

/// Per-channel check of the reference-view fidelity property on a render made
/// with alpha = 1: foreground pixels (mask = 1, valid visibility ray) must
/// satisfy |C - I| <= eta + (1 - alpha); background pixels whose 3x3
/// neighborhood is all zero in the mask must have alpha below bg_tolerance.
struct FidelityReport {
  double max_foreground_excess = 0.0;  // max over fg of |C - I| - (eta + 1 - alpha)
  double max_background_alpha = 0.0;
  std::size_t foreground = 0;
  std::size_t background = 0;
  bool pass = false;
};

FidelityReport check_reference_fidelity(const RenderOutput& render, const ReferenceConditioning& conditioning,
                                        const VisibilityDepthMap& visibility, double eta,
                                        double bg_tolerance = 1e-5);

}  // namespace conrad
