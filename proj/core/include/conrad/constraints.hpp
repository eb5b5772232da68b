#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "conrad/common.hpp"
#include "conrad/renderer.hpp"
#include "conrad/scene.hpp"

namespace conrad {

/// Everything the field is conditioned on: the input image, its foreground
/// mask, an optional relative depth estimate, and the camera bound to them.
struct ReferenceConditioning {
  Image image;                 // H x W x 3, values in [0,1]
  Image mask;                  // H x W x 1, values in [0,1]
  std::optional<Image> depth;  // H x W x 1, relative scale
  CameraPose pose = CameraPose::reference();
  CameraIntrinsics intrinsics;
  std::string cond_id;

  /// Checks shapes, ranges and finiteness. intrinsics.width/height must equal
  /// the image size.
  void validate() const;
};

/// Per-pixel ray distance beyond which at most a fraction eta of the ray's
/// rendering weight remains.
struct VisibilityDepthMap {
  Image depth;                      // H x W x 1
  std::vector<std::uint8_t> valid;  // H * W

  int height() const { return depth.height; }
  int width() const { return depth.width; }
};

inline constexpr double kVisibilityMinWeight = 1e-4;

/// Visibility depth from densities already evaluated on reference-ray samples
/// (one ray per pixel, row-major). The crossing is located on the discrete
/// cumulative weight: the first sample k whose inclusive cumulative weight
/// reaches (1 - eta) of the total; V is placed at the middle of that sample's
/// interval, clamped to the ray's far bound. Rays with total weight below
/// 1e-4 are invalid and carry V = far.
template <typename T>
VisibilityDepthMap compute_visibility_depth(const RaySamples<T>& samples, std::span<const T> sigma, int height,
                                            int width, double eta);

/// Convenience overload: samples the reference rays (midpoints, no jitter) and
/// evaluates `density` on them.
template <typename T>
VisibilityDepthMap compute_visibility_depth(const CameraPose& pose, const CameraIntrinsics& intrinsics,
                                            const FieldFn<T>& density, const MarchConfig& config, double eta);

struct WarmStartSchedule {
  int total_steps = 5000;
  double plateau_fraction = 0.5;

  void validate() const;
};

/// min(1, step / (plateau_fraction * total_steps)).
double warm_alpha(int step, const WarmStartSchedule& schedule);

/// Per-point constants of the constraint. Gradients never flow through them.
template <typename T>
struct ConstraintTerms {
  T density_scale = T(1);   // 1 - alpha (1 - m_x)
  T color_blend = T(0);     // alpha * v_x
  Vec3<T> image_color = Vec3<T>::Zero();
};

/// The constrained field around an unconstrained one: colors of points in front
/// of the visibility depth are replaced by the bilinearly sampled input image,
/// densities are scaled by the bilinearly sampled mask. Both are blended in by
/// the warm-start strength alpha. Points outside the reference frustum are left
/// unconstrained.
class Constraint {
 public:
  /// visibility may be null, in which case no point is color-constrained.
  Constraint(const ReferenceConditioning& conditioning, const VisibilityDepthMap* visibility, double alpha);

  double alpha() const { return alpha_; }
  const PinholeCamera& camera() const { return camera_; }

  template <typename T>
  ConstraintTerms<T> terms(const Vec3<T>& x, bool with_color) const;

  template <typename T>
  std::vector<ConstraintTerms<T>> terms(std::span<const Vec3<T>> points, bool with_color) const;

  template <typename T>
  Vec3<T> color(const Vec3<T>& x, const Vec3<T>& raw) const {
    const auto k = terms(x, true);
    return k.color_blend * k.image_color + (T(1) - k.color_blend) * raw;
  }

  template <typename T>
  T density(const Vec3<T>& x, T raw) const {
    return terms(x, false).density_scale * raw;
  }

  /// Wraps an unconstrained field into the constrained one.
  template <typename T>
  FieldFn<T> wrap(FieldFn<T> raw) const;

 private:
  const ReferenceConditioning& conditioning_;
  const VisibilityDepthMap* visibility_;
  double alpha_;
  PinholeCamera camera_;
};

/// c'(x) = v c_I(Q(x)) + (1 - v) c(x), v = alpha * 1(|x - o| < V(Q(x))).
template <typename T>
Vec3<T> constrained_color(const Vec3<T>& x, const Vec3<T>& raw, const VisibilityDepthMap& visibility,
                          const ReferenceConditioning& conditioning, double alpha);

/// sigma'(x) = (1 - alpha (1 - m_x)) sigma(x).
template <typename T>
T constrained_density(const Vec3<T>& x, T raw, const ReferenceConditioning& conditioning, double alpha);

}  // namespace conrad
