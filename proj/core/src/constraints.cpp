#include "conrad/constraints.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace conrad {

void ReferenceConditioning::validate() const {
  if (image.channels != 3 || image.empty()) throw InvalidArgument("conditioning image must be H x W x 3");
  if (mask.channels != 1 || mask.height != image.height || mask.width != image.width) {
    throw InvalidArgument("mask must be H x W x 1 with the image's size");
  }
  if (depth && (depth->channels != 1 || depth->height != image.height || depth->width != image.width)) {
    throw InvalidArgument("depth estimate must be H x W x 1 with the image's size");
  }
  if (intrinsics.width != image.width || intrinsics.height != image.height) {
    throw InvalidArgument("reference intrinsics do not match the image size");
  }
  for (float v : image.data) {
    if (!std::isfinite(v)) throw InvalidArgument("conditioning image contains non-finite values");
  }
  for (float v : mask.data) {
    if (!(v >= 0.0f && v <= 1.0f)) throw InvalidArgument("mask values must lie in [0,1]");
  }
  pose.validate();
  intrinsics.validate();
}

void WarmStartSchedule::validate() const {
  if (total_steps < 1) throw InvalidArgument("warm start needs a positive step count");
  if (!(plateau_fraction > 0.0 && plateau_fraction <= 1.0)) {
    throw InvalidArgument("warm start plateau fraction must lie in (0, 1]");
  }
}

double warm_alpha(int step, const WarmStartSchedule& schedule) {
  schedule.validate();
  if (step < 0 || step > schedule.total_steps) {
    throw InvalidArgument("warm start step " + std::to_string(step) + " outside [0, " +
                          std::to_string(schedule.total_steps) + "]");
  }
  return std::min(1.0, step / (schedule.plateau_fraction * schedule.total_steps));
}

template <typename T>
VisibilityDepthMap compute_visibility_depth(const RaySamples<T>& samples, std::span<const T> sigma, int height,
                                            int width, double eta) {
  if (!(eta > 0.0 && eta < 1.0)) throw InvalidArgument("visibility threshold eta must lie in (0, 1)");
  if (samples.n_rays != static_cast<std::size_t>(height) * width) {
    throw InvalidArgument("visibility depth needs one reference ray per pixel");
  }
  const std::size_t S = samples.n_samples;
  VisibilityDepthMap map{Image(height, width, 1), std::vector<std::uint8_t>(samples.n_rays, 0)};
  std::vector<double> weights(S);
  for (std::size_t r = 0; r < samples.n_rays; ++r) {
    double trans = 1.0;
    double total = 0.0;
    for (std::size_t i = 0; i < S; ++i) {
      const std::size_t k = r * S + i;
      const double decay = std::exp(-static_cast<double>(sigma[k]) * static_cast<double>(samples.delta[k]));
      weights[i] = trans * (1.0 - decay);
      total += weights[i];
      trans *= decay;
    }
    const double far = static_cast<double>(samples.far[r]);
    double v = far;
    if (total >= kVisibilityMinWeight) {
      const double target = (1.0 - eta) * total;
      double cumulative = 0.0;
      for (std::size_t i = 0; i < S; ++i) {
        cumulative += weights[i];
        if (cumulative >= target) {
          const std::size_t k = r * S + i;
          v = std::min(far, static_cast<double>(samples.t[k]) + 0.5 * static_cast<double>(samples.delta[k]));
          break;
        }
      }
      map.valid[r] = 1;
    }
    map.depth.data[r] = static_cast<float>(v);
  }
  return map;
}

template <typename T>
VisibilityDepthMap compute_visibility_depth(const CameraPose& pose, const CameraIntrinsics& intrinsics,
                                            const FieldFn<T>& density, const MarchConfig& config, double eta) {
  MarchConfig cfg = config;
  cfg.perturb = false;
  const auto samples = sample_rays<T>(generate_rays(pose, intrinsics), cfg);
  std::vector<T> sigma(samples.size());
  density(samples.points, sigma, {});
  return compute_visibility_depth<T>(samples, sigma, intrinsics.height, intrinsics.width, eta);
}

Constraint::Constraint(const ReferenceConditioning& conditioning, const VisibilityDepthMap* visibility, double alpha)
    : conditioning_(conditioning),
      visibility_(visibility),
      alpha_(alpha),
      camera_(conditioning.pose, conditioning.intrinsics) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidArgument("constraint strength must lie in [0,1]");
  if (visibility && (visibility->height() != conditioning.image.height ||
                     visibility->width() != conditioning.image.width)) {
    throw InvalidArgument("visibility depth map does not match the reference image size");
  }
}

template <typename T>
ConstraintTerms<T> Constraint::terms(const Vec3<T>& x, bool with_color) const {
  ConstraintTerms<T> out;
  const Projection<T> q = camera_.project(x);
  if (!q.in_frustum) return out;
  const T a = T(alpha_);
  const T m = sample_bilinear(conditioning_.mask, q.u, q.v);
  out.density_scale = T(1) - a * (T(1) - m);
  if (with_color && visibility_) {
    const T vis_depth = sample_bilinear(visibility_->depth, q.u, q.v);
    if (q.distance < vis_depth) {
      out.color_blend = a;
      for (int c = 0; c < 3; ++c) out.image_color[c] = sample_bilinear(conditioning_.image, q.u, q.v, c);
    }
  }
  return out;
}

template <typename T>
std::vector<ConstraintTerms<T>> Constraint::terms(std::span<const Vec3<T>> points, bool with_color) const {
  std::vector<ConstraintTerms<T>> out(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) out[i] = terms(points[i], with_color);
  return out;
}

template <typename T>
FieldFn<T> Constraint::wrap(FieldFn<T> raw) const {
  return [this, raw = std::move(raw)](std::span<const Vec3<T>> points, std::span<T> sigma, std::span<T> rgb) {
    raw(points, sigma, rgb);
    const bool with_color = !rgb.empty();
    for (std::size_t i = 0; i < points.size(); ++i) {
      const auto k = terms(points[i], with_color);
      sigma[i] *= k.density_scale;
      if (with_color) {
        for (int c = 0; c < 3; ++c) {
          rgb[3 * i + c] = k.color_blend * k.image_color[c] + (T(1) - k.color_blend) * rgb[3 * i + c];
        }
      }
    }
  };
}

template <typename T>
Vec3<T> constrained_color(const Vec3<T>& x, const Vec3<T>& raw, const VisibilityDepthMap& visibility,
                          const ReferenceConditioning& conditioning, double alpha) {
  return Constraint(conditioning, &visibility, alpha).color(x, raw);
}

template <typename T>
T constrained_density(const Vec3<T>& x, T raw, const ReferenceConditioning& conditioning, double alpha) {
  return Constraint(conditioning, nullptr, alpha).density(x, raw);
}

#define CONRAD_INSTANTIATE_CONSTRAINTS(T)                                                                     \
  template VisibilityDepthMap compute_visibility_depth<T>(const RaySamples<T>&, std::span<const T>, int, int, \
                                                          double);                                            \
  template VisibilityDepthMap compute_visibility_depth<T>(const CameraPose&, const CameraIntrinsics&,         \
                                                          const FieldFn<T>&, const MarchConfig&, double);     \
  template ConstraintTerms<T> Constraint::terms<T>(const Vec3<T>&, bool) const;                               \
  template std::vector<ConstraintTerms<T>> Constraint::terms<T>(std::span<const Vec3<T>>, bool) const;        \
  template FieldFn<T> Constraint::wrap<T>(FieldFn<T>) const;                                                  \
  template Vec3<T> constrained_color<T>(const Vec3<T>&, const Vec3<T>&, const VisibilityDepthMap&,            \
                                        const ReferenceConditioning&, double);                                \
  template T constrained_density<T>(const Vec3<T>&, T, const ReferenceConditioning&, double);

CONRAD_INSTANTIATE_CONSTRAINTS(float)
CONRAD_INSTANTIATE_CONSTRAINTS(double)

}  // namespace conrad
