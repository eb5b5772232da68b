#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "conrad/common.hpp"
#include "conrad/scene.hpp"

namespace conrad {

struct MarchConfig {
  int n_samples = 128;
  /// Explicit [near, far] for every ray. When unset, each ray is clipped to the
  /// origin-centered sphere of radius bound_radius.
  std::optional<std::pair<double, double>> fixed_range;
  double bound_radius = 1.5;
  /// Stratified bins (one sample per bin) versus evenly spaced samples from
  /// near to far inclusive.
  bool stratified = true;
  /// Jitter samples inside their bins; otherwise bin midpoints.
  bool perturb = false;
  Vec3d background{1.0, 1.0, 1.0};

  void validate() const;
};

/// Field sampled at a batch of points. rgb is empty when only density is needed.
template <typename T>
using FieldFn = std::function<void(std::span<const Vec3<T>> points, std::span<T> sigma, std::span<T> rgb)>;

template <typename T>
using DensityFn = std::function<T(const Vec3<T>&)>;

/// Sample positions for a set of rays, flattened ray-major.
template <typename T>
struct RaySamples {
  std::size_t n_rays = 0;
  std::size_t n_samples = 0;
  std::vector<T> t;            // distance along the unit ray
  std::vector<T> delta;        // interval length owned by each sample
  std::vector<Vec3<T>> points;
  std::vector<Vec3<T>> directions;  // per ray
  std::vector<T> near;
  std::vector<T> far;

  std::size_t size() const { return t.size(); }
};

template <typename T>
RaySamples<T> sample_rays(const RayBundle& rays, const MarchConfig& config, std::mt19937_64* jitter = nullptr);

/// Quadrature outputs for a batch of rays.
template <typename T>
struct MarchBuffers {
  std::vector<T> color;    // 3 per ray
  std::vector<T> depth;    // per ray
  std::vector<T> alpha;    // per ray, sum of weights
  std::vector<T> weights;  // per sample, w_i = T_i a_i
  std::vector<T> alphas;   // per sample, a_i = 1 - exp(-sigma_i delta_i)
};

/// Adjoints of MarchBuffers entries; any span may be empty (treated as zero).
template <typename T>
struct MarchAdjoint {
  std::span<const T> color;
  std::span<const T> depth;
  std::span<const T> alpha;
  std::span<const T> weights;
  std::span<const T> alphas;
};

inline constexpr double kDepthAlphaFloor = 1e-6;

/// Alpha compositing: a_i = 1 - exp(-sigma_i delta_i), T_i = prod_{j<i}(1 - a_j),
/// w_i = T_i a_i; color = sum w_i c_i + (1 - sum w_i) background;
/// depth = sum w_i t_i / max(sum w_i, 1e-6). rgb may be empty (color is then
/// the background weighted by transmittance only).
template <typename T>
void march_forward(const RaySamples<T>& samples, std::span<const T> sigma, std::span<const T> rgb,
                   const Vec3<T>& background, MarchBuffers<T>& out);

/// Reverse pass of march_forward. Accumulates into dsigma (per sample) and drgb
/// (3 per sample, may be empty when no color gradient is wanted).
template <typename T>
void march_backward(const RaySamples<T>& samples, std::span<const T> sigma, std::span<const T> rgb,
                    const Vec3<T>& background, const MarchBuffers<T>& fwd, const MarchAdjoint<T>& adj,
                    std::span<T> dsigma, std::span<T> drgb);

template <typename T>
struct MarchResult {
  Vec3<T> color = Vec3<T>::Zero();
  T depth = 0;
  T alpha = 0;
  std::vector<T> weights;
  std::vector<T> t;
};

/// Marches a single ray through `field`.
template <typename T>
MarchResult<T> march(const Vec3d& origin, const Vec3d& direction, const FieldFn<T>& field,
                     const MarchConfig& config, std::mt19937_64* jitter = nullptr);

struct RenderOutput {
  Image image;  // H x W x 3
  Image depth;  // H x W x 1
  Image alpha;  // H x W x 1
};

/// Renders every pixel of a view. Rays are processed in row chunks; results do
/// not depend on the chunking.
template <typename T>
RenderOutput render_view(const CameraPose& pose, const CameraIntrinsics& intrinsics, const FieldFn<T>& field,
                         const MarchConfig& config, std::mt19937_64* jitter = nullptr);

template <typename T>
struct Normal {
  Vec3<T> n = Vec3<T>::Zero();
  bool degenerate = true;
};

inline constexpr double kNormalGradientFloor = 1e-8;

/// n = -g / |g| with g the central-difference gradient of the density.
template <typename T>
Normal<T> normal_at(const Vec3<T>& x, const DensityFn<T>& density, T h = T(1e-3));

/// Batched finite-difference normals. The stencil holds 6 points per input
/// point in the order +x, -x, +y, -y, +z, -z.
template <typename T>
std::vector<Vec3<T>> normal_stencil(std::span<const Vec3<T>> points, T h);

template <typename T>
struct NormalBatch {
  std::vector<Vec3<T>> normals;
  std::vector<Vec3<T>> gradients;
  std::vector<std::uint8_t> degenerate;
};

template <typename T>
NormalBatch<T> normals_from_stencil(std::span<const T> stencil_sigma, T h);

/// Adjoint of normals_from_stencil: dnormals (per point) to dsigma (6 per point).
template <typename T>
void normals_backward(const NormalBatch<T>& batch, std::span<const Vec3<T>> dnormals, T h,
                      std::span<T> dstencil_sigma);

}  // namespace conrad
