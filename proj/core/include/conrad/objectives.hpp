#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "conrad/common.hpp"
#include "conrad/score_provider.hpp"

namespace conrad {

struct LossWeights {
  double sds = 1.0;
  double depth = 10.0;
  double entropy = 0.01;
  double orientation = 0.01;
  double smoothness = 10.0;

  void validate() const;
};

struct LossReport {
  int step = 0;
  double sds = 0.0;  // mean squared noise residual, for logging only
  double depth = 0.0;
  double entropy = 0.0;
  double orientation = 0.0;
  double smoothness = 0.0;
  double total = 0.0;
  double alpha = 0.0;  // warm-start strength
  int timestep = 0;
  bool depth_degenerate = false;
};

/// Weighted sum of the scalar terms. SDS enters the update through its adjoint
/// image, so it is excluded here.
double total_loss(const LossReport& report, const LossWeights& weights);

struct SdsConfig {
  double t_min = 0.02;  // fractions of the schedule length
  double t_max = 0.98;
  int max_retries = 3;
  /// w(t); constant 1 when unset.
  std::function<double(int)> weight;

  void validate() const;
};

struct SdsResult {
  Image adjoint;  // dL_SDS / dI
  int t = 0;
  double residual_mse = 0.0;  // mean (eps_hat - eps)^2
  int attempts = 0;
};

/// Eq. 2 pseudo-gradient: draws t and eps, noises the image, queries the
/// provider, and returns w(t) (eps_hat - eps). Provider failures are retried
/// with fresh (t, eps) up to max_retries times, then rethrown.
SdsResult sds_adjoint(const Image& image, ScoreProvider& provider, const DiffusionSchedule& schedule,
                      const std::string& cond_id, std::mt19937_64& rng, const SdsConfig& config = {},
                      std::optional<CameraPose> pose = std::nullopt);

/// Integer timestep range [lo, hi] that t is drawn from.
std::pair<int, int> sds_timestep_range(const DiffusionSchedule& schedule, const SdsConfig& config);

template <typename T>
struct ScalarGrad {
  T value = 0;
  std::vector<T> grad;
  bool degenerate = false;
};

inline constexpr double kPearsonStdFloor = 1e-6;

/// 1 - Pearson correlation between rendered depth `d` and estimate `d_hat` over
/// pixels with selected[i] != 0. grad is dL/dd (zero outside the selection).
/// Degenerate selections (fewer than 2 pixels, or either standard deviation
/// below 1e-6) give loss 0, zero gradient and the degenerate flag.
template <typename T>
ScalarGrad<T> depth_loss(std::span<const T> d, std::span<const T> d_hat, std::span<const std::uint8_t> selected);

inline constexpr double kEntropyClamp = 1e-5;

/// Mean binary entropy of per-sample alphas, clamped to [1e-5, 1 - 1e-5].
/// The clamp passes no gradient outside its range.
template <typename T>
ScalarGrad<T> entropy_reg(std::span<const T> alphas);

/// Per ray sum_i w_i max(<n_i, d>, 0)^2, averaged over rays. weights and
/// normals are n_rays * n_samples long; degenerate normals are skipped.
/// grad holds dL/dw; normal_grad dL/dn.
template <typename T>
struct OrientationResult {
  T value = 0;
  std::vector<T> weight_grad;
  std::vector<Vec3<T>> normal_grad;
};

template <typename T>
OrientationResult<T> orientation_reg(std::span<const T> weights, std::span<const Vec3<T>> normals,
                                     std::span<const std::uint8_t> degenerate, std::span<const Vec3<T>> directions,
                                     std::size_t n_samples);

/// Mean over valid pairs of |n_a - n_b|_1; pairs with either normal degenerate
/// are skipped.
template <typename T>
struct SmoothnessResult {
  T value = 0;
  std::vector<Vec3<T>> grad_a;
  std::vector<Vec3<T>> grad_b;
  std::size_t pairs = 0;
};

template <typename T>
SmoothnessResult<T> smoothness_reg(std::span<const Vec3<T>> normals_a, std::span<const std::uint8_t> degenerate_a,
                                   std::span<const Vec3<T>> normals_b, std::span<const std::uint8_t> degenerate_b);

/// Perturbation x + delta, delta uniform in [-radius, radius]^3 per point.
template <typename T>
std::vector<Vec3<T>> perturb_points(std::span<const Vec3<T>> points, std::mt19937_64& rng, double radius = 0.01);

}  // namespace conrad
