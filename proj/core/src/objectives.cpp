#include "conrad/objectives.hpp"

#include <algorithm>
#include <cmath>

#include "conrad/rng.hpp"

namespace conrad {

void LossWeights::validate() const {
  for (double w : {sds, depth, entropy, orientation, smoothness}) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw InvalidArgument("loss weights must be finite and non-negative");
  }
}

double total_loss(const LossReport& r, const LossWeights& w) {
  const double total =
      w.depth * r.depth + w.entropy * r.entropy + w.orientation * r.orientation + w.smoothness * r.smoothness;
  if (!std::isfinite(total)) throw NumericError("non-finite loss term");
  return total;
}

void SdsConfig::validate() const {
  if (!(t_min > 0.0 && t_min <= t_max && t_max < 1.0)) {
    throw InvalidArgument("SDS timestep range must satisfy 0 < t_min <= t_max < 1");
  }
  if (max_retries < 0) throw InvalidArgument("SDS retry count must be non-negative");
}

std::pair<int, int> sds_timestep_range(const DiffusionSchedule& schedule, const SdsConfig& config) {
  config.validate();
  const int n = schedule.n_steps();
  const int lo = std::clamp(static_cast<int>(std::ceil(config.t_min * n)), 1, n);
  const int hi = std::clamp(static_cast<int>(std::floor(config.t_max * n)), lo, n);
  return {lo, hi};
}

SdsResult sds_adjoint(const Image& image, ScoreProvider& provider, const DiffusionSchedule& schedule,
                      const std::string& cond_id, std::mt19937_64& rng, const SdsConfig& config,
                      std::optional<CameraPose> pose) {
  const auto [lo, hi] = sds_timestep_range(schedule, config);
  for (int attempt = 0;; ++attempt) {
    const int t = lo + static_cast<int>(uniform01(rng) * (hi - lo + 1));
    const int tc = std::min(t, hi);
    Image eps(image.height, image.width, image.channels);
    for (float& e : eps.data) e = static_cast<float>(standard_normal(rng));
    const double ab = schedule.alpha_bar(tc);
    const double sa = std::sqrt(ab);
    const double sn = std::sqrt(1.0 - ab);
    Image noisy(image.height, image.width, image.channels);
    for (std::size_t i = 0; i < noisy.data.size(); ++i) {
      noisy.data[i] = static_cast<float>(sa * image.data[i] + sn * eps.data[i]);
    }
    try {
      const Image eps_hat = provider.predict_noise(ScoreQuery{noisy, tc, cond_id, pose, &eps});
      if (!eps_hat.same_shape(image)) {
        throw ProviderError(ProviderError::Kind::kShapeMismatch, "provider returned a differently shaped noise image");
      }
      const double w = config.weight ? config.weight(tc) : 1.0;
      SdsResult out{Image(image.height, image.width, image.channels), tc, 0.0, attempt + 1};
      double sq = 0.0;
      for (std::size_t i = 0; i < eps.data.size(); ++i) {
        const double r = static_cast<double>(eps_hat.data[i]) - eps.data[i];
        if (!std::isfinite(r)) throw ProviderError(ProviderError::Kind::kNonFinite, "non-finite noise prediction");
        out.adjoint.data[i] = static_cast<float>(w * r);
        sq += r * r;
      }
      out.residual_mse = eps.data.empty() ? 0.0 : sq / eps.data.size();
      return out;
    } catch (const ProviderError&) {
      if (attempt >= config.max_retries) throw;
    }
  }
}

template <typename T>
ScalarGrad<T> depth_loss(std::span<const T> d, std::span<const T> d_hat, std::span<const std::uint8_t> selected) {
  if (d.size() != d_hat.size() || d.size() != selected.size()) {
    throw InvalidArgument("depth loss inputs differ in size");
  }
  ScalarGrad<T> out;
  out.grad.assign(d.size(), T(0));
  std::size_t n = 0;
  double mean_a = 0.0, mean_b = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!selected[i]) continue;
    ++n;
    mean_a += d[i];
    mean_b += d_hat[i];
  }
  if (n < 2) {
    out.degenerate = true;
    return out;
  }
  mean_a /= n;
  mean_b /= n;
  double saa = 0.0, sbb = 0.0, sab = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!selected[i]) continue;
    const double a = d[i] - mean_a;
    const double b = d_hat[i] - mean_b;
    saa += a * a;
    sbb += b * b;
    sab += a * b;
  }
  const double na = std::sqrt(saa);
  const double nb = std::sqrt(sbb);
  const double scale = std::sqrt(static_cast<double>(n));
  if (na / scale < kPearsonStdFloor || nb / scale < kPearsonStdFloor) {
    out.degenerate = true;
    return out;
  }
  const double rho = sab / (na * nb);
  out.value = T(1.0 - rho);
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!selected[i]) continue;
    const double a = d[i] - mean_a;
    const double b = d_hat[i] - mean_b;
    out.grad[i] = T(-(b / (na * nb) - rho * a / saa));
  }
  return out;
}

template <typename T>
ScalarGrad<T> entropy_reg(std::span<const T> alphas) {
  ScalarGrad<T> out;
  out.grad.assign(alphas.size(), T(0));
  if (alphas.empty()) return out;
  const double lo = kEntropyClamp;
  const double hi = 1.0 - kEntropyClamp;
  const double inv_n = 1.0 / alphas.size();
  double sum = 0.0;
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    const double raw = alphas[i];
    const double a = std::clamp(raw, lo, hi);
    sum += -a * std::log(a) - (1.0 - a) * std::log(1.0 - a);
    if (raw > lo && raw < hi) out.grad[i] = T(inv_n * std::log((1.0 - a) / a));
  }
  out.value = T(sum * inv_n);
  return out;
}

template <typename T>
OrientationResult<T> orientation_reg(std::span<const T> weights, std::span<const Vec3<T>> normals,
                                     std::span<const std::uint8_t> degenerate, std::span<const Vec3<T>> directions,
                                     std::size_t n_samples) {
  if (weights.size() != normals.size() || normals.size() != degenerate.size() ||
      weights.size() != directions.size() * n_samples) {
    throw InvalidArgument("orientation inputs disagree in size");
  }
  OrientationResult<T> out;
  out.weight_grad.assign(weights.size(), T(0));
  out.normal_grad.assign(normals.size(), Vec3<T>::Zero());
  if (directions.empty()) return out;
  const T inv_rays = T(1) / T(directions.size());
  T sum = 0;
  for (std::size_t r = 0; r < directions.size(); ++r) {
    const Vec3<T>& dir = directions[r];
    for (std::size_t s = 0; s < n_samples; ++s) {
      const std::size_t k = r * n_samples + s;
      if (degenerate[k]) continue;
      const T dot = normals[k].dot(dir);
      if (!(dot > T(0))) continue;
      sum += weights[k] * dot * dot;
      out.weight_grad[k] = inv_rays * dot * dot;
      out.normal_grad[k] = inv_rays * T(2) * weights[k] * dot * dir;
    }
  }
  out.value = sum * inv_rays;
  return out;
}

template <typename T>
SmoothnessResult<T> smoothness_reg(std::span<const Vec3<T>> normals_a, std::span<const std::uint8_t> degenerate_a,
                                   std::span<const Vec3<T>> normals_b, std::span<const std::uint8_t> degenerate_b) {
  if (normals_a.size() != normals_b.size() || normals_a.size() != degenerate_a.size() ||
      normals_b.size() != degenerate_b.size()) {
    throw InvalidArgument("smoothness inputs disagree in size");
  }
  SmoothnessResult<T> out;
  out.grad_a.assign(normals_a.size(), Vec3<T>::Zero());
  out.grad_b.assign(normals_b.size(), Vec3<T>::Zero());
  for (std::size_t i = 0; i < normals_a.size(); ++i) {
    if (!degenerate_a[i] && !degenerate_b[i]) ++out.pairs;
  }
  if (out.pairs == 0) return out;
  const T inv = T(1) / T(out.pairs);
  T sum = 0;
  for (std::size_t i = 0; i < normals_a.size(); ++i) {
    if (degenerate_a[i] || degenerate_b[i]) continue;
    const Vec3<T> diff = normals_a[i] - normals_b[i];
    sum += diff.cwiseAbs().sum();
    for (int c = 0; c < 3; ++c) {
      const T s = diff[c] > T(0) ? T(1) : (diff[c] < T(0) ? T(-1) : T(0));
      out.grad_a[i][c] = inv * s;
      out.grad_b[i][c] = -inv * s;
    }
  }
  out.value = sum * inv;
  return out;
}

template <typename T>
std::vector<Vec3<T>> perturb_points(std::span<const Vec3<T>> points, std::mt19937_64& rng, double radius) {
  std::vector<Vec3<T>> out(points.begin(), points.end());
  for (auto& p : out) {
    for (int c = 0; c < 3; ++c) p[c] += T(uniform(rng, -radius, radius));
  }
  return out;
}

#define CONRAD_INSTANTIATE_OBJECTIVES(T)                                                                          \
  template ScalarGrad<T> depth_loss<T>(std::span<const T>, std::span<const T>, std::span<const std::uint8_t>);     \
  template ScalarGrad<T> entropy_reg<T>(std::span<const T>);                                                      \
  template OrientationResult<T> orientation_reg<T>(std::span<const T>, std::span<const Vec3<T>>,                  \
                                                   std::span<const std::uint8_t>, std::span<const Vec3<T>>,       \
                                                   std::size_t);                                                  \
  template SmoothnessResult<T> smoothness_reg<T>(std::span<const Vec3<T>>, std::span<const std::uint8_t>,         \
                                                 std::span<const Vec3<T>>, std::span<const std::uint8_t>);        \
  template std::vector<Vec3<T>> perturb_points<T>(std::span<const Vec3<T>>, std::mt19937_64&, double);

CONRAD_INSTANTIATE_OBJECTIVES(float)
CONRAD_INSTANTIATE_OBJECTIVES(double)

}  // namespace conrad
