#include "conrad/renderer.hpp"

#include <algorithm>
#include <cmath>

#include "conrad/rng.hpp"

namespace conrad {

void MarchConfig::validate() const {
  if (n_samples < 2) throw InvalidArgument("march needs at least 2 samples per ray");
  if (fixed_range && !(fixed_range->first < fixed_range->second)) {
    throw InvalidArgument("march range requires near < far");
  }
  if (!fixed_range && !(bound_radius > 0.0)) throw InvalidArgument("bounding radius must be positive");
  for (int c = 0; c < 3; ++c) {
    if (!(background[c] >= 0.0 && background[c] <= 1.0)) throw InvalidArgument("background must lie in [0,1]^3");
  }
}

namespace {

std::pair<double, double> ray_range(const Vec3d& o, const Vec3d& d, const MarchConfig& config) {
  if (config.fixed_range) return *config.fixed_range;
  const double r = config.bound_radius;
  const double b = o.dot(d);
  const double c = o.squaredNorm() - r * r;
  const double disc = b * b - c;
  if (disc > 0.0) {
    const double root = std::sqrt(disc);
    const double t0 = std::max(-b - root, 0.0);
    const double t1 = -b + root;
    if (t1 > t0) return {t0, t1};
  }
  const double dist = o.norm();
  return {std::max(dist - r, 0.0), dist + r};
}

}  // namespace

template <typename T>
RaySamples<T> sample_rays(const RayBundle& rays, const MarchConfig& config, std::mt19937_64* jitter) {
  config.validate();
  const std::size_t R = rays.size();
  const std::size_t S = static_cast<std::size_t>(config.n_samples);
  RaySamples<T> out;
  out.n_rays = R;
  out.n_samples = S;
  out.t.resize(R * S);
  out.delta.resize(R * S);
  out.points.resize(R * S);
  out.directions.resize(R);
  out.near.resize(R);
  out.far.resize(R);
  std::vector<double> ts(S);
  for (std::size_t r = 0; r < R; ++r) {
    const Vec3d& o = rays.origins[r];
    const Vec3d& d = rays.directions[r];
    const auto [near, far] = ray_range(o, d, config);
    out.near[r] = T(near);
    out.far[r] = T(far);
    out.directions[r] = d.cast<T>();
    if (config.stratified) {
      const double bin = (far - near) / static_cast<double>(S);
      for (std::size_t i = 0; i < S; ++i) {
        const double u = (config.perturb && jitter) ? uniform01(*jitter) : 0.5;
        ts[i] = near + (static_cast<double>(i) + u) * bin;
      }
      for (std::size_t i = 0; i < S; ++i) {
        out.delta[r * S + i] = T(i + 1 < S ? ts[i + 1] - ts[i] : bin);
      }
    } else {
      const double step = (far - near) / static_cast<double>(S - 1);
      for (std::size_t i = 0; i < S; ++i) ts[i] = near + static_cast<double>(i) * step;
      for (std::size_t i = 0; i < S; ++i) out.delta[r * S + i] = T(step);
    }
    for (std::size_t i = 0; i < S; ++i) {
      out.t[r * S + i] = T(ts[i]);
      out.points[r * S + i] = (o + ts[i] * d).cast<T>();
    }
  }
  return out;
}

template <typename T>
void march_forward(const RaySamples<T>& samples, std::span<const T> sigma, std::span<const T> rgb,
                   const Vec3<T>& background, MarchBuffers<T>& out) {
  const std::size_t R = samples.n_rays;
  const std::size_t S = samples.n_samples;
  if (sigma.size() != R * S) throw InvalidArgument("march: density count does not match samples");
  if (!rgb.empty() && rgb.size() != 3 * R * S) throw InvalidArgument("march: color count does not match samples");
  out.color.assign(3 * R, T(0));
  out.depth.assign(R, T(0));
  out.alpha.assign(R, T(0));
  out.weights.assign(R * S, T(0));
  out.alphas.assign(R * S, T(0));
  for (std::size_t r = 0; r < R; ++r) {
    T trans = T(1);
    T acc = T(0);
    T depth_sum = T(0);
    Vec3<T> color = Vec3<T>::Zero();
    for (std::size_t i = 0; i < S; ++i) {
      const std::size_t k = r * S + i;
      const T s = sigma[k];
      if (!std::isfinite(s)) throw NumericError("march: non-finite density");
      const T decay = std::exp(-s * samples.delta[k]);
      const T a = T(1) - decay;
      const T w = trans * a;
      out.alphas[k] = a;
      out.weights[k] = w;
      acc += w;
      depth_sum += w * samples.t[k];
      if (!rgb.empty()) {
        for (int c = 0; c < 3; ++c) {
          const T cv = rgb[3 * k + c];
          if (!std::isfinite(cv)) throw NumericError("march: non-finite color");
          color[c] += w * cv;
        }
      }
      trans *= decay;
    }
    for (int c = 0; c < 3; ++c) out.color[3 * r + c] = color[c] + (T(1) - acc) * background[c];
    out.alpha[r] = acc;
    out.depth[r] = depth_sum / std::max(acc, T(kDepthAlphaFloor));
  }
}

template <typename T>
void march_backward(const RaySamples<T>& samples, std::span<const T> sigma, std::span<const T> rgb,
                    const Vec3<T>& background, const MarchBuffers<T>& fwd, const MarchAdjoint<T>& adj,
                    std::span<T> dsigma, std::span<T> drgb) {
  const std::size_t R = samples.n_rays;
  const std::size_t S = samples.n_samples;
  if (dsigma.size() != R * S) throw GraphError("march backward: density adjoint size mismatch");
  const bool want_rgb = !drgb.empty() && !rgb.empty() && !adj.color.empty();
  std::vector<T> g(S);
  std::vector<T> trans_next(S);
  for (std::size_t r = 0; r < R; ++r) {
    const T acc = fwd.alpha[r];
    const T acc_hat = std::max(acc, T(kDepthAlphaFloor));
    const T depth_sum = fwd.depth[r] * acc_hat;
    const T dd = adj.depth.empty() ? T(0) : adj.depth[r];
    const T da = adj.alpha.empty() ? T(0) : adj.alpha[r];
    Vec3<T> dc = Vec3<T>::Zero();
    if (!adj.color.empty()) dc = Vec3<T>(adj.color[3 * r], adj.color[3 * r + 1], adj.color[3 * r + 2]);

    T trans = T(1);
    for (std::size_t i = 0; i < S; ++i) {
      const std::size_t k = r * S + i;
      trans *= std::exp(-sigma[k] * samples.delta[k]);
      trans_next[i] = trans;
      // dL/dw_i through color, depth, alpha and any direct weight adjoint.
      T gi = da;
      for (int c = 0; c < 3; ++c) {
        const T cv = rgb.empty() ? T(0) : rgb[3 * k + c];
        gi += dc[c] * (cv - background[c]);
      }
      gi += dd * samples.t[k] / acc_hat;
      if (acc > T(kDepthAlphaFloor)) gi -= dd * depth_sum / (acc_hat * acc_hat);
      if (!adj.weights.empty()) gi += adj.weights[k];
      g[i] = gi;
      if (want_rgb) {
        for (int c = 0; c < 3; ++c) drgb[3 * k + c] += fwd.weights[k] * dc[c];
      }
    }
    // ds_i = g_i T_{i+1} - sum_{k>i} g_k w_k + da_i (1 - a_i)
    T suffix = T(0);
    for (std::size_t i = S; i-- > 0;) {
      const std::size_t k = r * S + i;
      T ds = g[i] * trans_next[i] - suffix;
      if (!adj.alphas.empty()) ds += adj.alphas[k] * (T(1) - fwd.alphas[k]);
      dsigma[k] += ds * samples.delta[k];
      suffix += g[i] * fwd.weights[k];
    }
  }
}

template <typename T>
MarchResult<T> march(const Vec3d& origin, const Vec3d& direction, const FieldFn<T>& field, const MarchConfig& config,
                     std::mt19937_64* jitter) {
  RayBundle ray;
  ray.origins = {origin};
  ray.directions = {direction.normalized()};
  ray.pixel_coords = {{0, 0}};
  ray.width = ray.height = 1;
  const auto samples = sample_rays<T>(ray, config, jitter);
  std::vector<T> sigma(samples.size());
  std::vector<T> rgb(3 * samples.size());
  field(samples.points, sigma, rgb);
  MarchBuffers<T> buf;
  march_forward<T>(samples, sigma, rgb, config.background.cast<T>(), buf);
  MarchResult<T> result;
  result.color = Vec3<T>(buf.color[0], buf.color[1], buf.color[2]);
  result.depth = buf.depth[0];
  result.alpha = buf.alpha[0];
  result.weights = buf.weights;
  result.t = samples.t;
  return result;
}

template <typename T>
RenderOutput render_view(const CameraPose& pose, const CameraIntrinsics& intrinsics, const FieldFn<T>& field,
                         const MarchConfig& config, std::mt19937_64* jitter) {
  const RayBundle all = generate_rays(pose, intrinsics);
  const int H = intrinsics.height;
  const int W = intrinsics.width;
  RenderOutput out{Image(H, W, 3), Image(H, W, 1), Image(H, W, 1)};
  const int rows_per_chunk = std::max(1, 2048 / W);
  const Vec3<T> bg = config.background.cast<T>();
  for (int row0 = 0; row0 < H; row0 += rows_per_chunk) {
    const int row1 = std::min(H, row0 + rows_per_chunk);
    RayBundle chunk;
    const std::size_t begin = static_cast<std::size_t>(row0) * W;
    const std::size_t end = static_cast<std::size_t>(row1) * W;
    chunk.origins.assign(all.origins.begin() + begin, all.origins.begin() + end);
    chunk.directions.assign(all.directions.begin() + begin, all.directions.begin() + end);
    chunk.pixel_coords.assign(all.pixel_coords.begin() + begin, all.pixel_coords.begin() + end);
    const auto samples = sample_rays<T>(chunk, config, jitter);
    std::vector<T> sigma(samples.size());
    std::vector<T> rgb(3 * samples.size());
    field(samples.points, sigma, rgb);
    MarchBuffers<T> buf;
    march_forward<T>(samples, sigma, rgb, bg, buf);
    for (std::size_t r = 0; r < samples.n_rays; ++r) {
      const auto [row, col] = chunk.pixel_coords[r];
      for (int c = 0; c < 3; ++c) out.image.at(row, col, c) = static_cast<float>(buf.color[3 * r + c]);
      out.depth.at(row, col) = static_cast<float>(buf.depth[r]);
      out.alpha.at(row, col) = static_cast<float>(buf.alpha[r]);
    }
  }
  return out;
}

template <typename T>
Normal<T> normal_at(const Vec3<T>& x, const DensityFn<T>& density, T h) {
  Vec3<T> g;
  for (int a = 0; a < 3; ++a) {
    Vec3<T> e = Vec3<T>::Zero();
    e[a] = h;
    g[a] = (density(x + e) - density(x - e)) / (T(2) * h);
  }
  Normal<T> out;
  const T norm = g.norm();
  if (!(norm >= T(kNormalGradientFloor))) return out;
  out.n = -g / norm;
  out.degenerate = false;
  return out;
}

template <typename T>
std::vector<Vec3<T>> normal_stencil(std::span<const Vec3<T>> points, T h) {
  std::vector<Vec3<T>> out;
  out.reserve(6 * points.size());
  for (const auto& x : points) {
    for (int a = 0; a < 3; ++a) {
      Vec3<T> e = Vec3<T>::Zero();
      e[a] = h;
      out.push_back(x + e);
      out.push_back(x - e);
    }
  }
  return out;
}

template <typename T>
NormalBatch<T> normals_from_stencil(std::span<const T> stencil_sigma, T h) {
  const std::size_t n = stencil_sigma.size() / 6;
  NormalBatch<T> out;
  out.normals.assign(n, Vec3<T>::Zero());
  out.gradients.resize(n);
  out.degenerate.assign(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    Vec3<T> g;
    for (int a = 0; a < 3; ++a) {
      g[a] = (stencil_sigma[6 * i + 2 * a] - stencil_sigma[6 * i + 2 * a + 1]) / (T(2) * h);
    }
    out.gradients[i] = g;
    const T norm = g.norm();
    if (norm >= T(kNormalGradientFloor)) {
      out.normals[i] = -g / norm;
      out.degenerate[i] = 0;
    }
  }
  return out;
}

template <typename T>
void normals_backward(const NormalBatch<T>& batch, std::span<const Vec3<T>> dnormals, T h,
                      std::span<T> dstencil_sigma) {
  const std::size_t n = batch.normals.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (batch.degenerate[i]) continue;
    const Vec3<T>& nrm = batch.normals[i];
    const Vec3<T>& dn = dnormals[i];
    // n = -g/|g|  =>  dg = -(dn - n (n . dn)) / |g|
    const Vec3<T> dg = -(dn - nrm * nrm.dot(dn)) / batch.gradients[i].norm();
    for (int a = 0; a < 3; ++a) {
      dstencil_sigma[6 * i + 2 * a] += dg[a] / (T(2) * h);
      dstencil_sigma[6 * i + 2 * a + 1] -= dg[a] / (T(2) * h);
    }
  }
}

#define CONRAD_INSTANTIATE_RENDERER(T)                                                                        \
  template RaySamples<T> sample_rays<T>(const RayBundle&, const MarchConfig&, std::mt19937_64*);             \
  template void march_forward<T>(const RaySamples<T>&, std::span<const T>, std::span<const T>, const Vec3<T>&, \
                                 MarchBuffers<T>&);                                                          \
  template void march_backward<T>(const RaySamples<T>&, std::span<const T>, std::span<const T>,              \
                                  const Vec3<T>&, const MarchBuffers<T>&, const MarchAdjoint<T>&,            \
                                  std::span<T>, std::span<T>);                                               \
  template MarchResult<T> march<T>(const Vec3d&, const Vec3d&, const FieldFn<T>&, const MarchConfig&,        \
                                   std::mt19937_64*);                                                        \
  template RenderOutput render_view<T>(const CameraPose&, const CameraIntrinsics&, const FieldFn<T>&,        \
                                       const MarchConfig&, std::mt19937_64*);                                \
  template Normal<T> normal_at<T>(const Vec3<T>&, const DensityFn<T>&, T);                                   \
  template std::vector<Vec3<T>> normal_stencil<T>(std::span<const Vec3<T>>, T);                              \
  template NormalBatch<T> normals_from_stencil<T>(std::span<const T>, T);                                    \
  template void normals_backward<T>(const NormalBatch<T>&, std::span<const Vec3<T>>, T, std::span<T>);

CONRAD_INSTANTIATE_RENDERER(float)
CONRAD_INSTANTIATE_RENDERER(double)

}  // namespace conrad
