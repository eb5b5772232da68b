#include "conrad/toy_scene.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace conrad {

ToyShape toy_shape_from_string(const std::string& name) {
  if (name == "sphere") return ToyShape::kSphere;
  if (name == "cube") return ToyShape::kCube;
  throw InvalidArgument("unknown toy shape '" + name + "' (expected sphere or cube)");
}

std::optional<double> ToyScene::intersect(const Vec3d& o, const Vec3d& d) const {
  if (shape == ToyShape::kSphere) {
    const double b = o.dot(d);
    const double c = o.squaredNorm() - sphere_radius * sphere_radius;
    const double disc = b * b - c;
    if (disc < 0.0) return std::nullopt;
    const double root = std::sqrt(disc);
    const double t0 = -b - root;
    if (t0 > 0.0) return t0;
    const double t1 = -b + root;
    if (t1 > 0.0) return t1;
    return std::nullopt;
  }
  double tmin = -std::numeric_limits<double>::infinity();
  double tmax = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (std::abs(d[a]) < 1e-15) {
      if (std::abs(o[a]) > cube_half) return std::nullopt;
      continue;
    }
    double t0 = (-cube_half - o[a]) / d[a];
    double t1 = (cube_half - o[a]) / d[a];
    if (t0 > t1) std::swap(t0, t1);
    tmin = std::max(tmin, t0);
    tmax = std::min(tmax, t1);
  }
  if (tmax < tmin || tmax <= 0.0) return std::nullopt;
  return tmin > 0.0 ? tmin : tmax;
}

Vec3d ToyScene::color(const Vec3d& p) {
  Vec3d c;
  for (int k = 0; k < 3; ++k) c[k] = std::clamp(0.5 + 0.4 * p[k], 0.0, 1.0);
  return c;
}

ToyRender render_toy(const ToyScene& scene, const CameraPose& pose, const CameraIntrinsics& intrinsics,
                     const Vec3d& background) {
  const RayBundle rays = generate_rays(pose, intrinsics);
  ToyRender out{Image(intrinsics.height, intrinsics.width, 3), Image(intrinsics.height, intrinsics.width, 1),
                Image(intrinsics.height, intrinsics.width, 1)};
  for (std::size_t r = 0; r < rays.size(); ++r) {
    const auto [i, j] = rays.pixel_coords[r];
    const auto hit = scene.intersect(rays.origins[r], rays.directions[r]);
    if (!hit) {
      for (int c = 0; c < 3; ++c) out.image.at(i, j, c) = static_cast<float>(background[c]);
      continue;
    }
    const Vec3d c = ToyScene::color(rays.origins[r] + *hit * rays.directions[r]);
    for (int k = 0; k < 3; ++k) out.image.at(i, j, k) = static_cast<float>(c[k]);
    out.mask.at(i, j) = 1.0f;
    out.depth.at(i, j) = static_cast<float>(*hit);
  }
  return out;
}

}  // namespace conrad
