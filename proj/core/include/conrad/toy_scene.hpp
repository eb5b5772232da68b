#pragma once

#include <optional>
#include <string>

#include "conrad/common.hpp"
#include "conrad/scene.hpp"

namespace conrad {

enum class ToyShape { kSphere, kCube };

ToyShape toy_shape_from_string(const std::string& name);

/// Procedural opaque object centered at the origin: a unit sphere or a cube of
/// half-size 0.7, colored by position, c(p) = 0.5 + 0.4 p.
struct ToyScene {
  ToyShape shape = ToyShape::kSphere;
  double sphere_radius = 1.0;
  double cube_half = 0.7;

  /// Distance along the unit ray to the first surface hit, if any.
  std::optional<double> intersect(const Vec3d& origin, const Vec3d& direction) const;
  static Vec3d color(const Vec3d& p);
};

struct ToyRender {
  Image image;  // H x W x 3, background where the ray misses
  Image mask;   // H x W x 1, exactly 0 or 1
  Image depth;  // H x W x 1, ray distance to the hit, 0 on background
};

/// One ray through each pixel center.
ToyRender render_toy(const ToyScene& scene, const CameraPose& pose, const CameraIntrinsics& intrinsics,
                     const Vec3d& background = Vec3d(1.0, 1.0, 1.0));

}  // namespace conrad
