#include "conrad/scene.hpp"

#include <cmath>
#include <string>

#include <Eigen/Geometry>

#include "conrad/rng.hpp"

namespace conrad {

const char* to_string(ProviderError::Kind kind) {
  switch (kind) {
    case ProviderError::Kind::kTimeout: return "timeout";
    case ProviderError::Kind::kHttp: return "http";
    case ProviderError::Kind::kShapeMismatch: return "shape-mismatch";
    case ProviderError::Kind::kNonFinite: return "non-finite";
    case ProviderError::Kind::kMalformed: return "malformed";
    case ProviderError::Kind::kUnavailable: return "unavailable";
  }
  return "unknown";
}

Vec3d CameraPose::origin() const {
  const double ce = std::cos(elevation);
  return radius * Vec3d(ce * std::cos(azimuth), ce * std::sin(azimuth), std::sin(elevation));
}

Eigen::Matrix3d CameraPose::rotation() const {
  const Vec3d forward = -origin().normalized();
  Vec3d right = forward.cross(Vec3d::UnitZ());
  if (right.norm() < 1e-9) {
    // Looking straight up or down; pick the azimuth direction as image-up.
    right = forward.cross(Vec3d(-std::cos(azimuth), -std::sin(azimuth), 0.0));
  }
  right.normalize();
  const Vec3d up = right.cross(forward);
  Eigen::Matrix3d r;
  r.col(0) = right;
  r.col(1) = up;
  r.col(2) = -forward;
  return r;
}

void CameraPose::validate() const {
  if (!(radius > 0.0) || !std::isfinite(radius)) {
    throw InvalidArgument("camera radius must be positive, got " + std::to_string(radius));
  }
  if (!std::isfinite(azimuth) || !std::isfinite(elevation)) {
    throw InvalidArgument("camera angles must be finite");
  }
}

void CameraIntrinsics::validate() const {
  if (!(vertical_fov > 0.0 && vertical_fov < std::numbers::pi)) {
    throw InvalidArgument("vertical field of view must lie in (0, pi)");
  }
  if (width < 1 || height < 1) {
    throw InvalidArgument("image width and height must be at least 1");
  }
}

void PoseBounds::validate() const {
  if (elevation_min > elevation_max || azimuth_min > azimuth_max || radius_min > radius_max) {
    throw InvalidArgument("pose bounds: min exceeds max");
  }
  if (!(radius_min > 0.0)) {
    throw InvalidArgument("pose bounds: radius must be positive");
  }
}

CameraPose sample_random_pose(std::mt19937_64& rng, const PoseBounds& bounds) {
  bounds.validate();
  CameraPose pose;
  pose.elevation = uniform(rng, bounds.elevation_min, bounds.elevation_max);
  pose.azimuth = uniform(rng, bounds.azimuth_min, bounds.azimuth_max);
  pose.radius = uniform(rng, bounds.radius_min, bounds.radius_max);
  return pose;
}

PinholeCamera::PinholeCamera(const CameraPose& pose, const CameraIntrinsics& intrinsics)
    : pose_(pose), intrinsics_(intrinsics) {
  pose.validate();
  intrinsics.validate();
  origin_ = pose.origin();
  rotation_ = pose.rotation();
  tan_half_fov_ = std::tan(0.5 * intrinsics.vertical_fov);
  aspect_ = intrinsics.aspect();
}

std::pair<double, double> PinholeCamera::pixel_center(int row, int col) const {
  const double u = 2.0 * (col + 0.5) / intrinsics_.width - 1.0;
  const double v = 1.0 - 2.0 * (row + 0.5) / intrinsics_.height;
  return {u, v};
}

Vec3d PinholeCamera::direction(double u, double v) const {
  const Vec3d cam(u * tan_half_fov_ * aspect_, v * tan_half_fov_, -1.0);
  return (rotation_ * cam).normalized();
}

Vec3d PinholeCamera::unproject(double u, double v, double t) const {
  return origin_ + t * direction(u, v);
}

RayBundle generate_rays(const CameraPose& pose, const CameraIntrinsics& intrinsics) {
  const PinholeCamera camera(pose, intrinsics);
  RayBundle rays;
  rays.width = intrinsics.width;
  rays.height = intrinsics.height;
  const std::size_t n = static_cast<std::size_t>(intrinsics.width) * intrinsics.height;
  rays.origins.reserve(n);
  rays.directions.reserve(n);
  rays.pixel_coords.reserve(n);
  for (int row = 0; row < intrinsics.height; ++row) {
    for (int col = 0; col < intrinsics.width; ++col) {
      const auto [u, v] = camera.pixel_center(row, col);
      rays.origins.push_back(camera.origin());
      rays.directions.push_back(camera.direction(u, v));
      rays.pixel_coords.push_back({row, col});
    }
  }
  return rays;
}

}  // namespace conrad
