#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "conrad/common.hpp"

namespace conrad {

// Axis convention: z is up, azimuth rotates about +z starting at +x, elevation
// is measured from the xy-plane. Cameras always look at the world origin.

/// Orbit camera pose. Angles in radians.
struct CameraPose {
  double azimuth = 0.0;
  double elevation = 0.0;
  double radius = 3.2;

  /// Pose bound to the conditioning image: azimuth 0, elevation 0, radius 3.2.
  static CameraPose reference() { return {}; }

  Vec3d origin() const;
  /// Camera-to-world rotation. Columns are image-right, image-up and the
  /// backward axis (the camera looks along -column(2)).
  Eigen::Matrix3d rotation() const;
  void validate() const;

  bool operator==(const CameraPose&) const = default;
};

struct CameraIntrinsics {
  double vertical_fov = deg_to_rad(40.0);
  int width = 64;
  int height = 64;

  double aspect() const { return static_cast<double>(width) / height; }
  void validate() const;

  bool operator==(const CameraIntrinsics&) const = default;
};

/// Box that random training poses are drawn from. Radians and world units.
struct PoseBounds {
  double elevation_min = deg_to_rad(-15.0);
  double elevation_max = deg_to_rad(45.0);
  double azimuth_min = 0.0;
  double azimuth_max = deg_to_rad(360.0);
  double radius_min = 3.0;
  double radius_max = 3.5;

  void validate() const;
};

/// Uniform draw over the bounds box. Throws InvalidArgument when any min > max.
CameraPose sample_random_pose(std::mt19937_64& rng, const PoseBounds& bounds = {});

struct PixelCoord {
  int row = 0;
  int col = 0;
};

struct RayBundle {
  std::vector<Vec3d> origins;
  std::vector<Vec3d> directions;
  std::vector<PixelCoord> pixel_coords;
  int width = 0;
  int height = 0;

  std::size_t size() const { return directions.size(); }
};

/// Result of mapping a world point into normalized image coordinates.
/// (u, v) spans [-1, 1]^2 across the image, u to the right and v up.
template <typename T>
struct Projection {
  T u = 0;
  T v = 0;
  T distance = 0;  // Euclidean distance from the camera origin.
  bool in_frustum = false;
};

/// Pinhole camera built from an orbit pose and intrinsics.
class PinholeCamera {
 public:
  PinholeCamera(const CameraPose& pose, const CameraIntrinsics& intrinsics);

  const CameraPose& pose() const { return pose_; }
  const CameraIntrinsics& intrinsics() const { return intrinsics_; }
  const Vec3d& origin() const { return origin_; }
  const Eigen::Matrix3d& rotation() const { return rotation_; }

  /// Normalized coordinates of the center of pixel (row, col).
  std::pair<double, double> pixel_center(int row, int col) const;
  /// Unit world-space direction through normalized coordinates (u, v).
  Vec3d direction(double u, double v) const;
  /// World point at distance t along the ray through (u, v).
  Vec3d unproject(double u, double v, double t) const;

  template <typename T>
  Projection<T> project(const Vec3<T>& x) const {
    const Vec3<T> rel = x - origin_.cast<T>();
    const Vec3<T> cam = rotation_.transpose().cast<T>() * rel;
    Projection<T> out;
    out.distance = rel.norm();
    const T forward = -cam.z();
    if (!(forward > T(0))) {
      return out;
    }
    out.u = cam.x() / (forward * T(tan_half_fov_ * aspect_));
    out.v = cam.y() / (forward * T(tan_half_fov_));
    out.in_frustum = out.u >= T(-1) && out.u <= T(1) && out.v >= T(-1) && out.v <= T(1);
    return out;
  }

 private:
  CameraPose pose_;
  CameraIntrinsics intrinsics_;
  Vec3d origin_;
  Eigen::Matrix3d rotation_;
  double tan_half_fov_;
  double aspect_;
};

/// One unit-norm ray per pixel, row-major (ray index = row * width + col).
RayBundle generate_rays(const CameraPose& pose, const CameraIntrinsics& intrinsics);

/// Bilinear lookup of channel `c` at normalized coordinates. Pixel centers sit
/// at the values returned by PinholeCamera::pixel_center; lookups clamp at the
/// image border.
template <typename T>
T sample_bilinear(const Image& image, T u, T v, int c = 0) {
  const T x = (u + T(1)) * T(0.5) * T(image.width) - T(0.5);
  const T y = (T(1) - v) * T(0.5) * T(image.height) - T(0.5);
  const T xc = std::clamp(x, T(0), T(image.width - 1));
  const T yc = std::clamp(y, T(0), T(image.height - 1));
  int x0 = static_cast<int>(std::floor(xc));
  int y0 = static_cast<int>(std::floor(yc));
  x0 = std::min(x0, image.width - 1);
  y0 = std::min(y0, image.height - 1);
  const int x1 = std::min(x0 + 1, image.width - 1);
  const int y1 = std::min(y0 + 1, image.height - 1);
  const T fx = xc - T(x0);
  const T fy = yc - T(y0);
  const T top = (T(1) - fx) * T(image.at(y0, x0, c)) + fx * T(image.at(y0, x1, c));
  const T bottom = (T(1) - fx) * T(image.at(y1, x0, c)) + fx * T(image.at(y1, x1, c));
  return (T(1) - fy) * top + fy * bottom;
}

}  // namespace conrad
