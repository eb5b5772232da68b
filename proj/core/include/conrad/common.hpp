#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace conrad {

template <typename T>
using Vec3 = Eigen::Matrix<T, 3, 1>;
using Vec3d = Vec3<double>;
using Vec3f = Vec3<float>;

inline constexpr double deg_to_rad(double deg) { return deg * std::numbers::pi / 180.0; }
inline constexpr double rad_to_deg(double rad) { return rad * 180.0 / std::numbers::pi; }

// Error hierarchy. Each class maps onto one CLI exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

// Misuse of the gradient tape (backward without a recorded forward, adjoint
// shape mismatch).
class GraphError : public Error {
 public:
  using Error::Error;
};

class FormatError : public IoError {
 public:
  enum class Kind { kBadMagic, kVersionMismatch, kTruncated, kMalformed };
  FormatError(Kind kind, const std::string& what) : IoError(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

class ProviderError : public Error {
 public:
  enum class Kind { kTimeout, kHttp, kShapeMismatch, kNonFinite, kMalformed, kUnavailable };
  ProviderError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

const char* to_string(ProviderError::Kind kind);

/// Dense H x W x C image of 32-bit reals, channel-interleaved, row 0 at the top.
struct Image {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> data;

  Image() = default;
  Image(int h, int w, int c, float fill = 0.0f)
      : height(h), width(w), channels(c), data(static_cast<std::size_t>(h) * w * c, fill) {}

  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }
  bool same_shape(const Image& other) const {
    return height == other.height && width == other.width && channels == other.channels;
  }

  float& at(int i, int j, int c = 0) {
    return data[(static_cast<std::size_t>(i) * width + j) * channels + c];
  }
  float at(int i, int j, int c = 0) const {
    return data[(static_cast<std::size_t>(i) * width + j) * channels + c];
  }
};

}  // namespace conrad
