#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "conrad/common.hpp"
#include "conrad/params.hpp"

namespace conrad {

/// Multi-resolution hash grid. Level resolutions grow geometrically from
/// base_resolution to finest_resolution; levels whose (res+1)^3 vertices fit in
/// the table are indexed densely, finer levels through the spatial hash.
struct HashGridConfig {
  int n_levels = 16;
  int features_per_level = 2;
  int table_size_log2 = 19;
  int base_resolution = 16;
  int finest_resolution = 2048;
  Vec3d box_min{-1.0, -1.0, -1.0};
  Vec3d box_max{1.0, 1.0, 1.0};

  void validate() const;
  int level_resolution(int level) const;
  std::size_t level_table_size(int level) const;
  bool level_is_dense(int level) const;
  int feature_dim() const { return n_levels * features_per_level; }
};

/// Fully connected ReLU network; n_layers counts linear layers.
struct MlpConfig {
  int n_layers = 3;
  int hidden_dim = 64;

  void validate() const;
};

struct FieldConfig {
  HashGridConfig grid;
  MlpConfig density_mlp;
  MlpConfig color_mlp;
  double density_bias_init = -1.0;
  double hash_init_range = 1e-4;

  void validate() const;
};

template <typename T>
using MatrixX = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

/// Activations kept from a batched forward pass for the backward pass.
template <typename T>
struct FieldCache {
  std::size_t count = 0;
  bool with_color = false;
  MatrixX<T> features;                  // feature_dim x count
  std::vector<MatrixX<T>> density_hidden;  // post-ReLU activations per hidden layer
  std::vector<MatrixX<T>> color_hidden;
  std::vector<T> sigma;                 // count
  std::vector<T> rgb;                   // 3 * count
};

/// The unconstrained field x -> (c(x), sigma(x)): a shared hash encoding
/// feeding a density MLP (exp head) and a color MLP (sigmoid head).
/// Parameters live in an external flat vector described by layout().
template <typename T>
class RadianceField {
 public:
  explicit RadianceField(FieldConfig config = {});

  const FieldConfig& config() const { return config_; }
  const ParamLayout& layout() const { return layout_; }
  int feature_dim() const { return config_.grid.feature_dim(); }

  ParamStore<T> initialize(std::uint64_t seed) const;

  /// Trilinearly interpolated hash features, concatenated over levels.
  void encode(const Vec3<T>& x, std::span<const T> params, std::span<T> features) const;
  /// Scatters dfeatures into table gradients (when grads is non-empty) and
  /// optionally returns the gradient with respect to x.
  void encode_backward(const Vec3<T>& x, std::span<const T> params, std::span<const T> dfeatures,
                       std::span<T> grads, Vec3<T>* dx = nullptr) const;

  /// Batched evaluation. Throws NumericError on non-finite outputs.
  void forward(std::span<const Vec3<T>> points, std::span<const T> params, bool with_color,
               FieldCache<T>& cache) const;
  /// Accumulates parameter gradients given adjoints of sigma (count) and rgb
  /// (3 * count, may be empty).
  void backward(std::span<const Vec3<T>> points, std::span<const T> params, const FieldCache<T>& cache,
                std::span<const T> dsigma, std::span<const T> drgb, std::span<T> grads) const;

  T density(const Vec3<T>& x, std::span<const T> params) const;
  Vec3<T> color(const Vec3<T>& x, std::span<const T> params) const;

 private:
  struct LinearSlot {
    std::size_t weight = 0;  // out x in, column-major
    std::size_t bias = 0;
    int in = 0;
    int out = 0;
  };

  template <typename Visit>
  void for_each_corner(const Vec3<T>& x, Visit&& visit) const;

  void mlp_forward(const std::vector<LinearSlot>& mlp, std::span<const T> params, const MatrixX<T>& input,
                   std::vector<MatrixX<T>>& hidden, MatrixX<T>& output) const;
  void mlp_backward(const std::vector<LinearSlot>& mlp, std::span<const T> params, const MatrixX<T>& input,
                    const std::vector<MatrixX<T>>& hidden, MatrixX<T> dout, std::span<T> grads,
                    MatrixX<T>& dinput) const;

  FieldConfig config_;
  ParamLayout layout_;
  std::vector<std::size_t> level_offsets_;
  std::vector<int> level_res_;
  std::vector<char> level_dense_;
  std::vector<LinearSlot> density_mlp_;
  std::vector<LinearSlot> color_mlp_;
};

extern template class RadianceField<float>;
extern template class RadianceField<double>;

}  // namespace conrad
