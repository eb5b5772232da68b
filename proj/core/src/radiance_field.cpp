#include "conrad/radiance_field.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <string>

#include "conrad/rng.hpp"

namespace conrad {

void HashGridConfig::validate() const {
  if (n_levels < 1) throw InvalidArgument("hash grid needs at least one level");
  if (features_per_level < 1) throw InvalidArgument("hash grid needs at least one feature per level");
  if (table_size_log2 < 1 || table_size_log2 > 30) throw InvalidArgument("table_size_log2 must lie in [1, 30]");
  if (base_resolution < 1 || finest_resolution < base_resolution) {
    throw InvalidArgument("hash grid resolutions must satisfy 1 <= base <= finest");
  }
  for (int a = 0; a < 3; ++a) {
    if (!(box_max[a] > box_min[a])) throw InvalidArgument("hash grid bounding box is empty");
  }
}

int HashGridConfig::level_resolution(int level) const {
  if (n_levels == 1) return base_resolution;
  const double growth = std::log(static_cast<double>(finest_resolution) / base_resolution) / (n_levels - 1);
  return static_cast<int>(std::floor(base_resolution * std::exp(growth * level) + 1e-6));
}

bool HashGridConfig::level_is_dense(int level) const {
  const double vertices = std::pow(static_cast<double>(level_resolution(level)) + 1.0, 3.0);
  return vertices <= std::ldexp(1.0, table_size_log2);
}

std::size_t HashGridConfig::level_table_size(int level) const {
  if (level_is_dense(level)) {
    const std::size_t side = static_cast<std::size_t>(level_resolution(level)) + 1;
    return side * side * side;
  }
  return std::size_t{1} << table_size_log2;
}

void MlpConfig::validate() const {
  if (n_layers < 1) throw InvalidArgument("MLP needs at least one layer");
  if (hidden_dim < 1) throw InvalidArgument("MLP hidden dimension must be at least 1");
}

void FieldConfig::validate() const {
  grid.validate();
  density_mlp.validate();
  color_mlp.validate();
}

namespace {

template <typename T>
T sigmoid(T z) {
  return T(1) / (T(1) + std::exp(-z));
}

// Prime multipliers of the spatial hash; the x axis uses 1.
constexpr std::uint32_t kPrimeY = 2654435761u;
constexpr std::uint32_t kPrimeZ = 805459861u;

}  // namespace

template <typename T>
RadianceField<T>::RadianceField(FieldConfig config) : config_(std::move(config)) {
  config_.validate();
  const auto& g = config_.grid;
  for (int l = 0; l < g.n_levels; ++l) {
    char name[32];
    std::snprintf(name, sizeof(name), "grid.level_%02d", l);
    level_offsets_.push_back(layout_.add(name, g.level_table_size(l) * g.features_per_level));
    level_res_.push_back(g.level_resolution(l));
    level_dense_.push_back(g.level_is_dense(l) ? 1 : 0);
  }
  auto build_mlp = [&](const std::string& prefix, const MlpConfig& mc, int out_dim) {
    std::vector<LinearSlot> slots;
    int in = g.feature_dim();
    for (int l = 0; l < mc.n_layers; ++l) {
      const int out = (l == mc.n_layers - 1) ? out_dim : mc.hidden_dim;
      LinearSlot s;
      s.in = in;
      s.out = out;
      s.weight = layout_.add(prefix + ".w" + std::to_string(l), static_cast<std::size_t>(out) * in);
      s.bias = layout_.add(prefix + ".b" + std::to_string(l), out);
      slots.push_back(s);
      in = out;
    }
    return slots;
  };
  density_mlp_ = build_mlp("density", config_.density_mlp, 1);
  color_mlp_ = build_mlp("color", config_.color_mlp, 3);
}

template <typename T>
ParamStore<T> RadianceField<T>::initialize(std::uint64_t seed) const {
  ParamStore<T> store(layout_);
  std::mt19937_64 rng(seed);
  auto values = store.values();
  const auto& g = config_.grid;
  for (int l = 0; l < g.n_levels; ++l) {
    const std::size_t len = g.level_table_size(l) * g.features_per_level;
    for (std::size_t i = 0; i < len; ++i) {
      values[level_offsets_[l] + i] = T(uniform(rng, -config_.hash_init_range, config_.hash_init_range));
    }
  }
  auto init_mlp = [&](const std::vector<LinearSlot>& mlp) {
    for (const auto& s : mlp) {
      const double bound = std::sqrt(6.0 / s.in);
      for (std::size_t i = 0; i < static_cast<std::size_t>(s.in) * s.out; ++i) {
        values[s.weight + i] = T(uniform(rng, -bound, bound));
      }
    }
  };
  init_mlp(density_mlp_);
  init_mlp(color_mlp_);
  values[density_mlp_.back().bias] = T(config_.density_bias_init);
  return store;
}

template <typename T>
template <typename Visit>
void RadianceField<T>::for_each_corner(const Vec3<T>& x, Visit&& visit) const {
  const auto& g = config_.grid;
  T unit[3];
  for (int a = 0; a < 3; ++a) {
    const T q = (x[a] - T(g.box_min[a])) / T(g.box_max[a] - g.box_min[a]);
    unit[a] = std::clamp(q, T(0), T(1));
  }
  const int F = g.features_per_level;
  const std::uint32_t hash_mask = (std::uint32_t{1} << g.table_size_log2) - 1;
  for (int l = 0; l < g.n_levels; ++l) {
    const int res = level_res_[l];
    const bool dense = level_dense_[l] != 0;
    std::uint32_t cell[3];
    T frac[3];
    for (int a = 0; a < 3; ++a) {
      const T pos = unit[a] * T(res);
      int c = static_cast<int>(std::floor(pos));
      c = std::min(c, res - 1);
      cell[a] = static_cast<std::uint32_t>(c);
      frac[a] = pos - T(c);
    }
    const std::uint32_t side = static_cast<std::uint32_t>(res) + 1;
    for (int corner = 0; corner < 8; ++corner) {
      std::uint32_t v[3];
      T w = T(1);
      for (int a = 0; a < 3; ++a) {
        const bool hi = (corner >> a) & 1;
        v[a] = cell[a] + (hi ? 1u : 0u);
        w *= hi ? frac[a] : T(1) - frac[a];
      }
      std::uint32_t index;
      if (dense) {
        index = v[0] + side * (v[1] + side * v[2]);
      } else {
        index = (v[0] ^ (v[1] * kPrimeY) ^ (v[2] * kPrimeZ)) & hash_mask;
      }
      visit(l, corner, level_offsets_[l] + static_cast<std::size_t>(index) * F, w, frac);
    }
  }
}

template <typename T>
void RadianceField<T>::encode(const Vec3<T>& x, std::span<const T> params, std::span<T> features) const {
  const int F = config_.grid.features_per_level;
  std::fill(features.begin(), features.end(), T(0));
  for_each_corner(x, [&](int level, int, std::size_t offset, T w, const T*) {
    for (int f = 0; f < F; ++f) features[level * F + f] += w * params[offset + f];
  });
}

template <typename T>
void RadianceField<T>::encode_backward(const Vec3<T>& x, std::span<const T> params, std::span<const T> dfeatures,
                                       std::span<T> grads, Vec3<T>* dx) const {
  const auto& g = config_.grid;
  const int F = g.features_per_level;
  if (dx) dx->setZero();
  // d(unit coordinate)/dx, zero where the point was clamped to the box.
  T dunit[3];
  for (int a = 0; a < 3; ++a) {
    const T extent = T(g.box_max[a] - g.box_min[a]);
    const T q = (x[a] - T(g.box_min[a])) / extent;
    dunit[a] = (q < T(0) || q > T(1)) ? T(0) : T(1) / extent;
  }
  for_each_corner(x, [&](int level, int corner, std::size_t offset, T w, const T* frac) {
    if (!grads.empty()) {
      for (int f = 0; f < F; ++f) grads[offset + f] += w * dfeatures[level * F + f];
    }
    if (dx) {
      T dot = T(0);
      for (int f = 0; f < F; ++f) dot += params[offset + f] * dfeatures[level * F + f];
      const T res = T(level_res_[level]);
      for (int a = 0; a < 3; ++a) {
        T dw = ((corner >> a) & 1) ? T(1) : T(-1);
        for (int b = 0; b < 3; ++b) {
          if (b == a) continue;
          dw *= ((corner >> b) & 1) ? frac[b] : T(1) - frac[b];
        }
        (*dx)[a] += dot * dw * res * dunit[a];
      }
    }
  });
}

template <typename T>
void RadianceField<T>::mlp_forward(const std::vector<LinearSlot>& mlp, std::span<const T> params,
                                   const MatrixX<T>& input, std::vector<MatrixX<T>>& hidden,
                                   MatrixX<T>& output) const {
  using MapM = Eigen::Map<const MatrixX<T>>;
  using MapV = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>;
  hidden.resize(mlp.size() - 1);
  const MatrixX<T>* a = &input;
  for (std::size_t l = 0; l < mlp.size(); ++l) {
    const auto& s = mlp[l];
    const MapM w(params.data() + s.weight, s.out, s.in);
    const MapV b(params.data() + s.bias, s.out);
    MatrixX<T> z;
    z.noalias() = w * (*a);
    z.colwise() += b;
    if (l + 1 < mlp.size()) {
      hidden[l] = z.cwiseMax(T(0));
      a = &hidden[l];
    } else {
      output = std::move(z);
    }
  }
}

template <typename T>
void RadianceField<T>::mlp_backward(const std::vector<LinearSlot>& mlp, std::span<const T> params,
                                    const MatrixX<T>& input, const std::vector<MatrixX<T>>& hidden,
                                    MatrixX<T> dout, std::span<T> grads, MatrixX<T>& dinput) const {
  using MapM = Eigen::Map<const MatrixX<T>>;
  MatrixX<T> dz = std::move(dout);
  for (std::size_t l = mlp.size(); l-- > 0;) {
    const auto& s = mlp[l];
    const MatrixX<T>& a_prev = (l == 0) ? input : hidden[l - 1];
    Eigen::Map<MatrixX<T>> dw(grads.data() + s.weight, s.out, s.in);
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> db(grads.data() + s.bias, s.out);
    dw.noalias() += dz * a_prev.transpose();
    // Column loop: rowwise().sum() on a column-major matrix walks with a stride.
    for (Eigen::Index j = 0; j < dz.cols(); ++j) db += dz.col(j);
    const MapM w(params.data() + s.weight, s.out, s.in);
    if (l > 0) {
      MatrixX<T> da;
      da.noalias() = w.transpose() * dz;
      dz = (hidden[l - 1].array() > T(0)).select(da, T(0));
    } else {
      dinput.noalias() += w.transpose() * dz;
    }
  }
}

template <typename T>
void RadianceField<T>::forward(std::span<const Vec3<T>> points, std::span<const T> params, bool with_color,
                               FieldCache<T>& cache) const {
  if (params.size() != layout_.total()) throw InvalidArgument("parameter vector does not match field layout");
  const std::size_t n = points.size();
  const int dim = feature_dim();
  cache.count = n;
  cache.with_color = with_color;
  cache.features.resize(dim, static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    encode(points[i], params, std::span<T>(cache.features.data() + i * dim, dim));
  }
  MatrixX<T> out;
  mlp_forward(density_mlp_, params, cache.features, cache.density_hidden, out);
  cache.sigma.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const T s = std::exp(out(0, static_cast<Eigen::Index>(i)));
    if (!std::isfinite(s)) throw NumericError("radiance field produced a non-finite density");
    cache.sigma[i] = s;
  }
  cache.rgb.clear();
  cache.color_hidden.clear();
  if (with_color) {
    mlp_forward(color_mlp_, params, cache.features, cache.color_hidden, out);
    cache.rgb.resize(3 * n);
    for (std::size_t i = 0; i < n; ++i) {
      for (int c = 0; c < 3; ++c) {
        const T v = sigmoid(out(c, static_cast<Eigen::Index>(i)));
        if (!std::isfinite(v)) throw NumericError("radiance field produced a non-finite color");
        cache.rgb[3 * i + c] = v;
      }
    }
  }
}

template <typename T>
void RadianceField<T>::backward(std::span<const Vec3<T>> points, std::span<const T> params,
                                const FieldCache<T>& cache, std::span<const T> dsigma, std::span<const T> drgb,
                                std::span<T> grads) const {
  const std::size_t n = cache.count;
  if (points.size() != n || dsigma.size() != n) throw GraphError("field backward: batch size mismatch");
  if (grads.size() != layout_.total()) throw GraphError("field backward: gradient buffer size mismatch");
  const int dim = feature_dim();
  const auto cols = static_cast<Eigen::Index>(n);
  MatrixX<T> dfeatures = MatrixX<T>::Zero(dim, cols);

  MatrixX<T> dout(1, cols);
  for (std::size_t i = 0; i < n; ++i) dout(0, static_cast<Eigen::Index>(i)) = dsigma[i] * cache.sigma[i];
  mlp_backward(density_mlp_, params, cache.features, cache.density_hidden, std::move(dout), grads, dfeatures);

  const bool color_grad = cache.with_color && !drgb.empty() &&
                          std::any_of(drgb.begin(), drgb.end(), [](T v) { return v != T(0); });
  if (color_grad) {
    if (drgb.size() != 3 * n) throw GraphError("field backward: color adjoint size mismatch");
    MatrixX<T> dc(3, cols);
    for (std::size_t i = 0; i < n; ++i) {
      for (int c = 0; c < 3; ++c) {
        const T v = cache.rgb[3 * i + c];
        dc(c, static_cast<Eigen::Index>(i)) = drgb[3 * i + c] * v * (T(1) - v);
      }
    }
    mlp_backward(color_mlp_, params, cache.features, cache.color_hidden, std::move(dc), grads, dfeatures);
  }

  for (std::size_t i = 0; i < n; ++i) {
    encode_backward(points[i], params, std::span<const T>(dfeatures.data() + i * dim, dim), grads);
  }
}

template <typename T>
T RadianceField<T>::density(const Vec3<T>& x, std::span<const T> params) const {
  FieldCache<T> cache;
  forward(std::span<const Vec3<T>>(&x, 1), params, false, cache);
  return cache.sigma[0];
}

template <typename T>
Vec3<T> RadianceField<T>::color(const Vec3<T>& x, std::span<const T> params) const {
  FieldCache<T> cache;
  forward(std::span<const Vec3<T>>(&x, 1), params, true, cache);
  return Vec3<T>(cache.rgb[0], cache.rgb[1], cache.rgb[2]);
}

template class RadianceField<float>;
template class RadianceField<double>;

}  // namespace conrad
