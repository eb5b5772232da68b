#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "conrad/constraints.hpp"
#include "conrad/radiance_field.hpp"
#include "conrad/toy_scene.hpp"

namespace conrad::testing {

/// Central differences of a scalar function of a flat vector, one coordinate
/// at a time. x is restored on return.
inline std::vector<double> central_difference(std::span<double> x, const std::function<double()>& f,
                                              double h = 1e-5) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f();
    x[i] = keep - h;
    const double down = f();
    x[i] = keep;
    out[i] = (up - down) / (2.0 * h);
  }
  return out;
}

/// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor). The floor keeps entries that
/// are zero up to finite-difference noise from dominating.
inline double max_relative_error(std::span<const double> a, std::span<const double> b, double floor) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

/// A few hundred parameters: two dense levels and narrow MLPs.
inline FieldConfig tiny_field_config() {
  FieldConfig c;
  c.grid.n_levels = 2;
  c.grid.features_per_level = 2;
  c.grid.table_size_log2 = 8;
  c.grid.base_resolution = 2;
  c.grid.finest_resolution = 4;
  c.density_mlp.hidden_dim = 6;
  c.color_mlp.hidden_dim = 6;
  return c;
}

/// Reasonably expressive field for training tests on one core.
inline FieldConfig small_field_config() {
  FieldConfig c;
  c.grid.n_levels = 8;
  c.grid.table_size_log2 = 14;
  c.grid.base_resolution = 8;
  c.grid.finest_resolution = 128;
  c.density_mlp.hidden_dim = 32;
  c.color_mlp.hidden_dim = 32;
  return c;
}

/// Parameters drawn so that features, and hence densities, vary visibly in
/// space (the default init is an almost uniform fog).
template <typename T>
ParamStore<T> spread_params(const RadianceField<T>& field, std::uint64_t seed, double hash_range) {
  ParamStore<T> p = field.initialize(seed);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
  std::uniform_real_distribution<double> u(-hash_range, hash_range);
  for (const auto& s : field.layout().segments()) {
    if (s.name.rfind("grid.", 0) != 0) continue;
    for (std::size_t i = 0; i < s.length; ++i) p.values()[s.offset + i] = T(u(rng));
  }
  return p;
}

inline ReferenceConditioning toy_conditioning(ToyShape shape = ToyShape::kSphere, int size = 64) {
  CameraIntrinsics intr;
  intr.width = size;
  intr.height = size;
  ToyScene scene;
  scene.shape = shape;
  const ToyRender r = render_toy(scene, CameraPose::reference(), intr);
  ReferenceConditioning c;
  c.image = r.image;
  c.mask = r.mask;
  c.depth = r.depth;
  c.intrinsics = intr;
  c.cond_id = "toy";
  return c;
}

}  // namespace conrad::testing
