#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "conrad/constraints.hpp"
#include "conrad/radiance_field.hpp"
#include "test_support.hpp"

namespace conrad {
namespace {

RaySamples<double> one_ray(double near, double far, int n) {
  RayBundle b;
  b.origins = {Vec3d::Zero()};
  b.directions = {Vec3d::UnitZ()};
  b.pixel_coords = {{0, 0}};
  MarchConfig cfg;
  cfg.n_samples = n;
  cfg.fixed_range = {{near, far}};
  return sample_rays<double>(b, cfg);
}

// Continuous cumulative-weight crossing of a piecewise-constant density,
// found by bisection on the closed-form cumulative weight 1 - exp(-integral).
double crossing_oracle(const std::vector<double>& sigma, double near, double far, double eta) {
  const double bin = (far - near) / sigma.size();
  auto mass = [&](double t) {
    double tau = 0.0;
    for (std::size_t i = 0; i < sigma.size(); ++i) {
      const double lo = near + i * bin;
      tau += sigma[i] * std::clamp(t - lo, 0.0, bin);
    }
    return 1.0 - std::exp(-tau);
  };
  const double target = (1.0 - eta) * mass(far);
  double lo = near, hi = far;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (mass(mid) >= target ? hi : lo) = mid;
  }
  return hi;
}

ReferenceConditioning small_conditioning(int size = 5) {
  ReferenceConditioning c;
  c.intrinsics.width = c.intrinsics.height = size;
  c.image = Image(size, size, 3, 0.0f);
  c.mask = Image(size, size, 1, 1.0f);
  c.cond_id = "unit";
  return c;
}

VisibilityDepthMap flat_visibility(int size, float v) {
  return {Image(size, size, 1, v), std::vector<std::uint8_t>(size * size, 1)};
}

Vec3d point_at_pixel(const ReferenceConditioning& c, int row, int col, double distance) {
  const PinholeCamera cam(c.pose, c.intrinsics);
  const auto [u, v] = cam.pixel_center(row, col);
  return cam.unproject(u, v, distance);
}

TEST(VisibilityDepth, SingleOpaqueSample) {
  const int n = 16;
  const auto s = one_ray(0.0, 4.0, n);
  std::vector<double> sigma(n, 0.0);
  const double spacing = 4.0 / n;
  const int k = 7;  // midpoint t = 1.875
  sigma[k] = 1e4;
  const auto map = compute_visibility_depth<double>(s, sigma, 1, 1, 0.1);
  EXPECT_TRUE(map.valid[0]);
  EXPECT_NEAR(map.depth.data[0], s.t[k], 0.5 * spacing + 1e-6);
}

TEST(VisibilityDepth, HomogeneousMediumMatchesClosedForm) {
  const double t_star = -std::log(1.0 - 0.9 * (1.0 - std::exp(-4.0)));
  EXPECT_NEAR(t_star, 2.1499, 2e-4);  // 2.15000 to five places
  for (int n : {128, 256}) {
    const auto s = one_ray(0.0, 4.0, n);
    const std::vector<double> sigma(n, 1.0);
    const auto map = compute_visibility_depth<double>(s, sigma, 1, 1, 0.1);
    EXPECT_NEAR(map.depth.data[0], t_star, 4.0 / n) << n;
  }
}

TEST(VisibilityDepth, EmptyRayIsInvalidAndFar) {
  const auto s = one_ray(1.0, 3.0, 32);
  const std::vector<double> sigma(32, 0.0);
  const auto map = compute_visibility_depth<double>(s, sigma, 1, 1, 0.1);
  EXPECT_FALSE(map.valid[0]);
  EXPECT_FLOAT_EQ(map.depth.data[0], 3.0f);
}

TEST(VisibilityDepth, RandomProfilesMatchQuadratureOracle) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  const int n = 64;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> sigma(n);
    for (auto& v : sigma) v = u(rng) * u(rng);
    const auto s = one_ray(0.0, 4.0, n);
    const auto map = compute_visibility_depth<double>(s, sigma, 1, 1, 0.1);
    EXPECT_NEAR(map.depth.data[0], crossing_oracle(sigma, 0.0, 4.0, 0.1), 4.0 / n + 1e-5);
  }
}

TEST(VisibilityDepth, RejectsBadEtaAndShape) {
  const auto s = one_ray(0.0, 1.0, 4);
  const std::vector<double> sigma(4, 1.0);
  EXPECT_THROW(compute_visibility_depth<double>(s, sigma, 1, 1, 0.0), InvalidArgument);
  EXPECT_THROW(compute_visibility_depth<double>(s, sigma, 1, 1, 1.0), InvalidArgument);
  EXPECT_THROW(compute_visibility_depth<double>(s, sigma, 2, 1, 0.1), InvalidArgument);
}

TEST(WarmStart, LinearRampThenPlateau) {
  const WarmStartSchedule ws{1000, 0.5};
  EXPECT_DOUBLE_EQ(warm_alpha(0, ws), 0.0);
  EXPECT_DOUBLE_EQ(warm_alpha(250, ws), 0.5);
  EXPECT_DOUBLE_EQ(warm_alpha(500, ws), 1.0);
  EXPECT_DOUBLE_EQ(warm_alpha(1000, ws), 1.0);
  EXPECT_THROW(warm_alpha(1001, ws), InvalidArgument);
  EXPECT_THROW(warm_alpha(0, WarmStartSchedule{1000, 0.0}), InvalidArgument);
}

TEST(ConstrainedColor, InFrontOfSurfaceTakesTheImageColor) {
  auto c = small_conditioning();
  c.image.at(1, 3, 0) = 0.25f;
  c.image.at(1, 3, 1) = 0.5f;
  c.image.at(1, 3, 2) = 0.75f;
  const auto vis = flat_visibility(5, 3.0f);
  const Vec3d x = point_at_pixel(c, 1, 3, 2.0);
  const Vec3d out = constrained_color<double>(x, Vec3d(0.9, 0.1, 0.3), vis, c, 1.0);
  EXPECT_NEAR((out - Vec3d(0.25, 0.5, 0.75)).norm(), 0.0, 1e-6);
}

TEST(ConstrainedColor, BehindSurfaceKeepsRawColor) {
  auto c = small_conditioning();
  const auto vis = flat_visibility(5, 3.0f);
  const Vec3d raw(0.9, 0.1, 0.3);
  EXPECT_EQ(constrained_color<double>(point_at_pixel(c, 2, 2, 3.5), raw, vis, c, 1.0), raw);
}

TEST(ConstrainedColor, WarmStartBlendsLinearly) {
  auto c = small_conditioning();
  c.image = Image(5, 5, 3, 1.0f);
  const auto vis = flat_visibility(5, 3.0f);
  const Vec3d out = constrained_color<double>(point_at_pixel(c, 2, 2, 2.0), Vec3d::Zero(), vis, c, 0.5);
  EXPECT_NEAR(out[0], 0.5, 1e-12);
}

TEST(ConstrainedDensity, MaskScalesDensity) {
  auto c = small_conditioning();
  c.mask = Image(5, 5, 1, 0.0f);
  const Vec3d x = point_at_pixel(c, 2, 2, 3.0);
  EXPECT_EQ(constrained_density<double>(x, 2.0, c, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(constrained_density<double>(x, 2.0, c, 0.5), 1.0);
  c.mask = Image(5, 5, 1, 1.0f);
  EXPECT_DOUBLE_EQ(constrained_density<double>(x, 2.0, c, 0.3), 2.0);
}

TEST(Constraint, OutOfFrustumPointsAreUnconstrained) {
  auto c = small_conditioning();
  c.mask = Image(5, 5, 1, 0.0f);
  const auto vis = flat_visibility(5, 10.0f);
  const Constraint k(c, &vis, 1.0);
  // Behind the reference camera, and far off to the side.
  for (const Vec3d& x : {Vec3d(5.0, 0, 0), Vec3d(0, 10.0, 0)}) {
    const auto t = k.terms<double>(x, true);
    EXPECT_EQ(t.density_scale, 1.0);
    EXPECT_EQ(t.color_blend, 0.0);
  }
}

TEST(Constraint, StrengthIsMonotone) {
  auto c = small_conditioning();
  c.mask.at(2, 2) = 0.3f;
  c.image = Image(5, 5, 3, 0.8f);
  const auto vis = flat_visibility(5, 3.0f);
  const Vec3d x = point_at_pixel(c, 2, 2, 2.0);
  const Vec3d raw(0.1, 0.2, 0.3);
  double prev_gap = 1e9, prev_sigma = 1e9;
  for (double a = 0.0; a <= 1.0; a += 0.125) {
    const double gap = (constrained_color<double>(x, raw, vis, c, a) - Vec3d::Constant(0.8)).cwiseAbs().maxCoeff();
    const double s = constrained_density<double>(x, 1.5, c, a);
    EXPECT_LE(gap, prev_gap + 1e-12);
    EXPECT_LE(s, prev_sigma + 1e-12);
    prev_gap = gap;
    prev_sigma = s;
  }
}

TEST(Constraint, WrapMatchesPointwiseTerms) {
  const auto c = testing::toy_conditioning(ToyShape::kSphere, 16);
  RadianceField<double> field(testing::tiny_field_config());
  const auto p = testing::spread_params(field, 2, 1.0);
  const FieldFn<double> raw = [&](std::span<const Vec3d> pts, std::span<double> s, std::span<double> rgb) {
    FieldCache<double> cache;
    field.forward(pts, p.values(), !rgb.empty(), cache);
    std::copy(cache.sigma.begin(), cache.sigma.end(), s.begin());
    if (!rgb.empty()) std::copy(cache.rgb.begin(), cache.rgb.end(), rgb.begin());
  };
  MarchConfig cfg;
  cfg.n_samples = 32;
  const auto vis = compute_visibility_depth<double>(c.pose, c.intrinsics, raw, cfg, 0.1);
  const Constraint k(c, &vis, 0.7);
  const auto wrapped = k.wrap<double>(raw);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.2, 1.2);
  for (int i = 0; i < 30; ++i) {
    const Vec3d x(u(rng), u(rng), u(rng));
    double s = 0.0;
    double rgb[3];
    wrapped(std::span<const Vec3d>(&x, 1), std::span<double>(&s, 1), std::span<double>(rgb, 3));
    const Vec3d expect_c = k.color<double>(x, field.color(x, p.values()));
    EXPECT_NEAR(s, k.density<double>(x, field.density(x, p.values())), 1e-12);
    EXPECT_NEAR(rgb[1], expect_c[1], 1e-12);
  }
}

TEST(Constraint, VisibilityFromConstrainedDensityNeverRecedes) {
  // Recomputing V through sigma' at alpha = 1 can only remove density, which
  // moves the crossing forward or leaves it.
  const auto c = testing::toy_conditioning(ToyShape::kSphere, 16);
  RadianceField<double> field(testing::tiny_field_config());
  const auto p = testing::spread_params(field, 5, 1.0);
  const FieldFn<double> raw = [&](std::span<const Vec3d> pts, std::span<double> s, std::span<double>) {
    for (std::size_t i = 0; i < pts.size(); ++i) s[i] = field.density(pts[i], p.values());
  };
  MarchConfig cfg;
  cfg.n_samples = 32;
  const auto v0 = compute_visibility_depth<double>(c.pose, c.intrinsics, raw, cfg, 0.1);
  const Constraint k(c, nullptr, 1.0);
  const auto v1 = compute_visibility_depth<double>(c.pose, c.intrinsics, k.wrap<double>(raw), cfg, 0.1);
  for (std::size_t i = 0; i < v0.valid.size(); ++i) {
    if (c.mask.data[i] >= 1.0f && v0.valid[i] && v1.valid[i]) EXPECT_LE(v1.depth.data[i], v0.depth.data[i] + 1e-6);
  }
}

TEST(ReferenceConditioning, ValidateCatchesMismatches) {
  auto c = small_conditioning();
  EXPECT_NO_THROW(c.validate());
  c.mask = Image(4, 5, 1, 1.0f);
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = small_conditioning();
  c.mask.at(0, 0) = 1.5f;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = small_conditioning();
  c.intrinsics.width = 6;
  EXPECT_THROW(c.validate(), InvalidArgument);
}

}  // namespace
}  // namespace conrad
