#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "conrad/renderer.hpp"
#include "test_support.hpp"

namespace conrad {
namespace {

using testing::central_difference;
using testing::max_relative_error;

FieldFn<double> constant_field(double sigma, Vec3d color) {
  return [=](std::span<const Vec3d> pts, std::span<double> s, std::span<double> rgb) {
    for (std::size_t i = 0; i < pts.size(); ++i) {
      s[i] = sigma;
      if (!rgb.empty()) {
        for (int c = 0; c < 3; ++c) rgb[3 * i + c] = color[c];
      }
    }
  };
}

// Dense ball of radius 1 with a position-coded color.
FieldFn<double> ball_field(double sigma) {
  return [=](std::span<const Vec3d> pts, std::span<double> s, std::span<double> rgb) {
    for (std::size_t i = 0; i < pts.size(); ++i) {
      s[i] = pts[i].norm() < 1.0 ? sigma : 0.0;
      if (!rgb.empty()) {
        for (int c = 0; c < 3; ++c) rgb[3 * i + c] = 0.5 + 0.4 * pts[i][c];
      }
    }
  };
}

RayBundle single_ray(Vec3d o, Vec3d d) {
  RayBundle b;
  b.origins = {o};
  b.directions = {d.normalized()};
  b.pixel_coords = {{0, 0}};
  b.width = b.height = 1;
  return b;
}

TEST(SampleRays, MidpointsTileTheRange) {
  MarchConfig cfg;
  cfg.n_samples = 4;
  cfg.fixed_range = {{2.0, 4.0}};
  const auto s = sample_rays<double>(single_ray(Vec3d::Zero(), Vec3d::UnitX()), cfg);
  const double expected[] = {2.25, 2.75, 3.25, 3.75};
  for (int i = 0; i < 4; ++i) {
    EXPECT_DOUBLE_EQ(s.t[i], expected[i]);
    EXPECT_DOUBLE_EQ(s.delta[i], 0.5);
    EXPECT_DOUBLE_EQ(s.points[i].x(), expected[i]);
  }
}

TEST(SampleRays, JitterStaysInsideBinsAndIsSeeded) {
  MarchConfig cfg;
  cfg.n_samples = 16;
  cfg.perturb = true;
  const auto ray = single_ray(Vec3d(3.2, 0, 0), Vec3d(-1, 0, 0));
  std::mt19937_64 a(5), b(5);
  const auto sa = sample_rays<double>(ray, cfg, &a);
  const auto sb = sample_rays<double>(ray, cfg, &b);
  EXPECT_EQ(sa.t, sb.t);
  // Bounding sphere radius 1.5 gives [1.7, 4.7].
  EXPECT_NEAR(sa.near[0], 1.7, 1e-12);
  EXPECT_NEAR(sa.far[0], 4.7, 1e-12);
  const double bin = 3.0 / 16;
  for (int i = 0; i < 16; ++i) {
    EXPECT_GE(sa.t[i], 1.7 + i * bin);
    EXPECT_LE(sa.t[i], 1.7 + (i + 1) * bin);
  }
}

TEST(MarchForward, HomogeneousMediumMatchesClosedForm) {
  // sigma = 1 over a length-2 segment, color 0.3, white background:
  // C = 0.3 (1 - e^-2) + e^-2.
  MarchConfig cfg;
  cfg.n_samples = 64;
  cfg.fixed_range = {{1.0, 3.0}};
  const auto r = march<double>(Vec3d::Zero(), Vec3d::UnitZ(), constant_field(1.0, Vec3d::Constant(0.3)), cfg);
  const double expected = 0.3 * (1.0 - std::exp(-2.0)) + std::exp(-2.0);
  for (int c = 0; c < 3; ++c) EXPECT_NEAR(r.color[c], expected, 1e-12);
  EXPECT_NEAR(r.alpha, 1.0 - std::exp(-2.0), 1e-12);
}

TEST(MarchForward, HomogeneousDepthMatchesExpectedDistance) {
  // E[t] of an exponential truncated to [0, L], normalized by the hit mass.
  MarchConfig cfg;
  cfg.n_samples = 4096;
  cfg.fixed_range = {{0.0, 4.0}};
  const auto r = march<double>(Vec3d::Zero(), Vec3d::UnitZ(), constant_field(1.0, Vec3d::Zero()), cfg);
  const double L = 4.0;
  const double expected = (1.0 - std::exp(-L) * (1.0 + L)) / (1.0 - std::exp(-L));
  EXPECT_NEAR(r.depth, expected, 1e-3);
}

TEST(MarchForward, OpaqueBallDepthIsTheSurfaceDistance) {
  MarchConfig cfg;
  cfg.n_samples = 512;
  const auto r = march<double>(Vec3d(3.2, 0, 0), Vec3d(-1, 0, 0), ball_field(1e4), cfg);
  const double spacing = 3.0 / 512;
  EXPECT_NEAR(r.depth, 2.2, spacing);
  EXPECT_NEAR(r.alpha, 1.0, 1e-9);
  // Surface point (1, 0, 0) has color (0.9, 0.5, 0.5).
  EXPECT_NEAR(r.color[0], 0.9, 0.4 * spacing + 1e-9);
  EXPECT_NEAR(r.color[1], 0.5, 1e-9);
}

TEST(MarchForward, EmptySpaceShowsBackground) {
  MarchConfig cfg;
  cfg.background = {0.2, 0.4, 0.6};
  const auto r = march<double>(Vec3d(0, 0, 3.2), Vec3d(0, 0, -1), constant_field(0.0, Vec3d::Ones()), cfg);
  EXPECT_DOUBLE_EQ(r.color[0], 0.2);
  EXPECT_DOUBLE_EQ(r.color[2], 0.6);
  EXPECT_DOUBLE_EQ(r.alpha, 0.0);
}

TEST(MarchForward, RejectsNonFiniteDensity) {
  MarchConfig cfg;
  cfg.n_samples = 4;
  EXPECT_THROW(march<double>(Vec3d(3, 0, 0), Vec3d(-1, 0, 0), constant_field(NAN, Vec3d::Ones()), cfg),
               NumericError);
}

TEST(MarchForward, HalfDensityOverFourUnitsAt128Samples) {
  MarchConfig cfg;
  cfg.fixed_range = {{0.0, 4.0}};
  const auto r = march<double>(Vec3d::Zero(), Vec3d::UnitZ(), constant_field(0.5, Vec3d::Constant(0.3)), cfg);
  EXPECT_NEAR(r.color[0], 0.3 * (1.0 - std::exp(-2.0)) + std::exp(-2.0), 2e-3);
}

TEST(MarchForward, SingleOpaqueIntervalIsASurface) {
  MarchConfig cfg;
  cfg.n_samples = 8;
  cfg.fixed_range = {{0.25, 4.25}};  // midpoints 0.5, 1.0, ..., 4.0
  const auto samples = sample_rays<double>(single_ray(Vec3d::Zero(), Vec3d::UnitZ()), cfg);
  ASSERT_DOUBLE_EQ(samples.t[3], 2.0);
  std::vector<double> sigma(8, 0.0), rgb(24, 0.0);
  sigma[3] = 1e6;
  rgb[9] = 1.0;
  MarchBuffers<double> b;
  march_forward<double>(samples, sigma, rgb, Vec3d::Ones(), b);
  EXPECT_NEAR(b.color[0], 1.0, 1e-4);
  EXPECT_NEAR(b.color[1], 0.0, 1e-4);
  EXPECT_NEAR(b.depth[0], 2.0, 1e-4);
  EXPECT_NEAR(b.alpha[0], 1.0, 1e-4);
}

TEST(RenderView, EmptyFieldAndCenterDepthAndDeterminism) {
  CameraIntrinsics intr;
  intr.width = 15;
  intr.height = 15;
  MarchConfig cfg;
  const auto empty = render_view<double>(CameraPose::reference(), intr, constant_field(0.0, Vec3d::Zero()), cfg);
  for (float v : empty.image.data) EXPECT_EQ(v, 1.0f);
  for (float v : empty.alpha.data) EXPECT_EQ(v, 0.0f);
  const auto a = render_view<double>(CameraPose::reference(), intr, ball_field(1e4), cfg);
  const auto b = render_view<double>(CameraPose::reference(), intr, ball_field(1e4), cfg);
  EXPECT_EQ(a.image.data, b.image.data);
  EXPECT_EQ(a.depth.data, b.depth.data);
  EXPECT_NEAR(a.depth.at(7, 7), 2.2, 2.0 * 3.0 / cfg.n_samples);
}

TEST(Normals, HalfSpaceAndRadialFields) {
  const DensityFn<double> half = [](const Vec3d& x) { return std::exp(-x.z()); };
  const auto n = normal_at<double>(Vec3d(0.3, -0.2, 0.4), half);
  EXPECT_NEAR((n.n - Vec3d::UnitZ()).norm(), 0.0, 1e-3);
  const DensityFn<double> radial = [](const Vec3d& x) { return 1.0 / (1.0 + x.norm()); };
  for (double x : {0.2, 0.7, 1.3}) {
    const auto r = normal_at<double>(Vec3d(x, 0, 0), radial);
    EXPECT_NEAR((r.n - Vec3d::UnitX()).norm(), 0.0, 1e-3);
  }
}

TEST(MarchBackward, MatchesFiniteDifferencesForEveryOutput) {
  const int R = 3, S = 10;
  RayBundle rays;
  for (int r = 0; r < R; ++r) {
    rays.origins.push_back(Vec3d(3.2, 0.1 * r, 0));
    rays.directions.push_back(Vec3d(-1, 0.05 * r, 0.02).normalized());
    rays.pixel_coords.push_back({0, r});
  }
  MarchConfig cfg;
  cfg.n_samples = S;
  const auto samples = sample_rays<double>(rays, cfg);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.05, 1.5);
  std::normal_distribution<double> n01;
  std::vector<double> x(R * S + 3 * R * S);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = i < std::size_t(R * S) ? u(rng) : u(rng) / 1.5;
  std::vector<double> gc(3 * R), gd(R), ga(R), gw(R * S), gal(R * S);
  for (auto* v : {&gc, &gd, &ga, &gw, &gal}) {
    for (auto& e : *v) e = n01(rng);
  }
  const Vec3d bg(0.9, 0.8, 0.7);
  auto split = [&](std::span<const double> all) {
    return std::pair{all.subspan(0, R * S), all.subspan(R * S)};
  };
  auto objective = [&] {
    auto [sigma, rgb] = split(x);
    MarchBuffers<double> b;
    march_forward<double>(samples, sigma, rgb, bg, b);
    double s = 0.0;
    for (std::size_t i = 0; i < gc.size(); ++i) s += gc[i] * b.color[i];
    for (int r = 0; r < R; ++r) s += gd[r] * b.depth[r] + ga[r] * b.alpha[r];
    for (int k = 0; k < R * S; ++k) s += gw[k] * b.weights[k] + gal[k] * b.alphas[k];
    return s;
  };
  auto [sigma, rgb] = split(x);
  MarchBuffers<double> b;
  march_forward<double>(samples, sigma, rgb, bg, b);
  std::vector<double> grad(x.size(), 0.0);
  march_backward<double>(samples, sigma, rgb, bg, b, MarchAdjoint<double>{gc, gd, ga, gw, gal},
                         std::span<double>(grad).subspan(0, R * S), std::span<double>(grad).subspan(R * S));
  const auto fd = central_difference(x, objective);
  EXPECT_LT(max_relative_error(grad, fd, 1e-6), 1e-4);
}

TEST(RenderView, MatchesPerRayMarching) {
  CameraIntrinsics intr;
  intr.width = 12;
  intr.height = 9;
  MarchConfig cfg;
  cfg.n_samples = 32;
  const CameraPose pose{0.4, 0.2, 3.2};
  const auto field = ball_field(5.0);
  const auto out = render_view<double>(pose, intr, field, cfg);
  const RayBundle rays = generate_rays(pose, intr);
  for (std::size_t r = 0; r < rays.size(); r += 7) {
    const auto m = march<double>(rays.origins[r], rays.directions[r], field, cfg);
    const auto [row, col] = rays.pixel_coords[r];
    EXPECT_NEAR(out.image.at(row, col, 1), m.color[1], 1e-6);
    EXPECT_NEAR(out.alpha.at(row, col), m.alpha, 1e-6);
  }
}

TEST(Normals, PointOutwardFromADensityPeak) {
  const DensityFn<double> blob = [](const Vec3d& x) { return std::exp(-x.squaredNorm()); };
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int i = 0; i < 20; ++i) {
    const Vec3d x(u(rng), u(rng), u(rng));
    const auto n = normal_at<double>(x, blob);
    ASSERT_FALSE(n.degenerate);
    EXPECT_NEAR((n.n - x.normalized()).norm(), 0.0, 1e-5);
  }
}

TEST(Normals, FlatDensityIsDegenerate) {
  const DensityFn<double> flat = [](const Vec3d&) { return 2.0; };
  EXPECT_TRUE(normal_at<double>(Vec3d(0.3, 0, 0), flat).degenerate);
  const std::vector<double> stencil(12, 1.0);
  const auto batch = normals_from_stencil<double>(stencil, 1e-3);
  EXPECT_EQ(batch.degenerate, (std::vector<std::uint8_t>{1, 1}));
}

TEST(Normals, StencilMatchesPointwiseNormals) {
  const DensityFn<double> blob = [](const Vec3d& x) { return std::exp(-x.squaredNorm()); };
  const std::vector<Vec3d> pts{Vec3d(0.2, -0.4, 0.1), Vec3d(-0.7, 0.3, 0.5)};
  const double h = 1e-3;
  const auto stencil = normal_stencil<double>(pts, h);
  ASSERT_EQ(stencil.size(), 12u);
  EXPECT_EQ(stencil[0], pts[0] + Vec3d(h, 0, 0));
  EXPECT_EQ(stencil[5], pts[0] - Vec3d(0, 0, h));
  std::vector<double> sig;
  for (const auto& p : stencil) sig.push_back(blob(p));
  const auto batch = normals_from_stencil<double>(sig, h);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    EXPECT_NEAR((batch.normals[i] - normal_at<double>(pts[i], blob, h).n).norm(), 0.0, 1e-12);
  }
}

TEST(Normals, BackwardMatchesFiniteDifferences) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.1, 2.0);
  std::normal_distribution<double> n01;
  std::vector<double> sig(18);
  for (auto& s : sig) s = u(rng);
  std::vector<Vec3d> dn(3);
  for (auto& d : dn) d = Vec3d(n01(rng), n01(rng), n01(rng));
  const double h = 0.05;
  auto objective = [&] {
    const auto b = normals_from_stencil<double>(sig, h);
    double s = 0.0;
    for (int i = 0; i < 3; ++i) s += b.normals[i].dot(dn[i]);
    return s;
  };
  const auto b = normals_from_stencil<double>(sig, h);
  std::vector<double> grad(sig.size(), 0.0);
  normals_backward<double>(b, dn, h, grad);
  const auto fd = central_difference(sig, objective);
  EXPECT_LT(max_relative_error(grad, fd, 1e-6), 1e-4);
}

}  // namespace
}  // namespace conrad
