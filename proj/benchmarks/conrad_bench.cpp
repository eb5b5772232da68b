#include <random>

#include <benchmark/benchmark.h>

#include "conrad/evalsuite.hpp"
#include "conrad/radiance_field.hpp"
#include "conrad/renderer.hpp"

namespace conrad {
namespace {

std::vector<Vec3f> random_points(std::size_t n) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<float> u(-1.4f, 1.4f);
  std::vector<Vec3f> pts(n);
  for (auto& p : pts) p = Vec3f(u(rng), u(rng), u(rng));
  return pts;
}

void BM_FieldForward(benchmark::State& state) {
  const RadianceField<float> field{FieldConfig{}};
  const auto params = field.initialize(3);
  const auto pts = random_points(static_cast<std::size_t>(state.range(0)));
  FieldCache<float> cache;
  for (auto _ : state) {
    field.forward(pts, params.values(), true, cache);
    benchmark::DoNotOptimize(cache.sigma.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_FieldForward)->Arg(1024)->Arg(8192);

void BM_FieldBackward(benchmark::State& state) {
  const RadianceField<float> field{FieldConfig{}};
  const auto params = field.initialize(3);
  const auto pts = random_points(static_cast<std::size_t>(state.range(0)));
  FieldCache<float> cache;
  field.forward(pts, params.values(), true, cache);
  const std::vector<float> dsigma(pts.size(), 1.0f), drgb(3 * pts.size(), 1.0f);
  std::vector<float> grads(params.values().size());
  for (auto _ : state) {
    field.backward(pts, params.values(), cache, dsigma, drgb, grads);
    benchmark::DoNotOptimize(grads.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_FieldBackward)->Arg(1024)->Arg(8192);

void BM_RenderToyField(benchmark::State& state) {
  const RadianceField<float> field{FieldConfig{}};
  const auto params = field.initialize(3);
  const auto values = params.values();
  const FieldFn<float> fn = [&](std::span<const Vec3f> pts, std::span<float> sigma, std::span<float> rgb) {
    FieldCache<float> cache;
    field.forward(pts, values, !rgb.empty(), cache);
    std::copy(cache.sigma.begin(), cache.sigma.end(), sigma.begin());
    if (!rgb.empty()) std::copy(cache.rgb.begin(), cache.rgb.end(), rgb.begin());
  };
  CameraIntrinsics intr;
  intr.width = intr.height = static_cast<int>(state.range(0));
  MarchConfig mc;
  mc.n_samples = 64;
  for (auto _ : state) {
    auto out = render_view<float>(CameraPose::reference(), intr, fn, mc);
    benchmark::DoNotOptimize(out.image.data.data());
  }
}
BENCHMARK(BM_RenderToyField)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_LinearSumAssignment(benchmark::State& state) {
  const auto n = static_cast<Eigen::Index>(state.range(0));
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd cost(n, n);
  for (Eigen::Index i = 0; i < cost.size(); ++i) cost.data()[i] = u(rng);
  for (auto _ : state) benchmark::DoNotOptimize(linear_sum_assignment(cost));
}
BENCHMARK(BM_LinearSumAssignment)->Arg(8)->Arg(68)->Arg(256);

}  // namespace
}  // namespace conrad

BENCHMARK_MAIN();
