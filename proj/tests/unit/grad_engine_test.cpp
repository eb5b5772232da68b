#include <memory>
#include <random>

#include <gtest/gtest.h>

#include "conrad/pipeline.hpp"
#include "conrad/tape.hpp"
#include "test_support.hpp"

namespace conrad {
namespace {

using testing::central_difference;
using testing::max_relative_error;

// y = params (copied), backward pushes the adjoint straight into the grads.
NodeId<double> record_params(Tape<double>& tape, std::span<const double> params) {
  return tape.record(std::vector<double>(params.begin(), params.end()),
                     [](std::span<const double> adj, Tape<double>&, std::span<double> grads) {
                       for (std::size_t i = 0; i < adj.size(); ++i) grads[i] += adj[i];
                     });
}

NodeId<double> record_sum_of_squares(Tape<double>& tape, NodeId<double> in) {
  double s = 0.0;
  for (double v : tape.value(in)) s += v * v;
  return tape.record({s}, [in](std::span<const double> adj, Tape<double>& t, std::span<double>) {
    const auto x = t.value(in);
    auto out = t.adjoint(in);
    for (std::size_t i = 0; i < x.size(); ++i) out[i] += adj[0] * 2.0 * x[i];
  });
}

TEST(ParamLayout, SegmentsAreContiguousAndNamed) {
  ParamLayout layout;
  EXPECT_EQ(layout.add("a", 3), 0u);
  EXPECT_EQ(layout.add("b", 5), 3u);
  EXPECT_EQ(layout.total(), 8u);
  EXPECT_EQ(layout.segment("b").offset, 3u);
  EXPECT_THROW(layout.add("a", 1), InvalidArgument);
  EXPECT_THROW(layout.segment("missing"), InvalidArgument);
}

TEST(ParamStore, SegmentViewsAliasTheFlatVector) {
  ParamLayout layout;
  layout.add("w", 2);
  layout.add("b", 1);
  ParamStore<float> store(layout);
  store.segment("b")[0] = 4.0f;
  EXPECT_EQ(store.values()[2], 4.0f);
  const auto d = store.cast<double>();
  EXPECT_EQ(d.values()[2], 4.0);
}

TEST(GradAccumulator, MergeAddsPartials) {
  GradAccumulator<double> a(3), b(3);
  a[0] = 1.0;
  b[0] = 2.0;
  b[2] = -1.0;
  a.merge(b);
  EXPECT_EQ(a[0], 3.0);
  EXPECT_EQ(a[2], -1.0);
  a.zero();
  EXPECT_EQ(a[0], 0.0);
  GradAccumulator<double> c(2);
  EXPECT_THROW(a.merge(c), GraphError);
}

TEST(Tape, SumOfSquaresGradientIsTwiceTheInput) {
  const std::vector<double> theta{1.5, -2.0, 0.25, 3.0};
  Tape<double> tape;
  const auto x = record_params(tape, theta);
  const auto loss = record_sum_of_squares(tape, x);
  GradAccumulator<double> g(theta.size());
  tape.backward(loss, g);
  for (std::size_t i = 0; i < theta.size(); ++i) EXPECT_DOUBLE_EQ(g[i], 2.0 * theta[i]);
}

TEST(Tape, ZeroSeedGivesZeroGradient) {
  const std::vector<double> theta{1.0, 2.0};
  Tape<double> tape;
  const auto x = record_params(tape, theta);
  const auto loss = record_sum_of_squares(tape, x);
  GradAccumulator<double> g(theta.size());
  const Tape<double>::Seed seed{loss, {0.0}};
  tape.backward(std::span<const Tape<double>::Seed>(&seed, 1), g);
  EXPECT_EQ(g[0], 0.0);
  EXPECT_EQ(g[1], 0.0);
}

TEST(Tape, VectorSeedActsAsExternalAdjoint) {
  const std::vector<double> theta{1.0, 2.0, 3.0};
  Tape<double> tape;
  const auto x = record_params(tape, theta);
  GradAccumulator<double> g(theta.size());
  const Tape<double>::Seed seed{x, {0.5, -1.0, 2.0}};
  tape.backward(std::span<const Tape<double>::Seed>(&seed, 1), g);
  EXPECT_EQ(g[0], 0.5);
  EXPECT_EQ(g[1], -1.0);
  EXPECT_EQ(g[2], 2.0);
}

TEST(Tape, BackwardIsLinearInTheSeeds) {
  const std::vector<double> theta{0.3, -0.7};
  const auto run = [&](double a, double b) {
    Tape<double> tape;
    const auto x = record_params(tape, theta);
    const auto f = record_sum_of_squares(tape, x);
    const auto gnode = tape.record({theta[0] * 3.0}, [x](std::span<const double> adj, Tape<double>& t,
                                                        std::span<double>) { t.adjoint(x)[0] += 3.0 * adj[0]; });
    GradAccumulator<double> g(2);
    const std::vector<Tape<double>::Seed> seeds{{f, {a}}, {gnode, {b}}};
    tape.backward(std::span<const Tape<double>::Seed>(seeds), g);
    return std::vector<double>{g[0], g[1]};
  };
  const auto f_only = run(1.0, 0.0);
  const auto g_only = run(0.0, 1.0);
  const auto mixed = run(2.5, -1.5);
  for (int i = 0; i < 2; ++i) EXPECT_NEAR(mixed[i], 2.5 * f_only[i] - 1.5 * g_only[i], 1e-12);
}

TEST(Tape, MisuseIsReported) {
  Tape<double> empty;
  GradAccumulator<double> g(1);
  EXPECT_THROW(empty.backward(0, g), GraphError);

  Tape<double> tape;
  const auto x = tape.record({1.0, 2.0});
  const Tape<double>::Seed wrong{x, {1.0}};
  EXPECT_THROW(tape.backward(std::span<const Tape<double>::Seed>(&wrong, 1), g), GraphError);
  EXPECT_THROW(tape.backward(x, g), GraphError);  // non-scalar
  EXPECT_THROW(tape.value(7), GraphError);
  EXPECT_THROW(tape.backward(std::span<const Tape<double>::Seed>(), g), GraphError);
}

// Field -> frozen constraint -> march -> depth loss on a 3x3 view with 8
// samples per ray, against central differences over every parameter.
struct DepthGraph {
  RadianceField<double> field{testing::tiny_field_config()};
  std::shared_ptr<RaySamples<double>> samples;
  std::vector<ConstraintTerms<double>> terms;
  std::vector<double> d_hat;
  std::vector<std::uint8_t> selected;

  DepthGraph() {
    CameraIntrinsics intr;
    intr.width = intr.height = 3;
    intr.vertical_fov = deg_to_rad(25.0);
    MarchConfig mc;
    mc.n_samples = 8;
    mc.fixed_range = {{2.2, 4.2}};
    samples = std::make_shared<RaySamples<double>>(sample_rays<double>(generate_rays(CameraPose{0.3, 0.2, 3.2}, intr), mc));
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.2, 1.0);
    terms.resize(samples->size());
    for (auto& t : terms) t.density_scale = u(rng);
    for (int i = 0; i < 9; ++i) {
      d_hat.push_back(u(rng));
      selected.push_back(i != 4);
    }
  }

  NodeId<double> build(Tape<double>& tape, std::span<const double> params) const {
    const auto f = record_field<double>(tape, field, params, samples->points, false);
    const auto c = record_constraint<double>(tape, f, terms, false);
    const auto m = record_march<double>(tape, samples, c, Vec3d::Ones(), false);
    return record_depth_loss<double>(tape, m, {samples->n_rays, samples->n_samples}, d_hat, selected);
  }
};

TEST(Tape, RenderThenDepthLossMatchesFiniteDifferences) {
  DepthGraph g;
  auto params = testing::spread_params(g.field, 21, 0.8);
  Tape<double> tape;
  const auto loss = g.build(tape, params.values());
  GradAccumulator<double> grads(params.size());
  tape.backward(loss, grads);

  std::vector<double> theta(params.values().begin(), params.values().end());
  const auto fd = central_difference(theta, [&] {
    Tape<double> t;
    return t.value(g.build(t, theta))[0];
  });
  EXPECT_LT(max_relative_error(grads.values(), fd, 1e-6), 1e-4);
}

TEST(Tape, GradientsAreBitwiseReproducible) {
  DepthGraph g;
  auto params = testing::spread_params(g.field, 5, 0.5);
  const auto run = [&] {
    Tape<double> tape;
    const auto loss = g.build(tape, params.values());
    GradAccumulator<double> grads(params.size());
    tape.backward(loss, grads);
    return std::vector<double>(grads.values().begin(), grads.values().end());
  };
  EXPECT_EQ(run(), run());
}

}  // namespace
}  // namespace conrad
