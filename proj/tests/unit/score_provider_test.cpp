#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "conrad/score_provider.hpp"

namespace conrad {
namespace {

Image random_image(int h, int w, std::uint64_t seed, float lo = 0.0f, float hi = 1.0f) {
  Image img(h, w, 3);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(lo, hi);
  for (float& v : img.data) v = u(rng);
  return img;
}

Image noised(const Image& clean, const Image& eps, double ab) {
  Image out(clean.height, clean.width, clean.channels);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.data[i] = static_cast<float>(std::sqrt(ab) * clean.data[i] + std::sqrt(1.0 - ab) * eps.data[i]);
  }
  return out;
}

TEST(DiffusionSchedule, FirstStepAndProductOracle) {
  const DiffusionSchedule s;
  EXPECT_DOUBLE_EQ(s.alpha_bar(1), 1.0 - 1e-4);
  double prod = 1.0;
  for (int t = 1; t <= 1000; ++t) prod *= 1.0 - (1e-4 + (2e-2 - 1e-4) * (t - 1) / 999.0);
  EXPECT_LT(std::abs(s.alpha_bar(1000) - prod) / prod, 1e-10);
  EXPECT_DOUBLE_EQ(s.beta(1000), 2e-2);
}

TEST(DiffusionSchedule, StrictlyDecreasingInsideUnitInterval) {
  const DiffusionSchedule s;
  for (int t = 2; t <= 1000; ++t) {
    EXPECT_LT(s.alpha_bar(t), s.alpha_bar(t - 1));
    EXPECT_GT(s.alpha_bar(t), 0.0);
  }
  EXPECT_THROW(s.alpha_bar(0), InvalidArgument);
  EXPECT_THROW(s.alpha_bar(1001), InvalidArgument);
  EXPECT_THROW(DiffusionSchedule(10, 0.5, 0.1), InvalidArgument);
}

TEST(DiffusionSchedule, CleanImageAtFirstStep) {
  const DiffusionSchedule s;
  const double ab = s.alpha_bar(1);
  EXPECT_LE(std::abs(std::sqrt(ab) * 1.0 - 1.0), s.beta(1));
}

TEST(DiracProvider, RecoversItsOwnNoise) {
  const DiffusionSchedule s;
  const Image target = random_image(6, 5, 1);
  const Image eps = random_image(6, 5, 2, -2.0f, 2.0f);
  DiracProvider p(target, s);
  for (int t : {20, 300, 980}) {
    const Image noisy = noised(target, eps, s.alpha_bar(t));
    const Image out = p.predict_noise({noisy, t, "c", std::nullopt, nullptr});
    for (std::size_t i = 0; i < out.size(); ++i) EXPECT_NEAR(out.data[i], eps.data[i], 1e-4);
  }
}

TEST(DiracProvider, ZeroNoiseGivesZeroPrediction) {
  const DiffusionSchedule s;
  const Image target = random_image(4, 4, 3);
  DiracProvider p(target, s);
  const Image zero(4, 4, 3, 0.0f);
  const Image out = p.predict_noise({noised(target, zero, s.alpha_bar(500)), 500, "c", std::nullopt, nullptr});
  for (float v : out.data) EXPECT_NEAR(v, 0.0f, 1e-6);
}

TEST(DiracProvider, ResidualIsScaledImageDifference) {
  const DiffusionSchedule s;
  const Image target = random_image(4, 4, 4);
  const Image image = random_image(4, 4, 5);
  DiracProvider p(target, s);
  for (int trial = 0; trial < 10; ++trial) {
    const Image eps = random_image(4, 4, 10 + trial, -3.0f, 3.0f);
    const int t = 50 + 90 * trial;
    const double ab = s.alpha_bar(t);
    const Image out = p.predict_noise({noised(image, eps, ab), t, "c", std::nullopt, nullptr});
    const double k = std::sqrt(ab / (1.0 - ab));
    for (std::size_t i = 0; i < out.size(); ++i) {
      EXPECT_NEAR(out.data[i] - eps.data[i], k * (image.data[i] - target.data[i]), 1e-4);
    }
  }
}

TEST(DiracProvider, ResidualVarianceOverNoiseDrawsVanishes) {
  const DiffusionSchedule s;
  const Image target = random_image(2, 2, 6);
  const Image image = random_image(2, 2, 7);
  DiracProvider p(target, s);
  std::vector<double> first;
  double worst_var = 0.0;
  std::vector<double> sum(12, 0.0), sq(12, 0.0);
  for (int d = 0; d < 100; ++d) {
    const Image eps = random_image(2, 2, 100 + d, -2.0f, 2.0f);
    const Image out = p.predict_noise({noised(image, eps, s.alpha_bar(400)), 400, "c", std::nullopt, nullptr});
    for (int i = 0; i < 12; ++i) {
      const double r = double(out.data[i]) - eps.data[i];
      sum[i] += r;
      sq[i] += r * r;
    }
  }
  for (int i = 0; i < 12; ++i) worst_var = std::max(worst_var, sq[i] / 100 - (sum[i] / 100) * (sum[i] / 100));
  // Float32 images put a floor of about (1e-7 / sqrt(1 - alpha_bar))^2 on this.
  EXPECT_LT(worst_var, 1e-10);
}

TEST(DiracProvider, ShapeMismatch) {
  const DiffusionSchedule s;
  DiracProvider p(Image(4, 4, 3), s);
  const Image wrong(4, 5, 3);
  try {
    p.predict_noise({wrong, 10, "c", std::nullopt, nullptr});
    FAIL();
  } catch (const ProviderError& e) {
    EXPECT_EQ(e.kind(), ProviderError::Kind::kShapeMismatch);
  }
}

TEST(PoseOracleProvider, UsesTheQueryPose) {
  const DiffusionSchedule s;
  const PoseOracleProvider::TargetFn target = [](const CameraPose& pose) {
    return Image(2, 2, 3, static_cast<float>(pose.azimuth));
  };
  PoseOracleProvider p(target, {2, 2, 3, false}, s);
  EXPECT_TRUE(p.info().uses_pose);
  const Image zero(2, 2, 3, 0.0f);
  const double ab = s.alpha_bar(100);
  const Image noisy = noised(Image(2, 2, 3, 0.5f), zero, ab);
  const Image out = p.predict_noise({noisy, 100, "c", CameraPose{0.5, 0.0, 3.2}, nullptr});
  for (float v : out.data) EXPECT_NEAR(v, 0.0f, 1e-5);
  EXPECT_THROW(p.predict_noise({noisy, 100, "c", std::nullopt, nullptr}), ProviderError);
}

TEST(ScoreProvider, DeterministicProvidersArePure) {
  const DiffusionSchedule s;
  DiracProvider p(random_image(3, 3, 8), s);
  const Image noisy = random_image(3, 3, 9);
  EXPECT_EQ(p.predict_noise({noisy, 77, "c", std::nullopt, nullptr}).data,
            p.predict_noise({noisy, 77, "c", std::nullopt, nullptr}).data);
}

}  // namespace
}  // namespace conrad
