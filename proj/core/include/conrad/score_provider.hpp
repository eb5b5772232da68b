#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "conrad/common.hpp"
#include "conrad/scene.hpp"

namespace conrad {

/// Linear beta schedule with alpha_bar_t = prod_{s <= t} (1 - beta_s), t in [1, n_steps].
class DiffusionSchedule {
 public:
  DiffusionSchedule(int n_steps = 1000, double beta_start = 1e-4, double beta_end = 2e-2);

  int n_steps() const { return n_steps_; }
  double beta_start() const { return beta_start_; }
  double beta_end() const { return beta_end_; }
  double beta(int t) const;
  double alpha_bar(int t) const;

 private:
  void check(int t) const;

  int n_steps_;
  double beta_start_;
  double beta_end_;
  std::vector<double> betas_;
  std::vector<double> alpha_bars_;
};

struct ProviderInfo {
  int height = 64;
  int width = 64;
  int channels = 3;
  /// Whether predict_noise uses ScoreQuery::pose (oracle providers only).
  bool uses_pose = false;
};

/// One denoiser evaluation eps_hat(I_t, y, t).
struct ScoreQuery {
  const Image& noisy;
  int t = 0;
  std::string cond_id;
  /// Pose the clean image was rendered from. Real diffusion models ignore it.
  std::optional<CameraPose> pose;
  /// The injected noise. Only forwarded to a remote service when the client is
  /// in echo mode.
  const Image* noise = nullptr;
};

class ScoreProvider {
 public:
  virtual ~ScoreProvider() = default;
  virtual ProviderInfo info() const = 0;
  /// Returns an image of the same shape as query.noisy.
  virtual Image predict_noise(const ScoreQuery& query) = 0;
};

/// Optimal denoiser for a point mass at `target`:
/// eps_hat = (I_t - sqrt(alpha_bar) target) / sqrt(1 - alpha_bar).
class DiracProvider : public ScoreProvider {
 public:
  DiracProvider(Image target, DiffusionSchedule schedule);

  ProviderInfo info() const override;
  Image predict_noise(const ScoreQuery& query) override;

  const Image& target() const { return target_; }

 private:
  Image target_;
  DiffusionSchedule schedule_;
};

/// Multi-view Dirac oracle: the point mass sits at the ground-truth image of
/// the query's pose, produced by `render_target`.
class PoseOracleProvider : public ScoreProvider {
 public:
  using TargetFn = std::function<Image(const CameraPose&)>;

  PoseOracleProvider(TargetFn render_target, ProviderInfo info, DiffusionSchedule schedule);

  ProviderInfo info() const override { return info_; }
  Image predict_noise(const ScoreQuery& query) override;

 private:
  TargetFn render_target_;
  ProviderInfo info_;
  DiffusionSchedule schedule_;
};

/// Shared Dirac algebra, usable by any provider that knows its target.
Image dirac_noise(const Image& noisy, const Image& target, double alpha_bar);

}  // namespace conrad
