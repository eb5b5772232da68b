#include "conrad/score_provider.hpp"

#include <cmath>
#include <string>
#include <utility>

namespace conrad {

DiffusionSchedule::DiffusionSchedule(int n_steps, double beta_start, double beta_end)
    : n_steps_(n_steps), beta_start_(beta_start), beta_end_(beta_end) {
  if (n_steps < 1) throw InvalidArgument("diffusion schedule needs at least one step");
  if (!(beta_start > 0.0 && beta_end < 1.0 && beta_start <= beta_end)) {
    throw InvalidArgument("diffusion betas must satisfy 0 < beta_start <= beta_end < 1");
  }
  betas_.resize(n_steps);
  alpha_bars_.resize(n_steps);
  double prod = 1.0;
  for (int i = 0; i < n_steps; ++i) {
    const double frac = n_steps == 1 ? 0.0 : static_cast<double>(i) / (n_steps - 1);
    betas_[i] = beta_start + frac * (beta_end - beta_start);
    prod *= 1.0 - betas_[i];
    alpha_bars_[i] = prod;
  }
}

void DiffusionSchedule::check(int t) const {
  if (t < 1 || t > n_steps_) {
    throw InvalidArgument("timestep " + std::to_string(t) + " outside [1, " + std::to_string(n_steps_) + "]");
  }
}

double DiffusionSchedule::beta(int t) const {
  check(t);
  return betas_[t - 1];
}

double DiffusionSchedule::alpha_bar(int t) const {
  check(t);
  return alpha_bars_[t - 1];
}

Image dirac_noise(const Image& noisy, const Image& target, double alpha_bar) {
  if (!noisy.same_shape(target)) {
    throw ProviderError(ProviderError::Kind::kShapeMismatch, "noisy image and Dirac target differ in shape");
  }
  const double sa = std::sqrt(alpha_bar);
  const double inv = 1.0 / std::sqrt(1.0 - alpha_bar);
  Image out(noisy.height, noisy.width, noisy.channels);
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    out.data[i] = static_cast<float>((noisy.data[i] - sa * target.data[i]) * inv);
  }
  return out;
}

DiracProvider::DiracProvider(Image target, DiffusionSchedule schedule)
    : target_(std::move(target)), schedule_(std::move(schedule)) {
  if (target_.empty()) throw InvalidArgument("Dirac provider needs a non-empty target");
}

ProviderInfo DiracProvider::info() const { return {target_.height, target_.width, target_.channels, false}; }

Image DiracProvider::predict_noise(const ScoreQuery& query) {
  return dirac_noise(query.noisy, target_, schedule_.alpha_bar(query.t));
}

PoseOracleProvider::PoseOracleProvider(TargetFn render_target, ProviderInfo info, DiffusionSchedule schedule)
    : render_target_(std::move(render_target)), info_(info), schedule_(std::move(schedule)) {
  info_.uses_pose = true;
}

Image PoseOracleProvider::predict_noise(const ScoreQuery& query) {
  if (!query.pose) throw ProviderError(ProviderError::Kind::kMalformed, "pose oracle queried without a pose");
  return dirac_noise(query.noisy, render_target_(*query.pose), schedule_.alpha_bar(query.t));
}

}  // namespace conrad
