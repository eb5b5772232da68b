#include "conrad/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "conrad/pipeline.hpp"
#include "conrad/rng.hpp"

namespace conrad {

namespace {

// Purposes for derive_rng; views beyond the first offset by kViewStride.
enum Stream : std::uint64_t { kPose = 1, kJitter = 2, kSds = 3, kRegularizer = 4 };
constexpr std::uint64_t kViewStride = 16;

MarchConfig training_march(const TrainConfig& config, bool perturb) {
  MarchConfig m;
  m.n_samples = config.n_samples;
  m.bound_radius = config.bound_radius;
  m.stratified = true;
  m.perturb = perturb;
  return m;
}

FieldFn<float> field_fn(const RadianceField<float>& field, std::span<const float> params) {
  return [&field, params](std::span<const Vec3f> points, std::span<float> sigma, std::span<float> rgb) {
    FieldCache<float> cache;
    field.forward(points, params, !rgb.empty(), cache);
    std::copy(cache.sigma.begin(), cache.sigma.end(), sigma.begin());
    if (!rgb.empty()) std::copy(cache.rgb.begin(), cache.rgb.end(), rgb.begin());
  };
}

std::vector<std::size_t> choose(std::size_t n, std::size_t k, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (k == 0 || k >= n) return idx;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(uniform01(rng) * (n - i));
    std::swap(idx[i], idx[std::min(j, n - 1)]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

Trainer::Trainer(ReferenceConditioning conditioning, TrainConfig config, ScoreProvider& provider)
    : conditioning_(std::move(conditioning)),
      config_(std::move(config)),
      provider_(provider),
      schedule_(config_.diffusion.n_steps, config_.diffusion.beta_start, config_.diffusion.beta_end),
      field_(config_.field),
      params_(field_.initialize(config_.seed)),
      optimizer_(config_.optimizer, params_.size()),
      config_json_(to_json(config_)) {
  config_.validate();
  conditioning_.validate();
  const ProviderInfo info = provider_.info();
  if (info.height != config_.render.height || info.width != config_.render.width || info.channels != 3) {
    throw InvalidArgument("render resolution " + std::to_string(config_.render.width) + "x" +
                          std::to_string(config_.render.height) + " does not match the provider's native " +
                          std::to_string(info.width) + "x" + std::to_string(info.height) + "x" +
                          std::to_string(info.channels));
  }
  ref_samples_ = std::make_shared<const RaySamples<float>>(
      sample_rays<float>(generate_rays(conditioning_.pose, conditioning_.intrinsics), march_config(false)));
  const Constraint mask_only(conditioning_, nullptr, 1.0);
  const auto terms = mask_only.terms<float>(std::span<const Vec3f>(ref_samples_->points), false);
  ref_mask_.resize(terms.size());
  for (std::size_t i = 0; i < terms.size(); ++i) ref_mask_[i] = terms[i].density_scale;

  const std::size_t n_pix = conditioning_.mask.data.size();
  depth_pixels_.assign(n_pix, 0);
  depth_target_.assign(n_pix, 0.0f);
  if (conditioning_.depth) {
    double sum = 0.0, sq = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < n_pix; ++i) {
      if (conditioning_.mask.data[i] < 0.5f) continue;
      depth_pixels_[i] = 1;
      const double d = conditioning_.depth->data[i];
      if (!std::isfinite(d)) throw InvalidArgument("depth estimate contains non-finite values");
      sum += d;
      sq += d * d;
      ++n;
    }
    const double mean = n ? sum / n : 0.0;
    const double var = n ? std::max(sq / n - mean * mean, 0.0) : 0.0;
    const double inv_std = var > 0.0 ? 1.0 / std::sqrt(var) : 1.0;
    const double sign = config_.depth_inverse ? -1.0 : 1.0;
    for (std::size_t i = 0; i < n_pix; ++i) {
      if (depth_pixels_[i]) depth_target_[i] = static_cast<float>(sign * (conditioning_.depth->data[i] - mean) * inv_std);
    }
  }
}

MarchConfig Trainer::march_config(bool perturb) const { return training_march(config_, perturb); }

double Trainer::current_alpha() const {
  return warm_alpha(std::min(step_, config_.total_steps), {config_.total_steps, config_.plateau_fraction});
}

void Trainer::resume(const Checkpoint& ckpt) {
  if (ckpt.params.size() != params_.size()) throw InvalidArgument("checkpoint parameter count does not match the field");
  if (ckpt.optimizer != config_.optimizer.kind) throw InvalidArgument("checkpoint optimizer differs from the config");
  if (ckpt.step > static_cast<std::uint64_t>(config_.total_steps)) {
    throw InvalidArgument("checkpoint step lies beyond total_steps");
  }
  std::copy(ckpt.params.begin(), ckpt.params.end(), params_.values().begin());
  optimizer_.set_state(ckpt.optimizer_state);
  step_ = static_cast<int>(ckpt.step);
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint c;
  c.config_json = config_json_;
  c.step = static_cast<std::uint64_t>(step_);
  c.params.assign(params_.values().begin(), params_.values().end());
  c.optimizer = config_.optimizer.kind;
  c.optimizer_state = optimizer_.state();
  return c;
}

FieldFn<float> Trainer::raw_field() const { return field_fn(field_, params_.values()); }

VisibilityDepthMap Trainer::visibility(double alpha) const {
  return constrained_visibility(field_, params_.values(), conditioning_, config_, alpha);
}

RenderOutput Trainer::render(const CameraPose& pose, const CameraIntrinsics& intrinsics, double alpha) const {
  return render_constrained(field_, params_.values(), conditioning_, config_, pose, intrinsics, alpha);
}

VisibilityDepthMap constrained_visibility(const RadianceField<float>& field, std::span<const float> params,
                                          const ReferenceConditioning& cond, const TrainConfig& config,
                                          double alpha) {
  const Constraint density_only(cond, nullptr, alpha);
  return compute_visibility_depth<float>(cond.pose, cond.intrinsics, density_only.wrap<float>(field_fn(field, params)),
                                         training_march(config, false), config.eta);
}

RenderOutput render_constrained(const RadianceField<float>& field, std::span<const float> params,
                                const ReferenceConditioning& cond, const TrainConfig& config, const CameraPose& pose,
                                const CameraIntrinsics& intrinsics, double alpha) {
  const VisibilityDepthMap vis = constrained_visibility(field, params, cond, config, alpha);
  const Constraint constraint(cond, &vis, alpha);
  return render_view<float>(pose, intrinsics, constraint.wrap<float>(field_fn(field, params)),
                            training_march(config, false));
}

LossReport Trainer::step() {
  if (step_ >= config_.total_steps) throw InvalidArgument("training already reached total_steps");
  const double alpha = warm_alpha(step_, {config_.total_steps, config_.plateau_fraction});
  const LossWeights& w = config_.loss_weights;
  const Vec3f bg = march_config(false).background.cast<float>();
  const std::uint64_t seed = config_.seed;
  const auto s = static_cast<std::uint64_t>(step_);

  LossReport report;
  report.step = step_;
  report.alpha = alpha;

  Tape<float> tape;
  GradAccumulator<float> grads(params_.size());
  const std::span<const float> params = params_.values();
  std::vector<NodeId<float>> scalars;
  std::vector<float> scalar_weights;
  std::vector<Tape<float>::Seed> seeds;

  // Reference rays: visibility depth and the depth loss share one density pass.
  const std::size_t n_ref = ref_samples_->size();
  std::vector<ConstraintTerms<float>> ref_terms(n_ref);
  for (std::size_t i = 0; i < n_ref; ++i) {
    ref_terms[i].density_scale = static_cast<float>(1.0 - alpha * (1.0 - ref_mask_[i]));
  }
  const auto ref_field = record_field<float>(tape, field_, params, ref_samples_->points, false);
  const auto ref_sigma = record_constraint<float>(tape, ref_field, std::move(ref_terms), false);
  const int H = conditioning_.intrinsics.height;
  const int W = conditioning_.intrinsics.width;
  const VisibilityDepthMap vis = compute_visibility_depth<float>(*ref_samples_, tape.value(ref_sigma), H, W, config_.eta);

  if (conditioning_.depth && w.depth > 0.0) {
    const auto ref_march = record_march<float>(tape, ref_samples_, ref_sigma, bg, false);
    const MarchLayout layout{ref_samples_->n_rays, ref_samples_->n_samples};
    const auto ref_alpha = tape.value(ref_march).subspan(layout.alpha(), layout.n_rays);
    std::vector<std::uint8_t> selected(depth_pixels_);
    for (std::size_t i = 0; i < selected.size(); ++i) {
      if (!(ref_alpha[i] > kVisibilityMinWeight)) selected[i] = 0;
    }
    const auto node = record_depth_loss<float>(tape, ref_march, layout, depth_target_, std::move(selected),
                                               &report.depth_degenerate);
    report.depth = tape.value(node)[0];
    scalars.push_back(node);
    scalar_weights.push_back(static_cast<float>(w.depth));
  }

  const Constraint full(conditioning_, &vis, alpha);
  const Constraint density_only(conditioning_, nullptr, alpha);
  const int views = config_.views_per_step;
  const float view_scale = 1.0f / static_cast<float>(views);
  const SdsConfig sds_config{config_.diffusion.t_min, config_.diffusion.t_max, config_.diffusion.max_retries, {}};
  const float h = static_cast<float>(config_.regularizers.normal_step);

  for (int v = 0; v < views; ++v) {
    const std::uint64_t off = kViewStride * static_cast<std::uint64_t>(v);
    auto pose_rng = derive_rng(seed, s, kPose + off);
    auto jitter_rng = derive_rng(seed, s, kJitter + off);
    auto sds_rng = derive_rng(seed, s, kSds + off);
    auto reg_rng = derive_rng(seed, s, kRegularizer + off);

    const CameraPose pose = sample_random_pose(pose_rng, config_.pose_bounds);
    auto samples = std::make_shared<const RaySamples<float>>(
        sample_rays<float>(generate_rays(pose, config_.render), march_config(true), &jitter_rng));
    const auto f = record_field<float>(tape, field_, params, samples->points, true);
    const auto c = record_constraint<float>(tape, f, full.terms<float>(std::span<const Vec3f>(samples->points), true),
                                            true);
    const auto m = record_march<float>(tape, samples, c, bg, true);
    const MarchLayout layout{samples->n_rays, samples->n_samples};

    Image image(config_.render.height, config_.render.width, 3);
    const auto color = tape.value(m).subspan(layout.color(), 3 * layout.n_rays);
    std::copy(color.begin(), color.end(), image.data.begin());
    const SdsResult sds = sds_adjoint(image, provider_, schedule_, conditioning_.cond_id, sds_rng, sds_config, pose);
    report.sds += sds.residual_mse / views;
    report.timestep = sds.t;
    if (w.sds > 0.0) {
      std::vector<float> adj(layout.total(), 0.0f);
      const float scale = static_cast<float>(w.sds) * view_scale;
      for (std::size_t i = 0; i < sds.adjoint.data.size(); ++i) adj[layout.color() + i] = scale * sds.adjoint.data[i];
      seeds.push_back({m, std::move(adj)});
    }

    if (w.entropy > 0.0) {
      const auto node = record_entropy<float>(tape, m, layout);
      report.entropy += tape.value(node)[0] / views;
      scalars.push_back(node);
      scalar_weights.push_back(static_cast<float>(w.entropy) * view_scale);
    }

    if (w.orientation <= 0.0 && w.smoothness <= 0.0) continue;
    const std::size_t S = layout.n_samples;
    const auto rays = choose(layout.n_rays, static_cast<std::size_t>(config_.regularizers.rays), reg_rng);
    std::vector<Vec3f> ray_points;
    ray_points.reserve(rays.size() * S);
    for (std::size_t r : rays) {
      for (std::size_t k = 0; k < S; ++k) ray_points.push_back(samples->points[r * S + k]);
    }

    const auto constrained_normals = [&](const std::vector<Vec3f>& points, std::vector<std::uint8_t>& degenerate) {
      auto stencil = normal_stencil<float>(points, h);
      auto terms = density_only.terms<float>(std::span<const Vec3f>(stencil), false);
      const auto sf = record_field<float>(tape, field_, params, std::move(stencil), false);
      const auto sc = record_constraint<float>(tape, sf, std::move(terms), false);
      return record_normals<float>(tape, sc, h, &degenerate);
    };

    if (w.orientation > 0.0) {
      std::vector<std::uint8_t> degenerate;
      const auto normals = constrained_normals(ray_points, degenerate);
      std::vector<Vec3f> dirs;
      for (std::size_t r : rays) dirs.push_back(samples->directions[r]);
      const auto node = record_orientation<float>(tape, m, layout, rays, std::move(dirs), normals, std::move(degenerate));
      report.orientation += tape.value(node)[0] / views;
      scalars.push_back(node);
      scalar_weights.push_back(static_cast<float>(w.orientation) * view_scale);
    }

    if (w.smoothness > 0.0) {
      const auto weights = tape.value(m).subspan(layout.weights(), layout.n_rays * S);
      std::vector<Vec3f> candidates;
      for (std::size_t r : rays) {
        for (std::size_t k = 0; k < S; ++k) {
          if (weights[r * S + k] > config_.regularizers.smooth_weight_floor) {
            candidates.push_back(samples->points[r * S + k]);
          }
        }
      }
      const auto pick = choose(candidates.size(), static_cast<std::size_t>(config_.regularizers.smooth_points), reg_rng);
      std::vector<Vec3f> pts;
      for (std::size_t i : pick) pts.push_back(candidates[i]);
      if (!pts.empty()) {
        const auto shifted = perturb_points<float>(pts, reg_rng, config_.regularizers.smooth_radius);
        std::vector<std::uint8_t> deg_a, deg_b;
        const auto na = constrained_normals(pts, deg_a);
        const auto nb = constrained_normals(shifted, deg_b);
        const auto node = record_smoothness<float>(tape, na, std::move(deg_a), nb, std::move(deg_b));
        report.smoothness += tape.value(node)[0] / views;
        scalars.push_back(node);
        scalar_weights.push_back(static_cast<float>(w.smoothness) * view_scale);
      }
    }
  }

  report.total = total_loss(report, w);
  if (!scalars.empty()) {
    const auto total = record_weighted_sum<float>(tape, std::move(scalars), std::move(scalar_weights));
    seeds.push_back({total, {1.0f}});
  }
  if (!seeds.empty()) tape.backward(std::span<const Tape<float>::Seed>(seeds), grads);
  if (!grads.all_finite()) throw NumericError("non-finite gradient at step " + std::to_string(step_));
  optimizer_.step(params_.values(), grads.values());
  ++step_;
  return report;
}

Checkpoint Trainer::run(const TrainHooks& hooks) {
  while (step_ < config_.total_steps) {
    LossReport report;
    try {
      report = step();
    } catch (const ProviderError&) {
      if (hooks.on_checkpoint) hooks.on_checkpoint(checkpoint());
      throw;
    }
    if (hooks.on_step) hooks.on_step(report);
    const bool last = step_ == config_.total_steps;
    if (hooks.on_checkpoint && (step_ % config_.checkpoint_every == 0 || last)) hooks.on_checkpoint(checkpoint());
    if (hooks.on_preview && (step_ % config_.preview_every == 0 || last)) hooks.on_preview(step_);
  }
  return checkpoint();
}

std::string loss_log_line(const LossReport& r) {
  const nlohmann::json doc = {{"step", r.step},       {"sds", r.sds},
                              {"depth", r.depth},     {"entropy", r.entropy},
                              {"orientation", r.orientation}, {"smoothness", r.smoothness},
                              {"total", r.total},     {"alpha", r.alpha},
                              {"t", r.timestep},      {"depth_degenerate", r.depth_degenerate}};
  return doc.dump();
}

FidelityReport check_reference_fidelity(const RenderOutput& render, const ReferenceConditioning& cond,
                                        const VisibilityDepthMap& vis, double eta, double bg_tolerance) {
  const Image& img = cond.image;
  const Image& mask = cond.mask;
  if (!render.image.same_shape(img)) throw InvalidArgument("fidelity check needs a reference-resolution render");
  FidelityReport rep;
  rep.max_foreground_excess = -std::numeric_limits<double>::infinity();
  const int H = img.height, W = img.width;
  for (int i = 0; i < H; ++i) {
    for (int j = 0; j < W; ++j) {
      const double a = render.alpha.at(i, j);
      if (mask.at(i, j) >= 1.0f && vis.valid[static_cast<std::size_t>(i) * W + j]) {
        ++rep.foreground;
        for (int c = 0; c < 3; ++c) {
          const double err = std::abs(static_cast<double>(render.image.at(i, j, c)) - img.at(i, j, c));
          rep.max_foreground_excess = std::max(rep.max_foreground_excess, err - (eta + (1.0 - a)));
        }
      }
      bool all_bg = true;
      for (int di = -1; di <= 1 && all_bg; ++di) {
        for (int dj = -1; dj <= 1; ++dj) {
          const int ii = std::clamp(i + di, 0, H - 1), jj = std::clamp(j + dj, 0, W - 1);
          if (mask.at(ii, jj) != 0.0f) {
            all_bg = false;
            break;
          }
        }
      }
      if (all_bg) {
        ++rep.background;
        rep.max_background_alpha = std::max(rep.max_background_alpha, a);
      }
    }
  }
  if (rep.foreground == 0) rep.max_foreground_excess = 0.0;
  rep.pass = rep.max_foreground_excess <= 0.0 && rep.max_background_alpha < bg_tolerance;
  return rep;
}

}  // namespace conrad
