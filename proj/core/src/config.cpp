#include "conrad/config.hpp"

#include <set>

#include <json.hpp>

namespace conrad {

using json = nlohmann::json;

void TrainConfig::validate() const {
  if (total_steps < 1) throw InvalidArgument("total_steps must be positive");
  optimizer.validate();
  loss_weights.validate();
  pose_bounds.validate();
  render.validate();
  if (!(eta > 0.0 && eta < 1.0)) throw InvalidArgument("eta must lie in (0, 1)");
  if (!(plateau_fraction > 0.0 && plateau_fraction <= 1.0)) {
    throw InvalidArgument("plateau_fraction must lie in (0, 1]");
  }
  if (n_samples < 2) throw InvalidArgument("n_samples must be at least 2");
  if (!(bound_radius > 0.0)) throw InvalidArgument("bound_radius must be positive");
  field.validate();
  if (diffusion.n_steps < 1) throw InvalidArgument("diffusion.n_steps must be positive");
  SdsConfig{diffusion.t_min, diffusion.t_max, diffusion.max_retries, {}}.validate();
  if (regularizers.rays < 0 || regularizers.smooth_points < 0) {
    throw InvalidArgument("regularizer counts must be non-negative");
  }
  if (!(regularizers.normal_step > 0.0) || !(regularizers.smooth_radius >= 0.0)) {
    throw InvalidArgument("regularizer step sizes must be positive");
  }
  if (views_per_step < 1) throw InvalidArgument("views_per_step must be positive");
  if (checkpoint_every < 1 || preview_every < 1) throw InvalidArgument("checkpoint/preview intervals must be positive");
}

namespace {

json field_json(const FieldConfig& f) {
  return {{"n_levels", f.grid.n_levels},
          {"features_per_level", f.grid.features_per_level},
          {"table_size_log2", f.grid.table_size_log2},
          {"base_resolution", f.grid.base_resolution},
          {"finest_resolution", f.grid.finest_resolution},
          {"box_min", {f.grid.box_min.x(), f.grid.box_min.y(), f.grid.box_min.z()}},
          {"box_max", {f.grid.box_max.x(), f.grid.box_max.y(), f.grid.box_max.z()}},
          {"density_layers", f.density_mlp.n_layers},
          {"density_hidden", f.density_mlp.hidden_dim},
          {"color_layers", f.color_mlp.n_layers},
          {"color_hidden", f.color_mlp.hidden_dim},
          {"density_bias_init", f.density_bias_init},
          {"hash_init_range", f.hash_init_range}};
}

// Reads an object while tracking which keys were consumed, so leftovers can be
// reported as unknown.
class Reader {
 public:
  Reader(const json& doc, std::string path) : doc_(doc), path_(std::move(path)) {
    if (!doc_.is_object()) throw InvalidArgument(where() + " must be a JSON object");
  }

  template <typename V>
  void get(const char* key, V& out) {
    seen_.insert(key);
    if (!doc_.contains(key)) return;
    try {
      out = doc_.at(key).get<V>();
    } catch (const json::exception&) {
      throw InvalidArgument(where() + "." + key + " has the wrong type");
    }
  }

  Reader child(const char* key) {
    seen_.insert(key);
    static const json kEmpty = json::object();
    return Reader(doc_.contains(key) ? doc_.at(key) : kEmpty, path_ + "." + key);
  }

  bool has(const char* key) const { return doc_.contains(key); }

  void finish() const {
    for (const auto& item : doc_.items()) {
      if (!seen_.count(item.key())) throw InvalidArgument("unknown config key " + path_ + "." + item.key());
    }
  }

 private:
  std::string where() const { return path_; }

  const json& doc_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_pair_deg(Reader& r, const char* key, double& lo, double& hi) {
  std::vector<double> v{rad_to_deg(lo), rad_to_deg(hi)};
  r.get(key, v);
  if (v.size() != 2) throw InvalidArgument(std::string("pose_bounds.") + key + " needs [min, max]");
  lo = deg_to_rad(v[0]);
  hi = deg_to_rad(v[1]);
}

void read_vec3(Reader& r, const char* key, Vec3d& out) {
  std::vector<double> v{out.x(), out.y(), out.z()};
  r.get(key, v);
  if (v.size() != 3) throw InvalidArgument(std::string("field.") + key + " needs three values");
  out = Vec3d(v[0], v[1], v[2]);
}

}  // namespace

std::string to_json(const TrainConfig& c) {
  const auto& b = c.pose_bounds;
  json doc = {
      {"total_steps", c.total_steps},
      {"optimizer", to_string(c.optimizer.kind)},
      {"learning_rate", c.optimizer.learning_rate},
      {"weight_decay", c.optimizer.weight_decay},
      {"betas", {c.optimizer.beta1, c.optimizer.beta2, c.optimizer.beta3}},
      {"eps", c.optimizer.eps},
      {"loss_weights",
       {{"sds", c.loss_weights.sds},
        {"depth", c.loss_weights.depth},
        {"entropy", c.loss_weights.entropy},
        {"orientation", c.loss_weights.orientation},
        {"smoothness", c.loss_weights.smoothness}}},
      {"pose_bounds",
       {{"elevation_deg", {rad_to_deg(b.elevation_min), rad_to_deg(b.elevation_max)}},
        {"azimuth_deg", {rad_to_deg(b.azimuth_min), rad_to_deg(b.azimuth_max)}},
        {"radius", {b.radius_min, b.radius_max}}}},
      {"render", {{"width", c.render.width}, {"height", c.render.height}, {"fov_deg", rad_to_deg(c.render.vertical_fov)}}},
      {"seed", c.seed},
      {"eta", c.eta},
      {"plateau_fraction", c.plateau_fraction},
      {"n_samples", c.n_samples},
      {"bound_radius", c.bound_radius},
      {"field", field_json(c.field)},
      {"diffusion",
       {{"n_steps", c.diffusion.n_steps},
        {"beta_start", c.diffusion.beta_start},
        {"beta_end", c.diffusion.beta_end},
        {"t_min", c.diffusion.t_min},
        {"t_max", c.diffusion.t_max},
        {"max_retries", c.diffusion.max_retries}}},
      {"regularizers",
       {{"rays", c.regularizers.rays},
        {"smooth_weight_floor", c.regularizers.smooth_weight_floor},
        {"smooth_points", c.regularizers.smooth_points},
        {"smooth_radius", c.regularizers.smooth_radius},
        {"normal_step", c.regularizers.normal_step}}},
      {"depth_inverse", c.depth_inverse},
      {"views_per_step", c.views_per_step},
      {"checkpoint_every", c.checkpoint_every},
      {"preview_every", c.preview_every},
  };
  return doc.dump(2);
}

TrainConfig train_config_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("config is not valid JSON: ") + e.what());
  }
  TrainConfig c;
  Reader r(doc, "config");
  r.get("total_steps", c.total_steps);
  std::string opt = to_string(c.optimizer.kind);
  r.get("optimizer", opt);
  const auto kind = optimizer_kind_from_string(opt);
  if (kind != c.optimizer.kind) {
    const OptimizerConfig defaults = kind == OptimizerKind::kAdam ? OptimizerConfig::adam_defaults() : OptimizerConfig{};
    c.optimizer.kind = kind;
    c.optimizer.beta1 = defaults.beta1;
    c.optimizer.beta2 = defaults.beta2;
    c.optimizer.beta3 = defaults.beta3;
  }
  r.get("learning_rate", c.optimizer.learning_rate);
  r.get("weight_decay", c.optimizer.weight_decay);
  std::vector<double> betas{c.optimizer.beta1, c.optimizer.beta2, c.optimizer.beta3};
  r.get("betas", betas);
  if (betas.size() != 3) throw InvalidArgument("config.betas needs three values");
  c.optimizer.beta1 = betas[0];
  c.optimizer.beta2 = betas[1];
  c.optimizer.beta3 = betas[2];
  r.get("eps", c.optimizer.eps);
  {
    Reader w = r.child("loss_weights");
    w.get("sds", c.loss_weights.sds);
    w.get("depth", c.loss_weights.depth);
    w.get("entropy", c.loss_weights.entropy);
    w.get("orientation", c.loss_weights.orientation);
    w.get("smoothness", c.loss_weights.smoothness);
    w.finish();
  }
  {
    Reader p = r.child("pose_bounds");
    auto& b = c.pose_bounds;
    read_pair_deg(p, "elevation_deg", b.elevation_min, b.elevation_max);
    read_pair_deg(p, "azimuth_deg", b.azimuth_min, b.azimuth_max);
    std::vector<double> radius{b.radius_min, b.radius_max};
    p.get("radius", radius);
    if (radius.size() != 2) throw InvalidArgument("pose_bounds.radius needs [min, max]");
    b.radius_min = radius[0];
    b.radius_max = radius[1];
    p.finish();
  }
  {
    Reader q = r.child("render");
    q.get("width", c.render.width);
    q.get("height", c.render.height);
    double fov = rad_to_deg(c.render.vertical_fov);
    q.get("fov_deg", fov);
    c.render.vertical_fov = deg_to_rad(fov);
    q.finish();
  }
  r.get("seed", c.seed);
  r.get("eta", c.eta);
  r.get("plateau_fraction", c.plateau_fraction);
  r.get("n_samples", c.n_samples);
  r.get("bound_radius", c.bound_radius);
  {
    Reader f = r.child("field");
    auto& g = c.field.grid;
    f.get("n_levels", g.n_levels);
    f.get("features_per_level", g.features_per_level);
    f.get("table_size_log2", g.table_size_log2);
    f.get("base_resolution", g.base_resolution);
    f.get("finest_resolution", g.finest_resolution);
    read_vec3(f, "box_min", g.box_min);
    read_vec3(f, "box_max", g.box_max);
    f.get("density_layers", c.field.density_mlp.n_layers);
    f.get("density_hidden", c.field.density_mlp.hidden_dim);
    f.get("color_layers", c.field.color_mlp.n_layers);
    f.get("color_hidden", c.field.color_mlp.hidden_dim);
    f.get("density_bias_init", c.field.density_bias_init);
    f.get("hash_init_range", c.field.hash_init_range);
    f.finish();
  }
  {
    Reader d = r.child("diffusion");
    d.get("n_steps", c.diffusion.n_steps);
    d.get("beta_start", c.diffusion.beta_start);
    d.get("beta_end", c.diffusion.beta_end);
    d.get("t_min", c.diffusion.t_min);
    d.get("t_max", c.diffusion.t_max);
    d.get("max_retries", c.diffusion.max_retries);
    d.finish();
  }
  {
    Reader g = r.child("regularizers");
    g.get("rays", c.regularizers.rays);
    g.get("smooth_weight_floor", c.regularizers.smooth_weight_floor);
    g.get("smooth_points", c.regularizers.smooth_points);
    g.get("smooth_radius", c.regularizers.smooth_radius);
    g.get("normal_step", c.regularizers.normal_step);
    g.finish();
  }
  r.get("depth_inverse", c.depth_inverse);
  r.get("views_per_step", c.views_per_step);
  r.get("checkpoint_every", c.checkpoint_every);
  r.get("preview_every", c.preview_every);
  r.finish();
  c.validate();
  return c;
}

}  // namespace conrad
