// conrad: train, render, eval and make-toy entry points.
//
// Exit codes: 0 success, 2 usage, 3 input I/O, 4 numeric failure,
// 5 provider failure.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include "conrad/checkpoint.hpp"
#include "conrad/evalsuite.hpp"
#include "conrad/io.hpp"
#include "conrad/remote_provider.hpp"
#include "conrad/toy_scene.hpp"
#include "conrad/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace conrad {
namespace {

constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumeric = 4;
constexpr int kExitProvider = 5;

// Files written next to every checkpoint so `render` can rebuild the
// constrained field without the original paths.
constexpr const char* kRefImage = "reference.png";
constexpr const char* kRefMask = "mask.png";
constexpr const char* kRefDepth = "depth.crdd";
constexpr const char* kCheckpoint = "checkpoint.ckpt";
constexpr const char* kLossLog = "loss_log.jsonl";

// Bad or inconsistent input files, as opposed to bad flags.
class InputError : public IoError {
 public:
  using IoError::IoError;
};

struct TrainArgs {
  std::string image, mask, depth, config, out, provider, resume, cond_id = "reference";
  std::optional<std::uint64_t> seed;
  std::optional<int> steps;
  bool echo = false;
};

struct RenderArgs {
  std::string ckpt, poses, out, image, mask;
  int resolution = 0;
};

struct EvalArgs {
  std::string gt, rendered, ref, poses, out;
  std::vector<double> ref_pose{0.0, 0.0, 3.2};
};

struct ToyArgs {
  std::string shape = "sphere", out;
  int resolution = 64;
};

Image read_depth_any(const fs::path& path) {
  if (path.extension() == ".png") return read_mask(path);
  return read_depth_raw(path);
}

ReferenceConditioning load_conditioning(const fs::path& image, const fs::path& mask, const fs::path& depth,
                                        const TrainConfig& config, const std::string& cond_id) {
  ReferenceConditioning c;
  c.image = read_png(image);
  if (c.image.channels != 3) throw InputError("reference image '" + image.string() + "' must be a color image");
  c.mask = read_mask(mask);
  if (!depth.empty()) c.depth = read_depth_any(depth);
  c.intrinsics = config.render;
  c.intrinsics.width = c.image.width;
  c.intrinsics.height = c.image.height;
  c.cond_id = cond_id;
  try {
    c.validate();
  } catch (const InvalidArgument& e) {
    throw InputError(e.what());
  }
  return c;
}

std::unique_ptr<ScoreProvider> make_provider(const TrainArgs& args, const TrainConfig& config,
                                             std::function<Image(const CameraPose&)>& oracle_target) {
  std::string source = args.provider;
  if (source.empty()) {
    const char* url = std::getenv("CONRAD_PROVIDER_URL");
    if (!url || !*url) throw InvalidArgument("--provider is required (or set CONRAD_PROVIDER_URL)");
    source = std::string("remote:") + url;
  }
  const auto colon = source.find(':');
  const std::string kind = source.substr(0, colon);
  const std::string value = colon == std::string::npos ? "" : source.substr(colon + 1);
  if (value.empty()) throw InvalidArgument("--provider expects dirac:<image>, remote:<url> or oracle:<shape>");
  const DiffusionSchedule schedule(config.diffusion.n_steps, config.diffusion.beta_start, config.diffusion.beta_end);
  if (kind == "dirac") return std::make_unique<DiracProvider>(read_png(value), schedule);
  if (kind == "remote") {
    RemoteOptions o;
    o.url = value;
    o.cond_id = args.cond_id;
    o.info = {config.render.height, config.render.width, 3, false};
    o.echo = args.echo;
    return std::make_unique<RemoteProvider>(o);
  }
  if (kind == "oracle") {
    ToyScene scene;
    scene.shape = toy_shape_from_string(value);
    const CameraIntrinsics intr = config.render;
    oracle_target = [scene, intr](const CameraPose& p) { return render_toy(scene, p, intr).image; };
    return std::make_unique<PoseOracleProvider>(oracle_target, ProviderInfo{intr.height, intr.width, 3, true},
                                                schedule);
  }
  throw InvalidArgument("unknown provider kind '" + kind + "'");
}

// Reference view plus three novel views around the object.
std::vector<CameraPose> preview_poses(const CameraPose& ref) {
  std::vector<CameraPose> poses{ref};
  for (double az : {90.0, 180.0, 270.0}) {
    poses.push_back({ref.azimuth + deg_to_rad(az), deg_to_rad(15.0), ref.radius});
  }
  return poses;
}

std::string step_tag(int step) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "step_%06d", step);
  return buf;
}

int cmd_train(const TrainArgs& args) {
  const fs::path out(args.out);
  std::optional<Checkpoint> resume;
  TrainConfig config;
  if (!args.resume.empty()) {
    resume = load_checkpoint(args.resume);
    config = resume->config();
  } else if (!args.config.empty()) {
    config = train_config_from_json(read_file(args.config));
  }
  if (args.seed) config.seed = *args.seed;
  if (args.steps) config.total_steps = *args.steps;
  config.validate();

  const ReferenceConditioning cond = load_conditioning(args.image, args.mask, args.depth, config, args.cond_id);
  std::function<Image(const CameraPose&)> oracle_target;
  const auto provider = make_provider(args, config, oracle_target);

  fs::create_directories(out / "previews");
  write_png(out / kRefImage, cond.image);
  write_png(out / kRefMask, cond.mask);
  if (cond.depth) write_depth_raw(out / kRefDepth, *cond.depth);

  Trainer trainer(cond, config, *provider);
  if (resume) trainer.resume(*resume);

  std::ofstream log(out / kLossLog, resume ? std::ios::app : std::ios::trunc);
  if (!log) throw IoError("cannot write " + (out / kLossLog).string());
  TrainHooks hooks;
  hooks.on_step = [&](const LossReport& r) { log << loss_log_line(r) << '\n' << std::flush; };
  hooks.on_checkpoint = [&](const Checkpoint& c) { save_checkpoint(out / kCheckpoint, c); };
  hooks.on_preview = [&](int step) {
    CameraIntrinsics intr = config.render;
    intr.width = intr.height = 64;
    const auto poses = preview_poses(cond.pose);
    for (std::size_t i = 0; i < poses.size(); ++i) {
      const auto r = trainer.render(poses[i], intr, trainer.current_alpha());
      const std::string name = step_tag(step) + (i == 0 ? "_ref" : "_view" + std::to_string(i)) + ".png";
      write_png(out / "previews" / name, r.image);
    }
  };
  trainer.run(hooks);
  std::cout << "trained " << trainer.completed_steps() << " steps; checkpoint " << (out / kCheckpoint).string()
            << "\n";
  return 0;
}

int cmd_render(const RenderArgs& args) {
  const Checkpoint ckpt = load_checkpoint(args.ckpt);
  const TrainConfig config = ckpt.config();
  const fs::path dir = fs::path(args.ckpt).parent_path();
  const fs::path image = args.image.empty() ? dir / kRefImage : fs::path(args.image);
  const fs::path mask = args.mask.empty() ? dir / kRefMask : fs::path(args.mask);
  const ReferenceConditioning cond = load_conditioning(image, mask, {}, config, "reference");
  const auto poses = read_poses(args.poses);
  if (poses.empty()) throw InputError("pose file '" + args.poses + "' lists no poses");

  const RadianceField<float> field(config.field);
  if (ckpt.params.size() != field.layout().total()) throw InputError("checkpoint does not match its field config");
  CameraIntrinsics intr = config.render;
  if (args.resolution > 0) intr.width = intr.height = args.resolution;
  const double alpha = warm_alpha(static_cast<int>(std::min<std::uint64_t>(ckpt.step, config.total_steps)),
                                  {config.total_steps, config.plateau_fraction});
  const fs::path out(args.out);
  fs::create_directories(out);
  for (std::size_t i = 0; i < poses.size(); ++i) {
    const auto r = render_constrained(field, ckpt.params, cond, config, poses[i], intr, alpha);
    char name[32];
    std::snprintf(name, sizeof name, "view_%03zu", i);
    write_png(out / (std::string(name) + ".png"), r.image);
    write_depth_raw(out / (std::string(name) + ".crdd"), r.depth);
  }
  std::cout << "rendered " << poses.size() << " views to " << out.string() << "\n";
  return 0;
}

json metric_json(const MetricSet& m) {
  return {{"d_ref", m.d_ref}, {"d_all", m.d_all}, {"d_oracle", m.d_oracle}, {"count", m.count}};
}

int cmd_eval(const EvalArgs& args) {
  const auto gt = FeatureSet::from_matrix(read_features(args.gt));
  const auto rendered = FeatureSet::from_matrix(read_features(args.rendered));
  const auto ref = FeatureSet::from_matrix(read_features(args.ref));
  if (ref.size() != 1) throw InputError("reference feature file must hold exactly one row");
  const auto poses = read_poses(args.poses);
  if (poses.empty()) throw InputError("pose file '" + args.poses + "' lists no poses");
  if (args.ref_pose.size() != 3) throw InvalidArgument("--ref-pose expects azimuth elevation radius");
  const CameraPose ref_pose{deg_to_rad(args.ref_pose[0]), deg_to_rad(args.ref_pose[1]), args.ref_pose[2]};
  const EvalReport report = evaluate(gt, rendered, ref.features.row(0).transpose(), poses, ref_pose);
  const json doc = {{"all_views", metric_json(report.all_views)},
                    {"near_reference", metric_json(report.near_reference)},
                    {"poses", args.poses},
                    {"ref_pose_deg", args.ref_pose},
                    {"features", {{"gt", args.gt}, {"rendered", args.rendered}, {"ref", args.ref}}}};
  const std::string text = doc.dump(2) + "\n";
  if (args.out.empty() || args.out == "-") {
    std::cout << text;
  } else {
    write_file(args.out, text);
  }
  return 0;
}

int cmd_make_toy(const ToyArgs& args) {
  ToyScene scene;
  scene.shape = toy_shape_from_string(args.shape);
  CameraIntrinsics intr;
  intr.width = intr.height = args.resolution;
  const ToyRender r = render_toy(scene, CameraPose::reference(), intr);
  const fs::path out(args.out);
  fs::create_directories(out);
  write_png(out / kRefImage, r.image);
  write_png(out / kRefMask, r.mask);
  write_depth_raw(out / kRefDepth, r.depth);
  std::cout << "wrote " << args.shape << " toy to " << out.string() << "\n";
  return 0;
}

int run(int argc, char** argv) {
  CLI::App app{"ConRad: single-image constrained radiance fields"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* t = app.add_subcommand("train", "optimize a constrained field from one image");
  t->add_option("--image", train.image, "reference RGB image (PNG)")->required();
  t->add_option("--mask", train.mask, "foreground mask (PNG)")->required();
  t->add_option("--depth", train.depth, "relative depth estimate (.crdd raw or PNG)");
  t->add_option("--config", train.config, "training config JSON");
  t->add_option("--out", train.out, "output directory")->required();
  t->add_option("--provider", train.provider, "dirac:<image>, remote:<url> or oracle:<sphere|cube>");
  t->add_option("--seed", train.seed, "overrides the config seed");
  t->add_option("--steps", train.steps, "overrides total_steps")->check(CLI::PositiveNumber);
  t->add_option("--resume", train.resume, "checkpoint to continue from");
  t->add_option("--cond-id", train.cond_id, "conditioning id sent to the provider");
  t->add_flag("--echo", train.echo, "send the injected noise to a remote provider (echo-mode services)");

  RenderArgs render;
  auto* r = app.add_subcommand("render", "render a checkpoint at the poses of a pose file");
  r->add_option("--ckpt", render.ckpt, "checkpoint file")->required();
  r->add_option("--poses", render.poses, "pose file (azimuth elevation radius per line, degrees)")->required();
  r->add_option("--out", render.out, "output directory")->required();
  r->add_option("--resolution", render.resolution, "square output size")->check(CLI::PositiveNumber);
  r->add_option("--image", render.image, "reference image (default: next to the checkpoint)");
  r->add_option("--mask", render.mask, "reference mask (default: next to the checkpoint)");

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "feature-space metrics over a pose rig");
  e->add_option("--gt-features", eval.gt, "ground-truth view features")->required();
  e->add_option("--rendered-features", eval.rendered, "rendered view features")->required();
  e->add_option("--ref-features", eval.ref, "feature of the reference image (one row)")->required();
  e->add_option("--poses", eval.poses, "pose file matching the feature rows")->required();
  e->add_option("--ref-pose", eval.ref_pose, "reference azimuth elevation radius (degrees)")->expected(3);
  e->add_option("--out", eval.out, "report path (default stdout)");

  ToyArgs toy;
  auto* m = app.add_subcommand("make-toy", "write a synthetic reference image, mask and depth");
  m->add_option("--shape", toy.shape, "sphere or cube")->check(CLI::IsMember({"sphere", "cube"}));
  m->add_option("--out", toy.out, "output directory")->required();
  m->add_option("--resolution", toy.resolution, "square image size")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (t->parsed()) return cmd_train(train);
    if (r->parsed()) return cmd_render(render);
    if (e->parsed()) return cmd_eval(eval);
    return cmd_make_toy(toy);
  } catch (const ProviderError& err) {
    std::cerr << "provider error (" << to_string(err.kind()) << "): " << err.what() << "\n";
    return kExitProvider;
  } catch (const NumericError& err) {
    std::cerr << "numeric failure: " << err.what() << "\n";
    return kExitNumeric;
  } catch (const IoError& err) {
    std::cerr << "input error: " << err.what() << "\n";
    return kExitIo;
  } catch (const fs::filesystem_error& err) {
    std::cerr << "input error: " << err.what() << "\n";
    return kExitIo;
  } catch (const InvalidArgument& err) {
    std::cerr << "usage error: " << err.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
}

}  // namespace
}  // namespace conrad

int main(int argc, char** argv) { return conrad::run(argc, argv); }
