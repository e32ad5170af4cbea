#include "segfield/cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <sstream>

#include "segfield/camera_path.hpp"
#include "segfield/colmap_io.hpp"
#include "segfield/dataset.hpp"
#include "segfield/editor.hpp"
#include "segfield/error.hpp"
#include "segfield/image_io.hpp"
#include "segfield/json_util.hpp"
#include "segfield/mask_ops.hpp"
#include "segfield/synthetic.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace segfield {

namespace {

constexpr std::uint64_t kPropagationSeed = 101;
constexpr std::uint64_t kSelfPromptSeed = 202;
constexpr std::uint64_t kTrainSeed = 303;

template <typename T>
void get_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

template <typename T>
void get_if(const json& j, const char* key, std::optional<T>& out) {
  if (!j.contains(key)) return;
  if (j.at(key).is_null()) {
    out.reset();
  } else {
    out = j.at(key).get<T>();
  }
}

DepthSource depth_source_from(const std::string& s) {
  if (s == "automatic") return DepthSource::automatic;
  if (s == "dense") return DepthSource::dense;
  if (s == "sparse") return DepthSource::sparse;
  if (s == "none") return DepthSource::none;
  throw Error(Errc::parse, "depth_source must be automatic, dense, sparse or none");
}

std::map<std::string, int> preset_labels(const std::string& preset) {
  if (preset == "two-spheres") return {{"red sphere", 1}, {"blue sphere", 2}};
  if (preset == "occluded") return {{"sphere", 1}, {"wall", 2}};
  if (preset == "floor-sphere") return {{"sphere", 1}, {"floor", 2}};
  if (preset == "small-object") return {{"box", 1}};
  return {{"sphere", 1}};
}

std::vector<double> split_numbers(const std::string& text, char sep) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep)) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      throw Error(Errc::parse, "not a number: '" + item + "'");
    }
    if (used != item.size()) throw Error(Errc::parse, "not a number: '" + item + "'");
    out.push_back(v);
  }
  return out;
}

Vec3 parse_vec3(const std::string& text) {
  const auto v = split_numbers(text, ',');
  if (v.size() != 3) throw Error(Errc::parse, "expected x,y,z but got '" + text + "'");
  return Vec3(v[0], v[1], v[2]);
}

PointPrompt parse_prompt(const std::string& text) {
  const auto comma = text.rfind(',');
  if (comma == std::string::npos) throw Error(Errc::parse, "prompt must be u,v,+ or u,v,-");
  const std::string sign = text.substr(comma + 1);
  if (sign != "+" && sign != "-") throw Error(Errc::parse, "prompt polarity must be + or -");
  const auto uv = split_numbers(text.substr(0, comma), ',');
  if (uv.size() != 2) throw Error(Errc::parse, "prompt must be u,v,+ or u,v,-");
  return {uv[0], uv[1], sign == "+" ? Polarity::positive : Polarity::negative};
}

std::string frame_name(int i) {
  std::ostringstream s;
  s << "frame_" << std::setw(4) << std::setfill('0') << i << ".png";
  return s.str();
}

std::string view_file(int view_id) {
  std::ostringstream s;
  s << "view_" << std::setw(4) << std::setfill('0') << view_id << ".png";
  return s.str();
}

// ------------------------------------------------------------------ commands

struct Common {
  std::optional<fs::path> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> backend;
  std::optional<std::string> endpoint;

  PipelineConfig load() const {
    PipelineConfig cfg = config ? read_pipeline_config(*config) : PipelineConfig{};
    if (seed) cfg.seed = *seed;
    if (backend) cfg.segmenter.backend = *backend == "bridge" ? BackendKind::bridge : BackendKind::oracle;
    if (endpoint) cfg.segmenter.endpoint = *endpoint;
    cfg.apply_seed();
    cfg.segmenter.validate();
    return cfg;
  }
};

void cmd_synth(const PipelineConfig& cfg, const std::string& preset, const fs::path& out_dir,
               bool binary, std::optional<int> views, std::ostream& out) {
  SceneSpec spec = preset_scene(preset);
  if (views) {
    if (*views < 2 || *views > static_cast<int>(spec.cameras.size())) {
      throw Error(Errc::invalid_argument, "--views must be between 2 and the preset's camera count");
    }
    spec.cameras.resize(*views);
  }
  const auto rendered = render_scene(spec);
  const auto fab = fabricate_sparse_cloud(spec, rendered, cfg.synth.n_points, cfg.synth.noise_px,
                                          cfg.seed);
  fs::create_directories(out_dir / "images");
  fs::create_directories(out_dir / "instances");
  if (cfg.synth.write_depth) fs::create_directories(out_dir / "depth");

  DatasetManifest manifest;
  manifest.pose_source = PoseSource::colmap;
  manifest.labels = preset_labels(preset);
  ColmapModel model;
  model.cloud = fab.cloud;
  for (const auto& rv : rendered) {
    const std::string name = view_file(rv.view.view_id);
    ManifestView mv;
    mv.view_id = rv.view.view_id;
    mv.image = fs::path("images") / name;
    mv.instance = fs::path("instances") / name;
    write_rgb_png(out_dir / mv.image, rv.view.rgb);
    write_instance_png(out_dir / *mv.instance, rv.instances);
    if (cfg.synth.write_depth && rv.view.depth) {
      mv.depth = fs::path("depth") / name;
      write_depth_png(out_dir / *mv.depth, *rv.view.depth, manifest.depth_scale);
    }
    manifest.views.push_back(mv);
    model.views.push_back(ColmapView{rv.view.view_id, 1, name, CameraModel::pinhole,
                                     rv.view.intrinsics, rv.view.pose});
  }
  save_colmap_model(model, out_dir / manifest.colmap_dir,
                    binary ? ColmapFormat::binary : ColmapFormat::text);
  write_manifest(out_dir / "manifest.json", manifest);
  out << "wrote " << rendered.size() << " views and " << fab.cloud.points.size()
      << " points to " << out_dir.string() << "\n";
}

std::unique_ptr<SegmentationBackend> backend_for(const PipelineConfig& cfg, const Dataset& ds) {
  if (cfg.segmenter.backend == BackendKind::oracle && ds.instances.size() != ds.views.size()) {
    throw Error(Errc::integrity, "the oracle backend needs an instance map for every view");
  }
  if (cfg.segmenter.backend == BackendKind::oracle) {
    return std::make_unique<OracleBackend>(ds.instances, ds.manifest.labels,
                                           cfg.oracle_boundary_px);
  }
  return make_backend(cfg.segmenter);
}

// Propagates one object's seed through the dataset, filters occluded views
// and merges the masks into `mask_dir`.
void propagate_and_write(const PipelineConfig& cfg, const Dataset& ds, Segmenter& segmenter,
                         const ObjectSeed& seed, const fs::path& mask_dir, std::ostream& out) {
  const std::vector<ObjectSeed> seeds{seed};
  const auto result = propagate(ds.colmap.cloud, ds.views, seeds, segmenter, cfg.propagation);
  for (const auto& w : result.warnings) out << "warning: " << w << "\n";
  auto masks = result.masks.at(seed.object_id);
  const auto object_cloud = export_object_cloud(ds.colmap.cloud, result.object(seed.object_id));
  const auto report = filter_views(masks, object_cloud, ds.views, cfg.occlusion);

  std::map<int, std::map<int, Mask>> all;
  if (fs::exists(mask_dir / "index.json")) all = read_masks(mask_dir);
  all[seed.object_id] = masks;
  fs::create_directories(mask_dir);
  write_masks(mask_dir, all);

  const std::string tag = "obj" + std::to_string(seed.object_id);
  json_util::write_file(mask_dir / (tag + "_occlusion.json"), report.to_json());
  json points = json::array();
  for (PointId id : result.object(seed.object_id).point_ids) {
    points.push_back({{"id", id}, {"xyz", json_util::to_json(ds.colmap.cloud.points.at(id).xyz)}});
  }
  json_util::write_file(mask_dir / (tag + "_points.json"),
                        {{"object_id", seed.object_id}, {"points", points}});

  int accepted = 0;
  for (const auto& [v, m] : masks) accepted += m.status == MaskStatus::accepted;
  out << "object " << seed.object_id << ": " << accepted << " accepted, "
      << report.discarded().size() << " discarded as occluded, "
      << result.object(seed.object_id).size() << " points\n";
}

void cmd_segment(const PipelineConfig& cfg, const fs::path& data, const std::vector<std::string>& prompts,
                 std::optional<int> view_id, int object_id, const fs::path& mask_dir,
                 std::ostream& out) {
  ObjectSeed seed;
  seed.object_id = object_id;
  for (const auto& p : prompts) seed.prompts.points.push_back(parse_prompt(p));
  const Dataset ds = load_dataset(data);
  seed.view_id = view_id.value_or(ds.views.front().view_id);
  const auto backend = backend_for(cfg, ds);
  propagate_and_write(cfg, ds, *backend, seed, mask_dir, out);
}

void cmd_selfprompt(const PipelineConfig& cfg, const fs::path& data, const std::string& text,
                    int object_id, const fs::path& mask_dir, std::ostream& out) {
  const Dataset ds = load_dataset(data);
  const auto backend = backend_for(cfg, ds);
  const std::vector<SelfPromptScene> scenes{{data.parent_path().string(), ds.views, backend.get()}};
  const auto report = self_prompt_dataset(scenes, text, cfg.self_prompt);
  const auto& outcome = report.scenes.front();
  if (!outcome.result) {
    throw Error(Errc::not_found, "self-prompting failed (" + outcome.status + "): " + outcome.message);
  }
  ObjectSeed seed{object_id, outcome.result->view_id, outcome.result->prompts};
  out << "view " << seed.view_id << ": " << seed.prompts.points.size() << " prompts\n";
  propagate_and_write(cfg, ds, *backend, seed, mask_dir, out);
  json_util::write_file(mask_dir / ("obj" + std::to_string(object_id) + "_selfprompt.json"),
                        report.to_json());
}

void cmd_train(PipelineConfig cfg, const fs::path& data, const fs::path& mask_dir, int object_id,
               const fs::path& ckpt, std::optional<fs::path> log_path, std::optional<int> iters,
               std::optional<int> held_out_id, bool removal, std::ostream& out) {
  if (iters) cfg.train.iters = *iters;
  const Dataset ds = load_dataset(data);
  const auto all = read_masks(mask_dir);
  const auto it = all.find(object_id);
  if (it == all.end()) {
    throw Error(Errc::not_found, "no masks for object " + std::to_string(object_id) + " in " +
                                     mask_dir.string());
  }
  std::map<int, Mask> masks = it->second;

  std::vector<ViewImage> views;
  std::optional<EvalView> held_out;
  for (const auto& v : ds.views) {
    if (held_out_id && v.view_id == *held_out_id) {
      const auto m = masks.find(v.view_id);
      if (m == masks.end()) throw Error(Errc::not_found, "no mask for the held-out view");
      held_out = EvalView{v, removal ? complement(m->second.bits) : m->second.bits};
      masks.erase(m);
    } else {
      views.push_back(v);
    }
  }
  if (held_out_id && !held_out) {
    throw Error(Errc::not_found, "held-out view " + std::to_string(*held_out_id) + " not in the dataset");
  }
  if (!held_out) {
    // Without a held-out view, PSNR is tracked on the first accepted training view.
    for (const auto& v : views) {
      const auto m = masks.find(v.view_id);
      if (m != masks.end() && m->second.status == MaskStatus::accepted) {
        held_out = EvalView{v, removal ? complement(m->second.bits) : m->second.bits};
        break;
      }
    }
  }

  if (!log_path) log_path = fs::path(ckpt).replace_extension(".jsonl");
  if (ckpt.has_parent_path()) fs::create_directories(ckpt.parent_path());
  std::ofstream log(*log_path);
  if (!log) throw Error(Errc::io, "cannot write " + log_path->string());
  const EvalView* eval = held_out ? &*held_out : nullptr;

  TrainResult result;
  if (removal) {
    result = train_background(views, masks, ds.colmap.cloud, cfg.train, eval, &log);
  } else {
    const auto list = collect_object_points(ds.colmap.cloud, masks, cfg.propagation, object_id);
    result = train(views, masks, export_object_cloud(ds.colmap.cloud, list), cfg.train, eval, &log);
  }
  save_field(ckpt, result.field);
  out << "trained " << cfg.train.iters << " iterations";
  for (auto e = result.log.rbegin(); e != result.log.rend(); ++e) {
    if (e->psnr) {
      out << ", PSNR " << std::fixed << std::setprecision(2) << *e->psnr << " dB";
      break;
    }
  }
  out << "\n";
}

struct PathOptions {
  bool orbit = false;
  std::optional<std::string> line;
  std::optional<std::string> target;
  std::optional<int> count;
  std::optional<double> radius;
  std::optional<fs::path> data;
};

struct Camera {
  CameraIntrinsics intrinsics;
  std::vector<CameraPose> poses;
};

Camera camera_path(const PipelineConfig& cfg, const PathOptions& opt, const Vec3& center) {
  Camera cam;
  if (opt.data) {
    cam.intrinsics = load_dataset(*opt.data).views.front().intrinsics;
  } else {
    const auto& r = cfg.render;
    cam.intrinsics = CameraIntrinsics{r.focal, r.focal, (r.width - 1) / 2.0,
                                      (r.height - 1) / 2.0, r.width, r.height};
    cam.intrinsics.validate();
  }
  const int count = opt.count.value_or(cfg.render.count);
  const Vec3 target = opt.target ? parse_vec3(*opt.target) : center;
  if (opt.line) {
    LineParams lp;
    std::stringstream ss(*opt.line);
    std::string item;
    while (std::getline(ss, item, ';')) lp.keypoints.push_back(parse_vec3(item));
    lp.count = count;
    lp.target = target;
    cam.poses = line_path(lp);
  } else {
    cam.poses = orbit_path({.center = target,
                            .radius = opt.radius.value_or(cfg.render.orbit_radius),
                            .count = count,
                            .elevation = cfg.render.elevation_deg * std::numbers::pi / 180.0});
  }
  return cam;
}

template <typename Field>
void write_frames(const Field& field, const Camera& cam, int samples, const fs::path& out_dir,
                  std::ostream& out) {
  fs::create_directories(out_dir);
  for (std::size_t i = 0; i < cam.poses.size(); ++i) {
    const auto img = render_view(field, cam.intrinsics, cam.poses[i], samples);
    write_rgb_png(out_dir / frame_name(static_cast<int>(i)), img.rgb);
  }
  out << "wrote " << cam.poses.size() << " frames to " << out_dir.string() << "\n";
}

void cmd_render(const PipelineConfig& cfg, const fs::path& ckpt, const PathOptions& opt,
                const fs::path& out_dir, std::ostream& out) {
  const VoxelField field = load_field(ckpt);
  const Vec3 center = 0.5 * (field.aabb.min + field.aabb.max);
  write_frames(field, camera_path(cfg, opt, center), cfg.render.samples_per_ray, out_dir, out);
}

void cmd_edit(const PipelineConfig& cfg, const fs::path& script_path, const PathOptions& opt,
              const fs::path& out_dir, std::ostream& out) {
  const EditScript script = read_edit_script(script_path);
  const VoxelField object = load_field(script.object_ckpt);
  const VoxelField background =
      script.background_ckpt
          ? load_field(*script.background_ckpt)
          : VoxelField::uniform(Aabb{Vec3::Constant(-1e-3), Vec3::Constant(1e-3)}, {2, 2, 2},
                                -100.0, Vec3::Zero());
  const CompositeField comp = compose(background, object, script.xform);
  const Vec3 obj_center = script.xform.apply(0.5 * (object.aabb.min + object.aabb.max));
  const Vec3 center = script.background_ckpt
                          ? Vec3(0.5 * (background.aabb.min + background.aabb.max))
                          : obj_center;
  write_frames(comp, camera_path(cfg, opt, center), cfg.render.samples_per_ray, out_dir, out);
}

void add_path_options(CLI::App* sub, PathOptions& opt) {
  sub->add_flag("--orbit", opt.orbit, "Orbit around the field (default path)");
  sub->add_option("--line", opt.line, "Keypoints 'x,y,z;x,y,z;...' of a linear walk");
  sub->add_option("--target", opt.target, "Look-at point 'x,y,z' (default: field center)");
  sub->add_option("--count", opt.count, "Number of frames")->check(CLI::PositiveNumber);
  sub->add_option("--radius", opt.radius, "Orbit radius")->check(CLI::PositiveNumber);
  sub->add_option("--data", opt.data, "Dataset manifest supplying the intrinsics");
}

}  // namespace

void PipelineConfig::apply_seed() {
  propagation.seed = seed + kPropagationSeed;
  self_prompt.seed = seed + kSelfPromptSeed;
  train.seed = seed + kTrainSeed;
}

PipelineConfig parse_pipeline_config(const json& j) {
  PipelineConfig c;
  try {
    json_util::check_keys(j, {"seed", "synth", "segmenter", "propagation", "occlusion",
                              "self_prompt", "train", "render"},
                          "config");
    get_if(j, "seed", c.seed);
    if (j.contains("synth")) {
      const json& s = j["synth"];
      json_util::check_keys(s, {"n_points", "noise_px", "write_depth"}, "config.synth");
      get_if(s, "n_points", c.synth.n_points);
      get_if(s, "noise_px", c.synth.noise_px);
      get_if(s, "write_depth", c.synth.write_depth);
    }
    if (j.contains("segmenter")) {
      const json& s = j["segmenter"];
      json_util::check_keys(s, {"backend", "endpoint", "timeout_ms", "oracle_boundary_px"},
                            "config.segmenter");
      if (s.contains("backend")) {
        const auto b = s["backend"].get<std::string>();
        if (b != "oracle" && b != "bridge") throw Error(Errc::parse, "backend must be oracle or bridge");
        c.segmenter.backend = b == "oracle" ? BackendKind::oracle : BackendKind::bridge;
      }
      get_if(s, "endpoint", c.segmenter.endpoint);
      if (s.contains("timeout_ms")) {
        c.segmenter.timeout = std::chrono::milliseconds(s["timeout_ms"].get<std::int64_t>());
      }
      get_if(s, "oracle_boundary_px", c.oracle_boundary_px);
    }
    if (j.contains("propagation")) {
      const json& s = j["propagation"];
      json_util::check_keys(s, {"prompts_per_view", "min_track_hits", "visit_order", "erosion_px",
                                "kmeans_iters"},
                            "config.propagation");
      get_if(s, "prompts_per_view", c.propagation.prompts_per_view);
      get_if(s, "min_track_hits", c.propagation.min_track_hits);
      get_if(s, "erosion_px", c.propagation.erosion_px);
      get_if(s, "kmeans_iters", c.propagation.kmeans_iters);
      if (s.contains("visit_order")) {
        const auto v = s["visit_order"].get<std::string>();
        if (v != "input" && v != "covisibility") {
          throw Error(Errc::parse, "visit_order must be input or covisibility");
        }
        c.propagation.visit_order = v == "input" ? VisitOrder::input : VisitOrder::covisibility;
      }
    }
    if (j.contains("occlusion")) {
      const json& s = j["occlusion"];
      json_util::check_keys(s, {"alpha", "gaussian_sigma_px", "mask_threshold",
                                "iou_discard_below"},
                            "config.occlusion");
      get_if(s, "alpha", c.occlusion.alpha);
      get_if(s, "gaussian_sigma_px", c.occlusion.gaussian_sigma_px);
      get_if(s, "mask_threshold", c.occlusion.mask_threshold);
      get_if(s, "iou_discard_below", c.occlusion.iou_discard_below);
    }
    if (j.contains("self_prompt")) {
      const json& s = j["self_prompt"];
      json_util::check_keys(s, {"k", "band_lo", "band_hi", "kmeans_iters"}, "config.self_prompt");
      get_if(s, "k", c.self_prompt.k);
      get_if(s, "band_lo", c.self_prompt.band_lo);
      get_if(s, "band_hi", c.self_prompt.band_hi);
      get_if(s, "kmeans_iters", c.self_prompt.kmeans_iters);
    }
    if (j.contains("train")) {
      const json& s = j["train"];
      json_util::check_keys(s, {"lambda_d", "iters", "batch_rays", "lr_density", "lr_color",
                                "samples_per_ray", "near", "far", "aabb_pad", "outlier_trim",
                                "grid_resolution", "out_of_mask_fraction",
                                "sparse_depth_fraction", "random_background", "depth_source",
                                "density_init"},
                            "config.train");
      auto& t = c.train;
      get_if(s, "lambda_d", t.lambda_d);
      get_if(s, "iters", t.iters);
      get_if(s, "batch_rays", t.batch_rays);
      get_if(s, "lr_density", t.lr_density);
      get_if(s, "lr_color", t.lr_color);
      get_if(s, "samples_per_ray", t.samples_per_ray);
      // "auto" is spelled as null or by leaving the key out.
      get_if(s, "near", t.near);
      get_if(s, "far", t.far);
      get_if(s, "aabb_pad", t.aabb_pad);
      get_if(s, "outlier_trim", t.outlier_trim);
      get_if(s, "grid_resolution", t.grid_resolution);
      get_if(s, "out_of_mask_fraction", t.out_of_mask_fraction);
      get_if(s, "sparse_depth_fraction", t.sparse_depth_fraction);
      get_if(s, "random_background", t.random_background);
      if (s.contains("depth_source")) t.depth_source = depth_source_from(s["depth_source"].get<std::string>());
      get_if(s, "density_init", t.density_init);
    }
    if (j.contains("render")) {
      const json& s = j["render"];
      json_util::check_keys(s, {"samples_per_ray", "count", "orbit_radius", "elevation_deg",
                                "focal", "width", "height"},
                            "config.render");
      auto& r = c.render;
      get_if(s, "samples_per_ray", r.samples_per_ray);
      get_if(s, "count", r.count);
      get_if(s, "orbit_radius", r.orbit_radius);
      get_if(s, "elevation_deg", r.elevation_deg);
      get_if(s, "focal", r.focal);
      get_if(s, "width", r.width);
      get_if(s, "height", r.height);
    }
  } catch (const json::exception& e) {
    throw Error(Errc::parse, std::string("config: ") + e.what());
  }
  c.propagation.validate();
  c.occlusion.validate();
  c.self_prompt.validate();
  c.train.validate();
  c.apply_seed();
  return c;
}

PipelineConfig read_pipeline_config(const fs::path& path) {
  return parse_pipeline_config(json_util::read_file(path));
}

int exit_code(ErrorClass cls) {
  switch (cls) {
    case ErrorClass::parse:
      return 2;
    case ErrorClass::data_integrity:
      return 3;
    case ErrorClass::segmenter_transport:
      return 4;
    case ErrorClass::divergence:
      return 5;
    case ErrorClass::other:
      return 1;
  }
  return 1;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Prompted object segmentation and voxel radiance fields", "segfield"};
  app.require_subcommand(1);
  Common common;
  app.add_option("--config", common.config, "Pipeline config JSON")->check(CLI::ExistingFile);
  app.add_option("--seed", common.seed, "Global seed");
  app.add_option("--backend", common.backend, "Segmenter backend")
      ->check(CLI::IsMember({"oracle", "bridge"}));
  app.add_option("--bridge-endpoint", common.endpoint,
                 "tcp://host:port, unix:/path or exec:<command>");

  std::string preset;
  fs::path out_path;
  bool binary = false;
  std::optional<int> synth_views;
  auto* synth = app.add_subcommand("synth", "Write a synthetic dataset");
  synth->add_option("--preset", preset, "Scene preset")
      ->required()
      ->check(CLI::IsMember({"sphere", "two-spheres", "occluded", "occlusion-free",
                             "floor-sphere", "small-object"}));
  synth->add_option("--out", out_path, "Output directory")->required();
  synth->add_flag("--binary", binary, "Write the COLMAP model in binary form");
  synth->add_option("--views", synth_views, "Keep only the first N cameras");

  fs::path data;
  std::vector<std::string> prompts;
  std::optional<int> seed_view;
  int object_id = 1;
  auto* segment = app.add_subcommand("segment", "Propagate point prompts to every view");
  segment->add_option("--data", data, "Dataset manifest")->required();
  segment->add_option("--prompt", prompts, "Point prompt u,v,+ or u,v,- (repeatable)")->required();
  segment->add_option("--view", seed_view, "View the prompts refer to (default: first)");
  segment->add_option("--object-id", object_id, "Object id of the result")->check(CLI::PositiveNumber);
  segment->add_option("--out", out_path, "Mask directory")->required();

  std::string text;
  auto* selfprompt = app.add_subcommand("selfprompt", "Segment an object named by text");
  selfprompt->add_option("--data", data, "Dataset manifest")->required();
  selfprompt->add_option("--text", text, "Object description")->required();
  selfprompt->add_option("--object-id", object_id, "Object id of the result")->check(CLI::PositiveNumber);
  selfprompt->add_option("--out", out_path, "Mask directory")->required();

  fs::path mask_dir;
  std::optional<fs::path> log_path;
  std::optional<int> iters;
  std::optional<int> held_out;
  bool removal = false;
  auto* train_cmd = app.add_subcommand("train", "Train an object (or background) field");
  train_cmd->add_option("--data", data, "Dataset manifest")->required();
  train_cmd->add_option("--masks", mask_dir, "Mask directory")->required();
  train_cmd->add_option("--object-id", object_id, "Object to train")->check(CLI::PositiveNumber);
  train_cmd->add_option("--out", out_path, "Checkpoint path")->required();
  train_cmd->add_option("--log", log_path, "JSON-lines log (default: checkpoint with .jsonl)");
  train_cmd->add_option("--iters", iters, "Override the iteration count")->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--held-out", held_out, "View excluded from training and used for PSNR");
  train_cmd->add_flag("--removal", removal, "Train the scene without the object");

  fs::path ckpt;
  PathOptions path_opt;
  auto* render = app.add_subcommand("render", "Render a checkpoint along a camera path");
  render->add_option("--ckpt", ckpt, "Checkpoint")->required();
  render->add_option("--out", out_path, "Frame directory")->required();
  add_path_options(render, path_opt);

  fs::path script;
  auto* edit = app.add_subcommand("edit", "Compose fields from an edit script and render");
  edit->add_option("--script", script, "Edit script JSON")->required();
  edit->add_option("--out", out_path, "Frame directory")->required();
  add_path_options(edit, path_opt);

  std::vector<const char*> argv{"segfield"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    const PipelineConfig cfg = common.load();
    if (*synth) cmd_synth(cfg, preset, out_path, binary, synth_views, out);
    if (*segment) cmd_segment(cfg, data, prompts, seed_view, object_id, out_path, out);
    if (*selfprompt) cmd_selfprompt(cfg, data, text, object_id, out_path, out);
    if (*train_cmd) {
      cmd_train(cfg, data, mask_dir, object_id, out_path, log_path, iters, held_out, removal, out);
    }
    if (*render) cmd_render(cfg, ckpt, path_opt, out_path, out);
    if (*edit) cmd_edit(cfg, script, path_opt, out_path, out);
  } catch (const Error& e) {
    err << "error [" << to_string(e.code()) << "]: " << e.what() << "\n";
    return exit_code(classify(e.code()));
  } catch (const json::exception& e) {
    err << "error [parse]: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace segfield
