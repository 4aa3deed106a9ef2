#include "gsplice/pipeline.hpp"
#include "gsplice/error.hpp"
#include "gsplice/intrinsics.hpp"
#include "gsplice/occlusion.hpp"
#include "gsplice/pose_tracking.hpp"
#include "gsplice/temporal.hpp"

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <fcntl.h>
#include <fstream>
#include <functional>
#include <iostream>
#include <unistd.h>

namespace gsplice {

using nlohmann::json;

// --- placement ---------------------------------------------------------------

json placement_to_json(const PlacementState& state) {
  json pose = pose_to_json(state.pose);
  json anchors = json::array();
  for (const Eigen::Vector2d& a : state.anchors) anchors.push_back({a.x(), a.y()});
  return {{"q", pose["q"]}, {"T", pose["T"]}, {"scale", state.scale}, {"anchors", anchors}, {"locked", state.locked}};
}

PlacementState placement_from_json(const json& j) {
  PlacementState s;
  try {
    s.pose = pose_from_json(j);
    s.scale = j.value("scale", 1.0);
    s.locked = j.value("locked", false);
    if (j.contains("anchors"))
      for (const auto& a : j.at("anchors")) s.anchors.emplace_back(a.at(0).get<double>(), a.at(1).get<double>());
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ParseError, "placement.json", e.what());
  }
  if (!(s.scale > 0) || !std::isfinite(s.scale))
    throw Error(ErrorKind::ValueOutOfRange, "placement.json", "scale must be > 0");
  return s;
}

std::optional<PlacementState> load_placement_state(const fs::path& path) {
  if (!fs::exists(path)) return std::nullopt;
  return placement_from_json(read_json(path));
}

void save_placement_state(const fs::path& path, const PlacementState& state) {
  const fs::path tmp = path.string() + ".tmp";
  write_text(tmp, placement_to_json(state).dump(2) + "\n");
  fs::rename(tmp, path);
}

PlacementState effective_placement(const Scene& scene) {
  if (auto saved = load_placement_state(scene.dir / "placement.json"); saved && saved->locked) return *saved;
  PlacementState s;
  s.pose = scene.config.placement.pose;
  s.scale = scene.config.placement.scale;
  s.locked = true;
  return s;
}

std::vector<std::size_t> select_tracks(const Scene& scene, const PlacementState& placement) {
  std::vector<std::size_t> ids;
  const std::size_t n = scene.tracks.tracks();
  if (placement.anchors.empty()) {
    for (std::size_t i = 0; i < n; ++i)
      if (scene.tracks.visible[0][i]) ids.push_back(i);
    return ids;
  }
  for (std::size_t a = 0; a < placement.anchors.size(); ++a) {
    double best = 2.0;
    std::optional<std::size_t> pick;
    for (std::size_t i = 0; i < n; ++i) {
      if (!scene.tracks.visible[0][i]) continue;
      const double d = (scene.tracks.points[0][i] - placement.anchors[a]).norm();
      if (d <= best) {
        best = d;
        pick = i;
      }
    }
    if (!pick)
      throw Error(ErrorKind::ValueOutOfRange, "anchor " + std::to_string(a), "no frame-0 track within 2 px");
    if (std::find(ids.begin(), ids.end(), *pick) == ids.end()) ids.push_back(*pick);
  }
  return ids;
}

SplatModel placed_model(const Scene& scene) {
  const double s = effective_placement(scene).scale;
  return s == 1.0 ? scene.splats : scaled(scene.splats, s);
}

std::vector<Posed> object_poses(const Scene& scene, const fs::path& out_dir) {
  std::vector<Posed> poses;
  if (fs::exists(out_dir / "poses.json")) {
    for (const PoseRecord& r : load_poses(out_dir / "poses.json")) poses.push_back(r.pose);
    if (poses.size() != scene.frame_count())
      throw Error(ErrorKind::DimensionMismatch, "poses.json", "pose count differs from frame count");
    return poses;
  }
  poses.assign(scene.frame_count(), effective_placement(scene).pose);
  return poses;
}

NormalMap render_normals(const SplatModel& model, const Camera& camera, const Posed& pose) {
  RenderOptions opts;
  opts.keep_weights = true;
  const RenderOutput r = render(model, camera, pose, opts);
  std::vector<Eigen::Vector3d> n(model.size(), Eigen::Vector3d::Zero());
  for (std::size_t i = 0; i < model.size(); ++i) {
    if (!r.rendered[i]) continue;
    const Splat& s = model.splats[i];
    Index axis = 0;
    s.scale.minCoeff(&axis);
    Eigen::Vector3d ni = pose.rotation * (s.rotation * Eigen::Vector3d::Unit(axis));
    if (ni.dot(pose.apply(s.position)) > 0) ni = -ni;
    n[i] = ni;
  }
  Image3d acc(r.alpha.rows(), r.alpha.cols(), 0.0);
  for (const PixelWeight& w : r.weights)
    for (int k = 0; k < 3; ++k) acc[k].data()[w.pixel] += w.weight * n[w.splat][k];
  NormalMap out{acc, BinaryMask::Constant(acc.rows(), acc.cols(), false)};
  for (Index row = 0; row < acc.rows(); ++row)
    for (Index col = 0; col < acc.cols(); ++col) {
      const Eigen::Vector3d v = acc.pixel(row, col);
      if (v.norm() > 1e-9) {
        out.normals.set_pixel(row, col, v.normalized());
        out.valid(row, col) = true;
      }
    }
  return out;
}

// --- metrics -----------------------------------------------------------------

namespace {

double pair_difference(const Image3d& a, const Image3d& b, const Planed& m) {
  const double wsum = m.sum();
  if (!(wsum > 0)) return -1.0;
  Planed d = Planed::Zero(a.rows(), a.cols());
  for (int k = 0; k < 3; ++k) d += (a[k] - b[k]).abs();
  return (m * d).sum() / (3.0 * wsum);
}

double mean_pairs(const std::vector<Image3d>& frames, const std::function<Planed(std::size_t)>& mask_for) {
  if (frames.size() < 2) throw Error(ErrorKind::ValueOutOfRange, "flicker_metric", "need at least 2 frames");
  double total = 0;
  int used = 0;
  for (std::size_t t = 0; t + 1 < frames.size(); ++t) {
    const double d = pair_difference(frames[t], frames[t + 1], mask_for(t));
    if (d < 0) continue;
    total += d;
    ++used;
  }
  return used ? total / used : 0.0;
}

}  // namespace

double flicker_metric(const std::vector<Image3d>& frames, const Planed& mask) {
  return mean_pairs(frames, [&](std::size_t) { return mask; });
}

double flicker_metric(const std::vector<Image3d>& frames, const std::vector<Planed>& masks) {
  if (masks.size() != frames.size()) throw Error(ErrorKind::DimensionMismatch, "flicker_metric", "one mask per frame");
  return mean_pairs(frames, [&](std::size_t t) -> Planed { return masks[t].min(masks[t + 1]); });
}

// --- stages ------------------------------------------------------------------

std::string_view to_string(PipelineStage stage) {
  switch (stage) {
    case PipelineStage::Track: return "track";
    case PipelineStage::Occlusion: return "occlusion";
    case PipelineStage::Preview: return "preview";
    case PipelineStage::Enhance: return "enhance";
    case PipelineStage::Smooth: return "smooth";
    case PipelineStage::Final: return "final";
  }
  return "unknown";
}

PipelineStage pipeline_stage_from_string(std::string_view name) {
  for (const PipelineStage s : kAllStages)
    if (to_string(s) == name) return s;
  throw Error(ErrorKind::ConfigError, "stages", "unknown stage '" + std::string(name) + "'");
}

std::set<PipelineStage> parse_stages(const std::string& list) {
  std::set<PipelineStage> out;
  std::size_t start = 0;
  while (start <= list.size()) {
    const std::size_t end = std::min(list.find(',', start), list.size());
    const std::string name = list.substr(start, end - start);
    if (!name.empty()) out.insert(pipeline_stage_from_string(name));
    start = end + 1;
  }
  return out;
}

std::string_view to_string(StageStatus status) {
  switch (status) {
    case StageStatus::Pending: return "pending";
    case StageStatus::Done: return "done";
    case StageStatus::Failed: return "failed";
    case StageStatus::Blocked: return "blocked";
  }
  return "unknown";
}

bool PipelineRun::ok() const {
  return std::all_of(stages.begin(), stages.end(), [](const StageRecord& r) { return r.status == StageStatus::Done; });
}

DirectoryLock::DirectoryLock(const fs::path& dir) : path_(dir / ".lock") {
  fs::create_directories(dir);
  for (int attempt = 0; attempt < 2; ++attempt) {
    const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd >= 0) {
      const std::string pid = std::to_string(::getpid()) + "\n";
      [[maybe_unused]] const auto n = ::write(fd, pid.data(), pid.size());
      ::close(fd);
      return;
    }
    if (errno != EEXIST) break;
    long holder = 0;
    std::ifstream(path_) >> holder;
    const bool stale = holder <= 0 || (::kill(static_cast<pid_t>(holder), 0) == -1 && errno == ESRCH);
    if (!stale) break;
    fs::remove(path_);
  }
  throw Error(ErrorKind::IoError, path_.string(), "another pipeline run holds this output directory");
}

DirectoryLock::~DirectoryLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

namespace {

fs::path mask_path(const fs::path& out, int t) { return out / "mask" / frame_name(t, "pfm"); }

struct StageContext {
  const Scene& scene;
  SceneConfig config;
  fs::path out;
  PlacementState placement;
  SplatModel model;
  json& metrics;
  std::vector<std::string>& warnings;

  int frames() const { return static_cast<int>(scene.frame_count()); }
  std::vector<Posed> poses() const {
    if (!fs::exists(out / "poses.json")) throw Error(ErrorKind::MissingFile, "out/poses.json", "run the track stage");
    return object_poses(scene, out);
  }
  std::vector<Planed> masks() const {
    std::vector<Planed> m;
    for (int t = 0; t < frames(); ++t) m.push_back(read_pfm_plane(mask_path(out, t)));
    return m;
  }
  void warn(std::string msg) { warnings.push_back(std::move(msg)); }
};

void stage_track(StageContext& ctx) {
  const std::vector<std::size_t> ids = select_tracks(ctx.scene, ctx.placement);
  const TrackingResult tr =
      track_object(ctx.scene.tracks, ids, ctx.scene.depth[0], ctx.scene.camera, ctx.placement.pose, ctx.config);
  save_poses(ctx.out / "poses.json", tr.poses);
  json rms = json::array();
  for (const PoseRecord& r : tr.poses) rms.push_back(r.rms_px);
  ctx.metrics["pnp_rms_px"] = rms;
  ctx.metrics["tracks_used"] = ids.size();
  for (const std::string& w : tr.warnings) ctx.warn(w);
}

void stage_occlusion(StageContext& ctx) {
  const std::vector<Posed> poses = ctx.poses();
  const std::vector<std::size_t> ids = select_tracks(ctx.scene, ctx.placement);
  std::vector<Eigen::Vector2d> first;
  for (const std::size_t id : ids) first.push_back(ctx.scene.tracks.points[0][id]);
  const AnchorSet3D anchors = lift_points(first, ctx.scene.depth[0], ctx.scene.camera, ctx.placement.pose);

  json scales = json::array();
  double prev_scale = 0;
  for (int t = 0; t < ctx.frames(); ++t) {
    const auto ut = static_cast<std::size_t>(t);
    std::vector<Eigen::Vector2d> px;
    std::vector<Eigen::Vector3d> xs;
    for (std::size_t j = 0; j < ids.size(); ++j)
      if (ctx.scene.tracks.visible[ut][ids[j]]) {
        px.push_back(ctx.scene.tracks.points[ut][ids[j]]);
        xs.push_back(anchors[j]);
      }
    double s = prev_scale;
    try {
      s = align_depth_scale(ctx.scene.depth[ut], px, xs, poses[ut]);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::DegenerateDepth || prev_scale <= 0) throw;
      ctx.warn("frame " + std::to_string(t) + ": no anchor depth, reusing previous depth scale");
    }
    if (!(s > 0)) throw Error(ErrorKind::DegenerateDepth, "frame " + std::to_string(t), "non-positive depth scale");
    prev_scale = s;
    scales.push_back(s);

    const RenderOutput r = render(ctx.model, ctx.scene.camera, poses[ut]);
    const DepthMap object_depth{r.depth, r.alpha > 0.0};
    const OcclusionMask occ = make_occlusion(ctx.scene.depth[ut], object_depth, s, ctx.config.occlusion_sigma);
    save_occlusion(ctx.out, t, occ.soft, occ.binary);
  }
  write_text(ctx.out / "occlusion" / "scales.json", scales.dump() + "\n");
  ctx.metrics["depth_scale"] = scales;
}

void stage_preview(StageContext& ctx) {
  const std::vector<Posed> poses = ctx.poses();
  std::vector<Image3d> previews;
  for (int t = 0; t < ctx.frames(); ++t) {
    const auto ut = static_cast<std::size_t>(t);
    const RenderOutput r = render(ctx.model, ctx.scene.camera, poses[ut]);
    const Planed occ = load_occlusion_soft(ctx.out, t);
    const Frame object{r.unpremultiplied(), ColorSpace::sRGB, t};
    previews.push_back(composite_preview(ctx.scene.frames[ut], object, r.alpha, occ).pixels);
    write_pfm(mask_path(ctx.out, t), visible_weight(r.alpha, occ));
  }
  save_frames(ctx.out, Stage::Preview, previews);
}

IntrinsicFrame preview_layers(const Scene& scene, int t, const Image3d& preview_srgb, const Planed& v) {
  IntrinsicFrame f;
  f.index = t;
  f.linear = srgb_to_linear(preview_srgb);
  const Index rows = f.linear.rows(), cols = f.linear.cols();
  if (!scene.layers) {
    f.albedo = f.linear;
    f.shading = Image3d(rows, cols, 1.0);
    f.residual = Image3d(rows, cols, 0.0);
    return f;
  }
  const IntrinsicLayers& base = (*scene.layers)[static_cast<std::size_t>(t)];
  const Planed rest = 1.0 - v;
  for (int k = 0; k < 3; ++k) {
    f.residual.c[static_cast<std::size_t>(k)] = (rest * base.residual[k]).min(f.linear[k]);
    const Planed diffuse = f.linear[k] - f.residual[k];
    f.shading.c[static_cast<std::size_t>(k)] = (v + rest * base.shading[k]).max(diffuse).max(1e-12);
    f.albedo.c[static_cast<std::size_t>(k)] = diffuse / f.shading[k];
  }
  return f;
}

NormalMap composite_normals(const StageContext& ctx, const Posed& pose, const Planed& v, int t) {
  const NormalMap object = render_normals(ctx.model, ctx.scene.camera, pose);
  const Index rows = v.rows(), cols = v.cols();
  NormalMap out{Image3d(rows, cols, 0.0), BinaryMask::Constant(rows, cols, false)};
  const NormalMap* scene_n = ctx.scene.normals ? &(*ctx.scene.normals)[static_cast<std::size_t>(t)] : nullptr;
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) {
      Eigen::Vector3d n = Eigen::Vector3d::Zero();
      if (object.valid(r, c)) n += v(r, c) * object.at(r, c);
      if (scene_n && scene_n->valid(r, c)) n += (1.0 - v(r, c)) * scene_n->at(r, c);
      if (n.norm() > 1e-6) {
        out.normals.set_pixel(r, c, n.normalized());
        out.valid(r, c) = true;
      }
    }
  return out;
}

void stage_enhance(StageContext& ctx) {
  const std::vector<Posed> poses = ctx.poses();
  const std::vector<Image3d> previews = load_frames(ctx.out, Stage::Preview, ctx.scene.frame_count());
  const std::vector<Planed> masks = ctx.masks();
  auto enhancer = make_enhancer(ctx.config.enhancer, ctx.config.lambertian, ctx.out / "work");
  std::vector<Image3d> refined;
  json clamped = json::array();
  for (int t = 0; t < ctx.frames(); ++t) {
    const auto ut = static_cast<std::size_t>(t);
    const Planed& v = masks[ut];
    if (!(v > 0.5).any()) {
      ctx.warn("frame " + std::to_string(t) + ": object not visible, passing the preview through");
      refined.push_back(previews[ut]);
      write_pfm(ctx.out / "shading" / frame_name(t, "pfm"), Image3d(v.rows(), v.cols(), 0.0));
      clamped.push_back(0);
      continue;
    }
    const int expand = ctx.config.expand_px >= 0 ? ctx.config.expand_px : default_expand_px(v);
    const RegionMasks regions = partition_regions(v, expand);
    const IntrinsicFrame layers = preview_layers(ctx.scene, t, previews[ut], v);
    const NormalMap normals = composite_normals(ctx, poses[ut], v, t);
    EnhanceResult res = enhance_frame(layers, regions, normals, *enhancer);
    if (res.clamped) ctx.warn("frame " + std::to_string(t) + ": clamped " + std::to_string(res.clamped) +
                              " negative shading samples");
    clamped.push_back(res.clamped);
    write_pfm(ctx.out / "shading" / frame_name(t, "pfm"), res.s_enhanced);
    refined.push_back(std::move(res.refined.pixels));
  }
  save_frames(ctx.out, Stage::Refined, refined);
  ctx.metrics["enhancer"] = enhancer->name();
  ctx.metrics["shading_clamped"] = clamped;
  ctx.metrics["residual_policy"] = "background only";
}

void stage_smooth(StageContext& ctx) {
  const std::vector<Posed> poses = ctx.poses();
  const std::vector<Image3d> refined = load_frames(ctx.out, Stage::Refined, ctx.scene.frame_count());
  const std::vector<Planed> masks = ctx.masks();
  const int n = ctx.frames();

  std::vector<ColorFitFrame> fit;
  for (int k = 0; k < n; ++k) {
    const auto uk = static_cast<std::size_t>(k);
    const Planed occ = load_occlusion_soft(ctx.out, k);
    const Planed gain = 1.0 - occ;
    const Planed rest = 1.0 - masks[uk];
    const Image3d offset = rest * ctx.scene.frames[uk].pixels;
    fit.push_back(make_fit_frame(ctx.model, ctx.scene.camera, poses[uk], refined[uk], &gain, &offset));
  }

  const SmoothingWindow window = gaussian_window(2 * (ctx.config.window / 2), ctx.config.window_sigma);
  ShFitOptions opts;
  opts.max_iters = ctx.config.sh_max_iters;
  SplatModel current = ctx.model;
  std::vector<Image3d> rerender;
  json losses = json::array(), iterations = json::array();
  int not_converged = 0;
  for (int t = 0; t < n; ++t) {
    std::vector<ColorFitFrame> frames;
    std::vector<double> weights;
    for (const WindowTap& tap : window_taps(window, t, n)) {
      frames.push_back(fit[static_cast<std::size_t>(tap.frame)]);
      weights.push_back(tap.weight);
    }
    AdamState adam;
    adam.lr_dc = ctx.config.lr_dc;
    adam.lr_ac = ctx.config.lr_ac;
    adam.reset(current.size());
    const ShFitResult res = optimize_sh_colors(current, frames, weights, adam, opts);
    if (!res.converged) ++not_converged;
    current = res.model;
    losses.push_back(res.final_loss);
    iterations.push_back(res.iterations);
    rerender.push_back(clamp(predict(fit[static_cast<std::size_t>(t)], sh_of(current)), 0.0, 1.0));
  }
  save_frames(ctx.out, Stage::Rerender, rerender);
  save_splats(ctx.out / "smoothed.ply", current);

  auto interp = make_interpolator(ctx.config.interpolator, ctx.out / "work");
  save_frames(ctx.out, Stage::Interp, interpolate_shadow_frames(refined, ctx.config.keyframe_stride, *interp));

  ctx.metrics["sh_loss"] = losses;
  ctx.metrics["sh_iterations"] = iterations;
  ctx.metrics["sh_not_converged"] = not_converged;
  if (not_converged)
    ctx.warn("smooth: " + std::to_string(not_converged) + " frames ended above the color-fit tolerance");
  if (n >= 2) {
    ctx.metrics["flicker_refined"] = flicker_metric(refined, masks);
    ctx.metrics["flicker_rerender"] = flicker_metric(rerender, masks);
  }
}

void stage_final(StageContext& ctx) {
  const std::size_t n = ctx.scene.frame_count();
  const std::vector<Image3d> rerender = load_frames(ctx.out, Stage::Rerender, n);
  const std::vector<Image3d> interp = load_frames(ctx.out, Stage::Interp, n);
  const std::vector<Planed> masks = ctx.masks();
  std::vector<Image3d> final_frames;
  for (std::size_t t = 0; t < n; ++t) final_frames.push_back(blend_final(masks[t], rerender[t], interp[t]));
  save_frames(ctx.out, Stage::Final, final_frames);
  if (n >= 2) ctx.metrics["flicker_final"] = flicker_metric(final_frames, masks);
}

}  // namespace

PipelineRun run_pipeline(const fs::path& scene_dir, const RunOptions& options) {
  return run_pipeline(load_scene(scene_dir), options);
}

PipelineRun run_pipeline(const Scene& scene, const RunOptions& options) {
  PipelineRun run;
  run.scene_dir = scene.dir;
  run.out_dir = options.out_dir.value_or(scene.dir / "out");

  SceneConfig config = options.config_path ? load_config(*options.config_path) : scene.config;
  if (options.enhancer) config.enhancer = *options.enhancer;
  if (options.seed) config.seed = *options.seed;
  config.validate();

  const std::set<PipelineStage> wanted =
      options.stages.empty() ? std::set<PipelineStage>(std::begin(kAllStages), std::end(kAllStages)) : options.stages;

  DirectoryLock lock(run.out_dir);
  const fs::path metrics_path = run.out_dir / "metrics.json";
  json metrics = fs::exists(metrics_path) ? read_json(metrics_path) : json::object();
  if (!metrics.is_object()) metrics = json::object();

  Scene effective = scene;
  effective.config = config;
  StageContext ctx{effective, config, run.out_dir, effective_placement(effective), {}, metrics, run.warnings};
  ctx.model = ctx.placement.scale == 1.0 ? effective.splats : scaled(effective.splats, ctx.placement.scale);

  bool blocked = false;
  for (const PipelineStage stage : kAllStages) {
    if (!wanted.count(stage)) continue;
    StageRecord rec;
    rec.stage = stage;
    if (blocked) {
      rec.status = StageStatus::Blocked;
      run.stages.push_back(rec);
      continue;
    }
    const auto start = std::chrono::steady_clock::now();
    try {
      switch (stage) {
        case PipelineStage::Track: stage_track(ctx); break;
        case PipelineStage::Occlusion: stage_occlusion(ctx); break;
        case PipelineStage::Preview: stage_preview(ctx); break;
        case PipelineStage::Enhance: stage_enhance(ctx); break;
        case PipelineStage::Smooth: stage_smooth(ctx); break;
        case PipelineStage::Final: stage_final(ctx); break;
      }
      rec.status = StageStatus::Done;
    } catch (const std::exception& e) {
      rec.status = StageStatus::Failed;
      rec.error = e.what();
      blocked = true;
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (options.verbose)
      std::cerr << "[" << to_string(stage) << "] " << to_string(rec.status) << " in " << rec.seconds << " s"
                << (rec.error.empty() ? "" : ": " + rec.error) << "\n";
    run.stages.push_back(rec);
  }

  json stages = metrics.value("stages", json::object());
  for (const StageRecord& r : run.stages) {
    json entry = {{"status", to_string(r.status)}};
    if (!r.error.empty()) entry["error"] = r.error;
    stages[std::string(to_string(r.stage))] = entry;
  }
  metrics["stages"] = stages;
  metrics["warnings"] = run.warnings;
  metrics["frames"] = scene.frame_count();
  write_text(metrics_path, metrics.dump(2) + "\n");
  run.metrics = std::move(metrics);
  return run;
}

}  // namespace gsplice
