#include "gsplice/synthetic.hpp"
#include "gsplice/error.hpp"
#include "gsplice/intrinsics.hpp"
#include "gsplice/rng.hpp"

#include <cmath>
#include <numbers>

namespace gsplice {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

Planed f32(const Planed& p) { return p.cast<float>().cast<double>(); }
Image3d f32(const Image3d& im) { return {f32(im[0]), f32(im[1]), f32(im[2])}; }

double gaussian(CounterRng& rng) {
  const double u1 = 1.0 - rng.uniform();
  const double u2 = rng.uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Eigen::Quaterniond random_rotation(CounterRng& rng) {
  Eigen::Quaterniond q(gaussian(rng), gaussian(rng), gaussian(rng), gaussian(rng));
  return q.normalized();
}

struct SurfaceSample {
  double depth = 0;       // camera z
  Eigen::Vector3d normal; // camera frame
  Eigen::Vector3d albedo;
  bool occluder = false;
};

}  // namespace

Posed synthetic_pose(int t) {
  const double s = static_cast<double>(t);
  const Eigen::Quaterniond q = Eigen::AngleAxisd((8.0 + 2.0 * std::sin(0.3 * s)) * kDeg, Eigen::Vector3d::UnitX()) *
                               Eigen::AngleAxisd(3.0 * kDeg * std::sin(0.2 * s), Eigen::Vector3d::UnitY()) *
                               Eigen::AngleAxisd(0.02 * s, Eigen::Vector3d::UnitZ());
  const Eigen::Vector3d T(0.01 * std::sin(0.25 * s), 0.008 * std::sin(0.17 * s), 0.5 + 0.01 * std::sin(0.13 * s));
  return Posed{q, T}.normalized();
}

SplatModel bracelet_model(int count, double radius, double lift, std::uint64_t seed) {
  if (count < 1) throw Error(ErrorKind::ValueOutOfRange, "count", "must be >= 1");
  CounterRng rng(seed);
  const Eigen::Vector3d gold(0.85, 0.65, 0.25);
  SplatModel model;
  for (int i = 0; i < count; ++i) {
    const double phi = 2.0 * std::numbers::pi * i / count;
    Splat s;
    s.position = {radius * std::cos(phi), radius * std::sin(phi), -lift};
    s.scale = {0.006, 0.006, 0.003};
    s.rotation = Eigen::Quaterniond(Eigen::AngleAxisd(phi, Eigen::Vector3d::UnitZ()));
    s.opacity = 0.9;
    s.sh.col(0) = (gold.array() - 0.5).matrix() / kShC0;
    for (int k = 1; k < kShCoeffs; ++k)
      for (int ch = 0; ch < 3; ++ch) s.sh(ch, k) = rng.uniform(-0.02, 0.02);
    model.splats.push_back(s);
  }
  return model;
}

SplatModel random_splat_model(int count, std::uint64_t seed, double ac_scale) {
  CounterRng rng(seed);
  SplatModel model;
  for (int i = 0; i < count; ++i) {
    Splat s;
    s.position = {rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(1.5, 3.0)};
    s.scale = {rng.uniform(0.02, 0.08), rng.uniform(0.02, 0.08), rng.uniform(0.02, 0.08)};
    s.rotation = random_rotation(rng);
    s.opacity = rng.uniform(0.3, 0.95);
    for (int ch = 0; ch < 3; ++ch) {
      s.sh(ch, 0) = rng.uniform(-0.8, 0.8);
      for (int k = 1; k < kShCoeffs; ++k) s.sh(ch, k) = rng.uniform(-ac_scale, ac_scale);
    }
    model.splats.push_back(s);
  }
  return model;
}

SyntheticScene make_synthetic_scene(const SyntheticOptions& o) {
  if (o.width < 32 || o.height < 32) throw Error(ErrorKind::ValueOutOfRange, "width/height", "must be >= 32");
  if (o.frames < 1) throw Error(ErrorKind::ValueOutOfRange, "frames", "must be >= 1");
  if (o.anchors < 1) throw Error(ErrorKind::ValueOutOfRange, "anchors", "must be >= 1");
  if (!(o.anchor_radius_min >= 0 && o.anchor_radius_max >= o.anchor_radius_min))
    throw Error(ErrorKind::ValueOutOfRange, "anchor_radius", "need 0 <= min <= max");
  if (o.focal_px < 0) throw Error(ErrorKind::ValueOutOfRange, "focal_px", "must be >= 0");

  SyntheticScene out;
  Scene& scene = out.scene;
  const double unit = std::min(o.width, o.height) / 128.0;
  Camera& k = scene.camera;
  k.width = o.width;
  k.height = o.height;
  k.fx = k.fy = o.focal_px > 0 ? o.focal_px : 140.0 * unit;
  k.cx = (o.width - 1) / 2.0;
  k.cy = (o.height - 1) / 2.0;

  out.light = Eigen::Vector3d(0.4, -0.5, -0.75).normalized();
  out.occluder_cols = o.occluder ? static_cast<int>(0.45 * o.width) : 0;
  out.occluder_row = o.occluder ? o.height / 2 : o.height;
  const auto in_occluder = [&](const Eigen::Vector2d& px) {
    return px.x() < out.occluder_cols - 0.5 && px.y() > out.occluder_row - 0.5;
  };

  const Eigen::Vector3d tint(1.0, 0.96, 0.9);
  const Eigen::Vector3d skin_a(0.80, 0.60, 0.50), skin_b(0.66, 0.48, 0.40), occluder_albedo(0.35, 0.33, 0.30);
  const Eigen::Vector2d spot(o.width - 12.0 * unit, 12.0 * unit);
  const double period = 0.02;

  for (int t = 0; t < o.frames; ++t) {
    const Posed pose = synthetic_pose(t);
    out.true_poses.push_back(pose);
    const double rho = o.vary_depth_scale && t > 0 ? 1.0 + 0.15 * std::sin(0.7 * t) : 1.0;
    out.depth_scale.push_back(rho);

    const Eigen::Vector3d n_plane = pose.rotation * Eigen::Vector3d::UnitZ();
    const Eigen::Matrix3d Rt = pose.rotation.toRotationMatrix().transpose();
    Planed depth(o.height, o.width);
    Image3d normals(o.height, o.width), albedo(o.height, o.width), shading(o.height, o.width),
        residual(o.height, o.width);
    for (Index r = 0; r < o.height; ++r)
      for (Index c = 0; c < o.width; ++c) {
        const Eigen::Vector2d px(static_cast<double>(c), static_cast<double>(r));
        SurfaceSample s;
        if (in_occluder(px)) {
          s.occluder = true;
          s.depth = out.occluder_depth;
          s.normal = -Eigen::Vector3d::UnitZ();
          s.albedo = occluder_albedo;
        } else {
          const Eigen::Vector3d ray = k.back_project(px, 1.0);
          s.depth = n_plane.dot(pose.translation) / n_plane.dot(ray);
          const Eigen::Vector3d X = Rt * (s.depth * ray - pose.translation);
          const double a = 2.0 * std::numbers::pi / period;
          const Eigen::Vector3d n_obj(0.25 * std::sin(a * X.x()), 0.25 * std::cos(0.8 * a * X.y()), -1.0);
          s.normal = pose.rotation * n_obj.normalized();
          const long cell = std::lround(std::floor(X.x() / period)) + std::lround(std::floor(X.y() / period));
          s.albedo = (cell % 2 == 0) ? skin_a : skin_b;
        }
        depth(r, c) = s.depth / rho;
        const double lambert = std::max(0.0, s.normal.dot(out.light));
        const double d2 = (px - spot).squaredNorm();
        const double res = s.occluder ? 0.0 : 0.05 * std::exp(-d2 / (2.0 * 9.0 * unit * unit));
        for (int ch = 0; ch < 3; ++ch) {
          normals[ch](r, c) = s.normal[ch];
          shading[ch](r, c) = (0.35 + 0.65 * lambert) * tint[ch];
          albedo[ch](r, c) = s.albedo[ch];
          residual[ch](r, c) = res;
        }
      }

    Frame frame;
    frame.index = t;
    frame.pixels = quantize8(linear_to_srgb(recompose(albedo, shading, residual)));
    scene.frames.push_back(frame);
    scene.depth.push_back(DepthMap::from_depth(f32(depth)));

    if (o.layers) {
      // Re-derive albedo from the quantized frame so the layers recompose it exactly.
      const Image3d lin = srgb_to_linear(frame.pixels);
      Image3d exact_albedo;
      for (int ch = 0; ch < 3; ++ch)
        exact_albedo[ch] = ((lin[ch] - residual[ch]) / shading[ch]).max(0.0).min(1.0);
      if (!scene.layers) scene.layers.emplace();
      scene.layers->push_back({f32(exact_albedo), f32(shading), f32(residual)});
    }
    if (o.normals) {
      if (!scene.normals) scene.normals.emplace();
      Image3d nf = f32(normals);
      scene.normals->push_back({nf, BinaryMask::Constant(o.height, o.width, true)});
    }
  }

  // Anchors: integer pixels on a ring around the image center, clear of the occluder.
  const Posed& p0 = out.true_poses.front();
  const Eigen::Vector3d n0 = p0.rotation * Eigen::Vector3d::UnitZ();
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  std::vector<Eigen::Vector2d> pixels;
  for (int i = 0; static_cast<int>(pixels.size()) < o.anchors; ++i) {
    if (i > 100 * o.anchors) throw Error(ErrorKind::Degenerate, "anchors", "could not place anchors");
    const double radius =
        (o.anchor_radius_min + (o.anchor_radius_max - o.anchor_radius_min) * std::fmod(i * 0.6180339887, 1.0)) * unit;
    const double theta = golden * i;
    const Eigen::Vector2d px(std::round(k.cx + radius * std::cos(theta)), std::round(k.cy + radius * std::sin(theta)));
    if (!k.contains(px) || in_occluder(px)) continue;
    bool duplicate = false;
    for (const auto& q : pixels) duplicate = duplicate || (q - px).squaredNorm() < 0.5;
    if (duplicate) continue;
    pixels.push_back(px);
  }
  for (const auto& px : pixels) {
    const Eigen::Vector3d ray = k.back_project(px, 1.0);
    const double z = n0.dot(p0.translation) / n0.dot(ray);
    out.anchor_points.push_back(p0.inverse().apply(z * ray));
  }

  CounterRng noise(CounterRng::derive(o.seed, 0x7261636bULL));
  TrackSet& tracks = scene.tracks;
  for (int t = 0; t < o.frames; ++t) {
    std::vector<Eigen::Vector2d> pts;
    std::vector<bool> vis;
    for (const auto& X : out.anchor_points) {
      const Eigen::Vector3d xc = out.true_poses[static_cast<std::size_t>(t)].apply(X);
      Eigen::Vector2d px = k.project(xc);
      if (t > 0 && o.track_noise_px > 0) px += o.track_noise_px * Eigen::Vector2d(gaussian(noise), gaussian(noise));
      const bool visible = xc.z() > 0 && k.contains(px) && !in_occluder(px);
      pts.push_back(px);
      vis.push_back(visible);
    }
    tracks.points.push_back(std::move(pts));
    tracks.visible.push_back(std::move(vis));
  }

  scene.splats = bracelet_model();
  scene.config.placement.pose = p0;
  scene.config.placement.scale = 1.0;
  scene.config.seed = o.seed;
  return out;
}

void write_scene(const fs::path& dir, const Scene& scene) {
  fs::create_directories(dir);
  save_intrinsics(dir / "intrinsics.json", scene.camera);
  for (std::size_t t = 0; t < scene.frame_count(); ++t) {
    const int i = static_cast<int>(t);
    write_png(dir / "frames" / frame_name(i, "png"), scene.frames[t].pixels);
    write_pfm(dir / "depth" / frame_name(i, "pfm"), scene.depth[t].depth);
    if (scene.normals) write_pfm(dir / "normals" / frame_name(i, "pfm"), (*scene.normals)[t].normals);
    if (scene.layers) {
      const IntrinsicLayers& l = (*scene.layers)[t];
      write_pfm(dir / "albedo" / frame_name(i, "pfm"), l.albedo);
      write_pfm(dir / "shading" / frame_name(i, "pfm"), l.shading);
      write_pfm(dir / "residual" / frame_name(i, "pfm"), l.residual);
    }
  }
  save_tracks(dir / "tracks.json", scene.tracks);
  save_splats(dir / "splats.ply", scene.splats);
  write_text(dir / "config.json", config_to_json(scene.config).dump(2) + "\n");
}

SyntheticScene write_synthetic_scene(const fs::path& dir, const SyntheticOptions& options) {
  SyntheticScene s = make_synthetic_scene(options);
  write_scene(dir, s.scene);
  s.scene.dir = dir;
  return s;
}

}  // namespace gsplice
