#pragma once

#include "gsplice/scene_io.hpp"

#include <cstdint>
#include <vector>

namespace gsplice {

/// Generator settings for a textured skin plane seen by a moving camera,
/// lit by one known light, with a camera-fixed occluder and a splat ring.
struct SyntheticOptions {
  int width = 128;
  int height = 128;
  int frames = 10;
  int anchors = 12;
  bool occluder = true;
  bool layers = true;
  bool normals = true;
  /// Gaussian noise added to the visible track positions after frame 0, in px.
  double track_noise_px = 0.0;
  /// Per-frame depth scale ambiguity: depth map = z / rho_t with rho_0 = 1.
  bool vary_depth_scale = true;
  /// Focal length in px; 0 selects 140 px per 128 px of the shorter side.
  double focal_px = 0.0;
  /// Anchor ring radii around the image center, in px per 128 px of the shorter side.
  double anchor_radius_min = 20.0;
  double anchor_radius_max = 35.0;
  std::uint64_t seed = 0;
};

struct SyntheticScene {
  Scene scene;
  std::vector<Posed> true_poses;
  std::vector<double> depth_scale;            // rho_t
  std::vector<Eigen::Vector3d> anchor_points; // object frame
  Eigen::Vector3d light;                      // camera frame, unit vector toward the light
  /// Occluder rectangle in pixels: cols [0, occluder_cols), rows [occluder_row, height).
  int occluder_cols = 0;
  int occluder_row = 0;
  double occluder_depth = 0.3;
};

/// Fully in-memory scene. Depth, normals and layers are rounded to float32
/// and frames to 8 bits, so those match what load_scene returns after
/// write_synthetic_scene. Splat parameters are kept in double precision.
SyntheticScene make_synthetic_scene(const SyntheticOptions& options = {});

/// Writes the scene in the on-disk layout and returns it with `scene.dir` set.
SyntheticScene write_synthetic_scene(const fs::path& dir, const SyntheticOptions& options = {});
void write_scene(const fs::path& dir, const Scene& scene);

/// Ring of flattened gold splats of radius `radius` about the object z axis,
/// floating `lift` in front of the plane z = 0.
SplatModel bracelet_model(int count = 48, double radius = 0.05, double lift = 0.012, std::uint64_t seed = 1);

/// Random splats in a box in front of an identity camera, with random SH up to degree 3.
SplatModel random_splat_model(int count, std::uint64_t seed, double ac_scale = 0.2);

/// Trajectory used by the generator: a gentle rotation and drift around
/// an 8 degree tilt at 0.5 m.
Posed synthetic_pose(int t);

}  // namespace gsplice
