#pragma once

#include "gsplice/camera.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>

namespace gsplice {

struct Placement {
  Posed pose;          // initial object-to-camera pose P_1
  double scale = 1.0;  // uniform object scale applied before the pose
};

struct AugmentationParams {
  int lights = 4;
  double tau = 0.2;
  std::array<double, 2> alpha_range{1.0, 6.0};
  std::array<double, 2> beta_range{0.0, 1.0};
  std::array<double, 2> gamma_range{0.5, 1.5};
  double flip_prob = 0.5;
  double blur_radius = 15.0;
  double blur_sigma = 4.0;
  std::array<int, 2> patches_range{1, 4};
  std::array<double, 2> amp_range{-0.4, 0.1};
  std::array<double, 2> sigma_range{5.0, 25.0};
};

struct LambertianParams {
  double alpha = 1.0;            // sharpness exponent of the relit shading
  double shadow_strength = 0.5;  // fractional darkening at full shadow
  double shadow_offset_px = 6.0; // silhouette shift along the projected light
  double shadow_sigma = 3.0;     // silhouette blur
};

/// Every tunable of the pipeline. The JSON form rejects unknown keys.
struct SceneConfig {
  Placement placement;

  // pose tracking
  double pnp_max_rms_px = 2.0;
  int pnp_min_points = 6;
  bool smooth_poses = true;
  double pose_sigma_t = 3.0;
  double pose_sigma_r = 0.05;

  // occlusion
  double occlusion_sigma = 2.0;

  // shading
  int expand_px = -1;  // < 0 selects 25% of the mask bounding-box diagonal
  std::string enhancer = "identity";
  LambertianParams lambertian;

  // temporal smoothing
  int window = 4;
  double window_sigma = 1.5;
  int keyframe_stride = 10;
  int sh_max_iters = 500;
  double lr_dc = 1e-2;
  double lr_ac = 1e-4;
  std::string interpolator = "crossfade";

  AugmentationParams augmentation;
  std::uint64_t seed = 0;

  /// Throws Error(ConfigError) naming the first out-of-range parameter.
  void validate() const;
};

SceneConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const SceneConfig& cfg);
SceneConfig load_config(const std::filesystem::path& path);

nlohmann::json pose_to_json(const Posed& pose);
Posed pose_from_json(const nlohmann::json& j);

}  // namespace gsplice
