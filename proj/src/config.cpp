#include "gsplice/config.hpp"
#include "gsplice/error.hpp"

#include <fstream>
#include <functional>
#include <map>

namespace gsplice {

using nlohmann::json;

namespace {

void require(bool ok, const std::string& key, const std::string& what) {
  if (!ok) throw Error(ErrorKind::ConfigError, key, what);
}

template <typename T>
T get_as(const json& v, const std::string& key) {
  try {
    return v.get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ConfigError, key, e.what());
  }
}

using Handler = std::function<void(const json&)>;

void apply_object(const json& j, const std::string& scope, const std::map<std::string, Handler>& handlers) {
  require(j.is_object(), scope.empty() ? "<root>" : scope, "expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string key = scope.empty() ? it.key() : scope + "." + it.key();
    const auto h = handlers.find(it.key());
    if (h == handlers.end()) throw Error(ErrorKind::ConfigError, key, "unknown key");
    h->second(it.value());
  }
}

template <typename T>
Handler into(T& field, const std::string& key) {
  return [&field, key](const json& v) { field = get_as<T>(v, key); };
}

}  // namespace

json pose_to_json(const Posed& pose) {
  const Posed p = pose.normalized();
  return {{"q", {p.rotation.w(), p.rotation.x(), p.rotation.y(), p.rotation.z()}},
          {"T", {p.translation.x(), p.translation.y(), p.translation.z()}}};
}

Posed pose_from_json(const json& j) {
  const auto q = get_as<std::array<double, 4>>(j.at("q"), "q");
  const auto t = get_as<std::array<double, 3>>(j.at("T"), "T");
  Posed p;
  p.rotation = Eigen::Quaterniond(q[0], q[1], q[2], q[3]);
  require(p.rotation.norm() > 0, "q", "zero quaternion");
  p.rotation.normalize();
  p.translation = Eigen::Vector3d(t[0], t[1], t[2]);
  return p;
}

SceneConfig config_from_json(const json& j) {
  SceneConfig c;
  auto& a = c.augmentation;
  auto& l = c.lambertian;
  const std::map<std::string, Handler> aug = {
      {"lights", into(a.lights, "augmentation.lights")},
      {"tau", into(a.tau, "augmentation.tau")},
      {"alpha_range", into(a.alpha_range, "augmentation.alpha_range")},
      {"beta_range", into(a.beta_range, "augmentation.beta_range")},
      {"gamma_range", into(a.gamma_range, "augmentation.gamma_range")},
      {"flip_prob", into(a.flip_prob, "augmentation.flip_prob")},
      {"blur_radius", into(a.blur_radius, "augmentation.blur_radius")},
      {"blur_sigma", into(a.blur_sigma, "augmentation.blur_sigma")},
      {"patches_range", into(a.patches_range, "augmentation.patches_range")},
      {"amp_range", into(a.amp_range, "augmentation.amp_range")},
      {"sigma_range", into(a.sigma_range, "augmentation.sigma_range")},
  };
  const std::map<std::string, Handler> lamb = {
      {"alpha", into(l.alpha, "lambertian.alpha")},
      {"shadow_strength", into(l.shadow_strength, "lambertian.shadow_strength")},
      {"shadow_offset_px", into(l.shadow_offset_px, "lambertian.shadow_offset_px")},
      {"shadow_sigma", into(l.shadow_sigma, "lambertian.shadow_sigma")},
  };
  const std::map<std::string, Handler> root = {
      {"placement",
       [&c](const json& v) {
         require(v.is_object(), "placement", "expected an object");
         for (auto it = v.begin(); it != v.end(); ++it) {
           if (it.key() != "q" && it.key() != "T" && it.key() != "scale")
             throw Error(ErrorKind::ConfigError, "placement." + it.key(), "unknown key");
         }
         json pose = {{"q", v.value("q", json::array({1.0, 0.0, 0.0, 0.0}))},
                      {"T", v.value("T", json::array({0.0, 0.0, 0.0}))}};
         c.placement.pose = pose_from_json(pose);
         c.placement.scale = v.contains("scale") ? get_as<double>(v.at("scale"), "placement.scale") : 1.0;
       }},
      {"pnp_max_rms_px", into(c.pnp_max_rms_px, "pnp_max_rms_px")},
      {"pnp_min_points", into(c.pnp_min_points, "pnp_min_points")},
      {"smooth_poses", into(c.smooth_poses, "smooth_poses")},
      {"pose_sigma_t", into(c.pose_sigma_t, "pose_sigma_t")},
      {"pose_sigma_r", into(c.pose_sigma_r, "pose_sigma_r")},
      {"occlusion_sigma", into(c.occlusion_sigma, "occlusion_sigma")},
      {"expand_px", into(c.expand_px, "expand_px")},
      {"enhancer", into(c.enhancer, "enhancer")},
      {"lambertian", [&lamb](const json& v) { apply_object(v, "lambertian", lamb); }},
      {"window", into(c.window, "window")},
      {"window_sigma", into(c.window_sigma, "window_sigma")},
      {"keyframe_stride", into(c.keyframe_stride, "keyframe_stride")},
      {"sh_max_iters", into(c.sh_max_iters, "sh_max_iters")},
      {"lr_dc", into(c.lr_dc, "lr_dc")},
      {"lr_ac", into(c.lr_ac, "lr_ac")},
      {"interpolator", into(c.interpolator, "interpolator")},
      {"augmentation", [&aug](const json& v) { apply_object(v, "augmentation", aug); }},
      {"seed", into(c.seed, "seed")},
  };
  apply_object(j, "", root);
  c.validate();
  return c;
}

json config_to_json(const SceneConfig& c) {
  const auto& a = c.augmentation;
  const auto& l = c.lambertian;
  json pose = pose_to_json(c.placement.pose);
  return {
      {"placement", {{"q", pose["q"]}, {"T", pose["T"]}, {"scale", c.placement.scale}}},
      {"pnp_max_rms_px", c.pnp_max_rms_px},
      {"pnp_min_points", c.pnp_min_points},
      {"smooth_poses", c.smooth_poses},
      {"pose_sigma_t", c.pose_sigma_t},
      {"pose_sigma_r", c.pose_sigma_r},
      {"occlusion_sigma", c.occlusion_sigma},
      {"expand_px", c.expand_px},
      {"enhancer", c.enhancer},
      {"lambertian",
       {{"alpha", l.alpha},
        {"shadow_strength", l.shadow_strength},
        {"shadow_offset_px", l.shadow_offset_px},
        {"shadow_sigma", l.shadow_sigma}}},
      {"window", c.window},
      {"window_sigma", c.window_sigma},
      {"keyframe_stride", c.keyframe_stride},
      {"sh_max_iters", c.sh_max_iters},
      {"lr_dc", c.lr_dc},
      {"lr_ac", c.lr_ac},
      {"interpolator", c.interpolator},
      {"augmentation",
       {{"lights", a.lights},
        {"tau", a.tau},
        {"alpha_range", a.alpha_range},
        {"beta_range", a.beta_range},
        {"gamma_range", a.gamma_range},
        {"flip_prob", a.flip_prob},
        {"blur_radius", a.blur_radius},
        {"blur_sigma", a.blur_sigma},
        {"patches_range", a.patches_range},
        {"amp_range", a.amp_range},
        {"sigma_range", a.sigma_range}}},
      {"seed", c.seed},
  };
}

void SceneConfig::validate() const {
  require(placement.scale > 0, "placement.scale", "must be > 0");
  require(placement.pose.finite(), "placement", "pose must be finite");
  require(pnp_max_rms_px > 0, "pnp_max_rms_px", "must be > 0");
  require(pnp_min_points >= 4, "pnp_min_points", "must be >= 4");
  require(pose_sigma_t > 0, "pose_sigma_t", "must be > 0");
  require(pose_sigma_r > 0, "pose_sigma_r", "must be > 0");
  require(occlusion_sigma >= 0, "occlusion_sigma", "must be >= 0");
  require(enhancer == "identity" || enhancer == "lambertian" || enhancer.rfind("external:", 0) == 0, "enhancer",
          "expected identity | lambertian | external:<cmd>");
  require(lambertian.alpha > 0, "lambertian.alpha", "must be > 0");
  require(lambertian.shadow_strength >= 0 && lambertian.shadow_strength <= 1, "lambertian.shadow_strength",
          "must be in [0, 1]");
  require(lambertian.shadow_sigma >= 0, "lambertian.shadow_sigma", "must be >= 0");
  require(window >= 0 && window % 2 == 0, "window", "must be even and >= 0");
  require(window_sigma > 0, "window_sigma", "must be > 0");
  require(keyframe_stride >= 1, "keyframe_stride", "must be >= 1");
  require(sh_max_iters >= 0, "sh_max_iters", "must be >= 0");
  require(lr_dc > 0 && lr_ac > 0, "lr_dc", "learning rates must be > 0");
  require(interpolator == "crossfade" || interpolator.rfind("external:", 0) == 0, "interpolator",
          "expected crossfade | external:<cmd>");
  const auto& a = augmentation;
  require(a.lights >= 1, "augmentation.lights", "must be >= 1");
  require(a.tau > 0, "augmentation.tau", "must be > 0");
  require(a.alpha_range[0] >= 1.0 && a.alpha_range[0] <= a.alpha_range[1] && a.alpha_range[1] <= 6.0,
          "augmentation.alpha_range", "must be an ordered sub-range of [1, 6]");
  require(a.beta_range[0] >= 0 && a.beta_range[0] <= a.beta_range[1] && a.beta_range[1] <= 1,
          "augmentation.beta_range", "must be an ordered sub-range of [0, 1]");
  require(a.gamma_range[0] >= 0.5 && a.gamma_range[0] <= a.gamma_range[1] && a.gamma_range[1] <= 1.5,
          "augmentation.gamma_range", "must be an ordered sub-range of [0.5, 1.5]");
  require(a.flip_prob >= 0 && a.flip_prob <= 1, "augmentation.flip_prob", "must be in [0, 1]");
  require(a.blur_radius >= 0, "augmentation.blur_radius", "must be >= 0");
  require(a.blur_sigma > 0, "augmentation.blur_sigma", "must be > 0");
  require(a.patches_range[0] >= 0 && a.patches_range[0] <= a.patches_range[1], "augmentation.patches_range",
          "must be ordered and >= 0");
  require(a.amp_range[0] <= a.amp_range[1], "augmentation.amp_range", "must be ordered");
  require(a.sigma_range[0] > 0 && a.sigma_range[0] <= a.sigma_range[1], "augmentation.sigma_range",
          "must be ordered and > 0");
}

SceneConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorKind::MissingFile, path.string());
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ParseError, path.string(), e.what());
  }
  try {
    return config_from_json(j);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ":" + e.subject(), e.what());
  }
}

}  // namespace gsplice
