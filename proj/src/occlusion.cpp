#include "gsplice/occlusion.hpp"
#include "gsplice/error.hpp"
#include "gsplice/pose_tracking.hpp"

namespace gsplice {

double align_depth_scale(const DepthMap& depth, std::span<const Eigen::Vector2d> anchors2d,
                         std::span<const Eigen::Vector3d> anchors3d, const Posed& pose) {
  if (anchors2d.size() != anchors3d.size())
    throw Error(ErrorKind::DimensionMismatch, "align_depth_scale", "2D and 3D anchor counts differ");
  double num = 0, den = 0;
  for (std::size_t i = 0; i < anchors2d.size(); ++i) {
    const double d = sample_depth(depth, anchors2d[i]);
    if (!(d > 0) || !std::isfinite(d)) continue;
    num += d * pose.apply(anchors3d[i]).z();
    den += d * d;
  }
  if (!(den > 0)) throw Error(ErrorKind::DegenerateDepth, "align_depth_scale", "no anchor has a valid depth");
  return num / den;
}

BinaryMask occlusion_map(const DepthMap& scene_depth, const DepthMap& object_depth, double s) {
  if (scene_depth.depth.rows() != object_depth.depth.rows() || scene_depth.depth.cols() != object_depth.depth.cols())
    throw Error(ErrorKind::DimensionMismatch, "occlusion_map", "scene and object depth differ in size");
  if (!(s > 0)) throw Error(ErrorKind::ValueOutOfRange, "occlusion_map", "scale must be > 0");
  return scene_depth.valid && object_depth.valid && (s * scene_depth.depth < object_depth.depth);
}

Planed soften_mask(const BinaryMask& binary, double sigma) {
  if (sigma < 0) throw Error(ErrorKind::ValueOutOfRange, "soften_mask", "sigma must be >= 0");
  return gaussian_blur(binary.cast<double>(), sigma).max(0.0).min(1.0);
}

OcclusionMask make_occlusion(const DepthMap& scene_depth, const DepthMap& object_depth, double s, double sigma) {
  OcclusionMask out;
  out.binary = occlusion_map(scene_depth, object_depth, s);
  out.soft = soften_mask(out.binary, sigma);
  return out;
}

Planed visible_weight(const Planed& object_alpha, const Planed& occlusion_soft) {
  return object_alpha * (1.0 - occlusion_soft);
}

Frame composite_preview(const Frame& scene, const Frame& object_render, const Planed& object_alpha,
                        const Planed& occlusion_soft) {
  const Index rows = scene.pixels.rows(), cols = scene.pixels.cols();
  if (object_render.pixels.rows() != rows || object_render.pixels.cols() != cols || object_alpha.rows() != rows ||
      object_alpha.cols() != cols || occlusion_soft.rows() != rows || occlusion_soft.cols() != cols)
    throw Error(ErrorKind::DimensionMismatch, "composite_preview");
  const Planed v = visible_weight(object_alpha, occlusion_soft);
  const Planed rest = 1.0 - v;
  return {v * object_render.pixels + rest * scene.pixels, scene.color_space, scene.index};
}

}  // namespace gsplice
