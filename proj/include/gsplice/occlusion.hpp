#pragma once

#include "gsplice/camera.hpp"
#include "gsplice/image.hpp"
#include "gsplice/scene_io.hpp"

#include <span>

namespace gsplice {

struct OcclusionMask {
  Planed soft;
  BinaryMask binary;
};

/// Least-squares scale s minimizing sum_i (s D(x_i) - [P X_i]_z)^2, i.e.
/// s = sum D z / sum D^2 over anchors with valid depth.
double align_depth_scale(const DepthMap& depth, std::span<const Eigen::Vector2d> anchors2d,
                         std::span<const Eigen::Vector3d> anchors3d, const Posed& pose);

/// 1 where both depths are valid and s * scene < object. Equal depths are unoccluded.
BinaryMask occlusion_map(const DepthMap& scene_depth, const DepthMap& object_depth, double s);

Planed soften_mask(const BinaryMask& binary, double sigma);
OcclusionMask make_occlusion(const DepthMap& scene_depth, const DepthMap& object_depth, double s, double sigma);

/// Visible-object weight v = alpha * (1 - occlusion).
Planed visible_weight(const Planed& object_alpha, const Planed& occlusion_soft);

/// v * object + (1 - v) * scene, with `object` unpremultiplied.
Frame composite_preview(const Frame& scene, const Frame& object_render, const Planed& object_alpha,
                        const Planed& occlusion_soft);

}  // namespace gsplice
