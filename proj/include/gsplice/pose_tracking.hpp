#pragma once

#include "gsplice/camera.hpp"
#include "gsplice/scene_io.hpp"

#include <span>
#include <string>
#include <vector>

namespace gsplice {

using AnchorSet3D = std::vector<Eigen::Vector3d>;

/// Depth at a sub-pixel location: bilinear when all four neighbours are
/// valid, nearest valid pixel otherwise. Returns 0 when nothing valid is near.
double sample_depth(const DepthMap& depth, const Eigen::Vector2d& px);

/// X = P1^-1 (D(x) K^-1 [u, v, 1]^T) for every anchor.
AnchorSet3D lift_points(std::span<const Eigen::Vector2d> anchors, const DepthMap& depth, const Camera& camera,
                        const Posed& first_pose);

struct PnpOptions {
  int min_points = 6;
  int max_iterations = 100;
  double relative_tolerance = 1e-10;
  double initial_damping = 1e-3;
  double max_rms_px = 2.0;
};

struct PnpResult {
  Posed pose;
  double rms_px = 0;
  int iterations = 0;
  bool converged = true;            // false: residual above max_rms_px, best pose returned
  std::vector<double> cost_history; // summed squared error after each accepted step, starting with the initial cost
};

/// Damped Gauss-Newton (Levenberg-Marquardt) over a left axis-angle
/// increment, warm-started from `init`.
PnpResult solve_pnp(std::span<const Eigen::Vector3d> anchors, std::span<const Eigen::Vector2d> observed,
                    const Camera& camera, const Posed& init, const PnpOptions& options = {});

double reprojection_rms(std::span<const Eigen::Vector3d> anchors, std::span<const Eigen::Vector2d> observed,
                        const Camera& camera, const Posed& pose);

/// Bilateral filter: temporal Gaussian sigma_t (frames) times a range
/// Gaussian sigma_r (meters) on translation distance. Rotations are
/// hemisphere-aligned to the center quaternion, averaged and renormalized.
std::vector<Posed> smooth_poses(std::span<const Posed> poses, double sigma_t, double sigma_r);

struct TrackingResult {
  std::vector<PoseRecord> poses;
  std::vector<std::string> warnings;
};

/// Full per-frame chain: lift frame-0 anchors, solve every frame warm-started
/// from the previous pose, optionally smooth.
TrackingResult track_object(const TrackSet& tracks, std::span<const std::size_t> track_ids, const DepthMap& first_depth,
                            const Camera& camera, const Posed& first_pose, const SceneConfig& config);

}  // namespace gsplice
