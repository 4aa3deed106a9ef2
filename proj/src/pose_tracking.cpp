#include "gsplice/pose_tracking.hpp"
#include "gsplice/error.hpp"

#include <Eigen/Dense>

#include <cmath>

namespace gsplice {

double sample_depth(const DepthMap& depth, const Eigen::Vector2d& px) {
  const Index cols = depth.depth.cols(), rows = depth.depth.rows();
  const double x = px.x(), y = px.y();
  if (!(x >= 0 && y >= 0 && x <= static_cast<double>(cols - 1) && y <= static_cast<double>(rows - 1))) return 0.0;
  const Index x0 = static_cast<Index>(std::floor(x)), y0 = static_cast<Index>(std::floor(y));
  const Index x1 = std::min<Index>(x0 + 1, cols - 1), y1 = std::min<Index>(y0 + 1, rows - 1);
  if (depth.valid(y0, x0) && depth.valid(y0, x1) && depth.valid(y1, x0) && depth.valid(y1, x1))
    return bilinear(depth.depth, x, y);
  const Index xn = static_cast<Index>(std::lround(x)), yn = static_cast<Index>(std::lround(y));
  return depth.valid(yn, xn) ? depth.depth(yn, xn) : 0.0;
}

AnchorSet3D lift_points(std::span<const Eigen::Vector2d> anchors, const DepthMap& depth, const Camera& camera,
                        const Posed& first_pose) {
  const Posed to_world = first_pose.inverse();
  AnchorSet3D out;
  out.reserve(anchors.size());
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    const double d = sample_depth(depth, anchors[i]);
    if (!(d > 0) || !std::isfinite(d))
      throw Error(ErrorKind::InvalidDepth, "anchor " + std::to_string(i), "no valid depth at the anchor");
    out.push_back(to_world.apply(camera.back_project(anchors[i], d)));
  }
  return out;
}

double reprojection_rms(std::span<const Eigen::Vector3d> anchors, std::span<const Eigen::Vector2d> observed,
                        const Camera& camera, const Posed& pose) {
  if (anchors.empty()) return 0.0;
  double sse = 0;
  for (std::size_t i = 0; i < anchors.size(); ++i)
    sse += (camera.project(pose.apply(anchors[i])) - observed[i]).squaredNorm();
  return std::sqrt(sse / static_cast<double>(anchors.size()));
}

namespace {

double summed_squared_error(std::span<const Eigen::Vector3d> anchors, std::span<const Eigen::Vector2d> observed,
                            const Camera& camera, const Posed& pose) {
  double sse = 0;
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    const Eigen::Vector3d pc = pose.apply(anchors[i]);
    if (!(pc.z() > 0)) return std::numeric_limits<double>::infinity();
    sse += (camera.project(pc) - observed[i]).squaredNorm();
  }
  return sse;
}

bool collinear(std::span<const Eigen::Vector3d> pts) {
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& p : pts) cov += (p - mean) * (p - mean).transpose();
  const Eigen::Vector3d ev = Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d>(cov).eigenvalues();
  return !(ev[2] > 0) || ev[1] <= 1e-12 * ev[2];
}

}  // namespace

PnpResult solve_pnp(std::span<const Eigen::Vector3d> anchors, std::span<const Eigen::Vector2d> observed,
                    const Camera& camera, const Posed& init, const PnpOptions& options) {
  if (anchors.size() != observed.size())
    throw Error(ErrorKind::DimensionMismatch, "solve_pnp", "anchor and observation counts differ");
  if (anchors.size() < static_cast<std::size_t>(options.min_points))
    throw Error(ErrorKind::Degenerate, "solve_pnp",
                "need >= " + std::to_string(options.min_points) + " correspondences, got " +
                    std::to_string(anchors.size()));
  if (!init.finite()) throw Error(ErrorKind::ValueOutOfRange, "solve_pnp", "initial pose is not finite");
  if (collinear(anchors)) throw Error(ErrorKind::Degenerate, "solve_pnp", "anchors are collinear");

  const std::size_t n = anchors.size();
  PnpResult result;
  result.pose = init.normalized();
  double cost = summed_squared_error(anchors, observed, camera, result.pose);
  result.cost_history.push_back(cost);
  double lambda = options.initial_damping;

  Eigen::MatrixXd jac(static_cast<Index>(2 * n), 6);
  Eigen::VectorXd res(static_cast<Index>(2 * n));

  for (int iter = 0; iter < options.max_iterations && cost > 0; ++iter) {
    result.iterations = iter + 1;
    for (std::size_t i = 0; i < n; ++i) {
      const Eigen::Vector3d pc = result.pose.apply(anchors[i]);
      const double iz = 1.0 / pc.z();
      const Eigen::Vector2d proj = camera.project(pc);
      res.segment<2>(static_cast<Index>(2 * i)) = proj - observed[i];
      Eigen::Matrix<double, 2, 3> dproj;
      dproj << camera.fx * iz, 0, -camera.fx * pc.x() * iz * iz, 0, camera.fy * iz, -camera.fy * pc.y() * iz * iz;
      // d(exp(w) pc + dt) / d(w, dt) at zero: [-[pc]x, I]
      Eigen::Matrix3d skew;
      skew << 0, -pc.z(), pc.y(), pc.z(), 0, -pc.x(), -pc.y(), pc.x(), 0;
      jac.block<2, 3>(static_cast<Index>(2 * i), 0) = -dproj * skew;
      jac.block<2, 3>(static_cast<Index>(2 * i), 3) = dproj;
    }
    const Eigen::Matrix<double, 6, 6> jtj = jac.transpose() * jac;
    const Eigen::Matrix<double, 6, 1> jtr = jac.transpose() * res;
    if (jtr.norm() == 0) break;

    bool accepted = false;
    while (lambda < 1e16) {
      Eigen::Matrix<double, 6, 6> h = jtj;
      h.diagonal().array() += lambda;
      const Eigen::Matrix<double, 6, 1> step = -h.ldlt().solve(jtr);
      const Eigen::Quaterniond dq = exp_so3<double>(step.head<3>());
      Posed candidate{(dq * result.pose.rotation).normalized(), dq * result.pose.translation + step.tail<3>()};
      const double new_cost = summed_squared_error(anchors, observed, camera, candidate);
      if (new_cost < cost) {
        const double rel = (cost - new_cost) / std::max(cost, 1e-300);
        result.pose = candidate.normalized();
        cost = new_cost;
        result.cost_history.push_back(cost);
        lambda = std::max(lambda / 10.0, 1e-12);
        accepted = true;
        if (rel < options.relative_tolerance) iter = options.max_iterations;
        break;
      }
      lambda *= 10.0;
    }
    if (!accepted) break;
  }
  result.rms_px = std::sqrt(cost / static_cast<double>(n));
  result.converged = result.rms_px <= options.max_rms_px;
  return result;
}

std::vector<Posed> smooth_poses(std::span<const Posed> poses, double sigma_t, double sigma_r) {
  if (!(sigma_t > 0) || !(sigma_r > 0)) throw Error(ErrorKind::ValueOutOfRange, "smooth_poses", "sigmas must be > 0");
  const auto n = static_cast<long>(poses.size());
  const long radius = static_cast<long>(std::ceil(3.0 * sigma_t));
  std::vector<Posed> out(poses.begin(), poses.end());
  if (n <= 1) return out;
  for (long t = 0; t < n; ++t) {
    const Posed& center = poses[static_cast<std::size_t>(t)];
    const Eigen::Vector4d q0 = center.rotation.normalized().coeffs();
    Eigen::Vector3d tsum = Eigen::Vector3d::Zero();
    Eigen::Vector4d qsum = Eigen::Vector4d::Zero();
    double wsum = 0;
    for (long k = std::max(0L, t - radius); k <= std::min(n - 1, t + radius); ++k) {
      const Posed& p = poses[static_cast<std::size_t>(k)];
      const double dt = static_cast<double>(k - t);
      const double dr = (p.translation - center.translation).norm();
      const double w = std::exp(-0.5 * dt * dt / (sigma_t * sigma_t)) * std::exp(-0.5 * dr * dr / (sigma_r * sigma_r));
      Eigen::Vector4d q = p.rotation.normalized().coeffs();
      if (q.dot(q0) < 0) q = -q;
      tsum += w * p.translation;
      qsum += w * q;
      wsum += w;
    }
    Eigen::Quaterniond q;
    q.coeffs() = qsum / qsum.norm();
    out[static_cast<std::size_t>(t)] = Posed{q, tsum / wsum}.normalized();
  }
  return out;
}

TrackingResult track_object(const TrackSet& tracks, std::span<const std::size_t> track_ids, const DepthMap& first_depth,
                            const Camera& camera, const Posed& first_pose, const SceneConfig& config) {
  TrackingResult out;
  if (tracks.frames() == 0) return out;
  std::vector<Eigen::Vector2d> first;
  for (const std::size_t id : track_ids) first.push_back(tracks.points[0][id]);
  const AnchorSet3D anchors = lift_points(first, first_depth, camera, first_pose);

  PnpOptions opts;
  opts.min_points = config.pnp_min_points;
  opts.max_rms_px = config.pnp_max_rms_px;

  std::vector<Posed> raw;
  std::vector<double> rms;
  Posed prev = first_pose;
  for (std::size_t t = 0; t < tracks.frames(); ++t) {
    std::vector<Eigen::Vector3d> xs;
    std::vector<Eigen::Vector2d> obs;
    for (std::size_t j = 0; j < track_ids.size(); ++j) {
      const std::size_t id = track_ids[j];
      if (!tracks.visible[t][id]) continue;
      xs.push_back(anchors[j]);
      obs.push_back(tracks.points[t][id]);
    }
    if (xs.size() < static_cast<std::size_t>(opts.min_points)) {
      out.warnings.push_back("frame " + std::to_string(t) + ": only " + std::to_string(xs.size()) +
                             " visible anchors, reusing previous pose");
      raw.push_back(prev);
      rms.push_back(reprojection_rms(xs, obs, camera, prev));
      continue;
    }
    const PnpResult r = solve_pnp(xs, obs, camera, prev, opts);
    if (!r.converged)
      out.warnings.push_back("frame " + std::to_string(t) + ": PnP residual " + std::to_string(r.rms_px) +
                             " px above threshold");
    raw.push_back(r.pose);
    rms.push_back(r.rms_px);
    prev = r.pose;
  }
  const std::vector<Posed> final_poses =
      config.smooth_poses ? smooth_poses(raw, config.pose_sigma_t, config.pose_sigma_r) : raw;
  for (std::size_t t = 0; t < final_poses.size(); ++t)
    out.poses.push_back({static_cast<int>(t), final_poses[t], rms[t]});
  return out;
}

}  // namespace gsplice
