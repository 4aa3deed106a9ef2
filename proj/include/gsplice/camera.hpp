#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace gsplice {

/// Pinhole intrinsics. Pixel (col, row) has its center at image coordinate
/// (u, v) = (col, row).
template <typename Scalar>
struct CameraIntrinsics {
  Scalar fx = 1, fy = 1, cx = 0, cy = 0;
  int width = 1, height = 1;

  using Vec2 = Eigen::Matrix<Scalar, 2, 1>;
  using Vec3 = Eigen::Matrix<Scalar, 3, 1>;

  bool valid() const {
    return fx > 0 && fy > 0 && width > 0 && height > 0 && cx >= 0 && cx < width && cy >= 0 && cy < height;
  }

  Eigen::Matrix<Scalar, 3, 3> matrix() const {
    Eigen::Matrix<Scalar, 3, 3> k;
    k << fx, 0, cx, 0, fy, cy, 0, 0, 1;
    return k;
  }

  Vec2 project(const Vec3& cam) const { return {fx * cam.x() / cam.z() + cx, fy * cam.y() / cam.z() + cy}; }

  /// depth * K^-1 [u, v, 1]^T
  Vec3 back_project(const Vec2& px, Scalar depth) const {
    return {depth * (px.x() - cx) / fx, depth * (px.y() - cy) / fy, depth};
  }

  bool contains(const Vec2& px) const {
    return px.x() >= 0 && px.y() >= 0 && px.x() <= width - 1 && px.y() <= height - 1;
  }
};

/// Rigid world-to-camera transform: X_cam = R * X_world + T.
template <typename Scalar>
struct Pose {
  using Quat = Eigen::Quaternion<Scalar>;
  using Vec3 = Eigen::Matrix<Scalar, 3, 1>;

  Quat rotation = Quat::Identity();
  Vec3 translation = Vec3::Zero();

  static Pose identity() { return {}; }

  Vec3 apply(const Vec3& x) const { return rotation * x + translation; }

  Pose inverse() const {
    const Quat inv = rotation.conjugate();
    return {inv, -(inv * translation)};
  }

  /// (this * other)(x) = this(other(x))
  Pose operator*(const Pose& other) const {
    return {rotation * other.rotation, rotation * other.translation + translation};
  }

  /// Camera center in world coordinates.
  Vec3 center() const { return -(rotation.conjugate() * translation); }

  /// Canonical form: unit quaternion with w >= 0.
  Pose normalized() const {
    Quat q = rotation.normalized();
    if (q.w() < 0) q.coeffs() = -q.coeffs();
    return {q, translation};
  }

  bool finite() const { return rotation.coeffs().allFinite() && translation.allFinite(); }
};

using Camera = CameraIntrinsics<double>;
using Posed = Pose<double>;

/// Geodesic angle between two rotations in radians.
template <typename Scalar>
Scalar rotation_distance(const Eigen::Quaternion<Scalar>& a, const Eigen::Quaternion<Scalar>& b) {
  return a.normalized().angularDistance(b.normalized());
}

/// Rotation exp map of an axis-angle vector.
template <typename Scalar>
Eigen::Quaternion<Scalar> exp_so3(const Eigen::Matrix<Scalar, 3, 1>& w) {
  const Scalar angle = w.norm();
  if (angle < Scalar(1e-12)) {
    Eigen::Quaternion<Scalar> q(Scalar(1), w.x() / 2, w.y() / 2, w.z() / 2);
    return q.normalized();
  }
  return Eigen::Quaternion<Scalar>(Eigen::AngleAxis<Scalar>(angle, w / angle));
}

}  // namespace gsplice
