#pragma once

#include "gsplice/camera.hpp"
#include "gsplice/image.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace gsplice {

constexpr int kShCoeffs = 16;

/// Per-channel real SH coefficients, degree <= 3. Column 0 is DC, 1..15 AC.
using ShCoefficients = Eigen::Matrix<double, 3, kShCoeffs>;
/// Real SH basis values Y_l^m(d) in the same order as ShCoefficients columns.
using ShBasis = Eigen::Matrix<double, kShCoeffs, 1>;

struct Splat {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Vector3d scale = Eigen::Vector3d::Ones();
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
  double opacity = 1.0;
  ShCoefficients sh = ShCoefficients::Zero();
};

struct SplatModel {
  std::vector<Splat> splats;

  std::size_t size() const { return splats.size(); }
  bool empty() const { return splats.empty(); }
};

/// True when positions, scales, rotations and opacities are bit-identical.
bool same_geometry(const SplatModel& a, const SplatModel& b);

/// Uniformly scale positions and axis scales about the origin.
SplatModel scaled(const SplatModel& model, double factor);

ShBasis sh_basis(const Eigen::Vector3d& dir);

/// Pre-activation radiance per channel.
Eigen::Vector3d eval_sh(const ShCoefficients& coeffs, const Eigen::Vector3d& dir);

/// clamp(radiance + 0.5, 0, 1)
Eigen::Vector3d activate_color(const Eigen::Vector3d& radiance);

constexpr double kShC0 = 0.28209479177387814;

struct PixelWeight {
  std::uint32_t pixel;  // row * width + col
  std::uint32_t splat;
  double weight;
};

struct RenderOptions {
  bool keep_weights = false;
  /// When false the compositing pass uses raw radiance instead of the clamped color.
  bool activate = true;
  /// Low-pass added to the projected covariance, in px^2.
  double dilation = 0.3;
  /// Contributions with alpha below this are discarded.
  double min_alpha = 1.0 / 255.0;
  /// Splats nearer than this camera-space z are culled.
  double near_plane = 1e-3;
};

struct RenderOutput {
  Image3d color;  // premultiplied: sum_i w_i c_i
  Planed alpha;   // sum_i w_i
  Planed depth;   // sum_i w_i z_i / alpha, 0 where alpha == 0
  std::vector<PixelWeight> weights;  // only when keep_weights

  // Per-splat quantities for this view, indexed by splat id.
  std::vector<Eigen::Vector3d> view_dirs;  // normalize(center - camera center), world frame
  std::vector<Eigen::Vector3d> colors;     // value that was composited
  std::vector<double> camera_z;
  std::vector<bool> rendered;

  /// Alpha-weighted depth with validity = alpha > 0.
  BinaryMask coverage() const { return alpha > 0.0; }
  /// color / alpha where alpha > 0.
  Image3d unpremultiplied() const;
};

RenderOutput render(const SplatModel& model, const Camera& camera, const Posed& pose, const RenderOptions& options = {});

/// Recompose a color image from cached weights and arbitrary per-splat colors.
Image3d replay_weights(const std::vector<PixelWeight>& weights, const std::vector<Eigen::Vector3d>& colors, Index rows,
                       Index cols);

/// Binary dump of (pixel u32, splat u32, weight f32) little-endian triplets.
void write_weight_dump(const std::filesystem::path& path, const std::vector<PixelWeight>& weights);
std::vector<PixelWeight> read_weight_dump(const std::filesystem::path& path);

}  // namespace gsplice
