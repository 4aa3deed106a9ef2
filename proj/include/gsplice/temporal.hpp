#pragma once

#include "gsplice/camera.hpp"
#include "gsplice/image.hpp"
#include "gsplice/scene_io.hpp"
#include "gsplice/splat_renderer.hpp"

#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace gsplice {

struct SmoothingWindow {
  int size = 0;                 // W, even
  std::vector<double> weights;  // W + 1 entries for offsets -W/2..W/2

  int half() const { return size / 2; }
  double at(int offset) const { return weights[static_cast<std::size_t>(offset + half())]; }
};

/// w(k) proportional to exp(-k^2 / (2 sigma^2)), normalized to sum 1.
SmoothingWindow gaussian_window(int size, double sigma);

struct WindowTap {
  int frame;
  double weight;
};

/// Window taps around frame t clipped to [0, frame_count) and renormalized.
std::vector<WindowTap> window_taps(const SmoothingWindow& window, int t, int frame_count);

struct AdamState {
  std::vector<ShCoefficients> m;
  std::vector<ShCoefficients> v;
  int step = 0;
  double lr_dc = 1e-2;
  double lr_ac = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void reset(std::size_t splats);
  /// One Adam update of `coeffs` in place.
  void apply(std::vector<ShCoefficients>& coeffs, const std::vector<ShCoefficients>& grad);
};

/// One term of the windowed photometric objective. Predicted pixel value is
///   gain(p) * sum_i w_ip c_i + offset(p)
/// with c_i = activate(sh_i . basis_i). The loss is the mean squared error
/// over `pixels` and the three channels.
struct ColorFitFrame {
  std::vector<PixelWeight> weights;
  std::vector<ShBasis> basis;  // per splat, at this frame's view direction
  Image3d target;
  Planed gain;
  Image3d offset;
  std::vector<std::uint32_t> pixels;  // row * width + col
  bool activate = true;
};

/// Renders `model` at `pose` with cached weights. Gain defaults to 1 and
/// offset to 0, so the prediction is the premultiplied render itself.
ColorFitFrame make_fit_frame(const SplatModel& model, const Camera& camera, const Posed& pose, const Image3d& target,
                             const Planed* gain = nullptr, const Image3d* offset = nullptr, bool activate = true);

Image3d predict(const ColorFitFrame& frame, const std::vector<ShCoefficients>& coeffs);
double frame_loss(const ColorFitFrame& frame, const std::vector<ShCoefficients>& coeffs);

/// sum_k w_k frame_loss_k and its gradient with respect to every coefficient.
/// Clamped channels contribute zero gradient.
double sh_fit_loss(std::span<const ColorFitFrame> frames, std::span<const double> frame_weights,
                   const std::vector<ShCoefficients>& coeffs, std::vector<ShCoefficients>* grad = nullptr);

struct ShFitOptions {
  int max_iters = 500;
  double relative_tolerance = 1e-8;
  /// Losses at or below this count as converged.
  double loss_tolerance = 1e-6;
  /// Skip optimization when the starting loss is already below this.
  double zero_loss = 1e-10;
};

struct ShFitResult {
  SplatModel model;
  double initial_loss = 0;
  double final_loss = 0;
  int iterations = 0;
  bool converged = true;
  std::vector<double> loss_history;  // best loss so far after each iteration
};

std::vector<ShCoefficients> sh_of(const SplatModel& model);
SplatModel with_sh(const SplatModel& model, const std::vector<ShCoefficients>& coeffs);

/// Adam on the SH coefficients only; geometry is copied untouched. Returns
/// the best iterate seen.
ShFitResult optimize_sh_colors(const SplatModel& model, std::span<const ColorFitFrame> frames,
                               std::span<const double> frame_weights, AdamState& state,
                               const ShFitOptions& options = {});

/// Convenience form: renders the window around frame t at the given poses and
/// fits against `refined` directly.
ShFitResult optimize_sh_colors(const SplatModel& model, const std::vector<Image3d>& refined,
                               const std::vector<Posed>& poses, const Camera& camera, int t,
                               const SmoothingWindow& window, AdamState& state, int max_iters);

/// Keyframes 0, stride, 2*stride, ... plus the last frame.
std::vector<int> keyframes(int frame_count, int stride);

class Interpolator {
 public:
  virtual ~Interpolator() = default;
  virtual std::string name() const = 0;
  /// In-between frames for (t0, t1) exclusive, in order.
  virtual std::vector<Image3d> between(const Image3d& key0, const Image3d& key1, int t0, int t1) = 0;
};

class CrossFadeInterpolator final : public Interpolator {
 public:
  std::string name() const override { return "crossfade"; }
  std::vector<Image3d> between(const Image3d& key0, const Image3d& key1, int t0, int t1) override;
};

/// Writes key0.pfm, key1.pfm and meta.json {t0, t1, frames}, runs
/// `<command> <dir>`, reads out_%05d.pfm for each in-between t.
class ExternalInterpolator final : public Interpolator {
 public:
  ExternalInterpolator(std::string command, std::filesystem::path work_dir);
  std::string name() const override { return "external"; }
  std::vector<Image3d> between(const Image3d& key0, const Image3d& key1, int t0, int t1) override;

 private:
  std::string command_;
  std::filesystem::path work_dir_;
};

/// crossfade | external:<cmd>
std::unique_ptr<Interpolator> make_interpolator(const std::string& spec, const std::filesystem::path& work_dir);

std::vector<Image3d> interpolate_shadow_frames(const std::vector<Image3d>& refined, int stride, Interpolator& interp);

/// M * rerender + (1 - M) * interp
Image3d blend_final(const Planed& mask, const Image3d& rerender, const Image3d& interp);

}  // namespace gsplice
