#pragma once

#include "gsplice/image.hpp"
#include "gsplice/scene_io.hpp"

#include <memory>
#include <string>

namespace gsplice {

constexpr double kGamma = 2.2;
/// Tolerance used when validating a loaded albedo * shading + residual split.
constexpr double kDecompositionTolerance = 1e-3;

Frame srgb_to_linear(const Frame& frame);
/// Clamps to [0, 1] before encoding.
Frame linear_to_srgb(const Frame& frame);
Image3d srgb_to_linear(const Image3d& srgb);
Image3d linear_to_srgb(const Image3d& linear);

/// A * S + R
template <typename S>
Image3<S> recompose(const Image3<S>& albedo, const Image3<S>& shading, const Image3<S>& residual) {
  return albedo * shading + residual;
}

struct IntrinsicFrame {
  Image3d linear;
  Image3d albedo;
  Image3d shading;
  Image3d residual;
  int index = 0;

  double decomposition_error() const { return max_abs_diff(recompose(albedo, shading, residual), linear); }
};

struct RegionMasks {
  Planed bracelet;
  Planed background;
  Planed surrounding;
};

/// Default expansion: 25% of the diagonal of the bounding box of {mask > 0.5}.
int default_expand_px(const Planed& bracelet_mask);

/// Background = (1 - M) outside the bounding box of {M > 0.5} grown by
/// expand_px and clipped to the image, 0 inside; surrounding = 1 - M - background.
RegionMasks partition_regions(const Planed& bracelet_mask, int expand_px);

struct RegionShadings {
  Image3d bracelet;
  Image3d background;
  Image3d surrounding;
};

RegionShadings region_shadings(const Image3d& shading, const RegionMasks& masks);

/// Side information handed to every enhancer call.
struct EnhanceContext {
  const RegionMasks& masks;
  int frame_index = 0;
};

/// The three per-frame harmonization stages. Each call is one deterministic
/// forward evaluation.
class Enhancer {
 public:
  virtual ~Enhancer() = default;
  virtual std::string name() const = 0;
  virtual bool stateless() const { return true; }

  virtual Image3d relight(const Image3d& s_bracelet, const Image3d& s_background, const NormalMap& normals,
                          const EnhanceContext& ctx) = 0;
  virtual Image3d shadow(const Image3d& s_relit, const Image3d& s_background, const Image3d& s_surrounding,
                         const EnhanceContext& ctx) = 0;
  virtual Image3d refine_srgb(const Image3d& diffuse_srgb, const Image3d& albedo, const Image3d& s_enhanced,
                              const EnhanceContext& ctx) = 0;
};

/// Relight returns the bracelet shading, shadow sums the three regions, refine is a pass-through.
class IdentityEnhancer final : public Enhancer {
 public:
  std::string name() const override { return "identity"; }
  Image3d relight(const Image3d& s_bracelet, const Image3d&, const NormalMap&, const EnhanceContext&) override;
  Image3d shadow(const Image3d& s_relit, const Image3d& s_background, const Image3d& s_surrounding,
                 const EnhanceContext&) override;
  Image3d refine_srgb(const Image3d& diffuse_srgb, const Image3d&, const Image3d&, const EnhanceContext&) override;
};

struct LambertianFit {
  double ambient = 0;
  Eigen::Vector3d light = Eigen::Vector3d::Zero();  // direction times intensity, camera frame
  Eigen::Vector3d chroma = Eigen::Vector3d::Ones(); // mean background shading color / its luminance
  int iterations = 0;
  std::size_t samples = 0;
};

/// Fits gray(S_bg) ~ a + max(0, N . l) by alternating least squares over
/// background pixels with valid normals.
LambertianFit fit_single_light(const Planed& background_gray, const Planed& background_mask, const NormalMap& normals,
                               const Image3d& background_shading);

class AnalyticLambertianEnhancer final : public Enhancer {
 public:
  explicit AnalyticLambertianEnhancer(LambertianParams params = {}) : params_(params) {}
  std::string name() const override { return "lambertian"; }
  bool stateless() const override { return false; }

  Image3d relight(const Image3d& s_bracelet, const Image3d& s_background, const NormalMap& normals,
                  const EnhanceContext& ctx) override;
  Image3d shadow(const Image3d& s_relit, const Image3d& s_background, const Image3d& s_surrounding,
                 const EnhanceContext& ctx) override;
  Image3d refine_srgb(const Image3d& diffuse_srgb, const Image3d&, const Image3d&, const EnhanceContext&) override;

  const LambertianFit& last_fit() const { return fit_; }

 private:
  LambertianParams params_;
  LambertianFit fit_;
};

/// Runs an out-of-process model per stage: writes cond1.pfm cond2.pfm
/// cond3.pfm and meta.json into a fresh directory, invokes `<command> <dir>`,
/// and reads <dir>/out.pfm. A nonzero exit status is an EnhancerFailure.
class ExternalEnhancer final : public Enhancer {
 public:
  ExternalEnhancer(std::string command, fs::path work_dir);
  std::string name() const override { return "external"; }

  Image3d relight(const Image3d& s_bracelet, const Image3d& s_background, const NormalMap& normals,
                  const EnhanceContext& ctx) override;
  Image3d shadow(const Image3d& s_relit, const Image3d& s_background, const Image3d& s_surrounding,
                 const EnhanceContext& ctx) override;
  Image3d refine_srgb(const Image3d& diffuse_srgb, const Image3d& albedo, const Image3d& s_enhanced,
                      const EnhanceContext& ctx) override;

 private:
  Image3d invoke(const std::string& stage, int frame, const Image3d& c1, const Image3d& c2, const Image3d& c3);

  std::string command_;
  fs::path work_dir_;
};

/// identity | lambertian | external:<cmd>
std::unique_ptr<Enhancer> make_enhancer(const std::string& spec, const LambertianParams& params, const fs::path& work_dir);

struct EnhanceResult {
  Frame refined;           // sRGB
  Image3d s_enhanced;      // after background pass-through
  std::size_t clamped = 0; // negative shading samples clamped to 0
};

/// relight -> shadow -> A * S_enhanced -> gamma encode -> refine. Background
/// pixels keep their input shading and residual; residual is dropped in the
/// bracelet and surrounding regions.
EnhanceResult enhance_frame(const IntrinsicFrame& frame, const RegionMasks& masks, const NormalMap& normals,
                            Enhancer& enhancer);

template <typename S>
S l1_loss(const Plane<S>& pred, const Plane<S>& target) {
  return (pred - target).abs().mean();
}
template <typename S>
S l1_loss(const Image3<S>& pred, const Image3<S>& target) {
  return (l1_loss(pred[0], target[0]) + l1_loss(pred[1], target[1]) + l1_loss(pred[2], target[2])) / S(3);
}

/// Sum over scales k = 0..K-1 (2x box downsampling between scales) of
/// mean |d_x pred - d_x target| + mean |d_y pred - d_y target|.
double multiscale_grad_loss(const Planed& pred, const Planed& target, int scales);
double multiscale_grad_loss(const Image3d& pred, const Image3d& target, int scales);

}  // namespace gsplice
