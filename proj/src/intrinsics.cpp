#include "gsplice/intrinsics.hpp"
#include "gsplice/error.hpp"

#include <algorithm>

namespace gsplice {

Image3d srgb_to_linear(const Image3d& srgb) {
  return srgb.map([](const Planed& p) -> Planed { return p.max(0.0).pow(kGamma); });
}

Image3d linear_to_srgb(const Image3d& linear) {
  return linear.map([](const Planed& p) -> Planed { return p.max(0.0).min(1.0).pow(1.0 / kGamma); });
}

Frame srgb_to_linear(const Frame& frame) {
  if (frame.color_space != ColorSpace::sRGB)
    throw Error(ErrorKind::ValueOutOfRange, "frame " + std::to_string(frame.index), "expected an sRGB frame");
  return {srgb_to_linear(frame.pixels), ColorSpace::LinearRGB, frame.index};
}

Frame linear_to_srgb(const Frame& frame) {
  if (frame.color_space != ColorSpace::LinearRGB)
    throw Error(ErrorKind::ValueOutOfRange, "frame " + std::to_string(frame.index), "expected a linear frame");
  return {linear_to_srgb(frame.pixels), ColorSpace::sRGB, frame.index};
}

namespace {

struct Box {
  Index r0, r1, c0, c1;
};

std::optional<Box> mask_bbox(const Planed& mask) {
  Index r0 = mask.rows(), r1 = -1, c0 = mask.cols(), c1 = -1;
  for (Index r = 0; r < mask.rows(); ++r)
    for (Index c = 0; c < mask.cols(); ++c)
      if (mask(r, c) > 0.5) {
        r0 = std::min(r0, r);
        r1 = std::max(r1, r);
        c0 = std::min(c0, c);
        c1 = std::max(c1, c);
      }
  if (r1 < 0) return std::nullopt;
  return Box{r0, r1, c0, c1};
}

}  // namespace

int default_expand_px(const Planed& bracelet_mask) {
  const auto box = mask_bbox(bracelet_mask);
  if (!box) throw Error(ErrorKind::EmptyMask, "bracelet mask", "no pixel above 0.5");
  const double h = static_cast<double>(box->r1 - box->r0 + 1);
  const double w = static_cast<double>(box->c1 - box->c0 + 1);
  return static_cast<int>(std::lround(0.25 * std::hypot(h, w)));
}

RegionMasks partition_regions(const Planed& m, int expand_px) {
  if (expand_px < 0) throw Error(ErrorKind::ValueOutOfRange, "expand_px", "must be >= 0");
  const auto box = mask_bbox(m);
  if (!box) throw Error(ErrorKind::EmptyMask, "bracelet mask", "no pixel above 0.5");
  const Index r0 = std::max<Index>(0, box->r0 - expand_px);
  const Index r1 = std::min<Index>(m.rows() - 1, box->r1 + expand_px);
  const Index c0 = std::max<Index>(0, box->c0 - expand_px);
  const Index c1 = std::min<Index>(m.cols() - 1, box->c1 + expand_px);

  RegionMasks out;
  out.bracelet = m;
  out.background = 1.0 - m;
  out.background.block(r0, c0, r1 - r0 + 1, c1 - c0 + 1).setZero();
  out.surrounding = 1.0 - out.bracelet - out.background;
  return out;
}

RegionShadings region_shadings(const Image3d& s, const RegionMasks& masks) {
  return {masks.bracelet * s, masks.background * s, masks.surrounding * s};
}

Image3d IdentityEnhancer::relight(const Image3d& s_bracelet, const Image3d&, const NormalMap&, const EnhanceContext&) {
  return s_bracelet;
}

Image3d IdentityEnhancer::shadow(const Image3d& s_relit, const Image3d& s_background, const Image3d& s_surrounding,
                                 const EnhanceContext&) {
  return s_relit + s_background + s_surrounding;
}

Image3d IdentityEnhancer::refine_srgb(const Image3d& diffuse_srgb, const Image3d&, const Image3d&,
                                      const EnhanceContext&) {
  return diffuse_srgb;
}

namespace {

std::size_t clamp_nonnegative(Image3d& img) {
  std::size_t n = 0;
  for (int k = 0; k < 3; ++k) {
    n += static_cast<std::size_t>((img[k] < 0.0).count());
    img[k] = img[k].max(0.0);
  }
  return n;
}

void check_shape(const Image3d& img, Index rows, Index cols, const char* what) {
  if (img.rows() != rows || img.cols() != cols)
    throw Error(ErrorKind::EnhancerFailure, what, "enhancer returned a differently sized image");
  if (!img.all_finite()) throw Error(ErrorKind::EnhancerFailure, what, "enhancer returned non-finite values");
}

}  // namespace

EnhanceResult enhance_frame(const IntrinsicFrame& frame, const RegionMasks& masks, const NormalMap& normals,
                            Enhancer& enhancer) {
  const Index rows = frame.linear.rows(), cols = frame.linear.cols();
  const RegionShadings parts = region_shadings(frame.shading, masks);
  const EnhanceContext ctx{masks, frame.index};
  EnhanceResult result;

  Image3d relit = enhancer.relight(parts.bracelet, parts.background, normals, ctx);
  check_shape(relit, rows, cols, "relight");
  result.clamped += clamp_nonnegative(relit);

  Image3d enhanced = enhancer.shadow(relit, parts.background, parts.surrounding, ctx);
  check_shape(enhanced, rows, cols, "shadow");
  result.clamped += clamp_nonnegative(enhanced);

  const Planed keep = masks.background;
  const Planed edit = 1.0 - keep;
  enhanced = parts.background + edit * enhanced;

  const Image3d diffuse = frame.albedo * enhanced + keep * frame.residual;
  const Image3d diffuse_srgb = linear_to_srgb(diffuse);
  Image3d refined = enhancer.refine_srgb(diffuse_srgb, frame.albedo, enhanced, ctx);
  check_shape(refined, rows, cols, "refine_srgb");

  const Image3d original_srgb = linear_to_srgb(frame.linear);
  refined = keep * original_srgb + edit * clamp(refined, 0.0, 1.0);

  result.refined = {std::move(refined), ColorSpace::sRGB, frame.index};
  result.s_enhanced = std::move(enhanced);
  return result;
}

namespace {

Planed downsample2(const Planed& p) {
  const Index rows = p.rows() / 2, cols = p.cols() / 2;
  Planed out(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c)
      out(r, c) = 0.25 * (p(2 * r, 2 * c) + p(2 * r + 1, 2 * c) + p(2 * r, 2 * c + 1) + p(2 * r + 1, 2 * c + 1));
  return out;
}

}  // namespace

double multiscale_grad_loss(const Planed& pred, const Planed& target, int scales) {
  if (scales < 1) throw Error(ErrorKind::ValueOutOfRange, "scales", "must be >= 1");
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw Error(ErrorKind::DimensionMismatch, "multiscale_grad_loss");
  const Index need = Index(1) << scales;
  if (pred.rows() < need || pred.cols() < need)
    throw Error(ErrorKind::ImageTooSmall, "multiscale_grad_loss",
                "need at least " + std::to_string(need) + " pixels per side for " + std::to_string(scales) + " scales");
  Planed diff = pred - target;
  double total = 0;
  for (int k = 0; k < scales; ++k) {
    if (k > 0) diff = downsample2(diff);
    const Index rows = diff.rows(), cols = diff.cols();
    const double gx = (diff.rightCols(cols - 1) - diff.leftCols(cols - 1)).abs().mean();
    const double gy = (diff.bottomRows(rows - 1) - diff.topRows(rows - 1)).abs().mean();
    total += gx + gy;
  }
  return total;
}

double multiscale_grad_loss(const Image3d& pred, const Image3d& target, int scales) {
  double total = 0;
  for (int k = 0; k < 3; ++k) total += multiscale_grad_loss(pred[k], target[k], scales);
  return total / 3.0;
}

}  // namespace gsplice
